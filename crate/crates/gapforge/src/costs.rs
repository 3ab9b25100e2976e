//! Lagrangian densities, the mollified variant, the terminal penalty and cost quadrature.

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::domain::{in_target, Instance, StateConstraint};
use crate::error::{GapError, Result};
use crate::geometry::{phi_inv_into, Control, CORNERS};
use crate::trajectories::{check_grid, Atom, ControlPath, Curve, Rk4, YoungPath};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LagrangianKind {
    Vee,
    #[serde(rename = "VEEVEE")]
    VeeVee,
    Flat,
    Mollified { eps: f64 },
}

impl LagrangianKind {
    pub fn check(&self, inst: &Instance) -> Result<()> {
        if let LagrangianKind::Mollified { eps } = *self {
            let cap = (inst.lambda - 1.0) * inst.a;
            if !(eps > 0.0 && eps < cap) {
                return Err(GapError::Precondition(format!("mollifier eps = {eps} not in (0, (λ-1)a = {cap})")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerminalCost {
    pub alpha: f64,
    pub eps: f64,
}

impl TerminalCost {
    pub fn new(alpha: f64, eps: f64, inst: &Instance) -> Result<Self> {
        if !(alpha > 2.0 * inst.a) {
            return Err(GapError::AlphaTooSmall { alpha, min: 2.0 * inst.a });
        }
        if !(eps > 0.0) {
            return Err(GapError::Precondition(format!("terminal smoothing eps = {eps} must be positive")));
        }
        Ok(TerminalCost { alpha, eps })
    }
}

/// `Δ(u)`: distance to the nearest well.
pub fn delta_wells(u: Control) -> f64 {
    CORNERS
        .iter()
        .map(|c| (u.u1 - c.u1).hypot(u.u2 - c.u2))
        .fold(f64::INFINITY, f64::min)
}

#[inline]
pub(crate) fn core(kind: LagrangianKind, r2: f64, u: Control) -> f64 {
    match kind {
        LagrangianKind::Vee => u.norm_inf() + r2,
        LagrangianKind::Flat => 1.0 + r2,
        LagrangianKind::VeeVee | LagrangianKind::Mollified { .. } => 1.0 + 2.0 * delta_wells(u) + r2,
    }
}

#[inline]
pub(crate) fn chi(x1: f64, inst: &Instance) -> bool {
    x1.abs() <= inst.a
}

#[inline]
fn r2_of(y: &[f64]) -> f64 {
    y[2..].iter().map(|v| v * v).sum()
}

/// Product Gauss–Legendre rule on the unit ball weighted by the normalized bump.
#[derive(Debug)]
pub struct BallRule {
    pub dim: usize,
    /// Flat `n × dim` array of nodes.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

const GL5_X: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL5_W: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

impl BallRule {
    fn build(dim: usize) -> BallRule {
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut idx = vec![0usize; dim];
        loop {
            let r2: f64 = idx.iter().map(|&i| GL5_X[i] * GL5_X[i]).sum();
            if r2 < 1.0 {
                let w: f64 = idx.iter().map(|&i| GL5_W[i]).product::<f64>() * (-1.0 / (1.0 - r2)).exp();
                nodes.extend(idx.iter().map(|&i| GL5_X[i]));
                weights.push(w);
            }
            let mut k = 0;
            loop {
                if k == dim {
                    let total: f64 = weights.iter().sum();
                    for w in weights.iter_mut() {
                        *w /= total;
                    }
                    return BallRule { dim, nodes, weights };
                }
                idx[k] += 1;
                if idx[k] < 5 {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    /// Shared immutable rule for `dim`, built on first use.
    pub fn get(dim: usize) -> &'static BallRule {
        static CACHE: Mutex<BTreeMap<usize, &'static BallRule>> = Mutex::new(BTreeMap::new());
        let mut map = CACHE.lock().expect("ball rule cache poisoned");
        *map.entry(dim).or_insert_with(|| Box::leak(Box::new(BallRule::build(dim))))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.nodes[k * self.dim..(k + 1) * self.dim]
    }
}

/// Evaluates densities with reusable scratch space.
pub struct Density<'a> {
    inst: &'a Instance,
    kind: LagrangianKind,
    rule: Option<&'static BallRule>,
    y: Vec<f64>,
    xs: Vec<f64>,
}

impl<'a> Density<'a> {
    pub fn new(inst: &'a Instance, kind: LagrangianKind) -> Self {
        let rule = match kind {
            LagrangianKind::Mollified { .. } => Some(BallRule::get(inst.d + 2)),
            _ => None,
        };
        Density { inst, kind, rule, y: vec![0.0; inst.d], xs: vec![0.0; inst.d] }
    }

    /// `x1` values across which the density jumps.
    pub fn thresholds(&self) -> Vec<f64> {
        let a = self.inst.a;
        match self.kind {
            LagrangianKind::Mollified { eps } => {
                let mut t: Vec<f64> = GL5_X
                    .iter()
                    .flat_map(|z| [-a + eps * z, a + eps * z])
                    .collect();
                t.sort_by(f64::total_cmp);
                t.dedup();
                t
            }
            _ => vec![-a, a],
        }
    }

    /// `L(x, u)` with the support indicator evaluated at `chi_x1` (normally `x[0]`).
    pub fn eval_at(&mut self, x: &[f64], u: Control, chi_x1: f64) -> f64 {
        match (self.kind, self.rule) {
            (LagrangianKind::Mollified { eps }, Some(rule)) => {
                let d = self.inst.d;
                let mut acc = 0.0;
                for k in 0..rule.len() {
                    let z = rule.node(k);
                    if !chi(chi_x1 - eps * z[0], self.inst) {
                        continue;
                    }
                    for i in 0..d {
                        self.xs[i] = x[i] - eps * z[i];
                    }
                    phi_inv_into(&self.xs, &mut self.y);
                    let v = Control::new(u.u1 - eps * z[d], u.u2 - eps * z[d + 1]);
                    acc += rule.weights[k] * core(self.kind, r2_of(&self.y), v);
                }
                acc
            }
            _ => {
                if !chi(chi_x1, self.inst) {
                    return 0.0;
                }
                phi_inv_into(x, &mut self.y);
                core(self.kind, r2_of(&self.y), u)
            }
        }
    }

    pub fn eval(&mut self, x: &[f64], u: Control) -> f64 {
        self.eval_at(x, u, x[0])
    }

    /// Weighted average over atoms; `r(x)` is shared when unmollified.
    pub fn eval_atoms(&mut self, x: &[f64], atoms: &[Atom], chi_x1: f64) -> f64 {
        match self.kind {
            LagrangianKind::Mollified { .. } => {
                atoms.iter().map(|a| a.w * self.eval_at(x, a.control(), chi_x1)).sum()
            }
            _ => {
                if !chi(chi_x1, self.inst) {
                    return 0.0;
                }
                phi_inv_into(x, &mut self.y);
                let r2 = r2_of(&self.y);
                atoms.iter().map(|a| a.w * core(self.kind, r2, a.control())).sum()
            }
        }
    }
}

pub fn lagrangian(kind: LagrangianKind, x: &[f64], u: Control, inst: &Instance) -> f64 {
    Density::new(inst, kind).eval(x, u)
}

/// `α g_ε(x)` with `g_ε = ψ_ε * χ_{X^c}` on R^d.
pub fn terminal_penalty(tc: &TerminalCost, x: &[f64], inst: &Instance) -> f64 {
    let rule = BallRule::get(inst.d);
    let mut xs = vec![0.0; inst.d];
    let (mut outside, mut inside) = (0.0, 0.0);
    for k in 0..rule.len() {
        let z = rule.node(k);
        for i in 0..inst.d {
            xs[i] = x[i] - tc.eps * z[i];
        }
        if in_target(&xs, inst, StateConstraint::Omega) {
            inside += rule.weights[k];
        } else {
            outside += rule.weights[k];
        }
    }
    tc.alpha * outside / (outside + inside)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub running: f64,
    pub terminal: f64,
    pub total: f64,
    /// Sum of |Simpson − trapezoid| over quadrature pieces.
    pub quad_error: f64,
}

/// Per-step Simpson quadrature split at the density's `x1` jump locations.
pub struct StepQuadrature<'a> {
    pub density: Density<'a>,
    thresholds: Vec<f64>,
    rk: Rk4,
    xa: Vec<f64>,
    cuts: Vec<f64>,
}

impl<'a> StepQuadrature<'a> {
    pub fn new(inst: &'a Instance, kind: LagrangianKind) -> Self {
        let density = Density::new(inst, kind);
        let thresholds = density.thresholds();
        StepQuadrature {
            density,
            thresholds,
            rk: Rk4::new(inst.d),
            xa: vec![0.0; inst.d],
            cuts: Vec::with_capacity(16),
        }
    }

    fn state(&mut self, x: &[f64], u: Control, s: f64) {
        self.xa.copy_from_slice(x);
        if s != 0.0 {
            self.rk.step(&mut self.xa, u, s);
        }
    }

    /// Integral of the atom-averaged density over one integrator step starting at `x`
    /// with mean control `ubar` and length `h`. Returns (Simpson, |Simpson − trapezoid|).
    pub fn step(&mut self, x: &[f64], ubar: Control, atoms: &[Atom], h: f64) -> (f64, f64) {
        let x1 = x[0];
        let x1_end = x1 + ubar.u1 * h;
        let (lo, hi) = if x1 <= x1_end { (x1, x1_end) } else { (x1_end, x1) };
        // quick exit: entirely outside the support of every threshold region
        let span_lo = self.thresholds[0];
        let span_hi = *self.thresholds.last().unwrap();
        if hi < span_lo || lo > span_hi {
            return (0.0, 0.0);
        }
        self.cuts.clear();
        self.cuts.push(0.0);
        if ubar.u1 != 0.0 {
            for &th in &self.thresholds {
                let s = (th - x1) / ubar.u1;
                if s > 0.0 && s < h {
                    self.cuts.push(s);
                }
            }
        }
        self.cuts.push(h);
        self.cuts.sort_by(f64::total_cmp);
        let mut simpson = 0.0;
        let mut err = 0.0;
        for p in 0..self.cuts.len() - 1 {
            let (alpha, beta) = (self.cuts[p], self.cuts[p + 1]);
            let len = beta - alpha;
            if len <= 0.0 {
                continue;
            }
            let mid = 0.5 * (alpha + beta);
            let chi_x1 = x1 + ubar.u1 * mid;
            self.state(x, ubar, alpha);
            let la = self.density.eval_atoms(&self.xa, atoms, chi_x1);
            self.state(x, ubar, mid);
            let lm = self.density.eval_atoms(&self.xa, atoms, chi_x1);
            self.state(x, ubar, beta);
            let lb = self.density.eval_atoms(&self.xa, atoms, chi_x1);
            let s = len / 6.0 * (la + 4.0 * lm + lb);
            let t = len / 2.0 * (la + lb);
            simpson += s;
            err += (s - t).abs();
        }
        (simpson, err)
    }
}

fn integrate_cost(
    inst: &Instance,
    kind: LagrangianKind,
    ypath: &YoungPath,
    gamma: &Curve,
    tc: Option<&TerminalCost>,
) -> Result<CostReport> {
    kind.check(inst)?;
    ypath.validate()?;
    check_grid(gamma, &ypath.breakpoints())?;
    let s = gamma.steps_per_interval;
    let mut q = StepQuadrature::new(inst, kind);
    let mut running = 0.0;
    let mut quad_error = 0.0;
    for (i, iv) in ypath.intervals.iter().enumerate() {
        let ubar = iv.mean();
        for k in i * s..(i + 1) * s {
            let g = gamma.controls[k];
            if (g.u1 - ubar.u1).abs() > 1e-12 || (g.u2 - ubar.u2).abs() > 1e-12 {
                return Err(GapError::MismatchedGrids(format!("curve control on step {k} differs from the path mean")));
            }
            let (v, e) = q.step(&gamma.points[k], ubar, &iv.atoms, gamma.times[k + 1] - gamma.times[k]);
            running += v;
            quad_error += e;
        }
    }
    let terminal = tc.map(|tc| terminal_penalty(tc, gamma.end(), inst)).unwrap_or(0.0);
    Ok(CostReport { running, terminal, total: running + terminal, quad_error })
}

pub fn classical_cost(
    inst: &Instance,
    kind: LagrangianKind,
    path: &ControlPath,
    gamma: &Curve,
    tc: Option<&TerminalCost>,
) -> Result<CostReport> {
    integrate_cost(inst, kind, &path.to_young(), gamma, tc)
}

pub fn relaxed_cost(
    inst: &Instance,
    kind: LagrangianKind,
    ypath: &YoungPath,
    gamma: &Curve,
    tc: Option<&TerminalCost>,
) -> Result<CostReport> {
    integrate_cost(inst, kind, ypath, gamma, tc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{eta, phi};
    use crate::trajectories::{integrate_horizontal, integrate_young, reference_classical, reference_minimizer, steps_for};

    #[test]
    fn wells() {
        assert_eq!(delta_wells(Control::new(1.0, 1.0)), 0.0);
        assert!((delta_wells(Control::ZERO) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(delta_wells(Control::new(1.0, 0.0)), 1.0);
    }

    #[test]
    fn lagrangian_values() {
        let inst = Instance::default();
        let o = eta(0.0, 4);
        assert_eq!(lagrangian(LagrangianKind::VeeVee, &o, Control::new(1.0, 1.0), &inst), 1.0);
        assert_eq!(lagrangian(LagrangianKind::VeeVee, &o, Control::new(1.0, 0.0), &inst), 3.0);
        assert_eq!(lagrangian(LagrangianKind::Vee, &eta(0.2, 4), Control::new(0.3, 0.9), &inst), 0.0);
        let x = phi(&[0.05, 0.0, 0.3, 0.4]);
        let l = lagrangian(LagrangianKind::Flat, &x, Control::new(0.2, 0.1), &inst);
        assert!((l - 1.25).abs() < 1e-15);
    }

    #[test]
    fn ball_rule_is_normalized_and_symmetric() {
        let r = BallRule::get(6);
        assert_eq!(r.len(), 245);
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for i in 0..6 {
            let m: f64 = (0..r.len()).map(|k| r.weights[k] * r.node(k)[i]).sum();
            assert!(m.abs() < 1e-15);
        }
        assert_eq!(BallRule::get(4).len(), 73);
    }

    #[test]
    fn terminal_penalty_values() {
        let inst = Instance::default();
        let tc = TerminalCost::new(1.0, 2e-3, &inst).unwrap();
        assert_eq!(terminal_penalty(&tc, &inst.x0(), &inst), 1.0);
        assert_eq!(terminal_penalty(&tc, &inst.x1(), &inst), 0.0);
        let edge = eta(inst.lambda * inst.a + inst.target.radius, 4);
        let v = terminal_penalty(&tc, &edge, &inst);
        assert!(v > 0.0 && v < 1.0, "{v}");
        assert!(matches!(TerminalCost::new(0.1, 1e-3, &inst), Err(GapError::AlphaTooSmall { .. })));
    }

    #[test]
    fn reference_costs() {
        let inst = Instance::default();
        let (y, c) = reference_minimizer(&inst);
        let rc = relaxed_cost(&inst, LagrangianKind::VeeVee, &y, &c, None).unwrap();
        assert!((rc.total - 0.2).abs() < 1e-9, "{rc:?}");
        let p = reference_classical(&inst);
        let s = steps_for(&p.breakpoints, 1e-3);
        let g = integrate_horizontal(&inst, &p, &inst.x0(), s).unwrap();
        let vee = classical_cost(&inst, LagrangianKind::Vee, &p, &g, None).unwrap();
        assert!((vee.total - 0.2).abs() < 1e-12);
        let vv = classical_cost(&inst, LagrangianKind::VeeVee, &p, &g, None).unwrap();
        assert!((vv.total - 0.6).abs() < 1e-12);
        // Dirac relaxed cost equals classical cost
        let dr = relaxed_cost(&inst, LagrangianKind::VeeVee, &p.to_young(), &g, None).unwrap();
        assert_eq!(dr.total, vv.total);
    }

    #[test]
    fn no_support_no_cost() {
        let inst = Instance::default();
        let p = ControlPath::uniform(-0.15, 0.15, vec![Control::new(0.1, 0.5), Control::new(-0.1, -0.5)]);
        let g = integrate_horizontal(&inst, &p, &inst.x0(), 4).unwrap();
        assert!(g.points.iter().all(|x| x[0] < -inst.a));
        assert_eq!(classical_cost(&inst, LagrangianKind::VeeVee, &p, &g, None).unwrap().total, 0.0);
    }

    #[test]
    fn grid_mismatch() {
        let inst = Instance::default();
        let p = ControlPath::uniform(-0.15, 0.15, vec![Control::new(1.0, 0.0); 3]);
        let q = ControlPath::uniform(-0.15, 0.15, vec![Control::new(1.0, 0.0); 4]);
        let g = integrate_horizontal(&inst, &q, &inst.x0(), 2).unwrap();
        assert!(matches!(
            classical_cost(&inst, LagrangianKind::VeeVee, &p, &g, None),
            Err(GapError::MismatchedGrids(_))
        ));
    }

    #[test]
    fn crossing_split_is_exact() {
        // one coarse step straddling x1 = -a: cost is exactly the time inside
        let inst = Instance::default();
        let p = ControlPath::new(vec![0.0, 0.05], vec![Control::new(1.0, 0.0)]).unwrap();
        let g = integrate_horizontal(&inst, &p, &eta(-0.12, 4), 1).unwrap();
        let c = classical_cost(&inst, LagrangianKind::Vee, &p, &g, None).unwrap();
        assert!((c.total - 0.03).abs() < 1e-15);
        let y = crate::trajectories::reference_young(&inst);
        let g = integrate_young(&inst, &y, &inst.x0(), 1).unwrap();
        let c = relaxed_cost(&inst, LagrangianKind::VeeVee, &y, &g, None).unwrap();
        assert!((c.total - 0.2).abs() < 1e-12);
    }
}
