//! Problem specs, the Mayer lift, convexified velocity hulls and penalized problems.

use serde::{Deserialize, Serialize};

use crate::costs::{relaxed_cost, terminal_penalty, Density, LagrangianKind, TerminalCost};
use crate::domain::Instance;
use crate::error::{GapError, Result};
use crate::geometry::{controlled_field_into, Control, Point, CORNERS};
use crate::trajectories::{Atom, Curve, YoungPath};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TargetMode {
    /// Endpoint must equal `x1`.
    Point,
    /// Endpoint must lie in `X`.
    Set,
    /// Free endpoint; any terminal cost does the work.
    None,
}

/// The part of a problem stored in the instance JSON under `problem`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDoc {
    pub lagrangian: LagrangianKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<TerminalCost>,
    pub target_mode: TargetMode,
    #[serde(default)]
    pub lifted: bool,
}

impl Default for ProblemDoc {
    fn default() -> Self {
        ProblemDoc { lagrangian: LagrangianKind::VeeVee, terminal: None, target_mode: TargetMode::Set, lifted: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub instance: Instance,
    pub doc: ProblemDoc,
}

impl ProblemSpec {
    pub fn new(instance: Instance, doc: ProblemDoc) -> Self {
        ProblemSpec { instance, doc }
    }

    /// State dimension: `d`, or `d + 1` once lifted.
    pub fn dim(&self) -> usize {
        self.instance.d + usize::from(self.doc.lifted)
    }

    /// Running plus terminal cost of a contender given with its base curve.
    pub fn cost(&self, ypath: &YoungPath, curve: &Curve) -> Result<f64> {
        if self.doc.lifted {
            return Err(GapError::Precondition("use lifted_terminal_value on lifted specs".into()));
        }
        Ok(relaxed_cost(&self.instance, self.doc.lagrangian, ypath, curve, self.doc.terminal.as_ref())?.total)
    }
}

/// Appends the running-cost integrator; the lifted problem has zero running cost.
pub fn mayer_lift(spec: &ProblemSpec) -> Result<ProblemSpec> {
    if spec.doc.lifted {
        return Err(GapError::Precondition("problem is already lifted".into()));
    }
    let mut doc = spec.doc.clone();
    doc.lifted = true;
    Ok(ProblemSpec { instance: spec.instance.clone(), doc })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftedCurve {
    pub times: Vec<f64>,
    /// Points in `R^{d+1}`; the last coordinate is the accumulated running cost.
    pub points: Vec<Point>,
}

impl LiftedCurve {
    pub fn base(&self, k: usize) -> &[f64] {
        let p = &self.points[k];
        &p[..p.len() - 1]
    }

    pub fn end(&self) -> &[f64] {
        self.points.last().unwrap()
    }
}

/// RK4 on `(x, z)' = (f(x, ū), ∫L(x, u) dν)`, with steps split where χ switches.
pub fn integrate_lifted(spec: &ProblemSpec, ypath: &YoungPath, x0: &[f64], steps_per_interval: usize) -> Result<LiftedCurve> {
    if !spec.doc.lifted {
        return Err(GapError::Precondition("spec is not lifted".into()));
    }
    if steps_per_interval == 0 {
        return Err(GapError::Precondition("steps_per_interval must be >= 1".into()));
    }
    ypath.validate()?;
    let inst = &spec.instance;
    spec.doc.lagrangian.check(inst)?;
    let d = inst.d;
    if x0.len() != d {
        return Err(GapError::Precondition("start point has the wrong dimension".into()));
    }
    let mut dens = Density::new(inst, spec.doc.lagrangian);
    let thresholds = dens.thresholds();
    let mut x = x0.to_vec();
    let mut z = 0.0;
    let mut times = vec![ypath.intervals[0].t0];
    let mut points = vec![lift_point(&x, z)];
    let mut k = [vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]];
    let mut tmp = vec![0.0; d];
    for iv in &ypath.intervals {
        let u = iv.mean();
        let h = iv.duration() / steps_per_interval as f64;
        for st in 1..=steps_per_interval {
            let mut cuts = vec![0.0];
            if u.u1 != 0.0 {
                for &th in &thresholds {
                    let s = (th - x[0]) / u.u1;
                    if s > 0.0 && s < h {
                        cuts.push(s);
                    }
                }
            }
            cuts.push(h);
            cuts.sort_by(f64::total_cmp);
            for w in cuts.windows(2) {
                let hp = w[1] - w[0];
                if hp <= 0.0 {
                    continue;
                }
                let chi_x1 = x[0] + u.u1 * 0.5 * hp;
                let mut lz = [0.0; 4];
                controlled_field_into(&x, u, &mut k[0]);
                lz[0] = dens.eval_atoms(&x, &iv.atoms, chi_x1);
                for (i, c) in [(1usize, 0.5), (2, 0.5), (3, 1.0)] {
                    for j in 0..d {
                        tmp[j] = x[j] + c * hp * k[i - 1][j];
                    }
                    controlled_field_into(&tmp, u, &mut k[i]);
                    lz[i] = dens.eval_atoms(&tmp, &iv.atoms, chi_x1);
                }
                for j in 0..d {
                    x[j] += hp / 6.0 * (k[0][j] + 2.0 * k[1][j] + 2.0 * k[2][j] + k[3][j]);
                }
                z += hp / 6.0 * (lz[0] + 2.0 * lz[1] + 2.0 * lz[2] + lz[3]);
            }
            times.push(if st == steps_per_interval { iv.t1 } else { iv.t0 + h * st as f64 });
            points.push(lift_point(&x, z));
        }
    }
    Ok(LiftedCurve { times, points })
}

fn lift_point(x: &[f64], z: f64) -> Point {
    let mut p = x.to_vec();
    p.push(z);
    p
}

/// `g̃(x) = x_{d+1} + g(π(x))` at the end of a lifted curve.
pub fn lifted_terminal_value(spec: &ProblemSpec, lc: &LiftedCurve) -> f64 {
    let end = lc.end();
    let d = spec.instance.d;
    let g = spec.doc.terminal.as_ref().map(|tc| terminal_penalty(tc, &end[..d], &spec.instance)).unwrap_or(0.0);
    end[d] + g
}

/// Sup over shared nodes of the Euclidean distance between two sampled curves.
pub fn sup_distance(a: &[Point], b: &[Point]) -> f64 {
    a.iter().zip(b).map(|(p, q)| crate::geometry::dist(p, q)).fold(0.0, f64::max)
}

/// `penalized_spec`: VEEVEE running cost, free endpoint, `α g_ε` at the end.
pub fn penalized_spec(inst: &Instance, alpha: f64, eps: f64) -> Result<ProblemSpec> {
    let tc = TerminalCost::new(alpha, eps, inst)?;
    Ok(ProblemSpec::new(
        inst.clone(),
        ProblemDoc { lagrangian: LagrangianKind::VeeVee, terminal: Some(tc), target_mode: TargetMode::None, lifted: false },
    ))
}

/// Finite-support witness that a lifted velocity lies in `conv F̃(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HullCertificate {
    pub atoms: Vec<Atom>,
    pub residual: f64,
}

/// Grid points per axis of the control grid used for hull queries.
pub const HULL_GRID: usize = 41;
/// Acceptance tolerance of hull certificates.
pub const HULL_TOL: f64 = 1e-9;

/// Candidate atoms: the 41×41 grid over `U_□` plus the extreme points of the control set.
pub fn hull_controls(inst: &Instance) -> Vec<Control> {
    let mut out: Vec<Control> = Vec::with_capacity(HULL_GRID * HULL_GRID + 4);
    for i in 0..HULL_GRID {
        for j in 0..HULL_GRID {
            let s = |k: usize| -1.0 + 2.0 * k as f64 / (HULL_GRID - 1) as f64;
            out.push(Control::new(s(i), s(j)));
        }
    }
    for c in CORNERS.iter().copied().chain(inst.control_set.extreme_points()) {
        if !out.contains(&c) {
            out.push(c);
        }
    }
    out
}

/// Decides `v ∈ conv F̃(x)` for `v ∈ R^{d+1}` and returns at most `d + 2` atoms when it holds.
pub fn velocity_hull_membership(spec: &ProblemSpec, x: &[f64], v: &[f64]) -> Option<HullCertificate> {
    let inst = &spec.instance;
    let d = inst.d;
    if x.len() != d || v.len() != d + 1 {
        return None;
    }
    // the base part is affine in u, so it pins the mean control
    let ubar = Control::new(v[0], v[1]);
    let mut f = vec![0.0; d];
    controlled_field_into(x, ubar, &mut f);
    let base_res = f.iter().zip(v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if base_res > HULL_TOL {
        return None;
    }
    let controls = hull_controls(inst);
    let mut dens = Density::new(inst, spec.doc.lagrangian);
    let cols: Vec<[f64; 4]> = controls.iter().map(|&u| [u.u1, u.u2, dens.eval(x, u), 1.0]).collect();
    let target = [ubar.u1, ubar.u2, v[d], 1.0];
    let (w, res) = nnls(&cols, &target);
    if res > HULL_TOL {
        return None;
    }
    let atoms: Vec<Atom> = w
        .iter()
        .enumerate()
        .filter(|(_, &wi)| wi > 0.0)
        .map(|(i, &wi)| Atom::new(controls[i], wi))
        .collect();
    if atoms.len() > d + 2 {
        return None;
    }
    Some(HullCertificate { atoms, residual: res.max(base_res) })
}

/// Lifted velocity `Σ w_i f̃(x, u_i)` of a certificate.
pub fn certificate_velocity(spec: &ProblemSpec, x: &[f64], cert: &HullCertificate) -> Vec<f64> {
    let d = spec.instance.d;
    let mut dens = Density::new(&spec.instance, spec.doc.lagrangian);
    let mut out = vec![0.0; d + 1];
    let mut f = vec![0.0; d];
    for a in &cert.atoms {
        controlled_field_into(x, a.control(), &mut f);
        for j in 0..d {
            out[j] += a.w * f[j];
        }
        out[d] += a.w * dens.eval(x, a.control());
    }
    out
}

/// Lawson–Hanson NNLS for a 4-row system given by columns. Returns weights and residual norm.
pub fn nnls(cols: &[[f64; 4]], b: &[f64; 4]) -> (Vec<f64>, f64) {
    let n = cols.len();
    let mut x = vec![0.0; n];
    let mut passive: Vec<usize> = Vec::new();
    let resid = |x: &[f64]| -> [f64; 4] {
        let mut r = *b;
        for (j, c) in cols.iter().enumerate() {
            if x[j] != 0.0 {
                for i in 0..4 {
                    r[i] -= c[i] * x[j];
                }
            }
        }
        r
    };
    let tol = 1e-14;
    for _outer in 0..(3 * n).max(50) {
        let r = resid(&x);
        let mut best = None;
        let mut best_g = tol;
        for (j, c) in cols.iter().enumerate() {
            if passive.contains(&j) {
                continue;
            }
            let g: f64 = (0..4).map(|i| c[i] * r[i]).sum();
            if g > best_g {
                best_g = g;
                best = Some(j);
            }
        }
        let Some(j) = best else { break };
        passive.push(j);
        loop {
            let z = match ls_subset(cols, &passive, b) {
                Some(z) => z,
                None => {
                    passive.pop();
                    break;
                }
            };
            if z.iter().all(|&v| v > 0.0) {
                for (k, &p) in passive.iter().enumerate() {
                    x[p] = z[k];
                }
                break;
            }
            let mut alpha = f64::INFINITY;
            for (k, &p) in passive.iter().enumerate() {
                if z[k] <= 0.0 {
                    alpha = alpha.min(x[p] / (x[p] - z[k]));
                }
            }
            for (k, &p) in passive.iter().enumerate() {
                x[p] += alpha * (z[k] - x[p]);
            }
            passive.retain(|&p| x[p] > 1e-15);
            for j in 0..n {
                if !passive.contains(&j) {
                    x[j] = 0.0;
                }
            }
            if passive.is_empty() {
                break;
            }
        }
        if passive.len() >= 4 && norm4(&resid(&x)) < 1e-15 {
            break;
        }
    }
    let r = resid(&x);
    (x, norm4(&r))
}

fn norm4(r: &[f64; 4]) -> f64 {
    r.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Least squares on a subset of columns via normal equations; `None` if singular.
fn ls_subset(cols: &[[f64; 4]], idx: &[usize], b: &[f64; 4]) -> Option<Vec<f64>> {
    let m = idx.len();
    let mut a = vec![vec![0.0; m + 1]; m];
    for (r, &i) in idx.iter().enumerate() {
        for (c, &j) in idx.iter().enumerate() {
            a[r][c] = (0..4).map(|k| cols[i][k] * cols[j][k]).sum();
        }
        a[r][m] = (0..4).map(|k| cols[i][k] * b[k]).sum();
    }
    for c in 0..m {
        let p = (c..m).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-13 {
            return None;
        }
        a.swap(c, p);
        for r in 0..m {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=m {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    Some((0..m).map(|r| a[r][m] / a[r][r]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::classical_cost;
    use crate::geometry::{eta, phi};
    use crate::trajectories::{integrate_young, reference_minimizer, steps_for, IntervalMeasure};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn base_spec() -> ProblemSpec {
        ProblemSpec::new(Instance::default(), ProblemDoc::default())
    }

    #[test]
    fn lift_of_reference() {
        let spec = base_spec();
        let lifted = mayer_lift(&spec).unwrap();
        assert!(lifted.doc.lifted && lifted.dim() == 5);
        assert!(mayer_lift(&lifted).is_err());
        let (y, c) = reference_minimizer(&spec.instance);
        let s = steps_for(&y.breakpoints(), 1e-4);
        let lc = integrate_lifted(&lifted, &y, &spec.instance.x0(), s).unwrap();
        assert!((lifted_terminal_value(&lifted, &lc) - 0.2).abs() < 1e-9);
        assert!((spec.cost(&y, &c).unwrap() - 0.2).abs() < 1e-9);
    }

    #[test]
    fn zero_lagrangian_lift() {
        let inst = Instance::default();
        let doc = ProblemDoc { lagrangian: LagrangianKind::Vee, ..ProblemDoc::default() };
        let lifted = mayer_lift(&ProblemSpec::new(inst.clone(), doc)).unwrap();
        // a path that never enters [-a, a] carries zero running cost
        let y = YoungPath {
            intervals: vec![IntervalMeasure { t0: 0.0, t1: 0.05, atoms: vec![Atom::new(Control::new(0.0, 1.0), 1.0)] }],
        };
        let lc = integrate_lifted(&lifted, &y, &inst.x0(), 10).unwrap();
        let base = integrate_young(&inst, &y, &inst.x0(), 10).unwrap();
        for (k, p) in lc.points.iter().enumerate() {
            assert_eq!(p[4], 0.0);
            assert!(crate::geometry::dist(&p[..4], &base.points[k]) < 1e-15);
        }
    }

    #[test]
    fn hull_certificates() {
        let spec = base_spec();
        let x = eta(0.0, 4);
        let mut f = vec![0.0; 4];
        controlled_field_into(&x, Control::new(1.0, 0.0), &mut f);
        let mut v = f.clone();
        v.push(1.0);
        let cert = velocity_hull_membership(&spec, &x, &v).expect("in hull");
        let back = certificate_velocity(&spec, &x, &cert);
        assert!(back.iter().zip(&v).all(|(a, b)| (a - b).abs() <= 1e-9));
        assert!(cert.atoms.len() <= 6);
        // corner: Dirac
        let u = Control::new(1.0, -1.0);
        controlled_field_into(&x, u, &mut f);
        let mut v = f.clone();
        v.push(1.0);
        let cert = velocity_hull_membership(&spec, &x, &v).unwrap();
        assert_eq!(cert.atoms.len(), 1);
        assert_eq!(cert.atoms[0].control(), u);
        // below the convexified value χ(1 + r²) = 1
        let mut v = f.clone();
        v.push(1.0 - 1e-3);
        assert!(velocity_hull_membership(&spec, &x, &v).is_none());
        // base velocity not in the distribution
        let bad = vec![0.0, 1.0, 0.5, 0.0, 1.0];
        assert!(velocity_hull_membership(&spec, &eta(0.0, 4), &bad).is_none());
    }

    #[test]
    fn hull_agrees_with_brute_force() {
        let spec = base_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = phi(&[0.03, 0.0, 0.004, 0.0]);
        let mut dens = Density::new(&spec.instance, LagrangianKind::VeeVee);
        let floor = dens.eval(&x, Control::new(1.0, 1.0));
        for _ in 0..40 {
            let u = Control::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let mut f = vec![0.0; 4];
            controlled_field_into(&x, u, &mut f);
            // the u = 0 atom alone lifts the envelope well above floor + 0.5 on this box
            let ells = if u.norm_inf() <= 0.5 { vec![floor - 1e-4, floor + 1e-3, floor + 0.5] } else { vec![floor - 1e-4, floor + 1e-3] };
            for ell in ells {
                let mut v = f.clone();
                v.push(ell);
                let got = velocity_hull_membership(&spec, &x, &v).is_some();
                assert_eq!(got, ell >= floor, "u = {u:?}, ell = {ell}");
            }
        }
    }

    #[test]
    fn penalized() {
        let inst = Instance::default();
        assert!(matches!(penalized_spec(&inst, 0.1, 1e-3), Err(GapError::AlphaTooSmall { .. })));
        let spec = penalized_spec(&inst, 1.0, 1e-3).unwrap();
        assert_eq!(spec.doc.target_mode, TargetMode::None);
        let (y, c) = reference_minimizer(&inst);
        assert!((spec.cost(&y, &c).unwrap() - 0.2).abs() < 1e-6);
        // a contender that stays put ends at x0, far outside X
        let p = crate::trajectories::ControlPath::uniform(-0.15, 0.15, vec![Control::ZERO]);
        let g = crate::trajectories::integrate_horizontal(&inst, &p, &inst.x0(), 4).unwrap();
        let total = classical_cost(&inst, LagrangianKind::VeeVee, &p, &g, spec.doc.terminal.as_ref()).unwrap().total;
        assert!(total >= 1.0 && total > 0.2);
    }

    #[test]
    fn doc_json() {
        let doc = ProblemDoc::default();
        let s = serde_json::to_string(&doc).unwrap();
        assert_eq!(s, r#"{"lagrangian":{"kind":"VEEVEE"},"target_mode":"SET","lifted":false}"#);
        let back: ProblemDoc = serde_json::from_str(&s).unwrap();
        assert_eq!(back, doc);
    }
}
