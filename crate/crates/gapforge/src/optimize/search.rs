//! Direct transcription of the classical problem and a derivative-free local search.

use serde::{Deserialize, Serialize};

use crate::costs::{classical_cost, terminal_penalty, LagrangianKind, StepQuadrature, TerminalCost};
use crate::domain::{clearance_straight, in_target, Instance, StateConstraint, BOUNDARY_TOL};
use crate::error::{GapError, Result};
use crate::geometry::{dist, phi_inv_into, Control, Point, CORNERS};
use crate::relaxation::TargetMode;
use crate::trajectories::{
    admissible, integrate_horizontal, steps_for, uniform_grid, Atom, ControlPath, Curve, Rk4, ADMISSIBILITY_REFINE,
    REFERENCE_STEP,
};

/// Tolerance on the endpoint in point-target mode.
pub const POINT_TARGET_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscribedProblem {
    pub instance: Instance,
    /// Control intervals on `[-a_δ, a_δ]`.
    pub n: usize,
    /// Cost reported for outputs.
    pub kind: LagrangianKind,
    pub constraint: StateConstraint,
    pub target: TargetMode,
    pub terminal: Option<TerminalCost>,
    /// Penalty continuation schedule.
    pub weights: Vec<f64>,
    pub seed: u64,
    /// Interval evaluations allowed per search phase.
    pub budget: u64,
    /// Start state; `x0` when absent.
    pub start: Option<Point>,
}

impl TranscribedProblem {
    pub fn new(instance: Instance, n: usize) -> Result<Self> {
        if n < 10 {
            return Err(GapError::Precondition(format!("N = {n} < 10")));
        }
        Ok(TranscribedProblem {
            instance,
            n,
            kind: LagrangianKind::VeeVee,
            constraint: StateConstraint::Omega,
            target: TargetMode::Set,
            terminal: None,
            weights: vec![1e2, 1e3, 1e4],
            seed: 0,
            budget: 300_000,
            start: None,
        })
    }

    pub fn start_point(&self) -> Point {
        self.start.clone().unwrap_or_else(|| self.instance.x0())
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let (t0, t1) = self.instance.horizon();
        uniform_grid(t0, t1, self.n)
    }

    /// Integrator steps per control interval.
    pub fn steps(&self) -> usize {
        steps_for(&self.breakpoints(), REFERENCE_STEP)
    }

    /// Kind minimized by the search. Mollified runs search under `L^∨∨` and are re-scored.
    pub fn search_kind(&self) -> LagrangianKind {
        match self.kind {
            LagrangianKind::Mollified { .. } => LagrangianKind::VeeVee,
            k => k,
        }
    }

    /// Rest, `u = (1, 0)` on `[-λa, λa]`, rest.
    pub fn reference_start(&self) -> Vec<Control> {
        super::starts::reference_controls(&self.breakpoints(), &self.instance)
    }

    fn endpoint_excess(&self, x: &[f64]) -> f64 {
        let inst = &self.instance;
        match self.target {
            TargetMode::Set => (dist(x, &inst.target.center) - 0.99 * inst.target.radius).max(0.0),
            TargetMode::Point => (dist(x, &inst.x1()) - 0.99 * POINT_TARGET_TOL).max(0.0),
            TargetMode::None => 0.0,
        }
    }

    fn endpoint_ok(&self, x: &[f64]) -> bool {
        let inst = &self.instance;
        match self.target {
            TargetMode::Set => in_target(x, inst, self.constraint),
            TargetMode::Point => dist(x, &inst.x1()) <= POINT_TARGET_TOL,
            TargetMode::None => true,
        }
    }

    /// Integrates `controls` and checks the contract of a feasible output.
    pub fn verify(&self, controls: &[Control]) -> Result<SearchOutcome> {
        let inst = &self.instance;
        let path = ControlPath::uniform(inst.horizon().0, inst.horizon().1, controls.to_vec());
        let curve = integrate_horizontal(inst, &path, &self.start_point(), self.steps())?;
        let adm = admissible(&curve, inst);
        let clear_ok = self.constraint == StateConstraint::Free || adm.admissible;
        let end_ok = self.endpoint_ok(curve.end());
        let cost = classical_cost(inst, self.kind, &path, &curve, self.terminal.as_ref())?.total;
        Ok(SearchOutcome {
            path,
            cost,
            feasible: clear_ok && end_ok,
            min_clearance: adm.min_clearance,
            endpoint_gap: dist(curve.end(), &inst.target.center) - inst.target.radius,
            evaluations: 0,
            curve,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub path: ControlPath,
    pub cost: f64,
    pub feasible: bool,
    pub min_clearance: f64,
    /// Distance from the endpoint to the target ball (negative inside).
    pub endpoint_gap: f64,
    pub evaluations: u64,
    pub curve: Curve,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Objective {
    Penalty(f64),
    Restore,
    FeasibleDescent,
}

/// Incremental evaluator: node states, per-interval cost and squared violation
/// (in units of the tube radius `1/b`).
struct Evaluator<'a> {
    tp: &'a TranscribedProblem,
    d: usize,
    s: usize,
    bp: Vec<f64>,
    quad: StepQuadrature<'a>,
    rk: Rk4,
    y: Vec<f64>,
    xq: Vec<f64>,
    nodes: Vec<f64>,
    cost: Vec<f64>,
    viol: Vec<f64>,
    end_term: f64,
    end_excess: f64,
    t_nodes: Vec<f64>,
    t_cost: Vec<f64>,
    t_viol: Vec<f64>,
    pre_cost: Vec<f64>,
    pre_viol: Vec<f64>,
    evals: u64,
    best_feasible: Option<(f64, Vec<Control>)>,
}

impl<'a> Evaluator<'a> {
    fn new(tp: &'a TranscribedProblem) -> Self {
        let inst = &tp.instance;
        let d = inst.d;
        let n = tp.n;
        let mut nodes = vec![0.0; (n + 1) * d];
        nodes[..d].copy_from_slice(&tp.start_point());
        Evaluator {
            tp,
            d,
            s: tp.steps(),
            bp: tp.breakpoints(),
            quad: StepQuadrature::new(inst, tp.search_kind()),
            rk: Rk4::new(d),
            y: vec![0.0; d],
            xq: vec![0.0; d],
            t_nodes: nodes.clone(),
            nodes,
            cost: vec![0.0; n],
            viol: vec![0.0; n],
            end_term: 0.0,
            end_excess: 0.0,
            t_cost: vec![0.0; n],
            t_viol: vec![0.0; n],
            pre_cost: vec![0.0; n + 1],
            pre_viol: vec![0.0; n + 1],
            evals: 0,
            best_feasible: None,
        }
    }

    #[inline]
    fn violation(&mut self, x: &[f64]) -> f64 {
        phi_inv_into(x, &mut self.y);
        let c = clearance_straight(&self.y, &self.tp.instance);
        let v = (-c - 0.5 * BOUNDARY_TOL).max(0.0) * self.tp.instance.b;
        v * v
    }

    /// Integrates interval `i` from `x` (updated in place).
    fn interval(&mut self, i: usize, u: Control, x: &mut [f64]) -> (f64, f64) {
        let hs = (self.bp[i + 1] - self.bp[i]) / self.s as f64;
        let atom = [Atom::new(u, 1.0)];
        let check = self.tp.constraint == StateConstraint::Omega;
        let (mut c, mut v) = (0.0, 0.0);
        for _ in 0..self.s {
            if check {
                let mut xq = std::mem::take(&mut self.xq);
                xq.copy_from_slice(x);
                for _ in 1..ADMISSIBILITY_REFINE {
                    self.rk.step(&mut xq, u, hs / ADMISSIBILITY_REFINE as f64);
                    v += self.violation(&xq);
                }
                self.xq = xq;
            }
            c += self.quad.step(x, u, &atom, hs).0;
            self.rk.step(x, u, hs);
            if check {
                v += self.violation(x);
            }
        }
        self.evals += 1;
        (c, v)
    }

    fn end_terms(&self, x: &[f64]) -> (f64, f64) {
        let term = self.tp.terminal.as_ref().map(|tc| terminal_penalty(tc, x, &self.tp.instance)).unwrap_or(0.0);
        let e = self.tp.endpoint_excess(x);
        (term, e * e)
    }

    fn objective(obj: Objective, cost: f64, viol: f64) -> f64 {
        match obj {
            Objective::Penalty(w) => cost + w * viol,
            Objective::Restore => viol,
            Objective::FeasibleDescent => {
                if viol > 0.0 {
                    f64::INFINITY
                } else {
                    cost
                }
            }
        }
    }

    fn load(&mut self, controls: &[Control]) {
        let d = self.d;
        let mut x = self.nodes[..d].to_vec();
        for (i, &u) in controls.iter().enumerate() {
            let (c, v) = self.interval(i, u, &mut x);
            self.cost[i] = c;
            self.viol[i] = v;
            self.nodes[(i + 1) * d..(i + 2) * d].copy_from_slice(&x);
        }
        let (t, e) = self.end_terms(&x);
        self.end_term = t;
        self.end_excess = e;
        self.prefix();
    }

    fn prefix(&mut self) {
        for i in 0..self.tp.n {
            self.pre_cost[i + 1] = self.pre_cost[i] + self.cost[i];
            self.pre_viol[i + 1] = self.pre_viol[i] + self.viol[i];
        }
    }

    fn total(&self, obj: Objective) -> f64 {
        let n = self.tp.n;
        Self::objective(obj, self.pre_cost[n] + self.end_term, self.pre_viol[n] + self.end_excess)
    }

    fn feasible(&self) -> bool {
        self.pre_viol[self.tp.n] == 0.0 && self.end_excess == 0.0
    }

    fn record(&mut self, controls: &[Control]) {
        if !self.feasible() {
            return;
        }
        let cost = self.pre_cost[self.tp.n] + self.end_term;
        if self.best_feasible.as_ref().map_or(true, |(c, _)| cost < *c) {
            self.best_feasible = Some((cost, controls.to_vec()));
        }
    }

    /// Objective with `controls` changed from interval `k` on; `None` once it reaches `bound`.
    fn trial(&mut self, controls: &[Control], k: usize, obj: Objective, bound: f64) -> Option<f64> {
        let d = self.d;
        let n = self.tp.n;
        let mut x = self.nodes[k * d..(k + 1) * d].to_vec();
        let (mut c, mut v) = (self.pre_cost[k], self.pre_viol[k]);
        for i in k..n {
            let (ci, vi) = self.interval(i, controls[i], &mut x);
            self.t_cost[i] = ci;
            self.t_viol[i] = vi;
            self.t_nodes[(i + 1) * d..(i + 2) * d].copy_from_slice(&x);
            c += ci;
            v += vi;
            if Self::objective(obj, c, v) >= bound {
                return None;
            }
        }
        let (t, e) = self.end_terms(&x);
        let val = Self::objective(obj, c + t, v + e);
        if val >= bound {
            return None;
        }
        self.end_term = t;
        self.end_excess = e;
        Some(val)
    }

    fn commit(&mut self, k: usize) {
        let d = self.d;
        let n = self.tp.n;
        self.cost[k..n].copy_from_slice(&self.t_cost[k..n]);
        self.viol[k..n].copy_from_slice(&self.t_viol[k..n]);
        self.nodes[(k + 1) * d..(n + 1) * d].copy_from_slice(&self.t_nodes[(k + 1) * d..(n + 1) * d]);
        self.prefix();
    }
}

fn clamp(u: Control) -> Control {
    Control::new(u.u1.clamp(-1.0, 1.0), u.u2.clamp(-1.0, 1.0))
}

/// Step levels of the pattern search.
const LEVELS: usize = 7;

/// Coordinate/block pattern search on `obj`. Returns when no move improves at the finest level,
/// when the budget is spent or when `stop` holds.
fn pattern(ev: &mut Evaluator, controls: &mut [Control], obj: Objective, budget: u64, stop: impl Fn(&Evaluator) -> bool) {
    let n = controls.len();
    let start = ev.evals;
    let mut current = ev.total(obj);
    let blocks: Vec<usize> = [16usize, 4, 1].into_iter().filter(|&b| b < n).collect();
    let mut saved = vec![Control::ZERO; n];
    for level in 0..LEVELS {
        let sigma = 0.5f64.powi(level as i32);
        let mut moves: Vec<Move> = vec![
            Move::Shift(sigma, 0.0),
            Move::Shift(-sigma, 0.0),
            Move::Shift(0.0, sigma),
            Move::Shift(0.0, -sigma),
        ];
        if level == 0 {
            moves.extend(CORNERS.iter().map(|&c| Move::Set(c)));
            moves.push(Move::Set(Control::ZERO));
        }
        loop {
            let mut improved = false;
            for &bs in &blocks {
                let mut k = 0;
                while k < n {
                    let end = (k + bs).min(n);
                    saved[k..end].copy_from_slice(&controls[k..end]);
                    for mv in &moves {
                        let mut changed = false;
                        for i in k..end {
                            let u = match *mv {
                                Move::Shift(a, b) => clamp(Control::new(saved[i].u1 + a, saved[i].u2 + b)),
                                Move::Set(c) => c,
                            };
                            changed |= u != saved[i];
                            controls[i] = u;
                        }
                        if !changed {
                            continue;
                        }
                        let bound = current - 1e-14 * (1.0 + current.abs());
                        if let Some(val) = ev.trial(controls, k, obj, bound) {
                            ev.commit(k);
                            ev.record(controls);
                            current = val;
                            improved = true;
                            saved[k..end].copy_from_slice(&controls[k..end]);
                            if stop(ev) {
                                return;
                            }
                            break;
                        }
                        controls[k..end].copy_from_slice(&saved[k..end]);
                    }
                    controls[k..end].copy_from_slice(&saved[k..end]);
                    if ev.evals - start > budget {
                        return;
                    }
                    k = end;
                }
            }
            if !improved {
                break;
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Move {
    Shift(f64, f64),
    Set(Control),
}

/// Penalty continuation, then feasibility restoration if needed, then feasible-only descent.
/// Errors with FAILED_FEASIBILITY when no feasible path is found.
pub fn local_search(tp: &TranscribedProblem, start: &[Control]) -> Result<SearchOutcome> {
    if start.len() != tp.n {
        return Err(GapError::MismatchedGrids(format!("start has {} controls, N = {}", start.len(), tp.n)));
    }
    if let Some(k) = start.iter().position(|u| !(u.u1.abs() <= 1.0 && u.u2.abs() <= 1.0)) {
        return Err(GapError::Precondition(format!("start control {k} lies outside U")));
    }
    let mut controls = start.to_vec();
    let mut ev = Evaluator::new(tp);
    ev.load(&controls);
    ev.record(&controls);
    if tp.budget > 0 {
        for &w in &tp.weights {
            pattern(&mut ev, &mut controls, Objective::Penalty(w), tp.budget, |_| false);
        }
        if !ev.feasible() {
            pattern(&mut ev, &mut controls, Objective::Restore, tp.budget, |e| e.feasible());
        }
        if !ev.feasible() {
            if let Some((_, best)) = ev.best_feasible.clone() {
                controls = best;
                ev.load(&controls);
            }
        }
        if ev.feasible() {
            pattern(&mut ev, &mut controls, Objective::FeasibleDescent, tp.budget, |_| false);
        }
    }
    let mut out = tp.verify(&controls)?;
    out.evaluations = ev.evals;
    if !out.feasible {
        return Err(GapError::FailedFeasibility { min_clearance: out.min_clearance, endpoint_gap: out.endpoint_gap.max(0.0) });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(n: usize) -> TranscribedProblem {
        TranscribedProblem { budget: 200_000, ..TranscribedProblem::new(Instance::default(), n).unwrap() }
    }

    #[test]
    fn rejects_short_grids() {
        assert!(TranscribedProblem::new(Instance::default(), 9).is_err());
    }

    #[test]
    fn reference_start_is_feasible_and_costs_three_per_unit_time() {
        let tp = problem(40);
        let out = tp.verify(&tp.reference_start()).unwrap();
        assert!(out.feasible);
        // L = 1 + 2Δ((1,0)) = 3 on the plateau of length 2a
        assert!((out.cost - 0.6).abs() < 1e-9, "{}", out.cost);
    }

    #[test]
    fn evaluator_matches_the_integrator() {
        let tp = problem(30);
        let mut ctrl = tp.reference_start();
        ctrl[7] = Control::new(0.3, -0.4);
        ctrl[20] = Control::new(-0.2, 0.9);
        let mut ev = Evaluator::new(&tp);
        ev.load(&ctrl);
        let out = tp.verify(&ctrl).unwrap();
        let n = tp.n;
        assert!((ev.pre_cost[n] - out.cost).abs() < 1e-12);
        let d = tp.instance.d;
        for (a, b) in ev.nodes[n * d..].iter().zip(out.curve.end()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(ev.feasible(), out.feasible);
        // incremental change from interval 12 equals a fresh load
        ctrl[12] = Control::new(1.0, 1.0);
        let inc = ev.trial(&ctrl, 12, Objective::Penalty(1e3), f64::INFINITY).unwrap();
        ev.commit(12);
        let mut fresh = Evaluator::new(&tp);
        fresh.load(&ctrl);
        assert!((inc - fresh.total(Objective::Penalty(1e3))).abs() <= 1e-12 * inc.abs().max(1.0));
    }

    #[test]
    fn dirac_start_converges_to_a_feasible_path_above_two_a() {
        let tp = problem(40);
        let out = local_search(&tp, &tp.reference_start()).unwrap();
        assert!(out.feasible);
        assert!(out.cost > 0.2 && out.cost <= 0.6 + 1e-12, "{}", out.cost);
        assert!(admissible(&out.curve, &tp.instance).admissible);
    }

    #[test]
    fn frozen_rest_fails_feasibility() {
        let tp = TranscribedProblem { budget: 0, ..problem(20) };
        let err = local_search(&tp, &vec![Control::ZERO; 20]).unwrap_err();
        assert_eq!(err.code(), "FAILED_FEASIBILITY");
    }

    #[test]
    fn start_outside_u_is_rejected() {
        let tp = problem(20);
        let mut s = tp.reference_start();
        s[3] = Control::new(1.5, 0.0);
        assert!(local_search(&tp, &s).is_err());
    }

    #[test]
    fn free_mode_chattering_approaches_two_a() {
        let tp = TranscribedProblem { constraint: StateConstraint::Free, ..problem(100) };
        let la = tp.instance.lambda * tp.instance.a;
        let bp = tp.breakpoints();
        let start: Vec<Control> = (0..tp.n)
            .map(|k| {
                let mid = 0.5 * (bp[k] + bp[k + 1]);
                if mid.abs() < la {
                    CORNERS[k % 2]
                } else {
                    Control::ZERO
                }
            })
            .collect();
        let out = local_search(&tp, &start).unwrap();
        assert!(out.cost - 0.2 < 0.01, "{}", out.cost);
    }
}
