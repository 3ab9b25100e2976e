//! Corner-control connectors inside one end cap.
//!
//! In straightened coordinates the system is `y1' = u1, y2' = u2, y_k' = -u1 y_{k-1}`. A
//! closed diamond loop in the `(y1, y2)` plane with side `τ` shifts `(y3, y4)` by
//! `(±2τ², ±2τ³)` wherever it is run, so connectors are assembled from straight zigzags
//! followed by a solved number of loops.

use serde::{Deserialize, Serialize};

use super::{arc_length, ControlPath, Rk4};
use crate::domain::{clearance_straight, Instance};
use crate::error::{GapError, Result};
use crate::geometry::{dist, phi_inv, phi_inv_into, Control};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Duration of one zigzag piece; `a/(5b)` when `None`.
    pub primitive: Option<f64>,
    /// Largest loop side; `min((λ-1)a/4, 1/(2b))` when `None`.
    pub tau_max: Option<f64>,
    /// Each failed attempt halves the primitive and loop size.
    pub max_attempts: usize,
    /// Sub-samples per segment for the containment check.
    pub check_refine: usize,
    /// Endpoint tolerance in straightened coordinates.
    pub tol: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig { primitive: None, tau_max: None, max_attempts: 6, check_refine: 4, tol: 1e-4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectorReport {
    pub path: ControlPath,
    pub length: f64,
    /// Max-norm endpoint error in straightened coordinates.
    pub endpoint_error: f64,
    pub min_clearance: f64,
    /// `δ/2`.
    pub target_length: f64,
    pub within_target: bool,
    pub attempts: usize,
}

type Seg = (Control, f64);

const LOOP_A: [Control; 4] = [Control::new(1.0, -1.0), Control::new(1.0, 1.0), Control::new(-1.0, 1.0), Control::new(-1.0, -1.0)];

/// The four loop variants: `(Δy3, Δy4)` signs `(+,+)`, `(+,-)`, `(-,-)`, `(-,+)`.
fn loop_segments(kind: usize, tau: f64) -> [Seg; 4] {
    let neg = |u: Control| Control::new(-u.u1, -u.u2);
    let a = LOOP_A;
    let v = match kind {
        0 => a,
        1 => a.map(neg),
        2 => [a[3], a[2], a[1], a[0]].map(neg),
        _ => [a[3], a[2], a[1], a[0]],
    };
    v.map(|u| (u, tau))
}

/// Moves `y2` by `delta` with `u1` alternating so that `y1` returns; first `u1` is `dir`.
fn zigzag_y2(delta: f64, dir: f64, h: f64, out: &mut Vec<Seg>) {
    let u2 = delta.signum();
    let total = delta.abs();
    let pairs = (total / (2.0 * h)).floor() as usize;
    for _ in 0..pairs {
        out.push((Control::new(dir, u2), h));
        out.push((Control::new(-dir, u2), h));
    }
    let r = total - 2.0 * h * pairs as f64;
    if r > 0.0 {
        out.push((Control::new(dir, u2), 0.5 * r));
        out.push((Control::new(-dir, u2), 0.5 * r));
    }
}

/// Moves `y1` by `delta` with `u2` alternating so that `y2` returns to its start.
fn zigzag_y1(delta: f64, h: f64, out: &mut Vec<Seg>) {
    let u1 = delta.signum();
    let total = delta.abs();
    let pairs = (total / (2.0 * h)).floor() as usize;
    for _ in 0..pairs {
        out.push((Control::new(u1, 1.0), h));
        out.push((Control::new(u1, -1.0), h));
    }
    let r = total - 2.0 * h * pairs as f64;
    if r > 0.0 {
        out.push((Control::new(u1, 1.0), 0.5 * r));
        out.push((Control::new(u1, -1.0), 0.5 * r));
    }
}

/// Loops producing `(d3, d4)` in `(y3, y4)`, each of side at most `tau_max`.
fn loops_for(d3: f64, d4: f64, tau_max: f64, out: &mut Vec<Seg>) {
    if d3 != 0.0 {
        let n = 2 * ((d3.abs() / (4.0 * tau_max * tau_max)).ceil() as usize).max(1);
        let tau = (d3.abs() / (2.0 * n as f64)).sqrt();
        let (p, q) = if d3 > 0.0 { (0, 1) } else { (2, 3) };
        for k in 0..n {
            out.extend(loop_segments(if k % 2 == 0 { p } else { q }, tau));
        }
    }
    if d4 != 0.0 {
        let k = ((d4.abs() / (4.0 * tau_max.powi(3))).ceil() as usize).max(1);
        let tau = (d4.abs() / (4.0 * k as f64)).cbrt();
        let (p, q) = if d4 > 0.0 { (0, 3) } else { (1, 2) };
        for _ in 0..k {
            out.extend(loop_segments(p, tau));
            out.extend(loop_segments(q, tau));
        }
    }
}

fn to_path(segs: &[Seg]) -> ControlPath {
    let mut bp = vec![0.0];
    let mut values = Vec::with_capacity(segs.len());
    let mut t = 0.0;
    for &(u, h) in segs.iter().filter(|s| s.1 > 0.0) {
        t += h;
        bp.push(t);
        values.push(u);
    }
    ControlPath { breakpoints: bp, values }
}

/// Endpoint of `segs` from `x`, plus the smallest clearance and cap-range margin seen.
fn simulate(inst: &Instance, x: &[f64], segs: &[Seg], side: f64, refine: usize) -> (Vec<f64>, f64) {
    let d = x.len();
    let mut rk = Rk4::new(d);
    let mut x = x.to_vec();
    let mut y = vec![0.0; d];
    let mut worst = f64::INFINITY;
    let mut visit = |x: &[f64], y: &mut Vec<f64>| {
        phi_inv_into(x, y);
        let range = (side * y[0] - inst.a).min(inst.cap_tip() - side * y[0]);
        worst = worst.min(clearance_straight(y, inst)).min(range + 1e-12);
    };
    visit(&x, &mut y);
    for &(u, h) in segs {
        for _ in 0..refine {
            rk.step(&mut x, u, h / refine as f64);
            visit(&x, &mut y);
        }
    }
    (x, worst)
}

fn in_cap(y: &[f64], inst: &Instance, side: f64, tol: f64) -> bool {
    let s = side * y[0];
    s >= inst.a - tol && s <= inst.cap_tip() + tol && clearance_straight(y, inst) >= -tol
}

/// Corner-control path inside the cap on `side` (±1) joining `from` to `to`.
pub fn plan_cap_connector(inst: &Instance, from: &[f64], to: &[f64], side: i32, cfg: &PlannerConfig) -> Result<ConnectorReport> {
    if inst.d != 4 {
        return Err(GapError::Precondition("cap connectors are built for d = 4".into()));
    }
    if side != 1 && side != -1 {
        return Err(GapError::Precondition(format!("side must be ±1, got {side}")));
    }
    let s = side as f64;
    let (yf, yt) = (phi_inv(from), phi_inv(to));
    if !in_cap(&yf, inst, s, 1e-10) || !in_cap(&yt, inst, s, 1e-10) {
        return Err(GapError::Precondition("endpoints must both lie in the closed cap of the given side".into()));
    }
    let target_length = 0.5 * inst.delta;
    if dist(from, to) == 0.0 {
        return Ok(ConnectorReport {
            path: ControlPath { breakpoints: vec![0.0], values: vec![] },
            length: 0.0,
            endpoint_error: 0.0,
            min_clearance: clearance_straight(&yf, inst),
            target_length,
            within_target: true,
            attempts: 0,
        });
    }
    let peak = s * inst.lambda * inst.a;
    let mut h = cfg.primitive.unwrap_or(inst.a / (5.0 * inst.b));
    let mut tau_max = cfg.tau_max.unwrap_or((0.25 * (inst.lambda - 1.0) * inst.a).min(0.5 / inst.b));
    let mut expansions = 0;
    let mut best_residual = f64::INFINITY;
    for attempt in 1..=cfg.max_attempts {
        let toward = |y1: f64| if peak >= y1 { 1.0 } else { -1.0 };
        let mut head = Vec::new();
        zigzag_y2(-yf[1], toward(yf[0]), h, &mut head);
        zigzag_y1(peak - yf[0], h, &mut head);
        let mut tail = Vec::new();
        zigzag_y1(yt[0] - peak, h, &mut tail);
        zigzag_y2(yt[1], toward(yt[0]), h, &mut tail);
        let bare: Vec<Seg> = head.iter().chain(&tail).copied().collect();
        let (xe, _) = simulate(inst, from, &bare, s, 1);
        let ye = phi_inv(&xe);
        let d3 = yt[2] - ye[2];
        // loops before the second travel leg shift y3 there, which feeds y4
        let d4 = yt[3] - ye[3] + d3 * (yt[0] - peak);
        let mut segs = head;
        loops_for(d3, d4, tau_max, &mut segs);
        segs.extend(tail);
        expansions += segs.len();
        let (xe, min_c) = simulate(inst, from, &segs, s, cfg.check_refine.max(1));
        let ye = phi_inv(&xe);
        let err = ye.iter().zip(&yt).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        best_residual = best_residual.min(err.max(-min_c.min(0.0)));
        if err <= cfg.tol && min_c >= -1e-10 {
            let path = to_path(&segs);
            let length = arc_length(&path);
            return Ok(ConnectorReport {
                length,
                path,
                endpoint_error: err,
                min_clearance: min_c,
                target_length,
                within_target: length <= target_length,
                attempts: attempt,
            });
        }
        h *= 0.5;
        tau_max *= 0.5;
    }
    Err(GapError::PlannerFailed { expansions, best_residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::phi;
    use crate::trajectories::integrate_horizontal;

    #[test]
    fn loop_displacements() {
        let inst = Instance::default();
        let start = phi(&[-0.12, 0.0, 0.001, -0.002]);
        let tau = 0.003;
        let expect = [(1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (-1.0, 1.0)];
        for (kind, (s3, s4)) in expect.iter().enumerate() {
            let segs = loop_segments(kind, tau);
            let (xe, _) = simulate(&inst, &start, &segs, -1.0, 1);
            let (y0, y1) = (phi_inv(&start), phi_inv(&xe));
            assert!((y1[0] - y0[0]).abs() < 1e-15 && (y1[1] - y0[1]).abs() < 1e-15);
            assert!((y1[2] - y0[2] - s3 * 2.0 * tau * tau).abs() < 1e-15, "kind {kind}");
            assert!((y1[3] - y0[3] - s4 * 2.0 * tau.powi(3)).abs() < 1e-15, "kind {kind}");
        }
    }

    #[test]
    fn connector_to_seam() {
        let inst = Instance::default();
        let [c, sn] = inst.spiral_center_tail(-inst.a);
        let seam = phi(&[-inst.a, 0.0, c, sn]);
        let rep = plan_cap_connector(&inst, &inst.x0(), &seam, -1, &PlannerConfig::default()).unwrap();
        assert!(rep.endpoint_error <= 1e-4);
        assert!(rep.min_clearance >= -1e-10);
        assert!(rep.path.values.iter().all(|u| u.u1.abs() == 1.0 && u.u2.abs() == 1.0));
        let curve = integrate_horizontal(&inst, &rep.path, &inst.x0(), 4).unwrap();
        for p in &curve.points {
            assert_ne!(crate::domain::classify(p, &inst), crate::domain::RegionTag::Outside);
        }
        assert!(rep.length > 0.0);
    }

    #[test]
    fn trivial_and_bad_inputs() {
        let inst = Instance::default();
        let rep = plan_cap_connector(&inst, &inst.x0(), &inst.x0(), -1, &PlannerConfig::default()).unwrap();
        assert_eq!(rep.length, 0.0);
        assert!(rep.path.is_empty());
        assert!(plan_cap_connector(&inst, &inst.x0(), &inst.x1(), -1, &PlannerConfig::default()).is_err());
    }
}
