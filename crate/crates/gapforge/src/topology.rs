//! Winding numbers of the shifted planar curve, shell partitions and ball-box probes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costs::{LagrangianKind, StepQuadrature};
use crate::domain::Instance;
use crate::error::{GapError, Result};
use crate::geometry::{phi_inv, phi_inv_into, Control};
use crate::trajectories::{Atom, Curve, Rk4, ADMISSIBILITY_REFINE};

/// Samples closer than this to the origin make the winding undefined.
pub const ORIGIN_TOL: f64 = 1e-12;
/// Shells beyond this index are reported as a tail.
pub const SHELL_CAP: usize = 10_000;
/// Shells needing more blocks than this are left out of the polygonal sum and flagged.
pub const MAX_BLOCKS: usize = 4_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarCurve {
    pub times: Vec<f64>,
    pub points: Vec<[f64; 2]>,
}

/// Total signed angle swept around the origin, by per-segment `atan2` increments.
pub fn winding_integral(pc: &PlanarCurve) -> Result<f64> {
    for (index, p) in pc.points.iter().enumerate() {
        if p[0].hypot(p[1]) <= ORIGIN_TOL {
            return Err(GapError::OriginHit { index });
        }
    }
    Ok(pc
        .points
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            (a[0] * b[1] - a[1] * b[0]).atan2(a[0] * b[0] + a[1] * b[1])
        })
        .sum())
}

/// `˚γ = τ(φ^{-1}(x) + (0, ξ_b(x_1)))` at a single state.
pub fn ring_point(x: &[f64], inst: &Instance) -> [f64; 2] {
    let y = phi_inv(x);
    let d = y.len();
    let [c, s] = inst.spiral_center_tail(y[0]);
    [y[d - 2] + c, y[d - 1] + s]
}

pub fn ring_lift(curve: &Curve, inst: &Instance) -> PlanarCurve {
    PlanarCurve {
        times: curve.times.clone(),
        points: curve.points.iter().map(|x| ring_point(x, inst)).collect(),
    }
}

/// First `[i0, i1]` with `x1(i0) = -a`, `x1(i1) = a` and `x1 ∈ [-a, a]` in between.
pub fn crossing_interval(curve: &Curve, inst: &Instance) -> Result<(f64, f64)> {
    let a = inst.a;
    let x1: Vec<f64> = curve.points.iter().map(|p| p[0]).collect();
    let mut last_below: Option<usize> = None;
    let mut hit = None;
    for (k, &v) in x1.iter().enumerate() {
        if v <= -a {
            last_below = Some(k);
        } else if v >= a {
            if let Some(j) = last_below {
                hit = Some((j, k));
                break;
            }
        }
    }
    let (j, k) = hit.ok_or(GapError::NoCrossing)?;
    // x1 is affine in t on every integrator step, and linearly interpolated otherwise
    let cross = |i: usize, level: f64| -> f64 {
        let (t0, t1) = (curve.times[i], curve.times[i + 1]);
        let (v0, v1) = (x1[i], x1[i + 1]);
        if v1 == v0 {
            t0
        } else {
            (t0 + (level - v0) / (v1 - v0) * (t1 - t0)).clamp(t0, t1)
        }
    };
    let t0 = if x1[j] == -a || j + 1 >= x1.len() { curve.times[j] } else { cross(j, -a) };
    let t1 = if x1[k] == a { curve.times[k] } else { cross(k - 1, a) };
    Ok((t0, t1))
}

/// Ring-lifted curve on `[t0, t1]`, refined so that ξ_b advances at most 0.25 rad per piece.
pub fn ring_lift_window(curve: &Curve, inst: &Instance, t0: f64, t1: f64) -> PlanarCurve {
    let mut times = vec![t0];
    let mut points = vec![ring_point(&curve.state_at(t0), inst)];
    let push = |t: f64, x: &[f64], times: &mut Vec<f64>, points: &mut Vec<[f64; 2]>| {
        times.push(t);
        points.push(ring_point(x, inst));
    };
    let mut rk = Rk4::new(curve.d());
    let k0 = curve.segment(t0);
    let k1 = curve.segment(t1);
    for k in k0..=k1 {
        let (a, b) = (curve.times[k].max(t0), curve.times[k + 1].min(t1));
        if !(b > a) {
            continue;
        }
        let xa = curve.state_at(a);
        let dx1 = if curve.has_controls() { curve.controls[k].u1 * (b - a) } else { curve.state_at(b)[0] - xa[0] };
        let m = ((inst.b * dx1.abs() / 0.25).ceil() as usize).max(1);
        if curve.has_controls() {
            let mut x = xa.clone();
            let h = (b - a) / m as f64;
            for i in 1..=m {
                rk.step(&mut x, curve.controls[k], h);
                push(if i == m { b } else { a + h * i as f64 }, &x, &mut times, &mut points);
            }
        } else {
            for i in 1..=m {
                let t = if i == m { b } else { a + (b - a) * i as f64 / m as f64 };
                push(t, &curve.state_at(t), &mut times, &mut points);
            }
        }
    }
    PlanarCurve { times, points }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindingCheck {
    pub winding: f64,
    pub bound: f64,
    pub pass: bool,
    pub interval: (f64, f64),
}

/// Winding of `˚γ` over the crossing interval against `ab − 2π`.
pub fn winding_bound_check(curve: &Curve, inst: &Instance) -> Result<WindingCheck> {
    let (t0, t1) = crossing_interval(curve, inst)?;
    let pc = ring_lift_window(curve, inst, t0, t1);
    let winding = winding_integral(&pc)?;
    let bound = inst.a * inst.b - 2.0 * std::f64::consts::PI;
    Ok(WindingCheck { winding, bound, pass: winding >= bound, interval: (t0, t1) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRun {
    pub start: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Shell {
    pub j: usize,
    /// Disjoint, sorted half-open intervals making up `V_j`.
    pub intervals: Vec<(f64, f64)>,
    pub measure: f64,
    pub block_len: f64,
    /// Greedy disjoint cover of `V_j` by blocks of length `ℓ_j`.
    pub blocks: Vec<BlockRun>,
}

impl Shell {
    pub fn block_count(&self) -> usize {
        self.blocks.iter().map(|b| b.count).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellPartition {
    pub shells: Vec<Shell>,
    /// Time with `0 < r < 1/(SHELL_CAP + 1)`.
    pub tail_time: f64,
    /// Time with `r = 0`.
    pub zero_time: f64,
}

/// Shell index `j` with `r ∈ (1/(j+1), 1/j]`, or `None` for `r = 0`.
pub fn shell_index(r: f64) -> Option<usize> {
    if r <= 0.0 {
        None
    } else {
        Some((1.0 / r).floor() as usize)
    }
}

/// Sample-and-hold partition of `[t0, t1]` (default: the whole curve) into the sets `V_j`.
pub fn shell_partition(curve: &Curve, _inst: &Instance, window: Option<(f64, f64)>) -> ShellPartition {
    let (w0, w1) = window.unwrap_or((curve.times[0], *curve.times.last().unwrap()));
    let mut by_j: std::collections::BTreeMap<usize, Vec<(f64, f64)>> = Default::default();
    let mut tail_time = 0.0;
    let mut zero_time = 0.0;
    let n = curve.times.len();
    let mut y = vec![0.0; curve.d()];
    for k in 0..n.saturating_sub(1) {
        let (a, b) = (curve.times[k].max(w0), curve.times[k + 1].min(w1));
        if !(b > a) {
            continue;
        }
        // hold the value at the left end of the clipped piece
        let x = if a > curve.times[k] { curve.state_at(a) } else { curve.points[k].clone() };
        phi_inv_into(&x, &mut y);
        let r = y[2..].iter().map(|v| v * v).sum::<f64>().sqrt();
        match shell_index(r) {
            None => zero_time += b - a,
            Some(j) if j > SHELL_CAP => tail_time += b - a,
            Some(j) => {
                let list = by_j.entry(j).or_default();
                match list.last_mut() {
                    Some(last) if last.1 == a => last.1 = b,
                    _ => list.push((a, b)),
                }
            }
        }
    }
    let shells = by_j
        .into_iter()
        .map(|(j, intervals)| {
            let block_len = (j as f64).powf(-2.5);
            let mut blocks = Vec::new();
            let mut covered_to = f64::NEG_INFINITY;
            for &(s, e) in &intervals {
                let start = s.max(covered_to);
                if start >= e {
                    continue;
                }
                let count = ((e - start) / block_len).ceil() as usize;
                let count = count.max(1);
                blocks.push(BlockRun { start, count });
                covered_to = start + count as f64 * block_len;
            }
            let measure = intervals.iter().map(|(s, e)| e - s).sum();
            Shell { j, intervals, measure, block_len, blocks }
        })
        .collect();
    ShellPartition { shells, tail_time, zero_time }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolygonalBound {
    pub value: f64,
    pub tail_time: f64,
    pub zero_time: f64,
    pub truncated_shells: Vec<usize>,
    /// True when every time in the crossing interval lies in a summed shell.
    pub premise_holds: bool,
}

fn tau_straight(curve: &Curve, t: f64) -> [f64; 2] {
    let y = phi_inv(&curve.state_at(t));
    let d = y.len();
    [y[d - 2], y[d - 1]]
}

/// `Σ_j 2j Σ_k ‖τγ̃(t_{j,k} + ℓ_j) − τγ̃(t_{j,k})‖` over the crossing interval.
pub fn polygonal_winding_bound(curve: &Curve, inst: &Instance) -> Result<PolygonalBound> {
    let (t0, t1) = crossing_interval(curve, inst)?;
    let part = shell_partition(curve, inst, Some((t0, t1)));
    let mut value = 0.0;
    let mut truncated = Vec::new();
    for sh in &part.shells {
        if sh.block_count() > MAX_BLOCKS {
            truncated.push(sh.j);
            continue;
        }
        let mut chords = 0.0;
        for run in &sh.blocks {
            let mut prev = tau_straight(curve, run.start);
            for k in 1..=run.count {
                let next = tau_straight(curve, run.start + sh.block_len * k as f64);
                chords += (next[0] - prev[0]).hypot(next[1] - prev[1]);
                prev = next;
            }
        }
        value += 2.0 * sh.j as f64 * chords;
    }
    Ok(PolygonalBound {
        value,
        tail_time: part.tail_time,
        zero_time: part.zero_time,
        premise_holds: part.tail_time == 0.0 && part.zero_time == 0.0 && truncated.is_empty(),
        truncated_shells: truncated,
    })
}

/// Pieces per random probe curve.
pub const PROBE_PIECES: usize = 8;

/// Maximum |Δ(φ^{-1}γ)_j| per coordinate over `n` random `U_□` curves of length `rho` from `p`.
pub fn ballbox_probe(inst: &Instance, p: &[f64], rho: f64, n_samples: usize, seed: u64) -> Result<Vec<f64>> {
    if !(rho > 0.0 && rho <= 2.0 / inst.b * (1.0 + 1e-12)) {
        return Err(GapError::Precondition(format!("rho = {rho} not in (0, 2/b]")));
    }
    if p.len() != inst.d {
        return Err(GapError::Precondition("probe point has the wrong dimension".into()));
    }
    let d = inst.d;
    let y0 = phi_inv(p);
    let sub = if d <= 4 { 1 } else { 4 };
    let per_sample = |i: usize| -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let controls: Vec<Control> = (0..PROBE_PIECES)
            .map(|_| Control::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)))
            .collect();
        let weights: Vec<f64> = (0..PROBE_PIECES).map(|_| rng.gen_range(0.05..1.0)).collect();
        let raw_len: f64 = controls.iter().zip(&weights).map(|(u, w)| u.norm() * w).sum();
        let scale = if raw_len > 0.0 { rho / raw_len } else { 0.0 };
        let mut x = p.to_vec();
        let mut y = vec![0.0; d];
        let mut best = vec![0.0f64; d];
        let mut rk = Rk4::new(d);
        for (u, w) in controls.iter().zip(&weights) {
            let h = w * scale / sub as f64;
            for _ in 0..sub {
                rk.step(&mut x, *u, h);
                phi_inv_into(&x, &mut y);
                for j in 0..d {
                    best[j] = best[j].max((y[j] - y0[j]).abs());
                }
            }
        }
        best
    };
    Ok((0..n_samples)
        .into_par_iter()
        .map(per_sample)
        .reduce(|| vec![0.0; d], |a, b| a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallBoxStudy {
    pub rhos: Vec<f64>,
    /// `displacements[i][j]` for `rhos[i]` and coordinate `j`.
    pub displacements: Vec<Vec<f64>>,
    /// Least-squares log–log slope per coordinate.
    pub slopes: Vec<f64>,
    /// Effective box constant `max_{j>=3, rho} disp_j / rho^{j-1}`.
    pub cbar: f64,
}

pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Probes at `rho = 2^{-k} · 2/b` for `k` in `ks` and fits the scaling exponents.
pub fn ballbox_study(inst: &Instance, p: &[f64], ks: &[i32], n_samples: usize, seed: u64) -> Result<BallBoxStudy> {
    let rhos: Vec<f64> = ks.iter().map(|&k| 2f64.powi(-k) * 2.0 / inst.b).collect();
    let displacements = rhos
        .iter()
        .map(|&r| ballbox_probe(inst, p, r, n_samples, seed))
        .collect::<Result<Vec<_>>>()?;
    let slopes = (0..inst.d)
        .map(|j| {
            let ys: Vec<f64> = displacements.iter().map(|v| v[j]).collect();
            loglog_slope(&rhos, &ys)
        })
        .collect();
    let mut cbar: f64 = 0.0;
    for (r, disp) in rhos.iter().zip(&displacements) {
        for j in 2..inst.d {
            cbar = cbar.max(disp[j] / r.powi(j as i32));
        }
    }
    Ok(BallBoxStudy { rhos, displacements, slopes, cbar })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AprioriCheck {
    pub sup_r: f64,
    pub bound: f64,
    pub pass: bool,
    pub vee_cost: f64,
}

/// VEE cost of a curve using its attached per-step controls.
pub fn curve_cost(curve: &Curve, inst: &Instance, kind: LagrangianKind) -> Result<f64> {
    if !curve.has_controls() {
        return Err(GapError::Precondition("curve carries no controls".into()));
    }
    let mut q = StepQuadrature::new(inst, kind);
    let mut total = 0.0;
    for k in 0..curve.controls.len() {
        let u = curve.controls[k];
        let (v, _) = q.step(&curve.points[k], u, &[Atom::new(u, 1.0)], curve.times[k + 1] - curve.times[k]);
        total += v;
    }
    Ok(total)
}

/// `sup_I r(γ) ≤ 5 ε^{1/4}` for curves whose VEE cost is at most `2a + ε`.
pub fn apriori_radius_check(curve: &Curve, inst: &Instance, eps: f64) -> Result<AprioriCheck> {
    let vee_cost = curve_cost(curve, inst, LagrangianKind::Vee)?;
    let limit = 2.0 * inst.a + eps;
    if vee_cost > limit {
        return Err(GapError::CostPrecondition { cost: vee_cost, limit });
    }
    let (t0, t1) = crossing_interval(curve, inst)?;
    let mut sup_r: f64 = 0.0;
    let mut y = vec![0.0; curve.d()];
    let mut rk = Rk4::new(curve.d());
    let mut visit = |x: &[f64], y: &mut Vec<f64>| {
        phi_inv_into(x, y);
        sup_r = sup_r.max(y[2..].iter().map(|v| v * v).sum::<f64>().sqrt());
    };
    visit(&curve.state_at(t0), &mut y);
    visit(&curve.state_at(t1), &mut y);
    for k in curve.segment(t0)..=curve.segment(t1) {
        let (a, b) = (curve.times[k].max(t0), curve.times[k + 1].min(t1));
        if !(b > a) {
            continue;
        }
        let mut x = curve.state_at(a);
        let h = (b - a) / ADMISSIBILITY_REFINE as f64;
        for _ in 0..ADMISSIBILITY_REFINE {
            rk.step(&mut x, curve.controls[k], h);
            visit(&x, &mut y);
        }
    }
    let bound = 5.0 * eps.powf(0.25);
    Ok(AprioriCheck { sup_r, bound, pass: sup_r <= bound, vee_cost })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{eta, phi};
    use crate::trajectories::{integrate_horizontal, reference_classical, reference_minimizer, ControlPath};
    use std::f64::consts::PI;

    fn circle(n: usize, turns: f64, r: f64) -> PlanarCurve {
        let times: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let points = times.iter().map(|t| [r * (2.0 * PI * turns * t).cos(), r * (2.0 * PI * turns * t).sin()]).collect();
        PlanarCurve { times, points }
    }

    #[test]
    fn winding_examples() {
        assert!((winding_integral(&circle(1000, 1.0, 1.0)).unwrap() - 2.0 * PI).abs() < 1e-6);
        let seg = PlanarCurve { times: vec![0.0, 1.0], points: vec![[1.0, 0.0], [2.0, 0.0]] };
        assert_eq!(winding_integral(&seg).unwrap(), 0.0);
        let bad = PlanarCurve { times: vec![0.0, 1.0], points: vec![[1.0, 0.0], [0.0, 0.0]] };
        assert!(matches!(winding_integral(&bad), Err(GapError::OriginHit { index: 1 })));
    }

    #[test]
    fn spiral_center_winding() {
        let inst = Instance::default();
        let lo = -inst.a + 1.0 / (inst.b * inst.b);
        let hi = -lo;
        let n = 20_000;
        let times: Vec<f64> = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
        let points = times.iter().map(|&t| inst.spiral_center_tail(t)).collect();
        let w = winding_integral(&PlanarCurve { times, points }).unwrap();
        assert!((w - inst.b * (2.0 * inst.a - 2.0 / (inst.b * inst.b))).abs() < 1e-3);
        // four full turns on the plateau for the default parameters
        assert!((w / (2.0 * PI) - 4.0).abs() < 0.01);
    }

    fn axis_curve(inst: &Instance, n: usize) -> Curve {
        let lo = -inst.cap_tip() + 1e-3;
        let times: Vec<f64> = (0..=n).map(|k| lo + (-2.0 * lo) * k as f64 / n as f64).collect();
        let points = times
            .iter()
            .map(|&t| {
                let [c, s] = inst.spiral_center_tail(t);
                phi(&[t, 0.0, c, s])
            })
            .collect();
        Curve::from_samples(times, points, inst).unwrap()
    }

    #[test]
    fn ring_lift_examples() {
        let inst = Instance::default();
        for t in [-0.05, 0.0, 0.03] {
            let p = ring_point(&eta(t, 4), &inst);
            assert_eq!(p, inst.spiral_center_tail(t));
            let [c, s] = inst.spiral_center_tail(t);
            let q = ring_point(&phi(&[t, 0.0, c, s]), &inst);
            assert!((q[0] - 2.0 * c).abs() < 1e-17 && (q[1] - 2.0 * s).abs() < 1e-17);
        }
    }

    #[test]
    fn winding_checks() {
        let inst = Instance::default();
        let (_, c) = reference_minimizer(&inst);
        let w = winding_bound_check(&c, &inst).unwrap();
        assert!((w.bound - 2.0 * PI).abs() < 1e-12);
        assert!(w.pass && (w.winding - 2.0 * inst.a * inst.b).abs() < 0.01, "{w:?}");
        let axis = axis_curve(&inst, 40_000);
        let w = winding_bound_check(&axis, &inst).unwrap();
        assert!(w.pass && w.winding > 24.0);
        let p = ControlPath::uniform(-0.15, 0.15, vec![Control::ZERO; 3]);
        let still = integrate_horizontal(&inst, &p, &inst.x0(), 1).unwrap();
        assert_eq!(winding_bound_check(&still, &inst).unwrap_err(), GapError::NoCrossing);
    }

    #[test]
    fn shells() {
        let inst = Instance::default();
        let (_, c) = reference_minimizer(&inst);
        let part = shell_partition(&c, &inst, None);
        assert!(part.shells.is_empty() && part.zero_time > 0.0);
        let axis = axis_curve(&inst, 4000);
        let (t0, t1) = crossing_interval(&axis, &inst).unwrap();
        let part = shell_partition(&axis, &inst, Some((t0, t1)));
        // the cap stretch inside [t0, t1] is absent: r = 1/b holds on the whole tube
        assert_eq!(part.shells.len(), 1);
        let sh = &part.shells[0];
        assert_eq!(sh.j, inst.b.floor() as usize);
        assert!(sh.block_count() as f64 <= sh.measure / sh.block_len + 1.0);
        let pb = polygonal_winding_bound(&c, &inst).unwrap();
        assert_eq!(pb.value, 0.0);
        assert!(!pb.premise_holds);
    }

    #[test]
    fn polygonal_bound_on_axis() {
        let inst = Instance::default();
        let axis = axis_curve(&inst, 4000);
        let pb = polygonal_winding_bound(&axis, &inst).unwrap();
        // oracle: direct summation over the same blocks
        let (t0, t1) = crossing_interval(&axis, &inst).unwrap();
        let part = shell_partition(&axis, &inst, Some((t0, t1)));
        let sh = &part.shells[0];
        let mut len = 0.0;
        for run in &sh.blocks {
            for k in 0..run.count {
                let a = run.start + sh.block_len * k as f64;
                let p = phi_inv(&axis.state_at(a));
                let q = phi_inv(&axis.state_at(a + sh.block_len));
                len += (q[2] - p[2]).hypot(q[3] - p[3]);
            }
        }
        assert!((pb.value - 2.0 * sh.j as f64 * len).abs() <= 1e-9 * pb.value);
        let w = winding_bound_check(&axis, &inst).unwrap();
        assert!(pb.premise_holds && pb.value >= w.winding.abs() - 0.05);
    }

    #[test]
    fn apriori() {
        let inst = Instance::default();
        let p = reference_classical(&inst);
        let c = integrate_horizontal(&inst, &p, &inst.x0(), 40).unwrap();
        let chk = apriori_radius_check(&c, &inst, 1e-4).unwrap();
        assert_eq!(chk.bound, 5.0 * 0.1);
        assert_eq!(chk.sup_r, 0.0);
        assert!(chk.pass);
        let slow = ControlPath::uniform(-0.15, 0.15, vec![Control::new(0.0, 0.0), Control::new(1.0, 0.5), Control::ZERO]);
        let c = integrate_horizontal(&inst, &slow, &inst.x0(), 10).unwrap();
        let _ = apriori_radius_check(&c, &inst, 1e-4);
    }

    #[test]
    fn ballbox_on_eta_scales() {
        let inst = Instance::default();
        let st = ballbox_study(&inst, &eta(0.0, 4), &[4, 5, 6], 64, 3).unwrap();
        for j in 0..4 {
            let expect = if j < 2 { 1.0 } else { j as f64 };
            assert!((st.slopes[j] - expect).abs() < 1e-6, "{:?}", st.slopes);
        }
        assert!(st.cbar > 0.0);
        assert!(ballbox_probe(&inst, &eta(0.0, 4), 1.0, 4, 0).is_err());
    }
}
