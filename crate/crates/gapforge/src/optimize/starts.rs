//! Start controls for the multistart search and the separation experiment.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::Instance;
use crate::geometry::{Control, CORNERS};
use crate::trajectories::{Atom, IntervalMeasure, YoungPath};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StartFamily {
    /// Rest, `u = (1, 0)` along η, rest.
    Reference,
    /// `u2 = 0` with a random positive speed profile; stays on η.
    EtaFollower,
    /// Alternating `(1, ±1)` along the sweep.
    CornerChatter,
    /// Reference plus uniform noise in both components.
    Perturbed,
    Uniform,
}

impl StartFamily {
    /// Family of multistart start `i`.
    pub fn of_start(i: usize) -> StartFamily {
        match (i, i % 10) {
            (0, _) => StartFamily::Reference,
            (_, 1) => StartFamily::CornerChatter,
            (_, 2) => StartFamily::Uniform,
            (_, 3) | (_, 4) => StartFamily::Perturbed,
            _ => StartFamily::EtaFollower,
        }
    }
}

/// Intervals whose midpoint lies in `(-λa, λa)`.
fn sweep_mask(bp: &[f64], inst: &Instance) -> Vec<bool> {
    let la = inst.lambda * inst.a;
    bp.windows(2).map(|w| (0.5 * (w[0] + w[1])).abs() < la).collect()
}

pub fn reference_controls(bp: &[f64], inst: &Instance) -> Vec<Control> {
    sweep_mask(bp, inst)
        .into_iter()
        .map(|m| if m { Control::new(1.0, 0.0) } else { Control::ZERO })
        .collect()
}

/// Speeds in `(0, 1]` with jitter whose durations `h_k` cover `total` exactly.
pub fn speed_profile<R: Rng>(durations: &[f64], total: f64, rng: &mut R) -> Option<Vec<f64>> {
    let cap: f64 = durations.iter().sum();
    if total > cap * (1.0 - 1e-12) || total <= 0.0 {
        return if (total - cap).abs() <= 1e-12 * cap { Some(vec![1.0; durations.len()]) } else { None };
    }
    let mut v: Vec<f64> = durations.iter().map(|_| rng.gen_range(0.5..1.0)).collect();
    // water filling: scale the unclamped speeds until the distance matches
    let mut fixed = vec![false; v.len()];
    for _ in 0..=v.len() {
        let done: f64 = v.iter().zip(durations).zip(&fixed).filter(|(_, f)| **f).map(|((v, h), _)| v * h).sum();
        let free: f64 = v.iter().zip(durations).zip(&fixed).filter(|(_, f)| !**f).map(|((v, h), _)| v * h).sum();
        if free <= 0.0 {
            return None;
        }
        let c = (total - done) / free;
        let mut clamped = false;
        for i in 0..v.len() {
            if !fixed[i] {
                v[i] *= c;
                if v[i] >= 1.0 {
                    v[i] = 1.0;
                    fixed[i] = true;
                    clamped = true;
                }
            }
        }
        if !clamped {
            return Some(v);
        }
    }
    None
}

/// Resets `y2` with `u = (0, ±·)` and then moves along η from `y1_start` to `λa`
/// over a random window.
pub fn eta_follower<R: Rng>(bp: &[f64], inst: &Instance, y1_start: f64, y2_start: f64, rng: &mut R) -> Option<Vec<Control>> {
    let n = bp.len() - 1;
    let h = bp[1] - bp[0];
    let mut out = vec![Control::ZERO; n];
    let mut k = 0;
    if y2_start != 0.0 {
        let m = ((y2_start.abs() / h).ceil() as usize).max(1);
        let u2 = -y2_start / (m as f64 * h);
        for c in out.iter_mut().take(m) {
            *c = Control::new(0.0, u2);
        }
        k = m;
    }
    let dist = inst.lambda * inst.a - y1_start;
    let remaining = n.checked_sub(k)?;
    let min_active = (dist / h).ceil() as usize;
    if min_active > remaining || dist <= 0.0 {
        return None;
    }
    let active = rng.gen_range(min_active..=remaining);
    let offset = rng.gen_range(0..=remaining - active);
    let durs: Vec<f64> = (0..active).map(|i| bp[k + offset + i + 1] - bp[k + offset + i]).collect();
    let speeds = speed_profile(&durs, dist, rng)?;
    for (i, v) in speeds.into_iter().enumerate() {
        out[k + offset + i] = Control::new(v, 0.0);
    }
    Some(out)
}

/// Alternating `(1, 1)`, `(1, -1)` over the sweep intervals, random phase.
pub fn corner_chatter<R: Rng>(bp: &[f64], inst: &Instance, rng: &mut R) -> Vec<Control> {
    let phase = rng.gen_range(0..2usize);
    let mut j = phase;
    sweep_mask(bp, inst)
        .into_iter()
        .map(|m| {
            if m {
                j += 1;
                CORNERS[j % 2]
            } else {
                Control::ZERO
            }
        })
        .collect()
}

pub fn perturbed<R: Rng>(bp: &[f64], inst: &Instance, rng: &mut R) -> Vec<Control> {
    let amp = rng.gen_range(0.02..0.5);
    let frac = rng.gen_range(0.05..1.0);
    reference_controls(bp, inst)
        .into_iter()
        .map(|u| {
            if rng.gen_bool(frac) {
                Control::new(
                    (u.u1 + rng.gen_range(-amp..=amp)).clamp(-1.0, 1.0),
                    (u.u2 + rng.gen_range(-amp..=amp)).clamp(-1.0, 1.0),
                )
            } else {
                u
            }
        })
        .collect()
}

pub fn uniform<R: Rng>(n: usize, rng: &mut R) -> Vec<Control> {
    (0..n)
        .map(|_| Control::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)))
        .collect()
}

/// Random corner excursion of `m` intervals from interval `k0`, followed by its exact
/// retrace (reversed order, negated controls). Overwrites `controls[k0..k0 + 2m]`.
pub fn insert_retrace<R: Rng>(controls: &mut [Control], k0: usize, m: usize, rng: &mut R) -> bool {
    if k0 + 2 * m > controls.len() {
        return false;
    }
    let exc: Vec<Control> = (0..m).map(|_| CORNERS[rng.gen_range(0..4)]).collect();
    for (i, u) in exc.iter().enumerate() {
        controls[k0 + i] = *u;
        controls[k0 + 2 * m - 1 - i] = Control::new(-u.u1, -u.u2);
    }
    true
}

/// A random finite measure on `U_□` with mean `m`: up to three random atoms mixed with
/// one compensating atom.
pub fn split_mean<R: Rng>(m: Control, rng: &mut R) -> Vec<Atom> {
    let k = rng.gen_range(0..=3usize);
    if k == 0 {
        return vec![Atom::new(m, 1.0)];
    }
    let us: Vec<Control> = (0..k).map(|_| Control::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0))).collect();
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
    let tot: f64 = raw.iter().sum();
    let w: Vec<f64> = raw.iter().map(|r| r / tot).collect();
    let mp = us.iter().zip(&w).fold(Control::ZERO, |acc, (u, w)| Control::new(acc.u1 + w * u.u1, acc.u2 + w * u.u2));
    let mut s = rng.gen_range(0.05..0.95);
    let mut c;
    loop {
        c = Control::new((m.u1 - s * mp.u1) / (1.0 - s), (m.u2 - s * mp.u2) / (1.0 - s));
        if c.u1.abs() <= 1.0 && c.u2.abs() <= 1.0 {
            break;
        }
        s *= 0.5;
    }
    let mut atoms = vec![Atom::new(c, 1.0 - s)];
    atoms.extend(us.iter().zip(&w).map(|(u, w)| Atom::new(*u, s * w)));
    atoms
}

/// Random Young path from `x0` to `x1` on `bp`: an η-follower, sometimes preceded by a
/// retraced corner excursion, with every mean control split by [`split_mean`].
/// Admissibility is left to the caller.
pub fn random_young_contender<R: Rng>(bp: &[f64], inst: &Instance, rng: &mut R) -> Option<YoungPath> {
    let x0 = -inst.lambda * inst.a;
    let controls = if rng.gen_bool(0.3) {
        let m = rng.gen_range(1..=3usize);
        let tail = eta_follower(&bp[2 * m..], inst, x0, 0.0, rng)?;
        let mut c = vec![Control::ZERO; bp.len() - 1];
        insert_retrace(&mut c, 0, m, rng);
        c[2 * m..].copy_from_slice(&tail);
        c
    } else {
        eta_follower(bp, inst, x0, 0.0, rng)?
    };
    Some(YoungPath {
        intervals: bp
            .windows(2)
            .zip(controls)
            .map(|(w, u)| IntervalMeasure { t0: w[0], t1: w[1], atoms: split_mean(u, rng) })
            .collect(),
    })
}

pub fn start_controls<R: Rng>(family: StartFamily, bp: &[f64], inst: &Instance, rng: &mut R) -> Vec<Control> {
    let n = bp.len() - 1;
    match family {
        StartFamily::Reference => reference_controls(bp, inst),
        StartFamily::EtaFollower => eta_follower(bp, inst, -inst.lambda * inst.a, 0.0, rng)
            .unwrap_or_else(|| reference_controls(bp, inst)),
        StartFamily::CornerChatter => corner_chatter(bp, inst, rng),
        StartFamily::Perturbed => perturbed(bp, inst, rng),
        StartFamily::Uniform => uniform(n, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectories::{admissible, integrate_horizontal, uniform_grid, ControlPath};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn speed_profile_covers_the_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for total in [0.1, 0.15, 0.199] {
            let durs = vec![0.01; 20];
            let v = speed_profile(&durs, total, &mut rng).unwrap();
            let got: f64 = v.iter().zip(&durs).map(|(v, h)| v * h).sum();
            assert!((got - total).abs() < 1e-14);
            assert!(v.iter().all(|s| *s > 0.0 && *s <= 1.0));
        }
        assert!(speed_profile(&[0.01; 5], 0.06, &mut rng).is_none());
    }

    #[test]
    fn eta_followers_are_admissible_and_reach_x1() {
        let inst = Instance::default();
        let (t0, t1) = inst.horizon();
        let bp = uniform_grid(t0, t1, 200);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let c = eta_follower(&bp, &inst, -inst.lambda * inst.a, 0.0, &mut rng).unwrap();
            let curve = integrate_horizontal(&inst, &ControlPath::new(bp.clone(), c).unwrap(), &inst.x0(), 2).unwrap();
            let adm = admissible(&curve, &inst);
            assert!(adm.admissible && adm.endpoint_in_target);
            assert!(crate::geometry::dist(curve.end(), &inst.x1()) < 1e-12);
        }
    }

    #[test]
    fn retrace_returns_to_the_start() {
        let inst = Instance::default();
        let bp = uniform_grid(0.0, 0.012, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut c = vec![Control::ZERO; 8];
        assert!(insert_retrace(&mut c, 1, 3, &mut rng));
        let curve = integrate_horizontal(&inst, &ControlPath::new(bp, c).unwrap(), &inst.x0(), 2).unwrap();
        assert!(crate::geometry::dist(curve.end(), &inst.x0()) < 1e-14);
    }

    #[test]
    fn chatter_ends_with_zero_y2() {
        let inst = Instance::default();
        let (t0, t1) = inst.horizon();
        let bp = uniform_grid(t0, t1, 200);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = corner_chatter(&bp, &inst, &mut rng);
        let s: f64 = c.iter().map(|u| u.u2).sum();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn split_keeps_the_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let m = Control::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0));
            let atoms = split_mean(m, &mut rng);
            let w: f64 = atoms.iter().map(|a| a.w).sum();
            let u1: f64 = atoms.iter().map(|a| a.w * a.u1).sum();
            let u2: f64 = atoms.iter().map(|a| a.w * a.u2).sum();
            assert!((w - 1.0).abs() < 1e-14 && (u1 - m.u1).abs() < 1e-14 && (u2 - m.u2).abs() < 1e-14);
            assert!(atoms.iter().all(|a| a.w >= 0.0 && a.u1.abs() <= 1.0 && a.u2.abs() <= 1.0));
        }
    }

    #[test]
    fn young_contenders_join_x0_to_x1() {
        let inst = Instance::default();
        let (t0, t1) = inst.horizon();
        let bp = uniform_grid(t0, t1, 200);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10 {
            let y = random_young_contender(&bp, &inst, &mut rng).unwrap();
            y.validate().unwrap();
            let c = crate::trajectories::integrate_young(&inst, &y, &inst.x0(), 2).unwrap();
            assert!(crate::geometry::dist(c.end(), &inst.x1()) < 1e-12);
        }
    }
}
