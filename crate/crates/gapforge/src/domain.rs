//! The constraint set `Ω = S ∪ Γ`: spiral tube, end caps, clearance and membership.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{GapError, Result, Violation};
use crate::geometry::{dist, eta, phi_inv_into, Control, Point, CORNERS};
use crate::relaxation::ProblemDoc;

pub const SCHEMA_VERSION: u32 = 1;

/// Tolerance of the BOUNDARY tag and of curve admissibility.
pub const BOUNDARY_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ControlSet {
    /// `[-1,1]^2`
    Square,
    /// The four wells.
    Corners,
    /// Convex set containing the square; `None` means unbounded.
    ConvexSuperset { vertices: Option<Vec<Control>> },
}

impl ControlSet {
    pub fn contains(&self, u: Control) -> bool {
        const TOL: f64 = 1e-12;
        match self {
            ControlSet::Square => u.u1.abs() <= 1.0 + TOL && u.u2.abs() <= 1.0 + TOL,
            ControlSet::Corners => CORNERS
                .iter()
                .any(|c| (c.u1 - u.u1).abs() <= TOL && (c.u2 - u.u2).abs() <= TOL),
            ControlSet::ConvexSuperset { vertices: None } => u.is_finite(),
            ControlSet::ConvexSuperset { vertices: Some(v) } => in_convex_hull(v, u, TOL),
        }
    }

    /// Extreme points offered to grid-based solvers, always including the corners.
    pub fn extreme_points(&self) -> Vec<Control> {
        let mut pts = CORNERS.to_vec();
        if let ControlSet::ConvexSuperset { vertices: Some(v) } = self {
            for &c in convex_hull(v).iter() {
                if !pts.iter().any(|p| p == &c) {
                    pts.push(c);
                }
            }
        }
        pts
    }
}

fn cross(o: Control, a: Control, b: Control) -> f64 {
    (a.u1 - o.u1) * (b.u2 - o.u2) - (a.u2 - o.u2) * (b.u1 - o.u1)
}

/// Counter-clockwise hull (monotone chain).
pub fn convex_hull(points: &[Control]) -> Vec<Control> {
    let mut p: Vec<Control> = points.to_vec();
    p.sort_by(|a, b| a.u1.total_cmp(&b.u1).then(a.u2.total_cmp(&b.u2)));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut lower: Vec<Control> = Vec::new();
    for &q in &p {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], q) <= 0.0 {
            lower.pop();
        }
        lower.push(q);
    }
    let mut upper: Vec<Control> = Vec::new();
    for &q in p.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], q) <= 0.0 {
            upper.pop();
        }
        upper.push(q);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn in_convex_hull(vertices: &[Control], u: Control, tol: f64) -> bool {
    let h = convex_hull(vertices);
    if h.len() < 3 {
        return false;
    }
    (0..h.len()).all(|i| {
        let a = h[i];
        let b = h[(i + 1) % h.len()];
        let len = (b.u1 - a.u1).hypot(b.u2 - a.u2);
        cross(a, b, u) >= -tol * len.max(1.0)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RegionTag {
    SpiralS,
    CapGamma,
    Boundary,
    Outside,
}

/// Whether the state constraint `γ(t) ∈ Ω̄` is enforced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StateConstraint {
    Omega,
    Free,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub schema_version: u32,
    pub d: usize,
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
    pub delta: f64,
    pub eps_moll: f64,
    pub control_set: ControlSet,
    pub target: Target,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemDoc>,
}

/// Raw inputs to [`build_instance`].
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceParams {
    pub d: usize,
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
    pub delta: f64,
    pub eps_moll: f64,
    pub control_set: ControlSet,
    /// Defaults to the ball of radius `(λ-1)a/2` around `x1`.
    pub target: Option<Target>,
}

impl Default for InstanceParams {
    fn default() -> Self {
        InstanceParams {
            d: 4,
            a: 0.1,
            b: 40.0 * PI,
            lambda: 1.2,
            delta: 0.05,
            eps_moll: 2.5e-3,
            control_set: ControlSet::Square,
            target: None,
        }
    }
}

pub fn build_instance(p: InstanceParams) -> Result<Instance> {
    let mut v = Vec::new();
    let mut fail = |code: &'static str, detail: String| v.push(Violation { code, detail });
    if p.d < 4 {
        fail("DIM_TOO_SMALL", format!("d = {} < 4", p.d));
    }
    if !(p.a > 0.0 && p.a < 1.0) {
        fail("A_RANGE", format!("a = {} not in (0, 1)", p.a));
    }
    if !(p.b > 1.0) || !p.b.is_finite() {
        fail("B_RANGE", format!("b = {} must exceed 1", p.b));
    }
    if !(p.lambda > 1.0 && p.lambda < 2.0) {
        fail("LAMBDA_RANGE", format!("lambda = {} not in (1, 2)", p.lambda));
    }
    if !(p.a * p.b > 2.0 * PI) {
        fail("AB_TOO_SMALL", format!("ab = {} <= 2π", p.a * p.b));
    }
    if !(p.delta > 0.0) || !p.delta.is_finite() {
        fail("DELTA_RANGE", format!("delta = {} must be positive", p.delta));
    }
    let eps_cap = (p.lambda - 1.0) * p.a;
    if !(p.eps_moll >= 0.0 && p.eps_moll < eps_cap) {
        fail("EPS_MOLL_RANGE", format!("eps_moll = {} not in [0, (λ-1)a = {eps_cap})", p.eps_moll));
    }
    if let ControlSet::ConvexSuperset { vertices: Some(vs) } = &p.control_set {
        if !CORNERS.iter().all(|&c| in_convex_hull(vs, c, 1e-12)) {
            fail("CONTROL_SET", "convex superset must contain [-1,1]^2".into());
        }
    }
    if let Some(t) = &p.target {
        if t.center.len() != p.d || !(t.radius > 0.0) {
            fail("TARGET", "target center must have length d and radius > 0".into());
        }
    }
    if !v.is_empty() {
        return Err(GapError::InvalidInstance(v));
    }
    let target = p.target.unwrap_or_else(|| Target {
        center: eta(p.lambda * p.a, p.d),
        radius: 0.5 * (p.lambda - 1.0) * p.a,
    });
    Ok(Instance {
        schema_version: SCHEMA_VERSION,
        d: p.d,
        a: p.a,
        b: p.b,
        lambda: p.lambda,
        delta: p.delta,
        eps_moll: p.eps_moll,
        control_set: p.control_set,
        target,
        problem: None,
    })
}

/// Re-runs the parameter checks on a deserialized instance.
pub fn validate(inst: &Instance) -> Result<()> {
    build_instance(InstanceParams {
        d: inst.d,
        a: inst.a,
        b: inst.b,
        lambda: inst.lambda,
        delta: inst.delta,
        eps_moll: inst.eps_moll,
        control_set: inst.control_set.clone(),
        target: Some(inst.target.clone()),
    })
    .map(|_| ())
}

impl Default for Instance {
    fn default() -> Self {
        build_instance(InstanceParams::default()).expect("default parameters are valid")
    }
}

/// C∞ partition-of-unity step: 0 for τ ≤ 0, 1 for τ ≥ 1.
pub fn smoothstep(tau: f64) -> f64 {
    let sigma = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    if tau <= 0.0 {
        0.0
    } else if tau >= 1.0 {
        1.0
    } else {
        let p = sigma(tau);
        p / (p + sigma(1.0 - tau))
    }
}

/// Quintic `10τ³ − 15τ⁴ + 6τ⁵`.
fn quintic(tau: f64) -> f64 {
    tau * tau * tau * (10.0 + tau * (-15.0 + 6.0 * tau))
}

impl Instance {
    pub fn a_delta(&self) -> f64 {
        self.a + self.delta
    }

    pub fn x0(&self) -> Point {
        eta(-self.lambda * self.a, self.d)
    }

    pub fn x1(&self) -> Point {
        eta(self.lambda * self.a, self.d)
    }

    /// `(2λ − 1)a`, where the cap closes.
    pub fn cap_tip(&self) -> f64 {
        (2.0 * self.lambda - 1.0) * self.a
    }

    /// Peak cap radius, attained at `λa`.
    pub fn cap_max(&self) -> f64 {
        2.0 / self.b
    }

    /// Number of turns `ab/2π`.
    pub fn turns(&self) -> f64 {
        self.a * self.b / (2.0 * PI)
    }

    pub fn horizon(&self) -> (f64, f64) {
        (-self.a_delta(), self.a_delta())
    }

    /// `𝔭` extended by zero outside `[-a, a]`.
    pub fn bump_ext(&self, t: f64) -> f64 {
        let inner = self.a - 1.0 / (self.b * self.b);
        let outer = self.a - 1.0 / (self.b * self.b * self.b);
        let s = t.abs();
        if s <= inner {
            1.0
        } else if s >= outer {
            0.0
        } else {
            smoothstep((outer - s) / (outer - inner))
        }
    }

    /// Last two coordinates of `ξ_b(t)`; the rest are zero.
    #[inline]
    pub fn spiral_center_tail(&self, t: f64) -> [f64; 2] {
        let p = self.bump_ext(t);
        let (s, c) = (self.b * t).sin_cos();
        let (sa, ca) = (self.a * self.b).sin_cos();
        [
            (p * c + (1.0 - p) * ca) / self.b,
            (p * s + (1.0 - p) * sa) / self.b,
        ]
    }

    /// Allowed radius around the center in straightened coordinates; negative past the tips.
    #[inline]
    pub fn radius_profile(&self, y1: f64) -> f64 {
        let s = y1.abs();
        if s <= self.a {
            1.0 / self.b
        } else if s < self.cap_tip() {
            self.cap_profile_abs(s)
        } else {
            -(s - self.cap_tip())
        }
    }

    fn cap_profile_abs(&self, s: f64) -> f64 {
        let peak = self.lambda * self.a;
        let w = (self.lambda - 1.0) * self.a;
        let pmax = self.cap_max();
        if s <= peak {
            1.0 / self.b + (pmax - 1.0 / self.b) * quintic((s - self.a) / w)
        } else if s >= self.cap_tip() {
            0.0
        } else {
            let z = ((s - peak) / w).min(1.0);
            pmax * (1.0 - z * z).max(0.0).sqrt()
        }
    }
}

pub fn bump(t: f64, inst: &Instance) -> Result<f64> {
    if !(t.abs() <= inst.a) {
        return Err(GapError::DomainViolation(format!("bump argument {t} outside [-a, a]")));
    }
    Ok(inst.bump_ext(t))
}

/// `ξ_b(t) ∈ R^{d-1}`.
pub fn spiral_center(t: f64, inst: &Instance) -> Vec<f64> {
    let mut v = vec![0.0; inst.d - 1];
    let [c, s] = inst.spiral_center_tail(t);
    v[inst.d - 3] = c;
    v[inst.d - 2] = s;
    v
}

pub fn cap_profile(t: f64, inst: &Instance) -> Result<f64> {
    let s = t.abs();
    if !(s >= inst.a && s <= inst.cap_tip()) {
        return Err(GapError::DomainViolation(format!(
            "cap profile argument {t} outside a <= |t| <= (2λ-1)a"
        )));
    }
    Ok(inst.cap_profile_abs(s))
}

/// Clearance evaluated on straightened coordinates `y = φ^{-1}(x)`.
#[inline]
pub fn clearance_straight(y: &[f64], inst: &Instance) -> f64 {
    let d = y.len();
    let [c, s] = inst.spiral_center_tail(y[0]);
    let mut sq = 0.0;
    for v in &y[1..d - 2] {
        sq += v * v;
    }
    let e1 = y[d - 2] - c;
    let e2 = y[d - 1] - s;
    sq += e1 * e1 + e2 * e2;
    inst.radius_profile(y[0]) - sq.sqrt()
}

/// Signed margin: positive inside Ω, zero on the boundary.
pub fn boundary_clearance(x: &[f64], inst: &Instance) -> f64 {
    let mut y = vec![0.0; x.len()];
    phi_inv_into(x, &mut y);
    clearance_straight(&y, inst)
}

pub fn classify(x: &[f64], inst: &Instance) -> RegionTag {
    let mut y = vec![0.0; x.len()];
    phi_inv_into(x, &mut y);
    let c = clearance_straight(&y, inst);
    if c.abs() <= BOUNDARY_TOL {
        RegionTag::Boundary
    } else if c > 0.0 {
        if y[0].abs() <= inst.a {
            RegionTag::SpiralS
        } else {
            RegionTag::CapGamma
        }
    } else {
        RegionTag::Outside
    }
}

/// Euclidean excess distance of `x` beyond the target ball (0 inside).
pub fn target_ball_gap(x: &[f64], inst: &Instance) -> f64 {
    (dist(x, &inst.target.center) - inst.target.radius).max(0.0)
}

/// Membership in `X`: the target ball, intersected with `Ω̄` when the constraint is on.
pub fn in_target(x: &[f64], inst: &Instance, mode: StateConstraint) -> bool {
    target_ball_gap(x, inst) == 0.0
        && (mode == StateConstraint::Free || boundary_clearance(x, inst) >= -BOUNDARY_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::phi;

    #[test]
    fn default_instance_is_valid() {
        let inst = Instance::default();
        assert!((inst.a * inst.b - 4.0 * PI).abs() < 1e-12);
        assert_eq!(inst.a_delta(), 0.1 + 0.05);
        assert_eq!(classify(&inst.x0(), &inst), RegionTag::CapGamma);
        assert_eq!(classify(&inst.x1(), &inst), RegionTag::CapGamma);
        assert!((inst.turns() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn build_rejects_by_name() {
        let e = build_instance(InstanceParams { a: 0.1, b: 10.0, ..Default::default() }).unwrap_err();
        assert_eq!(e.code(), "AB_TOO_SMALL");
        let e = build_instance(InstanceParams { lambda: 2.5, ..Default::default() }).unwrap_err();
        assert_eq!(e.code(), "LAMBDA_RANGE");
        let e = build_instance(InstanceParams { a: 1.5, b: 0.5, ..Default::default() }).unwrap_err();
        match e {
            GapError::InvalidInstance(v) => {
                let codes: Vec<_> = v.iter().map(|x| x.code).collect();
                assert!(codes.contains(&"A_RANGE") && codes.contains(&"B_RANGE"));
            }
            other => panic!("{other:?}"),
        }
        let e = build_instance(InstanceParams { eps_moll: 0.05, ..Default::default() }).unwrap_err();
        assert_eq!(e.code(), "EPS_MOLL_RANGE");
    }

    #[test]
    fn bump_values() {
        let inst = Instance::default();
        assert_eq!(bump(0.0, &inst).unwrap(), 1.0);
        assert_eq!(bump(-inst.a, &inst).unwrap(), 0.0);
        let t = -inst.a + 1.0 / (inst.b * inst.b);
        assert_eq!(bump(t, &inst).unwrap(), 1.0);
        assert!(bump(0.2, &inst).is_err());
        let mid = bump(inst.a - 0.5 * (1.0 / inst.b.powi(2) + 1.0 / inst.b.powi(3)), &inst).unwrap();
        assert!(mid > 0.0 && mid < 1.0);
    }

    #[test]
    fn spiral_center_values() {
        let inst = Instance::default();
        let c = spiral_center(0.0, &inst);
        assert_eq!(c.len(), 3);
        assert!((c[1] - 0.0079577).abs() < 1e-7 && c[0] == 0.0 && c[2] == 0.0);
        let c = spiral_center(PI / (2.0 * inst.b), &inst);
        assert!(c[1].abs() < 1e-15 && (c[2] - 1.0 / inst.b).abs() < 1e-15);
        for k in 0..50 {
            let t = -0.09 + 0.0036 * k as f64;
            let c = spiral_center(t, &inst);
            assert!((c[1].hypot(c[2]) - 1.0 / inst.b).abs() < 1e-15);
        }
    }

    #[test]
    fn cap_profile_values() {
        let inst = Instance::default();
        assert!((cap_profile(inst.a, &inst).unwrap() - 1.0 / inst.b).abs() < 1e-15);
        assert_eq!(cap_profile(inst.cap_tip(), &inst).unwrap(), 0.0);
        assert!(cap_profile(0.05, &inst).is_err());
        let n = 10_000;
        let (lo, hi) = (inst.a, inst.cap_tip());
        let step = (hi - lo) / n as f64;
        let mut best = (0.0, f64::MIN);
        for i in 0..=n {
            let t = lo + step * i as f64;
            let v = cap_profile(t, &inst).unwrap();
            if v > best.1 {
                best = (t, v);
            }
        }
        assert!((best.0 - inst.lambda * inst.a).abs() <= step + 1e-15);
        assert!(best.1 <= 2.0 / inst.b + 1e-15);
        // mirrored
        assert_eq!(cap_profile(-0.11, &inst).unwrap(), cap_profile(0.11, &inst).unwrap());
    }

    #[test]
    fn classify_examples() {
        let inst = Instance::default();
        let tube_center = phi(&[0.0, 0.0, 1.0 / inst.b, 0.0]);
        assert_eq!(classify(&tube_center, &inst), RegionTag::SpiralS);
        assert_eq!(classify(&[0.0; 4], &inst), RegionTag::Boundary);
        assert_eq!(classify(&inst.x1(), &inst), RegionTag::CapGamma);
        assert_eq!(classify(&[0.0, 0.1, 0.0, 0.0], &inst), RegionTag::Outside);
        assert_eq!(classify(&eta(0.3, 4), &inst), RegionTag::Outside);
    }

    #[test]
    fn clearance_examples() {
        let inst = Instance::default();
        let t = 0.03;
        let [c, s] = inst.spiral_center_tail(t);
        let axis = phi(&[t, 0.0, c, s]);
        assert!((boundary_clearance(&axis, &inst) - 1.0 / inst.b).abs() < 1e-15);
        assert!(boundary_clearance(&[0.0; 4], &inst).abs() < 1e-17);
        let x = phi(&[0.0, 0.0, -0.5 / inst.b, 0.0]);
        // distance to the center (1/b, 0) is 1.5/b
        assert!((boundary_clearance(&x, &inst) + 0.5 / inst.b).abs() < 1e-9);
    }

    #[test]
    fn control_sets() {
        assert!(ControlSet::Square.contains(Control::new(0.3, -1.0)));
        assert!(!ControlSet::Square.contains(Control::new(1.1, 0.0)));
        assert!(ControlSet::Corners.contains(Control::new(-1.0, 1.0)));
        assert!(!ControlSet::Corners.contains(Control::new(1.0, 0.0)));
        let diamond = ControlSet::ConvexSuperset {
            vertices: Some(vec![
                Control::new(2.0, 0.0),
                Control::new(0.0, 2.0),
                Control::new(-2.0, 0.0),
                Control::new(0.0, -2.0),
            ]),
        };
        assert!(diamond.contains(Control::new(1.0, 1.0)));
        assert!(!diamond.contains(Control::new(1.5, 1.0)));
        assert_eq!(diamond.extreme_points().len(), 8);
        let bad = InstanceParams {
            control_set: ControlSet::ConvexSuperset {
                vertices: Some(vec![Control::new(1.0, 0.0), Control::new(0.0, 1.0), Control::new(-1.0, -1.0)]),
            },
            ..Default::default()
        };
        assert_eq!(build_instance(bad).unwrap_err().code(), "CONTROL_SET");
    }
}
