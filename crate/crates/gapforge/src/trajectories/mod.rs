//! Piecewise-constant controls and Young paths, their integral curves, admissibility,
//! the explicit relaxed contender and the cap connector planner.

mod planner;

pub use planner::{plan_cap_connector, ConnectorReport, PlannerConfig};

use serde::{Deserialize, Serialize};

use crate::domain::{in_target, Instance, StateConstraint, BOUNDARY_TOL};
use crate::error::{GapError, Result};
use crate::geometry::{controlled_field_into, Control, Point, CORNERS};

/// Tolerance on per-interval weight sums.
pub const WEIGHT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub u1: f64,
    pub u2: f64,
    pub w: f64,
}

impl Atom {
    pub fn new(u: Control, w: f64) -> Self {
        Atom { u1: u.u1, u2: u.u2, w }
    }

    pub fn control(&self) -> Control {
        Control::new(self.u1, self.u2)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalMeasure {
    pub t0: f64,
    pub t1: f64,
    pub atoms: Vec<Atom>,
}

impl IntervalMeasure {
    pub fn mean(&self) -> Control {
        let mut m = Control::ZERO;
        for a in &self.atoms {
            m.u1 += a.w * a.u1;
            m.u2 += a.w * a.u2;
        }
        m
    }

    pub fn duration(&self) -> f64 {
        self.t1 - self.t0
    }
}

/// Piecewise-constant Young measure `ν_t` with finite support per interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct YoungPath {
    pub intervals: Vec<IntervalMeasure>,
}

impl YoungPath {
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.intervals.iter().map(|i| i.t0).collect();
        if let Some(last) = self.intervals.last() {
            b.push(last.t1);
        }
        b
    }

    /// Structural checks: contiguous increasing grid, positive weights summing to 1.
    pub fn validate(&self) -> Result<()> {
        if self.intervals.is_empty() {
            return Err(GapError::Precondition("empty Young path".into()));
        }
        for (k, iv) in self.intervals.iter().enumerate() {
            if !(iv.t1 > iv.t0) {
                return Err(GapError::Precondition(format!("interval {k} is not increasing")));
            }
            if k > 0 && self.intervals[k - 1].t1 != iv.t0 {
                return Err(GapError::MismatchedGrids(format!("gap before interval {k}")));
            }
            let sum: f64 = iv.atoms.iter().map(|a| a.w).sum();
            if iv.atoms.is_empty() || iv.atoms.iter().any(|a| !(a.w > 0.0)) || (sum - 1.0).abs() > WEIGHT_TOL {
                return Err(GapError::WeightNormalization { interval: k, sum });
            }
        }
        Ok(())
    }

    pub fn mean_path(&self) -> ControlPath {
        ControlPath {
            breakpoints: self.breakpoints(),
            values: self.intervals.iter().map(|i| i.mean()).collect(),
        }
    }
}

/// Piecewise-constant classical control.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "YoungPath", try_from = "YoungPath")]
pub struct ControlPath {
    pub breakpoints: Vec<f64>,
    pub values: Vec<Control>,
}

impl From<ControlPath> for YoungPath {
    fn from(p: ControlPath) -> YoungPath {
        p.to_young()
    }
}

impl TryFrom<YoungPath> for ControlPath {
    type Error = GapError;

    fn try_from(y: YoungPath) -> Result<ControlPath> {
        y.validate()?;
        if y.intervals.iter().any(|i| i.atoms.len() != 1) {
            return Err(GapError::Precondition("classical path needs one atom per interval".into()));
        }
        Ok(y.mean_path())
    }
}

impl ControlPath {
    pub fn new(breakpoints: Vec<f64>, values: Vec<Control>) -> Result<Self> {
        if breakpoints.len() != values.len() + 1 || values.is_empty() {
            return Err(GapError::MismatchedGrids(format!(
                "{} breakpoints for {} values",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(GapError::Precondition("breakpoints must increase strictly".into()));
        }
        Ok(ControlPath { breakpoints, values })
    }

    /// Uniform grid of `values.len()` intervals on `[t0, t1]`.
    pub fn uniform(t0: f64, t1: f64, values: Vec<Control>) -> Self {
        let n = values.len();
        ControlPath { breakpoints: uniform_grid(t0, t1, n), values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn span(&self) -> (f64, f64) {
        (self.breakpoints[0], *self.breakpoints.last().unwrap())
    }

    pub fn to_young(&self) -> YoungPath {
        YoungPath {
            intervals: self
                .values
                .iter()
                .enumerate()
                .map(|(k, &u)| IntervalMeasure {
                    t0: self.breakpoints[k],
                    t1: self.breakpoints[k + 1],
                    atoms: vec![Atom::new(u, 1.0)],
                })
                .collect(),
        }
    }

    /// Appends `other`, shifted so it starts where `self` ends.
    pub fn concat(&self, other: &ControlPath) -> ControlPath {
        let shift = self.span().1 - other.span().0;
        let mut breakpoints = self.breakpoints.clone();
        breakpoints.extend(other.breakpoints[1..].iter().map(|t| t + shift));
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        ControlPath { breakpoints, values }
    }
}

pub fn uniform_grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    let h = (t1 - t0) / n as f64;
    let mut g: Vec<f64> = (0..n).map(|k| t0 + h * k as f64).collect();
    g.push(t1);
    g
}

/// `ℓ = Σ duration · ‖u‖₂`.
pub fn arc_length(path: &ControlPath) -> f64 {
    path.values
        .iter()
        .enumerate()
        .map(|(k, u)| (path.breakpoints[k + 1] - path.breakpoints[k]) * u.norm())
        .sum()
}

/// Classical fourth-order Runge–Kutta stepper with reusable buffers.
#[derive(Clone, Debug)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(d: usize) -> Self {
        Rk4 {
            k1: vec![0.0; d],
            k2: vec![0.0; d],
            k3: vec![0.0; d],
            k4: vec![0.0; d],
            tmp: vec![0.0; d],
        }
    }

    #[inline]
    pub fn step(&mut self, x: &mut [f64], u: Control, h: f64) {
        let d = x.len();
        controlled_field_into(x, u, &mut self.k1);
        for i in 0..d {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        controlled_field_into(&self.tmp, u, &mut self.k2);
        for i in 0..d {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        controlled_field_into(&self.tmp, u, &mut self.k3);
        for i in 0..d {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        controlled_field_into(&self.tmp, u, &mut self.k4);
        for i in 0..d {
            x[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }

    /// Advances `x` by `h` using `n` equal steps.
    pub fn advance(&mut self, x: &mut [f64], u: Control, h: f64, n: usize) {
        let hs = h / n as f64;
        for _ in 0..n {
            self.step(x, u, hs);
        }
    }
}

/// Sampled trajectory. `controls[k]` is the mean control on `[times[k], times[k+1]]`
/// and is empty for curves given only by samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub times: Vec<f64>,
    pub points: Vec<Point>,
    pub controls: Vec<Control>,
    pub steps_per_interval: usize,
    pub min_clearance: f64,
    pub endpoint_in_target: bool,
}

impl Curve {
    /// Wraps externally sampled points; clearance and target data come from `inst`.
    pub fn from_samples(times: Vec<f64>, points: Vec<Point>, inst: &Instance) -> Result<Curve> {
        if times.len() != points.len() || times.is_empty() {
            return Err(GapError::MismatchedGrids("times and points differ in length".into()));
        }
        let mut c = Curve {
            times,
            points,
            controls: Vec::new(),
            steps_per_interval: 0,
            min_clearance: 0.0,
            endpoint_in_target: false,
        };
        c.refresh(inst);
        Ok(c)
    }

    fn refresh(&mut self, inst: &Instance) {
        self.min_clearance = self
            .points
            .iter()
            .map(|p| crate::domain::boundary_clearance(p, inst))
            .fold(f64::INFINITY, f64::min);
        self.endpoint_in_target = in_target(self.end(), inst, StateConstraint::Omega);
    }

    pub fn d(&self) -> usize {
        self.points[0].len()
    }

    pub fn start(&self) -> &[f64] {
        &self.points[0]
    }

    pub fn end(&self) -> &[f64] {
        self.points.last().unwrap()
    }

    pub fn has_controls(&self) -> bool {
        self.controls.len() + 1 == self.times.len()
    }

    /// Index `k` with `times[k] <= t <= times[k+1]`.
    pub fn segment(&self, t: f64) -> usize {
        let n = self.times.len();
        if n < 2 {
            return 0;
        }
        match self.times.binary_search_by(|s| s.total_cmp(&t)) {
            Ok(k) => k.min(n - 2),
            Err(0) => 0,
            Err(k) => (k - 1).min(n - 2),
        }
    }

    /// State at `t`: exact re-integration when controls are attached, linear interpolation otherwise.
    pub fn state_at(&self, t: f64) -> Point {
        let n = self.times.len();
        if n == 1 {
            return self.points[0].clone();
        }
        let k = self.segment(t);
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        if self.has_controls() {
            let mut x = self.points[k].clone();
            let h = t - t0;
            if h != 0.0 {
                Rk4::new(x.len()).step(&mut x, self.controls[k], h);
            }
            x
        } else {
            let s = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
            self.points[k]
                .iter()
                .zip(&self.points[k + 1])
                .map(|(a, b)| a + s * (b - a))
                .collect()
        }
    }

    /// Largest deviation between stored nodes and a one-step re-integration.
    pub fn reintegration_residual(&self) -> f64 {
        if !self.has_controls() {
            return 0.0;
        }
        let mut rk = Rk4::new(self.d());
        let mut worst: f64 = 0.0;
        for k in 0..self.controls.len() {
            let mut x = self.points[k].clone();
            rk.step(&mut x, self.controls[k], self.times[k + 1] - self.times[k]);
            for (a, b) in x.iter().zip(&self.points[k + 1]) {
                worst = worst.max((a - b).abs());
            }
        }
        worst
    }
}

pub fn integrate_horizontal(inst: &Instance, path: &ControlPath, x0: &[f64], steps_per_interval: usize) -> Result<Curve> {
    if steps_per_interval == 0 {
        return Err(GapError::Precondition("steps_per_interval must be >= 1".into()));
    }
    if x0.len() != inst.d {
        return Err(GapError::Precondition(format!("start point has dimension {} != {}", x0.len(), inst.d)));
    }
    let n = path.values.len();
    let s = steps_per_interval;
    let mut times = Vec::with_capacity(n * s + 1);
    let mut points = Vec::with_capacity(n * s + 1);
    let mut controls = Vec::with_capacity(n * s);
    let mut rk = Rk4::new(inst.d);
    let mut x = x0.to_vec();
    times.push(path.breakpoints[0]);
    points.push(x.clone());
    for (i, &u) in path.values.iter().enumerate() {
        let (t0, t1) = (path.breakpoints[i], path.breakpoints[i + 1]);
        let h = (t1 - t0) / s as f64;
        for k in 1..=s {
            rk.step(&mut x, u, h);
            times.push(if k == s { t1 } else { t0 + h * k as f64 });
            points.push(x.clone());
            controls.push(u);
        }
    }
    let mut c = Curve {
        times,
        points,
        controls,
        steps_per_interval: s,
        min_clearance: 0.0,
        endpoint_in_target: false,
    };
    c.refresh(inst);
    Ok(c)
}

pub fn integrate_young(inst: &Instance, ypath: &YoungPath, x0: &[f64], steps_per_interval: usize) -> Result<Curve> {
    ypath.validate()?;
    integrate_horizontal(inst, &ypath.mean_path(), x0, steps_per_interval)
}

/// Checks that `curve` was produced from `breakpoints` by the integrator.
pub fn check_grid(curve: &Curve, breakpoints: &[f64]) -> Result<()> {
    let s = curve.steps_per_interval;
    if s == 0 || !curve.has_controls() {
        return Err(GapError::MismatchedGrids("curve carries no integration grid".into()));
    }
    let n = breakpoints.len() - 1;
    if curve.times.len() != n * s + 1 {
        return Err(GapError::MismatchedGrids(format!(
            "curve has {} nodes, path needs {}",
            curve.times.len(),
            n * s + 1
        )));
    }
    for (k, &t) in breakpoints.iter().enumerate() {
        if (curve.times[k * s] - t).abs() > 1e-12 * (1.0 + t.abs()) {
            return Err(GapError::MismatchedGrids(format!("breakpoint {k} at {t} vs node {}", curve.times[k * s])));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    pub min_clearance: f64,
    pub argmin_time: f64,
    pub first_violation_time: Option<f64>,
    pub starts_at_x0: bool,
    pub endpoint_in_target: bool,
}

/// Sub-samples per integrator step used by [`admissible`].
pub const ADMISSIBILITY_REFINE: usize = 4;

pub fn admissible(curve: &Curve, inst: &Instance) -> AdmissibilityReport {
    let mut min_c = f64::INFINITY;
    let mut argmin = curve.times[0];
    let mut first = None;
    let mut y = vec![0.0; curve.d()];
    let mut visit = |t: f64, x: &[f64]| {
        crate::geometry::phi_inv_into(x, &mut y);
        let c = crate::domain::clearance_straight(&y, inst);
        if c < min_c {
            min_c = c;
            argmin = t;
        }
        if c < -BOUNDARY_TOL && first.is_none() {
            first = Some(t);
        }
    };
    visit(curve.times[0], &curve.points[0]);
    let mut rk = Rk4::new(curve.d());
    for k in 0..curve.times.len() - 1 {
        let (t0, t1) = (curve.times[k], curve.times[k + 1]);
        if curve.has_controls() {
            let mut x = curve.points[k].clone();
            let h = (t1 - t0) / ADMISSIBILITY_REFINE as f64;
            for j in 1..ADMISSIBILITY_REFINE {
                rk.step(&mut x, curve.controls[k], h);
                visit(t0 + h * j as f64, &x);
            }
        }
        visit(t1, &curve.points[k + 1]);
    }
    let x0 = inst.x0();
    AdmissibilityReport {
        admissible: min_c >= -BOUNDARY_TOL,
        min_clearance: min_c,
        argmin_time: argmin,
        first_violation_time: first,
        starts_at_x0: crate::geometry::dist(curve.start(), &x0) <= 1e-12,
        endpoint_in_target: in_target(curve.end(), inst, StateConstraint::Omega),
    }
}

/// Step size used when integrating reference contenders.
pub const REFERENCE_STEP: f64 = 1e-3;

/// Rest on `[-a_δ, -λa]` and `[λa, a_δ]` with the four-corner mixture, traverse η with
/// `½δ(1,1) + ½δ(1,-1)` in between.
pub fn reference_young(inst: &Instance) -> YoungPath {
    let (t0, t3) = inst.horizon();
    let (t1, t2) = (-inst.lambda * inst.a, inst.lambda * inst.a);
    let rest: Vec<Atom> = CORNERS.iter().map(|&c| Atom::new(c, 0.25)).collect();
    let sweep = vec![Atom::new(CORNERS[0], 0.5), Atom::new(CORNERS[1], 0.5)];
    YoungPath {
        intervals: vec![
            IntervalMeasure { t0, t1, atoms: rest.clone() },
            IntervalMeasure { t0: t1, t1: t2, atoms: sweep },
            IntervalMeasure { t0: t2, t1: t3, atoms: rest },
        ],
    }
}

/// Integration steps per interval that keep every step at most `REFERENCE_STEP`.
pub fn steps_for(breakpoints: &[f64], max_step: f64) -> usize {
    let longest = breakpoints.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    ((longest / max_step).ceil() as usize).max(1)
}

pub fn reference_minimizer(inst: &Instance) -> (YoungPath, Curve) {
    let y = reference_young(inst);
    let s = steps_for(&y.breakpoints(), REFERENCE_STEP);
    let c = integrate_young(inst, &y, &inst.x0(), s).expect("reference path is well formed");
    (y, c)
}

/// The Dirac collapse of the reference: rest, then `u = (1, 0)` along η, then rest.
pub fn reference_classical(inst: &Instance) -> ControlPath {
    reference_young(inst).mean_path()
}
