//! Gap experiments: multistart classical search, the lower-bound chain, the occupation LP
//! and the separation experiment.

pub mod bound;
pub mod fw;
pub mod lp;
pub mod search;
pub mod starts;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costs::{relaxed_cost, LagrangianKind, TerminalCost};
use crate::domain::{Instance, StateConstraint};
use crate::error::Result;
use crate::geometry::eta;
use crate::relaxation::TargetMode;
use crate::topology::{apriori_radius_check, ballbox_study, curve_cost, winding_bound_check};
use crate::trajectories::reference_minimizer;

pub use bound::gap_lower_bound_eps;
pub use fw::{fw_separation_experiment, FwConfig, FwReport};
pub use lp::{assemble_reference_measure, occupation_lp, LpOutcome, LpSolver, OccupationGrid};
pub use search::{local_search, SearchOutcome, TranscribedProblem};
pub use starts::StartFamily;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapConfig {
    pub n_starts: usize,
    /// Control intervals.
    pub n: usize,
    pub seed: u64,
    pub kind: LagrangianKind,
    pub constraint: StateConstraint,
    pub target: TargetMode,
    pub terminal: Option<TerminalCost>,
    pub budget: u64,
    /// Samples per radius for the empirical ball-box constant.
    pub ballbox_samples: usize,
    /// Solve the occupation LP on the default grid.
    pub with_lp: bool,
}

impl GapConfig {
    pub fn new(n_starts: usize, n: usize, seed: u64) -> Self {
        GapConfig {
            n_starts,
            n,
            seed,
            kind: LagrangianKind::VeeVee,
            constraint: StateConstraint::Omega,
            target: TargetMode::Set,
            terminal: None,
            budget: 300_000,
            ballbox_samples: 200,
            with_lp: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub index: usize,
    pub family: StartFamily,
    pub feasible: bool,
    pub cost: Option<f64>,
    pub winding: Option<f64>,
    pub winding_pass: Option<bool>,
    /// Error code for failed starts or failed checks.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindingStats {
    pub checked: usize,
    pub passed: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
    /// `ab − 2π`.
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub relaxed_cost: f64,
    pub best_classical_cost: Option<f64>,
    /// `best_classical_cost − relaxed_cost`.
    pub margin: Option<f64>,
    pub n_starts: usize,
    pub n_feasible: usize,
    pub n: usize,
    pub seed: u64,
    pub kind: LagrangianKind,
    pub constraint: StateConstraint,
    pub winding: WindingStats,
    pub apriori_checked: usize,
    pub apriori_passed: usize,
    pub cbar: f64,
    pub lower_bound_eps: f64,
    pub lp_value: Option<f64>,
    pub starts: Vec<StartRecord>,
    pub diagnostics: Vec<String>,
}

/// Multistart search with default settings.
pub fn multistart_gap_experiment(inst: &Instance, n_starts: usize, n: usize, seed: u64) -> Result<GapReport> {
    run_gap(inst, &GapConfig::new(n_starts, n, seed))
}

/// Outputs of every start, in start order.
pub fn run_starts(inst: &Instance, cfg: &GapConfig) -> Result<Vec<(StartFamily, Result<SearchOutcome>)>> {
    let tp = TranscribedProblem {
        kind: cfg.kind,
        constraint: cfg.constraint,
        target: cfg.target,
        terminal: cfg.terminal.clone(),
        seed: cfg.seed,
        budget: cfg.budget,
        ..TranscribedProblem::new(inst.clone(), cfg.n)?
    };
    let bp = tp.breakpoints();
    Ok((0..cfg.n_starts)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let family = StartFamily::of_start(i);
            let start = starts::start_controls(family, &bp, inst, &mut rng);
            (family, local_search(&tp, &start))
        })
        .collect())
}

pub fn run_gap(inst: &Instance, cfg: &GapConfig) -> Result<GapReport> {
    if cfg.n_starts == 0 {
        return Err(crate::error::GapError::Precondition("n_starts must be >= 1".into()));
    }
    let (ypath, rcurve) = reference_minimizer(inst);
    let relaxed = relaxed_cost(inst, cfg.kind, &ypath, &rcurve, cfg.terminal.as_ref())?.total;
    let outputs = run_starts(inst, cfg)?;

    let bound = inst.a * inst.b - 2.0 * std::f64::consts::PI;
    let mut winding = WindingStats { checked: 0, passed: 0, min: None, max: None, bound };
    let (mut apriori_checked, mut apriori_passed) = (0, 0);
    let mut best: Option<f64> = None;
    let mut records = Vec::with_capacity(outputs.len());
    let mut diagnostics = Vec::new();
    let mut failures = 0;
    for (index, (family, out)) in outputs.into_iter().enumerate() {
        let mut rec = StartRecord { index, family, feasible: false, cost: None, winding: None, winding_pass: None, error: None };
        match out {
            Ok(o) => {
                rec.feasible = true;
                rec.cost = Some(o.cost);
                best = Some(best.map_or(o.cost, |b: f64| b.min(o.cost)));
                match winding_bound_check(&o.curve, inst) {
                    Ok(w) => {
                        winding.checked += 1;
                        winding.passed += usize::from(w.pass);
                        winding.min = Some(winding.min.map_or(w.winding, |m: f64| m.min(w.winding)));
                        winding.max = Some(winding.max.map_or(w.winding, |m: f64| m.max(w.winding)));
                        rec.winding = Some(w.winding);
                        rec.winding_pass = Some(w.pass);
                    }
                    Err(e) => rec.error = Some(e.code().to_string()),
                }
                if cfg.constraint == StateConstraint::Omega {
                    let vee = curve_cost(&o.curve, inst, LagrangianKind::Vee)?;
                    let eps = (vee - 2.0 * inst.a).max(1e-12);
                    if let Ok(chk) = apriori_radius_check(&o.curve, inst, eps) {
                        apriori_checked += 1;
                        apriori_passed += usize::from(chk.pass);
                    }
                }
            }
            Err(e) => {
                failures += 1;
                rec.error = Some(e.code().to_string());
            }
        }
        records.push(rec);
    }
    if failures > 0 {
        diagnostics.push(format!("{failures} of {} starts ended FAILED_FEASIBILITY or errored", cfg.n_starts));
    }
    if best.is_none() {
        diagnostics.push("no feasible classical path found".into());
    }
    let study = ballbox_study(inst, &eta(0.0, inst.d), &[4, 5, 6, 7, 8, 9], cfg.ballbox_samples, cfg.seed)?;
    let lower_bound_eps = gap_lower_bound_eps(inst, study.cbar);
    let lp_value = if cfg.with_lp {
        match occupation_lp(inst, &OccupationGrid::default()) {
            Ok((o, _)) => Some(o.value),
            Err(e) => {
                diagnostics.push(format!("occupation LP: {e}"));
                None
            }
        }
    } else {
        None
    };
    Ok(GapReport {
        relaxed_cost: relaxed,
        best_classical_cost: best,
        margin: best.map(|b| b - relaxed),
        n_starts: cfg.n_starts,
        n_feasible: records.iter().filter(|r| r.feasible).count(),
        n: cfg.n,
        seed: cfg.seed,
        kind: cfg.kind,
        constraint: cfg.constraint,
        winding,
        apriori_checked,
        apriori_passed,
        cbar: study.cbar,
        lower_bound_eps,
        lp_value,
        starts: records,
        diagnostics,
    })
}
