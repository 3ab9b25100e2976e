//! Numerical toolkit for a state-constrained sub-Riemannian relaxation gap.
//!
//! Builds the spiral domain, evaluates classical and Young-measure costs, and runs the
//! experiments that exhibit `M_c > M_y = 2a`.

pub mod costs;
pub mod domain;
pub mod error;
pub mod geometry;
pub mod io;
pub mod optimize;
pub mod relaxation;
pub mod topology;
pub mod trajectories;

pub use costs::{classical_cost, lagrangian, relaxed_cost, CostReport, LagrangianKind, TerminalCost};
pub use domain::{build_instance, classify, Instance, InstanceParams, RegionTag, StateConstraint};
pub use error::{GapError, Result};
pub use geometry::{phi, phi_inv, Control, Point};
pub use trajectories::{integrate_horizontal, integrate_young, reference_minimizer, ControlPath, Curve, YoungPath};
pub use optimize::{
    fw_separation_experiment, gap_lower_bound_eps, multistart_gap_experiment, occupation_lp, FwConfig, FwReport,
    GapConfig, GapReport, LpOutcome, OccupationGrid,
};
pub use relaxation::{ProblemDoc, TargetMode};
