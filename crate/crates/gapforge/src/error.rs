use thiserror::Error;

/// A single failed parameter check in `build_instance`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub code: &'static str,
    pub detail: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GapError {
    #[error("index out of range: k = {k} not in 1..={d}")]
    IndexOutOfRange { k: usize, d: usize },

    #[error("invalid instance: {}", format_violations(.0))]
    InvalidInstance(Vec<Violation>),

    #[error("domain violation: {0}")]
    DomainViolation(String),

    #[error("ORIGIN_HIT: sample {index} lies within 1e-12 of the origin")]
    OriginHit { index: usize },

    #[error("NO_CROSSING: x1 never spans [-a, a]")]
    NoCrossing,

    #[error("COST_PRECONDITION: VEE cost {cost} exceeds 2a + eps = {limit}")]
    CostPrecondition { cost: f64, limit: f64 },

    #[error("ALPHA_TOO_SMALL: alpha = {alpha} must exceed 2a = {min}")]
    AlphaTooSmall { alpha: f64, min: f64 },

    #[error("PLANNER_FAILED: {expansions} expansions, best residual {best_residual:e}")]
    PlannerFailed { expansions: usize, best_residual: f64 },

    #[error("FAILED_FEASIBILITY: min clearance {min_clearance:e}, endpoint gap {endpoint_gap:e}")]
    FailedFeasibility { min_clearance: f64, endpoint_gap: f64 },

    #[error("SOLVER_STALL: no progress after {iterations} iterations (kkt {kkt:e})")]
    SolverStall { iterations: usize, kkt: f64 },

    #[error("weight normalization violation on interval {interval}: sum = {sum}")]
    WeightNormalization { interval: usize, sum: f64 },

    #[error("mismatched grids: {0}")]
    MismatchedGrids(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unknown kind: {0}")]
    UnknownKind(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| format!("{} ({})", x.code, x.detail))
        .collect::<Vec<_>>()
        .join("; ")
}

impl GapError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            GapError::IndexOutOfRange { .. } => "INDEX_OUT_OF_RANGE",
            GapError::InvalidInstance(v) => v.first().map(|x| x.code).unwrap_or("INVALID_INSTANCE"),
            GapError::DomainViolation(_) => "DOMAIN_VIOLATION",
            GapError::OriginHit { .. } => "ORIGIN_HIT",
            GapError::NoCrossing => "NO_CROSSING",
            GapError::CostPrecondition { .. } => "COST_PRECONDITION",
            GapError::AlphaTooSmall { .. } => "ALPHA_TOO_SMALL",
            GapError::PlannerFailed { .. } => "PLANNER_FAILED",
            GapError::FailedFeasibility { .. } => "FAILED_FEASIBILITY",
            GapError::SolverStall { .. } => "SOLVER_STALL",
            GapError::WeightNormalization { .. } => "WEIGHT_NORMALIZATION",
            GapError::MismatchedGrids(_) => "MISMATCHED_GRIDS",
            GapError::Precondition(_) => "PRECONDITION",
            GapError::UnknownKind(_) => "UNKNOWN_KIND",
            GapError::Io(_) => "IO",
            GapError::Parse(_) => "PARSE",
        }
    }

    /// True for failures of a numerical experiment rather than bad input.
    pub fn is_experiment_failure(&self) -> bool {
        matches!(
            self,
            GapError::PlannerFailed { .. }
                | GapError::FailedFeasibility { .. }
                | GapError::SolverStall { .. }
        )
    }
}

impl From<std::io::Error> for GapError {
    fn from(e: std::io::Error) -> Self {
        GapError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for GapError {
    fn from(e: serde_json::Error) -> Self {
        GapError::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, GapError>;
