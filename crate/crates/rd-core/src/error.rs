//! Error type shared across the library.

use thiserror::Error;

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, RdError>;

/// Failure modes of grid assembly, model validation, and the numerical
/// routines. Variants carry the quantities needed to diagnose the failure.
#[derive(Debug, Error)]
pub enum RdError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("eigen iteration did not settle after {max_iter} steps (last Rayleigh quotient {rayleigh:e})")]
    EigenIteration { max_iter: usize, rayleigh: f64 },

    #[error("singular tridiagonal system: pivot {pivot:e} at row {row}")]
    SingularPivot { pivot: f64, row: usize },

    #[error("memory kernel evaluated at negative elapsed time {t}")]
    NegativeKernelTime { t: f64 },

    #[error("quadrature step {dt} too coarse for delay scale tau = {tau}; need dt <= tau/4")]
    QuadratureStep { dt: f64, tau: f64 },

    #[error("history coverage {have} shorter than required horizon {need}")]
    InsufficientHistory { have: f64, need: f64 },

    #[error("history buffer would hold {needed} scalars, cap is {cap}")]
    HistoryBudget { needed: usize, cap: usize },

    #[error("evaluation outside the admissible domain: {0}")]
    Domain(String),

    #[error("assumption not satisfied: {0}")]
    Assumption(String),

    #[error("Newton stalled: residual {residual:e} after {iterations} iterations")]
    NewtonStalled { residual: f64, iterations: usize },

    #[error("converged state has negative entries: min entry {min_entry:e}")]
    NegativeState { min_entry: f64 },

    #[error("branch seeding failed near d = {d}: {reason}")]
    SeedingFailed { d: f64, reason: String },

    #[error(
        "continuation hit a fold near d = {d} (grid index {index}); last resolved \
         point at d = {last_good_d} has minimum singular value {min_sv:e}"
    )]
    FoldDetected {
        d: f64,
        last_good_d: f64,
        index: usize,
        min_sv: f64,
    },

    #[error(
        "branch tracking collapsed to the trivial state near d = {d}: amplitude \
         fell from {amplitude_before:e} despite retries from rescaled guesses"
    )]
    BranchLost { d: f64, amplitude_before: f64 },

    #[error("field blow-up at t = {t}: max |entry| = {magnitude:e} exceeds cap {cap:e}")]
    BlowUp { t: f64, magnitude: f64, cap: f64 },
}
