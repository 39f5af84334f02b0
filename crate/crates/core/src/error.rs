use thiserror::Error;

/// Errors raised by the numeric kernels, the harness and the log readers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NgscError {
    #[error("environment placement failed after {attempts} attempts")]
    PlacementFailure { attempts: usize },

    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate field query at ({x}, {y}): {what}")]
    DegenerateQuery { x: f64, y: f64, what: &'static str },

    #[error("soft value iteration did not converge: residual {residual:e} after {iterations} sweeps")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("singular local fit (condition number {condition:e})")]
    SingularFit { condition: f64 },

    #[error("query at distance {distance} exceeds local model validity radius {limit}")]
    OutOfValidity { distance: f64, limit: f64 },

    #[error("belief goals do not match Fisher results")]
    GoalSetMismatch,

    #[error("episode log is empty")]
    EmptyLog,

    #[error("corrupt episode log at line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },

    #[error("batch specification is empty: {0}")]
    EmptyBatch(&'static str),
}

pub type Result<T, E = NgscError> = std::result::Result<T, E>;
