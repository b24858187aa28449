use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem data: {0}")]
    InvalidSpec(String),

    #[error("capacity violation: {used} activations requested, limit is {limit}")]
    CapacityViolation { used: usize, limit: usize },

    #[error("value iteration did not converge within {iterations} sweeps (check beta/tol)")]
    NonConvergence { iterations: usize },

    #[error("no sign change of the action preference in [{lo}, {hi}]; widen the bracket")]
    BracketError { lo: f64, hi: f64 },

    #[error("joint state space has {size} states, exceeding the cap of {cap}")]
    StateSpaceTooLarge { size: usize, cap: usize },

    #[error("estimation method not valid here: {0}")]
    MethodInvalid(String),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("insufficient data: need {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("policy/index-table mismatch: {0}")]
    TableMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
