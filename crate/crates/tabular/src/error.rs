use thiserror::Error;

/// Errors from constructing or solving tabular models.
#[derive(Debug, Error)]
pub enum TabularError {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("value iteration did not converge within {max_sweeps} sweeps (residual {residual:.3e})")]
    NonConvergence { max_sweeps: usize, residual: f64 },

    #[error("state index {state} out of range (n_states = {n_states})")]
    StateOutOfRange { state: usize, n_states: usize },

    #[error("no task is consistent with the given history")]
    ImpossibleHistory,

    #[error("reachable augmented state count exceeded cap of {cap} (at least {reached} reached)")]
    AugmentedTooLarge { cap: usize, reached: usize },

    #[error("dynamics candidate count {count} exceeds enumeration cap of {cap}")]
    EnumerationTooLarge { count: u128, cap: u128 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dense export too large: {states} states x {actions} actions")]
    ExportTooLarge { states: usize, actions: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TabularError>;
