use thiserror::Error;

/// Errors produced by path operations, geometry queries, simulation and checks.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("time {time} outside path domain [0, {t_end}]")]
    TimeOutOfDomain { time: f64, t_end: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("negative duration {0}")]
    NegativeDuration(f64),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("incompatible paths: {0}")]
    IncompatiblePaths(String),

    #[error("query at |b| = {b_abs:.6e} outside the regular tube (eps0 = {eps0:.6e})")]
    OutsideTube { b_abs: f64, eps0: f64 },

    #[error("boundary projection did not converge after {iters} iterations (residual {residual:.3e})")]
    ProjectionFailed { iters: usize, residual: f64 },

    #[error("non-finite value in {context} (step parameter h = {h:.3e})")]
    NonFinite { context: String, h: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("simulation produced a non-finite state at step {step} (time {time})")]
    SimulationBlowup { step: usize, time: f64 },

    #[error("trajectory is missing stored Brownian increments")]
    MissingIncrements,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("csv format error: {0}")]
    CsvFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
