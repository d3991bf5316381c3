use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty candidate pool")]
    EmptyPool,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("label oracle failed at pool index {index}: {message}")]
    Oracle { index: usize, message: String },
    #[error("singular Hessian (condition number {condition:e}); asymptotic inference unavailable")]
    SingularHessian { condition: f64 },
    #[error("argument {0} outside its domain")]
    Domain(f64),
    #[error("time step {dt} s exceeds the resolution limit {limit} s")]
    Resolution { dt: f64, limit: f64 },
    #[error("oscillator diverged at step {step} (|z| = {displacement:e} m)")]
    Instability { step: usize, displacement: f64 },
    #[error("mean is zero; relative standard deviation undefined")]
    ZeroMean,
    #[error("{dropped} of {total} bootstrap resamples were degenerate")]
    TooManyDegenerate { dropped: usize, total: usize },
    #[error("need at least {needed} replications, got {got}")]
    TooFewReplications { needed: usize, got: usize },
    #[error("{failed} of {total} replications failed (limit 10%)")]
    ReplicationsFailed { failed: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
