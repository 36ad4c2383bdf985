use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("dimension δ = {delta} is outside (0, 2); {context} requires a process that hits zero")]
    DimensionOutOfRange { delta: f64, context: &'static str },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("drift-implicit square-root scheme needs a ≥ σ²/4 (got a = {a}, σ²/4 = {quarter_sigma_sq})")]
    ImplicitSchemeIllPosed { a: f64, quarter_sigma_sq: f64 },

    #[error("scheme `{0}` cannot be driven by a supplied Brownian path here")]
    NotPathwise(&'static str),

    #[error("non-finite value in replication {replication} at N = {n_grid}")]
    NonFinite { n_grid: usize, replication: u64 },

    #[error("solution became non-finite at step {step}")]
    Diverged { step: usize },

    #[error("rate fit: {0}")]
    Fit(String),

    #[error("{0}")]
    Usage(String),
}
