//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Configuration failed validation (bad ranges, inconsistent fields).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A numeric argument was outside the mathematical domain of an
    /// operation (e.g. nonpositive distance, negative power).
    #[error("domain error: {0}")]
    Domain(String),

    /// A surrogate was evaluated outside its trust region.
    #[error("trust region violated: {0}")]
    TrustRegion(String),

    /// The conic solver terminated without a usable solution.
    #[error("solver failure: {0}")]
    SolverFailure(String),

    /// A feasibility search exhausted its iteration budget.
    #[error("infeasible scenario: {0}")]
    Infeasible(String),

    #[error("program construction error: {0}")]
    Program(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("TOML parse error: {0}")]
    TomlParse(#[from] toml::de::Error),

    #[error("TOML encode error: {0}")]
    TomlEncode(#[from] toml::ser::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
