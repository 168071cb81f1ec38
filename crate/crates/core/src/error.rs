use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    /// A parameter left the support of the density (identity transform with
    /// a non-positive hyperparameter). Samplers treat this as a rejection.
    #[error("parameter outside the domain: {0}")]
    Domain(String),

    /// Non-finite values or a failed implicit solve inside the integrator.
    #[error("divergence: {0}")]
    Divergence(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("Jacobi eigensolver did not converge within {sweeps} sweeps")]
    NonConvergence { sweeps: usize },

    #[error("dense oracle guard: dimension {dim} exceeds limit {limit}")]
    Guard { dim: usize, limit: usize },

    #[error("optimizer failed: {0}")]
    Optimizer(String),

    #[error("Laplace invalid (singular/indefinite posterior): {0}")]
    LaplaceInvalid(String),

    #[error("series too short: need at least {needed} values, found {found}")]
    SeriesTooShort { needed: usize, found: usize },

    #[error("evidence estimation failed: {0}")]
    Evidence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors that a sampler absorbs as a rejected move rather than aborting.
    pub fn is_rejection(&self) -> bool {
        matches!(
            self,
            Error::Domain(_) | Error::Divergence(_) | Error::NonConvergence { .. }
        )
    }
}
