use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("doubled-structure violation: {0}")]
    StructureViolation(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("kappa must be non-negative and finite, got {0}")]
    NonPositiveKappa(f64),
    #[error("F not Hurwitz: spectral abscissa {0:.6e}")]
    NotHurwitz(f64),
    #[error("cost matrix R must be positive definite (min eigenvalue {0:.3e})")]
    NonPositiveR(f64),
    #[error("solver failure: {0}")]
    NumericalFailure(String),
    #[error("Lyapunov solve ill-conditioned: residual {0:.3e}")]
    IllConditioned(f64),
    #[error("squeezer is singular: B^-1 - I is not invertible")]
    SingularSqueezer,
    #[error("controller not realizable: {0}")]
    Unrealizable(String),
    #[error("zero controller: no squeezer needed")]
    NoControllerNeeded,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
