use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension overflow: requested Hilbert-space dimension {dim} exceeds cap {cap}")]
    DimensionOverflow { dim: usize, cap: usize },

    #[error("site index {site} out of range for chain of length {len}")]
    SiteOutOfRange { site: usize, len: usize },

    #[error("matrix is not Hermitian (max deviation {dev:.3e})")]
    NotHermitian { dev: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),

    #[error("linear solver breakdown: {0}")]
    Solver(String),

    #[error("steady state is not unique (second singular value {sigma:.3e} below threshold)")]
    SteadyStateNotUnique { sigma: f64 },

    #[error("drift matrix is not strictly stable (min Re eigenvalue {min_re:.3e})")]
    UnstableDrift { min_re: f64 },

    #[error("inconsistent input: {0}")]
    Inconsistent(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("fit rejected: {0}")]
    FitRejected(String),

    #[error("eigenvalue branch crossing during counting-field continuation at chi = {chi}")]
    BranchCrossing { chi: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
