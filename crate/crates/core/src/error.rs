use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("{what} did not converge (index {index})")]
    NoConvergence { what: &'static str, index: usize },

    #[error("rank cap {cap} reached before tolerance (needed rank {rank}, achieved relative error {achieved:.3e})")]
    RankCap { rank: usize, cap: usize, achieved: f64 },

    #[error("Tucker core too large for canonical conversion: rank {rank} exceeds {max}")]
    OversizedCore { rank: usize, max: usize },

    #[error("loss of positive definiteness at iteration {iteration}: <P,S> = {curvature:.3e}")]
    Breakdown { iteration: usize, curvature: f64 },

    #[error("NaN encountered at iteration {iteration}")]
    NotANumber { iteration: usize },

    #[error("operator is not positive definite: {0}")]
    Indefinite(String),

    #[error("refusing to allocate dense tensor of shape {shape:?}")]
    DenseGuard { shape: Vec<usize> },

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by bad arguments or input files rather than
    /// by the numerics.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Shape(_) | Error::InvalidInput(_) | Error::Parse { .. } | Error::Io(_) | Error::DenseGuard { .. }
        )
    }
}
