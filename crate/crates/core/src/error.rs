use thiserror::Error;

/// Errors raised while building problems, tabulating densities or optimizing mappings.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("grid too large: {points} points exceeds the cap of {cap}")]
    GridTooLarge { points: usize, cap: usize },

    #[error("density not normalized: mass={mass}")]
    NotNormalized { mass: f64 },

    #[error("noise density is not zero-mean: mean={mean}")]
    NoiseNotZeroMean { mean: f64 },

    #[error("decoder denominator vanishes everywhere; encoder and grids are inconsistent")]
    EmptyPosterior,

    #[error("non-finite value during {stage} at iteration {iteration}")]
    NonFinite { stage: &'static str, iteration: usize },

    #[error("malformed density spec `{spec}`: offending token `{token}`")]
    MalformedSpec { spec: String, token: String },

    #[error("malformed mapping file: {0}")]
    MalformedFile(String),

    #[error("unknown recipe `{0}`")]
    UnknownRecipe(String),

    #[error("invalid override `{0}`")]
    InvalidOverride(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite { .. } | Error::EmptyPosterior)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
