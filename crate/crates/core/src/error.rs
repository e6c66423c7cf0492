use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("Fock cutoff n_max={n_max} captures only 1-{missing:.3e} of the norm for |alpha|={alpha_abs}")]
    CutoffTooSmall { n_max: usize, alpha_abs: f64, missing: f64 },

    #[error("level {level} does not exist for atoms with {levels} levels")]
    InvalidLevel { level: &'static str, levels: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("incompatible spaces: {0}")]
    SpaceMismatch(String),

    #[error("operator is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("operator is not unitary (max deviation {0:.3e})")]
    NotUnitary(f64),

    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),

    #[error("cannot normalize a zero vector")]
    ZeroNorm,

    #[error("block index n={n} out of range (requires n >= {min})")]
    BlockIndex { n: usize, min: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("all measurement outcomes have vanishing probability")]
    DegenerateOutcome,
}

pub type Result<T> = std::result::Result<T, Error>;
