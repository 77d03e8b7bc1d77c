use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the emulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is numerically singular (pivot {pivot:.3e} below threshold {threshold:.3e})")]
    SingularMatrix { pivot: f64, threshold: f64 },

    #[error("matrix is not Hermitian (max |H - H^H| = {defect:.3e})")]
    NotHermitian { defect: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eig:.3e})")]
    NotPositiveDefinite { min_eig: f64 },

    #[error("second pencil matrix B is singular (sigma_min/sigma_max = {ratio:.3e})")]
    SingularB { ratio: f64 },

    #[error("eigenvector matrix is ill-conditioned (kappa = {kappa:.3e})")]
    IllConditionedEigenbasis { kappa: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("spectrum has {got} entries, expected {expected}")]
    BadSpectrumLength { expected: usize, got: usize },

    #[error("leading coefficient of the quadratic is singular")]
    SingularLeadingCoefficient,

    #[error("node count p = {0} must be odd")]
    EvenP(usize),

    #[error("discretization needs p = {required} nodes, above the cap of {cap}")]
    ParamsTooLarge { required: f64, cap: usize },

    #[error("alpha = {alpha:.6e} is smaller than the operator norm {norm:.6e}")]
    AlphaTooSmall { alpha: f64, norm: f64 },

    #[error("matrix is not unitary (max |U^H U - I| = {defect:.3e})")]
    NotUnitary { defect: f64 },

    #[error("linear combination needs at least one term")]
    EmptyTerms,

    #[error("pencil is not a symmetric pair: {0}")]
    NotSymmetricPair(String),

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("perturbation {delta:.3e} exceeds 1% of sigma_min(B) = {sigma_min:.3e}")]
    PerturbationTooLarge { delta: f64, sigma_min: f64 },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unsupported instance file version {0:?}")]
    SchemaVersionMismatch(String),
}

impl Error {
    /// Variant name, used as a stable tag in CLI messages.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::SingularMatrix { .. } => "SingularMatrix",
            Error::NotHermitian { .. } => "NotHermitian",
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::SingularB { .. } => "SingularB",
            Error::IllConditionedEigenbasis { .. } => "IllConditionedEigenbasis",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::BadSpectrumLength { .. } => "BadSpectrumLength",
            Error::SingularLeadingCoefficient => "SingularLeadingCoefficient",
            Error::EvenP(_) => "EvenP",
            Error::ParamsTooLarge { .. } => "ParamsTooLarge",
            Error::AlphaTooSmall { .. } => "AlphaTooSmall",
            Error::NotUnitary { .. } => "NotUnitary",
            Error::EmptyTerms => "EmptyTerms",
            Error::NotSymmetricPair(_) => "NotSymmetricPair",
            Error::TooLarge(_) => "TooLarge",
            Error::PerturbationTooLarge { .. } => "PerturbationTooLarge",
            Error::NonFinite(_) => "NonFinite",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Io { .. } => "Io",
            Error::Parse { .. } => "Parse",
            Error::Schema(_) => "Schema",
            Error::SchemaVersionMismatch(_) => "SchemaVersionMismatch",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
