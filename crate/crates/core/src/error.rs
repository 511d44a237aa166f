use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("eigen-solver failed: {0}")]
    EigenFailure(String),

    #[error("invariant state is not unique (fixed-point space dimension {fixed_dim})")]
    NonUniqueInvariantState { fixed_dim: usize },

    #[error("candidate state is not positive (min eigenvalue {min_eigenvalue:e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("map is not unital (defect {defect:e})")]
    NotUnital { defect: f64 },

    #[error("state is not invariant (defect {defect:e})")]
    NotInvariant { defect: f64 },

    #[error("unknown outcome label `{0}`")]
    UnknownLabel(String),

    #[error("enumeration needs {required} words, cap is {cap}")]
    CapExceeded { required: u128, cap: usize },

    #[error("maps do not commute (commutator norm {norm:e})")]
    CommutationFailure { norm: f64 },

    #[error("coarse graining is not compatible with the involution: {0}")]
    ThetaIncompatible(String),

    #[error("no outcome reversal attached")]
    MissingReversal,

    #[error("pressure curve has no certified lower bounds")]
    UncertifiedCurve,

    #[error("empty grid: {0}")]
    EmptyGrid(&'static str),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
