use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("matrix norm {norm:e} exceeds the matrix-exponential limit {limit:e}")]
    NormTooLarge { norm: f64, limit: f64 },

    #[error("matrix is singular to working precision (pivot {pivot:e} at column {column})")]
    SingularMatrix { pivot: f64, column: usize },

    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not Hurwitz stable")]
    NotHurwitz,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("epsilon {eps} outside (0, {max})")]
    EpsilonOutOfRange { eps: f64, max: f64 },

    #[error("sector condition violated: sigma_star - T*L1 = {slack} <= 0")]
    SectorViolated { slack: f64 },

    #[error("bracket [{lo}, {hi}] does not straddle the feasibility boundary ({detail})")]
    NoBracket { lo: f64, hi: f64, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
