use thiserror::Error;

/// Errors raised by the estimators, generators and harness.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (asymmetry {asymmetry:e} exceeds tolerance {tolerance:e})")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("matrix contains NaN or infinite entries")]
    NonFinite,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("subspace dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),

    #[error("matrix is numerically rank deficient in its rows (singular value ratio {ratio:e})")]
    RankDeficientRows { ratio: f64 },

    #[error("exact-row block A1 has rank {rank}, expected {expected}; select independent rows")]
    RowRankDeficient { rank: usize, expected: usize },

    #[error("extracted subspace does not determine a finite estimate: {0}")]
    NotGeneric(String),

    #[error("exact rows are unsatisfiable; witness rows {rows:?}")]
    InconsistentExactRows { rows: Vec<usize> },

    #[error("infeasible model specification: {0}")]
    InfeasibleSpec(String),

    #[error("dimension too small: {0}")]
    DimensionTooSmall(String),

    #[error("no eigenvalue gap found for rank estimation")]
    NoGap,

    #[error("invalid Davis-Kahan slack: epsilon {epsilon:e} must lie in (0, sigma^2 = {sigma2:e})")]
    InvalidSlack { epsilon: f64, sigma2: f64 },

    #[error("invalid configuration: {field}: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Stable variant name, used on the command line and in experiment rows.
    pub fn name(&self) -> &'static str {
        match self {
            Error::NonSquare { .. } => "NonSquare",
            Error::NotSymmetric { .. } => "NotSymmetric",
            Error::NonFinite => "NonFinite",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::DimensionMismatch(..) => "DimensionMismatch",
            Error::RankDeficientRows { .. } => "RankDeficientRows",
            Error::RowRankDeficient { .. } => "RowRankDeficient",
            Error::NotGeneric(_) => "NotGeneric",
            Error::InconsistentExactRows { .. } => "InconsistentExactRows",
            Error::InfeasibleSpec(_) => "InfeasibleSpec",
            Error::DimensionTooSmall(_) => "DimensionTooSmall",
            Error::NoGap => "NoGap",
            Error::InvalidSlack { .. } => "InvalidSlack",
            Error::InvalidConfig { .. } => "InvalidConfig",
            Error::Malformed(_) => "Malformed",
            Error::Io(_) => "Io",
        }
    }

    /// True for failures that stem from the mathematics of the instance
    /// rather than from malformed input.
    pub fn is_degeneracy(&self) -> bool {
        matches!(
            self,
            Error::NotGeneric(_)
                | Error::RowRankDeficient { .. }
                | Error::InconsistentExactRows { .. }
                | Error::RankDeficientRows { .. }
                | Error::NoGap
        )
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
