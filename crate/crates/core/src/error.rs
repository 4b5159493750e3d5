use thiserror::Error;

/// Errors raised by the estimation toolkit.
///
/// Variant names double as the error identifiers reported by the command
/// line front end, so they are kept stable.
#[derive(Debug, Error)]
pub enum Error {
    #[error("AllZeroMatrix: every singular value is below tolerance")]
    AllZeroMatrix,
    #[error("NotOrthonormal: columns deviate from orthonormality by {0:e}")]
    NotOrthonormal(f64),
    #[error("SingularGram: smallest singular value squared {sigma_min_sq:e} is below tolerance {tol:e}")]
    SingularGram { sigma_min_sq: f64, tol: f64 },
    #[error("ZeroWeight: dictionary weights must be strictly positive")]
    ZeroWeight,
    #[error("SingularSubproblem: {0}")]
    SingularSubproblem(String),
    #[error("BudgetExceeded: {needed} supports required, budget is {budget}")]
    BudgetExceeded { needed: u128, budget: u64 },
    #[error("DimensionMismatch: {0}")]
    DimensionMismatch(String),
    #[error("InvalidArgument: {0}")]
    InvalidArgument(String),
    #[error("NonFinite: {0}")]
    NonFinite(String),
    #[error("Parse: {0}")]
    Parse(String),
    #[error("EmptyTable: refusing to emit an empty table")]
    EmptyTable,
    #[error("IoError: {0}")]
    Io(#[from] std::io::Error),
    #[error("Json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short identifier of the error kind, e.g. `SingularGram`.
    pub fn name(&self) -> &'static str {
        match self {
            Error::AllZeroMatrix => "AllZeroMatrix",
            Error::NotOrthonormal(_) => "NotOrthonormal",
            Error::SingularGram { .. } => "SingularGram",
            Error::ZeroWeight => "ZeroWeight",
            Error::SingularSubproblem(_) => "SingularSubproblem",
            Error::BudgetExceeded { .. } => "BudgetExceeded",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::NonFinite(_) => "NonFinite",
            Error::Parse(_) => "Parse",
            Error::EmptyTable => "EmptyTable",
            Error::Io(_) => "IoError",
            Error::Json(_) => "Json",
        }
    }

    /// Module that raises this kind of error.
    pub fn origin(&self) -> &'static str {
        match self {
            Error::AllZeroMatrix | Error::NotOrthonormal(_) => "linalg",
            Error::SingularGram { .. } => "simplify",
            Error::ZeroWeight => "dictionaries",
            Error::SingularSubproblem(_) | Error::NonFinite(_) => "solver",
            Error::BudgetExceeded { .. } => "theory",
            Error::EmptyTable => "experiments",
            Error::DimensionMismatch(_) | Error::InvalidArgument(_) => "problem",
            Error::Parse(_) | Error::Io(_) | Error::Json(_) => "io",
        }
    }

    /// True for failures of the numerical routines (as opposed to IO or usage).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::AllZeroMatrix
                | Error::NotOrthonormal(_)
                | Error::SingularGram { .. }
                | Error::SingularSubproblem(_)
                | Error::BudgetExceeded { .. }
                | Error::NonFinite(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
