use thiserror::Error;

/// A syntax error with a 1-based source position.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

/// Broad failure classes; the CLI maps each to an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Parse,
    Precondition,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("variable index {index} out of range for {nvars} variables")]
    VariableOutOfRange { index: usize, nvars: usize },

    #[error("the zero polynomial has no leading form")]
    ZeroPolynomial,

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is singular")]
    SingularMatrix,

    #[error("invalid restriction system: {0}")]
    InvalidSystem(String),

    #[error("C({p},{q}) = {count} column selections exceed the cap of {cap}")]
    TooManySubmatrices { p: usize, q: usize, count: u128, cap: u128 },

    #[error("generic rank {rank} is below the number of restrictions {rows}")]
    DeficientGenericRank { rank: usize, rows: usize },

    #[error("row reduction did not terminate within {0} stages")]
    StageLimit(usize),

    #[error("analysis does not belong to this matrix: {0}")]
    MismatchedAnalysis(String),

    #[error("restrictions do not vanish at the expansion point (row {row})")]
    NonzeroAtOrigin { row: usize },

    #[error("Wald statistic undefined at this point (reciprocal condition {rcond:e})")]
    SingularAtPoint { rcond: f64 },

    #[error("{redraws} redraws over {draws} draws exceed the allowed rate; the rank classification is suspect")]
    ExcessiveRedraws { redraws: u64, draws: usize },

    #[error("no conservative bound exists: the statistic diverges under the null")]
    Divergent,

    #[error("thresholding removed every coefficient of Jacobian row {row}")]
    AnnihilatedRow { row: usize },

    #[error("domain error: {0}")]
    Domain(String),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Parse(_) => ErrorClass::Parse,
            Error::SingularAtPoint { .. }
            | Error::ExcessiveRedraws { .. }
            | Error::SingularMatrix
            | Error::StageLimit(_) => ErrorClass::Numeric,
            _ => ErrorClass::Precondition,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
