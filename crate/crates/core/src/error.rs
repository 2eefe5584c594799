use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised across the library. Each variant carries a stable code
/// string (see [`Error::code`]) that the service and CLI surface verbatim.
#[derive(Debug, Error)]
pub enum Error {
    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("density is singular at x = {x}")]
    SingularDensity { x: f64 },

    #[error("root search did not converge: {0}")]
    Convergence(String),

    #[error("mode is not unique for alpha = {alpha}, beta = {beta}")]
    AmbiguousMode { alpha: f64, beta: f64 },

    #[error(
        "moments are infeasible for a beta distribution: mean = {mean}, variance = {variance}"
    )]
    InfeasibleMoments { mean: f64, variance: f64 },

    #[error("cohort has zero range (min = max = {0})")]
    DegenerateCohort(i64),

    #[error("cohort is empty")]
    EmptyCohort,

    #[error("malformed amount {token:?}: {reason}")]
    Parse { token: String, reason: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("case {0} already stored with different content")]
    Conflict(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("storage error: {0}")]
    Storage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain(_) => "DomainError",
            Error::SingularDensity { .. } => "SingularDensity",
            Error::Convergence(_) => "ConvergenceError",
            Error::AmbiguousMode { .. } => "AmbiguousMode",
            Error::InfeasibleMoments { .. } => "InfeasibleMoments",
            Error::DegenerateCohort(_) => "DegenerateCohort",
            Error::EmptyCohort => "EmptyCohort",
            Error::Parse { .. } => "ParseError",
            Error::Schema(_) => "SchemaError",
            Error::Conflict(_) => "Conflict",
            Error::Invalid(_) => "ValidationError",
            Error::Storage(_) => "StorageError",
            Error::Io(_) => "IoError",
        }
    }
}

macro_rules! storage_from {
    ($($t:ty),*) => {
        $(impl From<$t> for Error {
            fn from(e: $t) -> Self {
                Error::Storage(e.to_string())
            }
        })*
    };
}

storage_from!(
    redb::Error,
    redb::DatabaseError,
    redb::TransactionError,
    redb::TableError,
    redb::StorageError,
    redb::CommitError
);
