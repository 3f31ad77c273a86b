use std::path::PathBuf;

use crate::dsl::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("column `{column}` has non-positive value {value} at row {row}; cannot take log")]
    NonPositive { column: String, row: usize, value: f64 },

    #[error("column `{0}` is already transformed")]
    AlreadyTransformed(String),

    #[error("column `{0}` is constant; cannot standardize")]
    ConstantColumn(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("invalid model specification: {0}")]
    Spec(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("chain diverged at iteration {iteration}: {what}")]
    Divergence { iteration: usize, what: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("prior never satisfies constraints of `{0}`; increase prior draw count or loosen constraints")]
    ZeroPriorProportion(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("step dependency missing: {0}")]
    MissingStep(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Parse(_) | Error::Spec(_) | Error::MissingStep(_) => 2,
            Error::NonPositive { .. }
            | Error::AlreadyTransformed(_)
            | Error::ConstantColumn(_)
            | Error::UnknownColumn(_)
            | Error::Data(_)
            | Error::Io { .. } => 3,
            Error::Precondition(_)
            | Error::Divergence { .. }
            | Error::Numerical(_)
            | Error::ZeroPriorProportion(_) => 4,
        }
    }
}
