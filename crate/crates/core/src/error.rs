use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("degenerate matrix: {0}")]
    Degenerate(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("{path}: format error at row {row}: {msg}")]
    Format {
        path: PathBuf,
        row: usize,
        msg: String,
    },

    #[error("{path}: parse error at row {row}, column {col}: {msg}")]
    Parse {
        path: PathBuf,
        row: usize,
        col: usize,
        msg: String,
    },

    #[error("label error: {0}")]
    Label(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("trial {trial_index} ({model_kind}) failed: {source}")]
    Trial {
        trial_index: usize,
        model_kind: String,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse error classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Param(_) => ErrorClass::Config,
            Error::Format { .. }
            | Error::Parse { .. }
            | Error::Label(_)
            | Error::Split(_)
            | Error::Io { .. } => ErrorClass::Data,
            Error::Dimension(_) | Error::Numeric(_) | Error::Degenerate(_) => ErrorClass::Numeric,
            Error::Trial { source, .. } => source.class(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! dim_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Dimension(format!($($arg)*))
    };
}
pub(crate) use dim_err;
