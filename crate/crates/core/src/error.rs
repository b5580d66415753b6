use thiserror::Error;

/// Errors raised anywhere in the detector pipeline.
///
/// Variants are grouped by how the CLI reports them: parameter errors exit
/// with 2, data errors with 3, numeric/degeneracy errors with 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("training failed at epoch {epoch}, batch {batch}: {source}")]
    Training {
        epoch: usize,
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),

    #[error("threshold selection failed: {0}")]
    Threshold(String),

    #[error("metric undefined: {0}")]
    Metric(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) | Error::Threshold(_) => 2,
            Error::Data(_) | Error::Io { .. } | Error::Csv(_) | Error::Json(_) => 3,
            Error::Training { .. }
            | Error::Degenerate(_)
            | Error::Singular(_)
            | Error::NonFiniteGradient(_)
            | Error::Metric(_) => 4,
        }
    }
}
