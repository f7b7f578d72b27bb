use std::path::PathBuf;

use crate::types::ClassId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path} at line {line}, column {column}: {message}")]
    Json {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unknown class label {0:?}")]
    UnknownLabel(String),

    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: i64, height: i64 },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}{}", context_suffix(.context))]
    DimensionMismatch {
        expected: (u32, u32),
        found: (u32, u32),
        context: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("image codec error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("insufficient modes: histogram has {distinct} distinct values, {required} needed")]
    InsufficientModes { distinct: usize, required: usize },

    #[error("infeasible crack budget: {0}")]
    InfeasibleBudget(String),

    #[error("allocation error: {0}")]
    Allocation(String),

    #[error("no donor crops available for demanded class {0}")]
    NoDonors(ClassId),

    #[error("cannot place donor shape {0}")]
    Unplaceable(String),

    #[error("missing predictions for images: {}", .0.join(", "))]
    MissingPredictions(Vec<String>),

    #[error("mismatched class sets between reports")]
    ClassSetMismatch,
}

fn context_suffix(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(" ({context})")
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, err: &serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }

    pub(crate) fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        Error::Image {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input data, as opposed to bad configuration.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::InvalidParam(_) | Error::InfeasibleBudget(_))
    }
}
