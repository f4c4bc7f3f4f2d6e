use thiserror::Error;

/// Every failure the pipeline can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("input outside domain: {0}")]
    InputDomain(String),

    /// Slip ratio / slip angle requested where the formulas have no meaning
    /// (vehicle at rest or reversing).
    #[error("slip undefined: {0}")]
    UndefinedSlip(String),

    #[error("ordering violated at index {index}: t={t} follows t={previous}")]
    Ordering { index: usize, previous: f64, t: f64 },

    #[error("line {line}: field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error("line {line}: field `{field}` is not finite")]
    Value { line: usize, field: String },

    #[error("header: {0}")]
    Header(String),

    #[error("calibration: {0}")]
    Calibration(String),

    #[error("folds: {0}")]
    Fold(String),

    #[error("stream `{0}` has records without slip labels")]
    MissingLabels(String),

    #[error("alignment: {0}")]
    Alignment(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no ground truth for surface `{0}`")]
    MissingGroundTruth(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::InputDomain(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
