use std::fmt;
use std::path::Path;

/// Process exit codes.
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_DOMAIN: u8 = 3;

/// An error together with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }

    pub fn domain(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DOMAIN,
            message: message.into(),
        }
    }

    /// Prefixes the message with the file it concerns, unless it already
    /// names it.
    pub fn in_file(mut self, path: &Path) -> Self {
        let p = path.display().to_string();
        if !self.message.starts_with(&p) {
            self.message = format!("{p}: {}", self.message);
        }
        self
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<slipfric::Error> for Failure {
    fn from(e: slipfric::Error) -> Self {
        use slipfric::Error::*;
        let code = match &e {
            Parse { .. } | Value { .. } | Header(_) | Ordering { .. } | Io { .. } | Alignment(_) | MissingLabels(_) => {
                EXIT_DATA
            }
            InputDomain(_) | UndefinedSlip(_) | Calibration(_) | Fold(_) | Config(_) | MissingGroundTruth(_) => {
                EXIT_DOMAIN
            }
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;
