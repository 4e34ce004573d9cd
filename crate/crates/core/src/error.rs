use std::path::PathBuf;

/// Errors produced by the model library.
///
/// Variants are grouped by the caller-facing category they belong to; the CLI
/// maps each category onto an exit code via [`Error::category`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}", format_data(file, *line, message))]
    Data {
        file: Option<PathBuf>,
        line: Option<u64>,
        message: String,
    },

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

fn format_data(file: &Option<PathBuf>, line: Option<u64>, message: &str) -> String {
    match (file, line) {
        (Some(f), Some(l)) => format!("data error in {}:{}: {}", f.display(), l, message),
        (Some(f), None) => format!("data error in {}: {}", f.display(), message),
        _ => format!("data error: {message}"),
    }
}

/// Coarse error category, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Usage,
    Data,
    Estimation,
    Internal,
}

impl Error {
    pub fn data(message: impl Into<String>) -> Self {
        Error::Data {
            file: None,
            line: None,
            message: message.into(),
        }
    }

    pub fn data_at(file: impl Into<PathBuf>, line: Option<u64>, message: impl Into<String>) -> Self {
        Error::Data {
            file: Some(file.into()),
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Parameter(_) | Error::Config(_) => ErrorCategory::Usage,
            Error::Data { .. } | Error::Io { .. } | Error::Json(_) => ErrorCategory::Data,
            Error::Estimation(_) | Error::Scenario(_) | Error::InsufficientData(_) => {
                ErrorCategory::Estimation
            }
            Error::Domain(_) => ErrorCategory::Internal,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
