use qkit::QkitError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Input { path: String, source: QkitError },

    #[error(transparent)]
    Core(#[from] QkitError),

    #[error("writing {path}: {source}")]
    Output { path: String, source: std::io::Error },
}

impl CliError {
    /// 2 usage, 3 data format, 4 numeric contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Input { source, .. } => core_code(source).max(3),
            Self::Core(e) => core_code(e),
            Self::Output { .. } => 3,
        }
    }
}

fn core_code(e: &QkitError) -> i32 {
    match e {
        QkitError::InvalidParam(_) | QkitError::Empty(_) => 2,
        QkitError::Format(_) | QkitError::Shape(_) | QkitError::Io(_) | QkitError::Json(_) => 3,
        QkitError::NonFinite { .. } | QkitError::Overflow { .. } | QkitError::Calibration(_) => 4,
    }
}

pub type CliResult<T> = Result<T, CliError>;
