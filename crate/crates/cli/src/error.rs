use arnold_lab::LabError;
use thiserror::Error;

/// Process exit statuses.
pub const EXIT_PASS: i32 = 0;
pub const EXIT_CERTIFICATE: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Lab(#[from] LabError),
    #[error("writing {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } | CliError::Csv { .. } | CliError::Json(_) => EXIT_CONFIG,
            CliError::Lab(e) => lab_exit_code(e),
        }
    }
}

/// Failures of the mathematics map to 2, failures of the numerics to 3, bad input to 4.
pub fn lab_exit_code(e: &LabError) -> i32 {
    use LabError::*;
    match e {
        Certificate { .. } | Modification(_) | Degeneracy(_) | Barrier(_) | Geometry(_) | MatrixDomain(_) => EXIT_CERTIFICATE,
        NonConvergence(_) | Convexity { .. } | Kernel { .. } | Step(_) | BlockTooTight { .. } | DomainEscape(_) => EXIT_NONCONVERGENCE,
        UnsupportedOrder(_) | Domain { .. } | Dimension(_) | Precondition(_) | Model(_) | Config(_) | Io(_) | Json(_) => EXIT_CONFIG,
    }
}
