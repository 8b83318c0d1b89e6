use thiserror::Error;

/// Command-level failure; each variant maps onto a stable exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema: {0}")]
    Schema(String),
    #[error("{0}")]
    Precondition(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 2,
            CliError::Schema(_) => 3,
            CliError::Precondition(_) => 4,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io { path: path.as_ref().display().to_string(), source }
    }
}

impl From<polymatch_core::Error> for CliError {
    fn from(e: polymatch_core::Error) -> Self {
        use polymatch_core::Error as E;
        match e {
            E::InsufficientData { needed, got } => {
                CliError::Precondition(format!("insufficient correspondences: need {needed}, got {got}"))
            }
            E::EstimationFailed(_) | E::EmptyInput | E::Placement { .. } | E::TemplateTooLarge => {
                CliError::Precondition(e.to_string())
            }
            _ => CliError::Schema(e.to_string()),
        }
    }
}
