/// Failure classes of a run, each with its own process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// The model, configuration or arguments are malformed (exit 1).
    #[error("{0}")]
    Input(String),
    /// The numerics failed on a well-formed input (exit 2).
    #[error("{0}")]
    Numerical(String),
    /// A check ran but its tolerance was exceeded under `--strict` (exit 3).
    #[error("{0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Verification(_) => 3,
        }
    }

    /// Label written to the report's `status` field.
    pub fn status(&self) -> &'static str {
        match self {
            CliError::Input(_) => "invalid_input",
            CliError::Numerical(_) => "numerical_failure",
            CliError::Verification(_) => "verification_failed",
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }
}

impl From<cqf_core::Error> for CliError {
    fn from(e: cqf_core::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
