use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] lienet_core::Error),

    #[error("{0}")]
    Usage(String),

    /// Numeric result produced but outside its acceptance threshold.
    #[error("{0}")]
    NotConverged(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    /// 1 for usage and input problems, 2 for numeric failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numeric() => 2,
            CliError::NotConverged(_) => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Usage(_) => "usage",
            CliError::NotConverged(_) => "not-converged",
        }
    }

    /// Single-line `key=value` reason for standard error.
    pub fn reason_line(&self) -> String {
        format!(
            "error kind={} exit={} message={:?}",
            self.kind(),
            self.exit_code(),
            self.to_string()
        )
    }
}
