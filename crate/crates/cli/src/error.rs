use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error(transparent)]
    Core(#[from] spos_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("{} run(s) diverged; partial traces were marked:\n  {}", .0.len(), .0.join("\n  "))]
    Diverged(Vec<String>),

    #[error("{0} check(s) failed")]
    ChecksFailed(usize),

    #[error("{0}")]
    Refused(String),

    #[error("{0}")]
    Plot(String),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Diverged(_) => 3,
            CliError::ChecksFailed(_) => 4,
            CliError::Refused(_) => 5,
            _ => 1,
        }
    }
}
