use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] foldtrace::Error),
    /// A post-run check declared in the config did not hold.
    #[error("check failed: {0}")]
    Check(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for validation problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if !e.is_validation() => 3,
            _ => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CliError::Config(_) => "Config",
            CliError::Core(e) => e.name(),
            CliError::Check(_) => "Check",
            CliError::Io(_) => "Io",
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
