use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or settings. Exit code 2.
    Usage(String),
    /// A check ran and failed. Exit code 1.
    Check(String),
    Core(wavediff_core::Error),
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Check(m) => write!(f, "check failed: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Other(m) => write!(f, "{m}"),
        }
    }
}

impl From<wavediff_core::Error> for CliError {
    fn from(e: wavediff_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(format!("invalid configuration: {e}"))
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;
