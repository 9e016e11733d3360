use std::fmt;

/// CLI failure with its process exit code: 2 validation, 3 format, 4
/// numerical.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Format(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Format(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Format(m) => write!(f, "format error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<vcw_core::Error> for CliError {
    fn from(e: vcw_core::Error) -> Self {
        match e {
            vcw_core::Error::Training { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Format(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
