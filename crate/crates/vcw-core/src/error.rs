use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("training diverged at step {step}: {reason}")]
    Training { step: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
