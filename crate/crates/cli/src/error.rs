use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config or parameters. Exit code 2.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Model(#[from] subqkd_core::Error),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
    #[error("output: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        2
    }
}
