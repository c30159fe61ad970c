use thiserror::Error;

/// Errors raised by the key-rate, noise-model and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension must be at least 1")]
    ZeroDimension,

    #[error("subspace size {k} does not divide dimension {d}")]
    IndivisibleLayout { d: usize, k: usize },

    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("block index {m} out of range for {blocks} blocks")]
    BlockOutOfRange { m: usize, blocks: usize },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("detected-pair rate is zero, visibility is undefined")]
    DegenerateSignal,

    #[error("block coverage: {0}")]
    BlockCoverage(String),

    #[error("no block has enough data for an estimate")]
    NoDefinedBlocks,

    #[error("empirical estimate has no trials")]
    EmptyEstimate,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("primal search found no feasible point for W = {0}")]
    Infeasible(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            range: "[0, 1]",
        })
    }
}

pub(crate) fn check_non_negative(name: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            range: "[0, inf)",
        })
    }
}

pub(crate) fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value,
            range: "(0, inf)",
        })
    }
}
