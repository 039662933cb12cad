use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("invalid time grid: {0}")]
    TimeGrid(String),

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    Shape { expected: (usize, usize), got: (usize, usize) },

    #[error("invalid image: {0}")]
    Image(String),

    #[error("invalid mask: {0}")]
    Mask(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("diffusion step t = {0} has no noise (t must be >= 1)")]
    ZeroStep(usize),

    #[error("invalid prior: {0}")]
    Prior(String),

    #[error("invalid sampler configuration: {0}")]
    Config(String),

    #[error("plan file line {line}: {msg}")]
    Plan { line: usize, msg: String },

    #[error("malformed file {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Png(#[from] png::EncodingError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_shape(expected: (usize, usize), got: (usize, usize)) -> Result<()> {
    if expected != got {
        return Err(Error::Shape { expected, got });
    }
    Ok(())
}
