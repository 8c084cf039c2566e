use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: {axis} mismatch (expected {expected}, got {actual})")]
    Shape {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error(
        "{op}: {axis} output size is not integral \
         (size {size}, kernel {kernel}, stride {stride}, padding {padding})"
    )]
    NonIntegralOutput {
        op: &'static str,
        axis: &'static str,
        size: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },

    #[error("offset ({i}, {j}) lies outside a filter of radius {radius}")]
    OffsetOutOfRange { i: i64, j: i64, radius: usize },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("stale layer state: {0}")]
    StaleState(String),

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{path}: expected {expected}, found {actual} bytes")]
    DataSize {
        path: PathBuf,
        expected: String,
        actual: u64,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("training diverged at epoch {epoch}, step {step} (loss is not finite)")]
    Divergence { epoch: usize, step: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub(crate) fn ensure_dim(
    op: &'static str,
    axis: &'static str,
    expected: usize,
    actual: usize,
) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Shape {
            op,
            axis,
            expected,
            actual,
        })
    }
}
