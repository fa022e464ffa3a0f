use thiserror::Error;

use crate::model::Channel;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index:?} out of range for grid {dims:?}")]
    Index { index: [usize; 3], dims: [usize; 3] },

    #[error("no row for channel {channel} at frequency index {freq_index}")]
    NotFound { channel: Channel, freq_index: u32 },

    #[error("duplicate row for channel {channel} at frequency index {freq_index}")]
    DuplicateRow { channel: Channel, freq_index: u32 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("frequency index {k} exceeds the Nyquist limit {nyquist}")]
    Alias { k: u32, nyquist: u32 },

    #[error("known-voxel mask does not cover a fundamental domain ({missing} voxels unreachable)")]
    IncompleteDomain { missing: usize },

    #[error("truth has a constant modulus; NRMSE range is zero")]
    DegenerateRange,

    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
