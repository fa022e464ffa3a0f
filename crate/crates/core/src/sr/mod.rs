//! Super-resolution of system-matrix rows and non-learned baselines.

pub mod conv;
pub mod encoding;
pub mod model;
pub mod resample;
pub mod tensor;
pub mod train;

pub use encoding::{pos_embedding, PositionEncoding};
pub use model::{batch_loss, loss_and_gradients, row_scale, ModelConfig, SRModel, Sample};
pub use resample::{baseline_interpolate, upsampled_grid, Interpolation, Resampler};
pub use tensor::Tensor;
pub use train::{recover, train, Adam, EpochRecord, History, TrainConfig};
