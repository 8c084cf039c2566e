//! Initialization, optimizers, configuration, checkpoints and the training
//! loop.

mod checkpoint;
mod config;
mod init;
mod optim;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointTensor, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{parse_config, DatasetKind, Precision, TrainConfig};
pub use init::{glorot_bound, glorot_uniform};
pub use optim::{adam_step, sgd_step, OptimConfig, OptimState};
pub use train::{evaluate_accuracy, lr_at, train, EpochMetrics, MetricsHeader};
