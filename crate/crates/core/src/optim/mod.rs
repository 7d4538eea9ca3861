//! Batch-averaged path-wise gradients and first-order parameter updates.

mod batch;
mod train;
mod update;

pub use batch::{batch_gradient, batch_gradient_paths, batch_seeds, BatchGradient};
pub use train::{train, train_with, TrainConfig, TrainLog, TrainRecord};
pub use update::{OptimizerKind, OptimizerState};
