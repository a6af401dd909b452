//! Parameter optimization with validation-based early stopping.

mod adam;
mod trainer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use trainer::{evaluate_loss, mse_loss, train, train_step, EpochLog, StoppingReason, TrainConfig, TrainReport};

use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("training diverged in epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Engine(#[from] AutodiffError),
}
