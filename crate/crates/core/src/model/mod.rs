//! The multiscale-mixing forecaster.

pub mod checkpoint;
mod config;
mod norm;
mod params;
mod timemixer;

pub use config::ModelConfig;
pub use norm::{instance_normalize, NormStats, STD_FLOOR};
pub use params::{FeedForward, LinearLayer, ParamId, ParamStore};
pub use timemixer::{fmm_forward, pdm_forward, FmmHead, PdmBlock, TimeMixerModel};

use thiserror::Error;

use crate::autodiff::AutodiffError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("non-finite value at stage {stage} ({op})")]
    NonFinite { stage: String, op: &'static str },
    #[error(transparent)]
    Engine(#[from] AutodiffError),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
