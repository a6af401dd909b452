//! Volatility forecasting with a from-scratch multiscale-mixing network.
//!
//! The crate is layered bottom-up:
//!
//! * [`autodiff`]: dense `f64` tensors and a define-by-run tape.
//! * [`market_data`]: OHLCV ingestion, the annualized rolling-volatility
//!   target and chronologically split windowed datasets.
//! * [`multiscale`]: downsampled views and the seasonal/trend split.
//! * [`model`]: the forecaster itself plus its checkpoint format.
//! * [`training`]: Adam with validation-based early stopping.
//! * [`evaluation`]: MAE/MSE/RMSE, baselines and report rendering.

pub mod autodiff;
pub mod evaluation;
pub mod market_data;
pub mod model;
pub mod multiscale;
pub mod training;

pub use autodiff::{Tape, Tensor, Var};
pub use market_data::{OhlcvSeries, VolatilitySeries, WindowedDataset};
pub use model::{ModelConfig, TimeMixerModel};
pub use training::{TrainConfig, TrainReport};
