//! Test-split scoring, baselines and reporting.

mod forecast;
pub mod metrics;
pub mod plot;
pub mod report;

pub use forecast::{
    baseline_persistence, baseline_trailing_mean, evaluate_asset, evaluate_forecaster, forecast_test_split, score,
    ForecastSet, Forecaster, MetricsRecord, Persistence, TrailingMean, TRAILING_MEAN_WINDOW,
};
pub use metrics::{mae, mse, rmse};
pub use report::{markdown_report, markdown_table, metrics_to_csv, parse_metrics_csv, METRICS_HEADER};

use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no checkpoint for {ticker} at horizon {horizon}")]
    MissingCheckpoint { ticker: String, horizon: usize },
    #[error("metrics parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
