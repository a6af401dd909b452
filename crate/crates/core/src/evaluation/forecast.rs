use std::collections::BTreeMap;

use chrono::NaiveDate;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::market_data::WindowedDataset;
use crate::model::TimeMixerModel;

use super::metrics::{mae, mse};
use super::EvalError;

/// Trailing window for the mean baseline, one volatility window.
pub const TRAILING_MEAN_WINDOW: usize = 21;

/// Anything that maps a `P x C` lookback window to `F` target values.
pub trait Forecaster {
    fn name(&self) -> &str;

    fn horizon(&self) -> usize;

    fn forecast_batch(&self, windows: &[&[f64]], channels: usize) -> Result<Vec<Vec<f64>>, EvalError>;
}

impl Forecaster for TimeMixerModel {
    fn name(&self) -> &str {
        "timemixer"
    }

    fn horizon(&self) -> usize {
        self.config().horizon
    }

    fn forecast_batch(&self, windows: &[&[f64]], channels: usize) -> Result<Vec<Vec<f64>>, EvalError> {
        if channels != self.config().channels {
            return Err(EvalError::Shape(format!(
                "model expects {} channels, data has {channels}",
                self.config().channels
            )));
        }
        Ok(self.predict_batch(windows)?)
    }
}

/// Repeats the final lookback value `horizon` times.
pub fn baseline_persistence(lookback: &[f64], horizon: usize) -> Vec<f64> {
    let last = *lookback.last().expect("nonempty lookback");
    vec![last; horizon]
}

/// Repeats the mean of the final `window` lookback values.
pub fn baseline_trailing_mean(lookback: &[f64], window: usize, horizon: usize) -> Vec<f64> {
    let tail = &lookback[lookback.len().saturating_sub(window)..];
    vec![tail.iter().sum::<f64>() / tail.len() as f64; horizon]
}

fn target_channel(window: &[f64], channels: usize) -> Vec<f64> {
    window.iter().step_by(channels).copied().collect()
}

#[derive(Debug, Clone, Copy)]
pub struct Persistence {
    pub horizon: usize,
}

impl Forecaster for Persistence {
    fn name(&self) -> &str {
        "persistence"
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn forecast_batch(&self, windows: &[&[f64]], channels: usize) -> Result<Vec<Vec<f64>>, EvalError> {
        windows
            .iter()
            .map(|w| {
                if w.is_empty() {
                    return Err(EvalError::Shape("empty lookback".into()));
                }
                Ok(baseline_persistence(&target_channel(w, channels), self.horizon))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrailingMean {
    pub horizon: usize,
    pub window: usize,
}

impl Forecaster for TrailingMean {
    fn name(&self) -> &str {
        "mean21"
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn forecast_batch(&self, windows: &[&[f64]], channels: usize) -> Result<Vec<Vec<f64>>, EvalError> {
        windows
            .iter()
            .map(|w| {
                if w.is_empty() {
                    return Err(EvalError::Shape("empty lookback".into()));
                }
                Ok(baseline_trailing_mean(&target_channel(w, channels), self.window, self.horizon))
            })
            .collect()
    }
}

/// Scores for one (ticker, horizon) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub ticker: String,
    pub horizon: usize,
    pub mae: f64,
    pub mse: f64,
    pub rmse: f64,
    pub n_samples: usize,
    pub model_config_hash: String,
    pub data_range: String,
}

/// Test-split forecasts and the matching targets, both `N x F`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSet {
    pub predictions: Array2<f64>,
    pub targets: Array2<f64>,
    /// Date of the first target of each sample.
    pub first_target_dates: Vec<NaiveDate>,
}

/// Forecasts every test sample of `dataset` on its natural scale.
pub fn forecast_test_split(forecaster: &dyn Forecaster, dataset: &WindowedDataset) -> Result<ForecastSet, EvalError> {
    const CHUNK: usize = 256;
    let split = dataset.split().ok_or_else(|| EvalError::Shape("dataset has not been split".into()))?;
    if forecaster.horizon() != dataset.horizon() {
        return Err(EvalError::Shape(format!(
            "forecaster horizon {} vs dataset horizon {}",
            forecaster.horizon(),
            dataset.horizon()
        )));
    }
    let f = dataset.horizon();
    let idx: Vec<usize> = split.test.clone().collect();
    let mut predictions = Array2::zeros((idx.len(), f));
    let mut targets = Array2::zeros((idx.len(), f));
    let mut row = 0;
    for chunk in idx.chunks(CHUNK) {
        let windows: Vec<&[f64]> = chunk.iter().map(|&i| dataset.x(i)).collect();
        let out = forecaster.forecast_batch(&windows, dataset.channels())?;
        for (&i, fc) in chunk.iter().zip(out) {
            if fc.len() != f {
                return Err(EvalError::Shape(format!("forecast of length {} for horizon {f}", fc.len())));
            }
            predictions.row_mut(row).iter_mut().zip(&fc).for_each(|(d, v)| *d = *v);
            targets.row_mut(row).iter_mut().zip(dataset.y(i)).for_each(|(d, v)| *d = *v);
            row += 1;
        }
    }
    let first_target_dates = idx.iter().map(|&i| dataset.dates()[dataset.y_rows(i).start]).collect();
    Ok(ForecastSet { predictions, targets, first_target_dates })
}

pub fn score(ticker: &str, horizon: usize, set: &ForecastSet, model_config_hash: &str, data_range: String) -> Result<MetricsRecord, EvalError> {
    let mse = mse(set.predictions.view(), set.targets.view())?;
    Ok(MetricsRecord {
        ticker: ticker.to_string(),
        horizon,
        mae: mae(set.predictions.view(), set.targets.view())?,
        mse,
        rmse: mse.sqrt(),
        n_samples: set.predictions.nrows(),
        model_config_hash: model_config_hash.to_string(),
        data_range,
    })
}

pub fn evaluate_forecaster(
    forecaster: &dyn Forecaster,
    dataset: &WindowedDataset,
    ticker: &str,
    model_config_hash: &str,
) -> Result<(MetricsRecord, ForecastSet), EvalError> {
    let set = forecast_test_split(forecaster, dataset)?;
    let range = dataset
        .split()
        .and_then(|s| dataset.target_date_span(&s.test))
        .map(|(a, b)| format!("{a}..{b}"))
        .unwrap_or_default();
    let record = score(ticker, dataset.horizon(), &set, model_config_hash, range)?;
    Ok((record, set))
}

/// One record per dataset horizon, in the order the datasets are given.
pub fn evaluate_asset(
    models: &BTreeMap<usize, &dyn Forecaster>,
    datasets: &[&WindowedDataset],
    ticker: &str,
    model_config_hash: &str,
) -> Result<Vec<MetricsRecord>, EvalError> {
    datasets
        .iter()
        .map(|d| {
            let horizon = d.horizon();
            let model = models
                .get(&horizon)
                .ok_or_else(|| EvalError::MissingCheckpoint { ticker: ticker.to_string(), horizon })?;
            evaluate_forecaster(*model, d, ticker, model_config_hash).map(|(r, _)| r)
        })
        .collect()
}
