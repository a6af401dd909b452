use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{DataError, OhlcvSeries};

pub const DEFAULT_WINDOW: usize = 21;
pub const TRADING_DAYS: f64 = 252.0;

/// `r_t = ln(P_t / P_{t-1})`.
pub fn compute_log_returns(closes: &[f64]) -> Result<Vec<f64>, DataError> {
    if closes.len() < 2 {
        return Err(DataError::Length(format!(
            "need at least two prices for a return, got {}",
            closes.len()
        )));
    }
    if let Some((i, p)) = closes.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p > 0.0)) {
        return Err(DataError::Domain(format!("price {p} at index {i} is not positive")));
    }
    Ok(closes.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}

/// Annualized rolling volatility: `sqrt(annualization)` times the sample
/// standard deviation of each trailing `window` of returns.
pub fn rolling_volatility(returns: &[f64], window: usize, annualization: f64) -> Result<Vec<f64>, DataError> {
    if window < 2 {
        return Err(DataError::Config(format!("volatility window must be >= 2, got {window}")));
    }
    if returns.len() < window {
        return Err(DataError::Length(format!(
            "{} returns is shorter than the {window}-day window",
            returns.len()
        )));
    }
    let scale = annualization.sqrt();
    Ok(returns.windows(window).map(|w| scale * sample_std(w)).collect())
}

// Shifted two-pass: identical values give exactly zero.
fn sample_std(w: &[f64]) -> f64 {
    let n = w.len() as f64;
    let shift = w[0];
    let mean = w.iter().map(|x| x - shift).sum::<f64>() / n;
    let ss: f64 = w.iter().map(|x| (x - shift - mean).powi(2)).sum();
    (ss / (n - 1.0)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolPoint {
    pub date: NaiveDate,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolatilitySeries {
    pub ticker: String,
    pub points: Vec<VolPoint>,
}

impl VolatilitySeries {
    /// Each point is dated by the close that ends its window.
    pub fn from_ohlcv(series: &OhlcvSeries, window: usize, annualization: f64) -> Result<Self, DataError> {
        let returns = compute_log_returns(&series.closes())?;
        let sigmas = rolling_volatility(&returns, window, annualization)?;
        // return j ends at row j + 1; the first full window ends at return window - 1
        let points = sigmas
            .into_iter()
            .enumerate()
            .map(|(k, sigma)| VolPoint { date: series.rows()[k + window].date, sigma })
            .collect();
        Ok(Self { ticker: series.ticker().to_string(), points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.sigma).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("Date,Sigma\n");
        for p in &self.points {
            out.push_str(&format!("{},{}\n", p.date.format("%Y-%m-%d"), p.sigma));
        }
        out
    }
}

/// Which input channels the model sees. Channel 0 is always the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelSet {
    /// Volatility only (C = 1).
    #[default]
    Volatility,
    /// Volatility, the same-day log return and `ln(1 + volume)` (C = 3).
    WithCovariates,
}

impl ChannelSet {
    pub fn count(self) -> usize {
        match self {
            ChannelSet::Volatility => 1,
            ChannelSet::WithCovariates => 3,
        }
    }

    /// The configuration spelling.
    pub fn as_str(self) -> &'static str {
        match self {
            ChannelSet::Volatility => "volatility",
            ChannelSet::WithCovariates => "with_covariates",
        }
    }
}

/// Date-aligned feature matrix, row-major `len x channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<f64>,
    pub channels: usize,
}

impl FeatureFrame {
    pub fn volatility_only(vol: &VolatilitySeries) -> Self {
        Self {
            dates: vol.points.iter().map(|p| p.date).collect(),
            values: vol.sigmas(),
            channels: 1,
        }
    }

    /// Builds the frame for `channels` from bars and the volatility derived
    /// from them with `window`.
    pub fn build(series: &OhlcvSeries, vol: &VolatilitySeries, window: usize, channels: ChannelSet) -> Result<Self, DataError> {
        match channels {
            ChannelSet::Volatility => Ok(Self::volatility_only(vol)),
            ChannelSet::WithCovariates => {
                let returns = compute_log_returns(&series.closes())?;
                let rows = series.rows();
                if vol.len() + window != rows.len() {
                    return Err(DataError::Length("volatility series does not match bars".into()));
                }
                let mut values = Vec::with_capacity(vol.len() * 3);
                for (k, p) in vol.points.iter().enumerate() {
                    let row = k + window;
                    values.push(p.sigma);
                    values.push(returns[row - 1]);
                    values.push((1.0 + rows[row].volume as f64).ln());
                }
                Ok(Self { dates: vol.points.iter().map(|p| p.date).collect(), values, channels: 3 })
            }
        }
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }
}
