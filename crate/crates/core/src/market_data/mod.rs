//! OHLCV ingestion, the annualized rolling-volatility target and
//! chronologically split windowed datasets.

mod fetch;
mod ohlcv;
mod roster;
mod volatility;
mod windows;

pub use fetch::{
    fetch_ohlcv, parse_chart_json, ChartSource, CsvCache, FetchOutcome, FixtureChartSource, HttpChartSource,
    DEFAULT_ENDPOINT,
};
pub use ohlcv::{parse_ohlcv_csv, OhlcvRow, OhlcvSeries, CSV_HEADER};
pub use roster::{AssetClass, AssetRoster, RosterEntry, ROSTER_HEADER};
pub use volatility::{
    compute_log_returns, rolling_volatility, ChannelSet, FeatureFrame, VolPoint, VolatilitySeries, DEFAULT_WINDOW,
    TRADING_DAYS,
};
pub use windows::{make_windows, split_chronological, split_counts, Split, WindowedDataset, DEFAULT_TEST_FRACTION, VAL_TO_TRAIN};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error("validation error{}: {message}", line.map(|l| format!(" on line {l}")).unwrap_or_default())]
    Validation { line: Option<usize>, message: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("length error: {0}")]
    Length(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("fetch error: {message}")]
    Fetch { retryable: bool, message: String },
    #[error("empty data: {0}")]
    Empty(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
