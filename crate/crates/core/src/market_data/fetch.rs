//! Daily bars from a chart-style JSON API, live or from recorded responses.

use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use chrono::{DateTime, NaiveDate, NaiveTime};
use serde::Deserialize;

use super::{DataError, OhlcvRow, OhlcvSeries, RosterEntry};

pub const DEFAULT_ENDPOINT: &str = "https://query1.finance.yahoo.com/v8/finance/chart";

/// Anything that can return the raw chart payload for a symbol.
pub trait ChartSource {
    fn fetch_chart(&self, entry: &RosterEntry) -> Result<String, DataError>;
}

/// HTTPS source with bounded exponential backoff. Requests are issued
/// one at a time.
#[derive(Debug, Clone)]
pub struct HttpChartSource {
    endpoint: String,
    max_attempts: u32,
    backoff: Duration,
    timeout: Duration,
}

impl HttpChartSource {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            max_attempts: 3,
            backoff: Duration::from_millis(500),
            timeout: Duration::from_secs(30),
        }
    }

    pub fn with_retries(mut self, max_attempts: u32, backoff: Duration) -> Self {
        self.max_attempts = max_attempts.max(1);
        self.backoff = backoff;
        self
    }

    pub fn url(&self, entry: &RosterEntry) -> String {
        let ts = |d: NaiveDate| d.and_time(NaiveTime::MIN).and_utc().timestamp();
        format!(
            "{}/{}?period1={}&period2={}&interval=1d",
            self.endpoint.trim_end_matches('/'),
            entry.chart_symbol(),
            ts(entry.start),
            ts(entry.end) + 86_400
        )
    }

    fn attempt(&self, agent: &ureq::Agent, url: &str) -> Result<String, DataError> {
        match agent.get(url).call() {
            Ok(mut resp) => resp
                .body_mut()
                .read_to_string()
                .map_err(|e| DataError::Fetch { retryable: true, message: e.to_string() }),
            Err(ureq::Error::StatusCode(code)) => Err(DataError::Fetch {
                retryable: code == 429 || code >= 500,
                message: format!("HTTP {code} from {url}"),
            }),
            Err(e) => Err(DataError::Fetch { retryable: true, message: e.to_string() }),
        }
    }
}

impl ChartSource for HttpChartSource {
    fn fetch_chart(&self, entry: &RosterEntry) -> Result<String, DataError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let url = self.url(entry);
        let mut delay = self.backoff;
        let mut last = None;
        for attempt in 0..self.max_attempts {
            match self.attempt(&agent, &url) {
                Ok(body) => return Ok(body),
                Err(e @ DataError::Fetch { retryable: true, .. }) => {
                    last = Some(e);
                    if attempt + 1 < self.max_attempts {
                        thread::sleep(delay);
                        delay *= 2;
                    }
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

/// Recorded responses stored as `<dir>/<TICKER>.json`.
#[derive(Debug, Clone)]
pub struct FixtureChartSource {
    dir: PathBuf,
}

impl FixtureChartSource {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, ticker: &str) -> PathBuf {
        self.dir.join(format!("{ticker}.json"))
    }
}

impl ChartSource for FixtureChartSource {
    fn fetch_chart(&self, entry: &RosterEntry) -> Result<String, DataError> {
        let path = self.path_for(&entry.ticker);
        std::fs::read_to_string(&path).map_err(|e| DataError::Fetch {
            retryable: false,
            message: format!("no fixture for {} at {}: {e}", entry.ticker, path.display()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchOutcome {
    pub series: OhlcvSeries,
    /// Rows discarded for missing or invalid fields.
    pub dropped: usize,
}

#[derive(Deserialize)]
struct Envelope {
    chart: Chart,
}

#[derive(Deserialize)]
struct Chart {
    result: Option<Vec<ChartResult>>,
    error: Option<serde_json::Value>,
}

#[derive(Deserialize)]
struct ChartResult {
    meta: Option<Meta>,
    timestamp: Option<Vec<i64>>,
    indicators: Indicators,
}

#[derive(Deserialize)]
struct Meta {
    gmtoffset: Option<i64>,
}

#[derive(Deserialize)]
struct Indicators {
    quote: Vec<Quote>,
}

#[derive(Deserialize, Default)]
struct Quote {
    open: Option<Vec<Option<f64>>>,
    high: Option<Vec<Option<f64>>>,
    low: Option<Vec<Option<f64>>>,
    close: Option<Vec<Option<f64>>>,
    volume: Option<Vec<Option<f64>>>,
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let before: usize = text.split_inclusive('\n').take(line.saturating_sub(1)).map(str::len).sum();
    before + column.saturating_sub(1)
}

fn field(col: &Option<Vec<Option<f64>>>, i: usize) -> Option<f64> {
    col.as_ref().and_then(|c| c.get(i).copied().flatten())
}

/// Parses a chart payload into bars, dropping (and counting) rows that
/// miss any field or carry a nonpositive price.
pub fn parse_chart_json(ticker: &str, text: &str) -> Result<FetchOutcome, DataError> {
    let env: Envelope = serde_json::from_str(text).map_err(|e| DataError::Format {
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    if let Some(err) = env.chart.error.filter(|e| !e.is_null()) {
        return Err(DataError::Empty(format!("{ticker}: chart error {err}")));
    }
    let result = env
        .chart
        .result
        .and_then(|mut r| (!r.is_empty()).then(|| r.swap_remove(0)))
        .ok_or_else(|| DataError::Empty(format!("{ticker}: no chart result")))?;
    let timestamps = result.timestamp.unwrap_or_default();
    let quote = result.indicators.quote.into_iter().next().unwrap_or_default();
    let offset = result.meta.and_then(|m| m.gmtoffset).unwrap_or(0);

    let mut rows: Vec<OhlcvRow> = Vec::with_capacity(timestamps.len());
    let mut dropped = 0;
    for (i, &ts) in timestamps.iter().enumerate() {
        let parsed = (|| {
            let date = DateTime::from_timestamp(ts + offset, 0)?.date_naive();
            let row = OhlcvRow {
                date,
                open: field(&quote.open, i)?,
                high: field(&quote.high, i)?,
                low: field(&quote.low, i)?,
                close: field(&quote.close, i)?,
                volume: {
                    let v = field(&quote.volume, i)?;
                    (v.is_finite() && v >= 0.0).then_some(v.round() as u64)?
                },
            };
            [row.open, row.high, row.low, row.close]
                .iter()
                .all(|p| p.is_finite() && *p > 0.0)
                .then_some(row)
        })();
        match parsed {
            Some(r) => rows.push(r),
            None => dropped += 1,
        }
    }
    // keep the last bar for any repeated date
    rows.sort_by_key(|r| r.date);
    let before = rows.len();
    rows.reverse();
    rows.dedup_by_key(|r| r.date);
    rows.reverse();
    dropped += before - rows.len();

    if rows.is_empty() {
        return Err(DataError::Empty(format!("{ticker}: no usable rows")));
    }
    Ok(FetchOutcome { series: OhlcvSeries::new(ticker, rows)?, dropped })
}

/// Fetches and parses bars for `entry`, restricted to its date range.
pub fn fetch_ohlcv(source: &dyn ChartSource, entry: &RosterEntry) -> Result<FetchOutcome, DataError> {
    let text = source.fetch_chart(entry)?;
    let mut outcome = parse_chart_json(&entry.ticker, &text)?;
    outcome.series = outcome.series.restrict(entry.start, entry.end);
    if outcome.series.is_empty() {
        return Err(DataError::Empty(format!(
            "{}: no rows between {} and {}",
            entry.ticker, entry.start, entry.end
        )));
    }
    Ok(outcome)
}

/// Raw CSV cache keyed by ticker and date range.
#[derive(Debug, Clone)]
pub struct CsvCache {
    dir: PathBuf,
}

impl CsvCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, entry: &RosterEntry) -> PathBuf {
        self.dir.join(format!("{}_{}_{}.csv", entry.ticker, entry.start, entry.end))
    }

    /// Cached bars for `entry`, also accepting a plain `<TICKER>.csv`.
    pub fn load(&self, entry: &RosterEntry) -> Result<Option<OhlcvSeries>, DataError> {
        for path in [self.path_for(entry), self.dir.join(format!("{}.csv", entry.ticker))] {
            if path.is_file() {
                let text = std::fs::read_to_string(&path)?;
                return super::parse_ohlcv_csv(&entry.ticker, &text).map(Some);
            }
        }
        Ok(None)
    }

    pub fn store(&self, entry: &RosterEntry, series: &OhlcvSeries) -> Result<PathBuf, DataError> {
        std::fs::create_dir_all(&self.dir)?;
        let path = self.path_for(entry);
        std::fs::write(&path, series.to_csv())?;
        Ok(path)
    }
}
