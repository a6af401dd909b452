//! Per-ticker and per-(ticker, horizon) steps shared by the subcommands.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use volmix_core::evaluation::plot::{render_svg, Series};
use volmix_core::evaluation::{evaluate_forecaster, ForecastSet, MetricsRecord, Persistence, TrailingMean, TRAILING_MEAN_WINDOW};
use volmix_core::market_data::{
    fetch_ohlcv, make_windows, split_chronological, ChartSource, CsvCache, FeatureFrame, FixtureChartSource,
    HttpChartSource, RosterEntry,
};
use volmix_core::model::checkpoint;
use volmix_core::training::train;
use volmix_core::{OhlcvSeries, TimeMixerModel, TrainReport, VolatilitySeries, WindowedDataset};

use crate::config::RunConfig;

/// `<out>/<TICKER>_F<F>.<ext>`.
pub fn artifact(out: &Path, ticker: &str, horizon: usize, ext: &str) -> PathBuf {
    out.join(format!("{ticker}_F{horizon}.{ext}"))
}

pub fn chart_source(cfg: &RunConfig) -> Box<dyn ChartSource + Send + Sync> {
    match &cfg.fixtures {
        Some(dir) => Box::new(FixtureChartSource::new(dir)),
        None => Box::new(HttpChartSource::new(cfg.endpoint.clone())),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FetchSummary {
    pub ticker: String,
    pub rows: usize,
    pub first: Option<NaiveDate>,
    pub last: Option<NaiveDate>,
    pub dropped: usize,
    pub path: PathBuf,
}

pub fn fetch_entry(cfg: &RunConfig, source: &dyn ChartSource, entry: &RosterEntry) -> Result<FetchSummary> {
    let outcome = fetch_ohlcv(source, entry)?;
    let path = CsvCache::new(&cfg.data_dir).store(entry, &outcome.series)?;
    Ok(FetchSummary {
        ticker: entry.ticker.clone(),
        rows: outcome.series.len(),
        first: outcome.series.first_date(),
        last: outcome.series.last_date(),
        dropped: outcome.dropped,
        path,
    })
}

pub fn load_bars(cfg: &RunConfig, entry: &RosterEntry) -> Result<OhlcvSeries> {
    CsvCache::new(&cfg.data_dir)
        .load(entry)
        .with_context(|| format!("reading cached bars for {}", entry.ticker))?
        .ok_or_else(|| anyhow!("no cached data for {} in {}; run `volmix fetch` first", entry.ticker, cfg.data_dir.display()))
}

pub fn volatility(cfg: &RunConfig, bars: &OhlcvSeries) -> Result<VolatilitySeries> {
    Ok(VolatilitySeries::from_ohlcv(bars, cfg.vol_window, cfg.annualization)?)
}

pub fn build_dataset(cfg: &RunConfig, bars: &OhlcvSeries, vol: &VolatilitySeries, horizon: usize) -> Result<WindowedDataset> {
    let frame = FeatureFrame::build(bars, vol, cfg.vol_window, cfg.channels)?;
    let windows = make_windows(&frame, cfg.lookback, horizon, cfg.stride)?;
    Ok(split_chronological(windows, cfg.test_fraction)?)
}

pub fn dataset_for(cfg: &RunConfig, entry: &RosterEntry, horizon: usize) -> Result<WindowedDataset> {
    let bars = load_bars(cfg, entry)?;
    let vol = volatility(cfg, &bars)?;
    build_dataset(cfg, &bars, &vol, horizon)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSummary {
    pub ticker: String,
    pub horizon: usize,
    pub lookback: usize,
    pub samples: usize,
    pub gap: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub train_span: Option<(NaiveDate, NaiveDate)>,
    pub val_span: Option<(NaiveDate, NaiveDate)>,
    pub test_span: Option<(NaiveDate, NaiveDate)>,
}

pub fn split_summary(ticker: &str, d: &WindowedDataset) -> SplitSummary {
    let s = d.split().expect("split datasets only");
    SplitSummary {
        ticker: ticker.to_string(),
        horizon: d.horizon(),
        lookback: d.lookback(),
        samples: d.len(),
        gap: s.gap,
        train: s.train.len(),
        val: s.val.len(),
        test: s.test.len(),
        train_span: d.target_date_span(&s.train),
        val_span: d.target_date_span(&s.val),
        test_span: d.target_date_span(&s.test),
    }
}

/// Writes the volatility series and one split summary per horizon.
pub fn prepare_entry(cfg: &RunConfig, entry: &RosterEntry) -> Result<Vec<SplitSummary>> {
    let bars = load_bars(cfg, entry)?;
    let vol = volatility(cfg, &bars)?;
    std::fs::write(cfg.out_dir.join(format!("{}.vol.csv", entry.ticker)), vol.to_csv())?;
    let mut out = Vec::new();
    for &h in &cfg.horizons {
        let d = build_dataset(cfg, &bars, &vol, h).with_context(|| format!("{} F={h}", entry.ticker))?;
        let summary = split_summary(&entry.ticker, &d);
        std::fs::write(artifact(&cfg.out_dir, &entry.ticker, h, "split.json"), serde_json::to_string_pretty(&summary)?)?;
        out.push(summary);
    }
    Ok(out)
}

/// Trains one (ticker, horizon) model and writes its checkpoint, report
/// and log.
pub fn train_pair(cfg: &RunConfig, entry: &RosterEntry, horizon: usize) -> Result<TrainReport> {
    let data = dataset_for(cfg, entry, horizon)?;
    let model = TimeMixerModel::init(cfg.model_config(horizon))?;
    let (model, report) = train(model, &data, &cfg.train_config())?;
    let out = &cfg.out_dir;
    checkpoint::save(&model, &artifact(out, &entry.ticker, horizon, "ckpt"))?;
    std::fs::write(artifact(out, &entry.ticker, horizon, "train.json"), serde_json::to_string_pretty(&report)?)?;
    std::fs::write(artifact(out, &entry.ticker, horizon, "train.log"), report.to_log())?;
    Ok(report)
}

/// Model, persistence and trailing-mean scores for one pair.
#[derive(Debug, Clone)]
pub struct PairMetrics {
    pub model: MetricsRecord,
    pub persistence: MetricsRecord,
    pub mean21: MetricsRecord,
}

pub fn load_checkpoint(cfg: &RunConfig, ticker: &str, horizon: usize) -> Result<TimeMixerModel> {
    let path = artifact(&cfg.out_dir, ticker, horizon, "ckpt");
    if !path.is_file() {
        bail!("missing checkpoint {}", path.display());
    }
    let model = checkpoint::load(&path).with_context(|| format!("loading {}", path.display()))?;
    if model.config() != &cfg.model_config(horizon) {
        bail!("checkpoint {} was trained with a different model configuration", path.display());
    }
    Ok(model)
}

pub fn eval_pair(cfg: &RunConfig, entry: &RosterEntry, horizon: usize) -> Result<PairMetrics> {
    let model = load_checkpoint(cfg, &entry.ticker, horizon)?;
    let data = dataset_for(cfg, entry, horizon)?;
    let hash = model.config().fingerprint();
    let (record, set) = evaluate_forecaster(&model, &data, &entry.ticker, &hash)?;
    let (persistence, _) = evaluate_forecaster(&Persistence { horizon }, &data, &entry.ticker, "persistence")?;
    let mean = TrailingMean { horizon, window: TRAILING_MEAN_WINDOW };
    let (mean21, _) = evaluate_forecaster(&mean, &data, &entry.ticker, "mean21")?;
    if cfg.plots {
        let svg = forecast_plot(&entry.ticker, &data, &set);
        std::fs::write(artifact(&cfg.out_dir, &entry.ticker, horizon, "forecast.svg"), svg)?;
    }
    Ok(PairMetrics { model: record, persistence, mean21 })
}

/// Actual volatility over the test span, the one-step-ahead forecasts and
/// the full path forecast from the last test window.
fn forecast_plot(ticker: &str, data: &WindowedDataset, set: &ForecastSet) -> String {
    let split = data.split().expect("split dataset");
    let dates = data.dates();
    let first = data.y_rows(split.test.start).start;
    let last = data.y_rows(split.test.end - 1).end;
    let actual: Vec<(NaiveDate, f64)> = (first..last).map(|r| (dates[r], data.target_series()[r])).collect();
    let one_step: Vec<(NaiveDate, f64)> =
        set.first_target_dates.iter().zip(set.predictions.column(0)).map(|(&d, &v)| (d, v)).collect();
    let tail_rows = data.y_rows(split.test.end - 1);
    let path: Vec<(NaiveDate, f64)> =
        tail_rows.map(|r| dates[r]).zip(set.predictions.row(set.predictions.nrows() - 1).iter().copied()).collect();
    render_svg(
        &format!("{ticker} volatility, F={}", data.horizon()),
        &[
            Series { label: "actual", color: "#222222", points: &actual },
            Series { label: "forecast (1 step)", color: "#1f77b4", points: &one_step },
            Series { label: "forecast (last window)", color: "#d62728", points: &path },
        ],
    )
}
