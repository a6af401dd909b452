#![allow(dead_code)]

use std::ffi::OsStr;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub fn volmix<S: AsRef<OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_volmix")).args(args).output().expect("spawn volmix")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// `(date, open, high, low, close, volume)`.
pub type Bar = (NaiveDate, f64, f64, f64, f64, u64);

pub fn weekdays(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

/// Geometric random walk with a slowly varying volatility.
pub fn random_bars(seed: u64, start: NaiveDate, n: usize) -> Vec<Bar> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut close = 100.0;
    weekdays(start, n)
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            let sigma = 0.01 * (1.5 + (i as f64 / 40.0).sin());
            let prev = close;
            close = prev * (sigma * rng.random_range(-1.7..1.7)).exp();
            let hi = prev.max(close) * 1.002;
            let lo = prev.min(close) * 0.998;
            (d, prev, hi, lo, close, rng.random_range(1_000..100_000))
        })
        .collect()
}

/// A chart-API payload holding `bars`.
pub fn chart_json(bars: &[Bar]) -> String {
    let ts: Vec<i64> = bars.iter().map(|b| b.0.and_hms_opt(14, 30, 0).unwrap().and_utc().timestamp()).collect();
    let col = |f: fn(&Bar) -> f64| bars.iter().map(f).collect::<Vec<_>>();
    json!({
        "chart": {
            "result": [{
                "meta": {"gmtoffset": -18000},
                "timestamp": ts,
                "indicators": {"quote": [{
                    "open": col(|b| b.1),
                    "high": col(|b| b.2),
                    "low": col(|b| b.3),
                    "close": col(|b| b.4),
                    "volume": bars.iter().map(|b| b.5).collect::<Vec<_>>(),
                }]}
            }],
            "error": null
        }
    })
    .to_string()
}

/// Writes `<dir>/<ticker>.json` with `n` bars starting at `start`.
pub fn write_fixture(dir: &Path, ticker: &str, seed: u64, start: NaiveDate, n: usize) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    let path = dir.join(format!("{ticker}.json"));
    std::fs::write(&path, chart_json(&random_bars(seed, start, n))).unwrap();
    path
}

/// Writes a cached bar CSV `<dir>/<ticker>.csv` through the library cache.
pub fn write_cached_csv(dir: &Path, ticker: &str, seed: u64, n: usize) {
    use volmix_core::market_data::{CsvCache, OhlcvRow};
    use volmix_core::OhlcvSeries;
    let rows = random_bars(seed, NaiveDate::from_ymd_opt(2015, 1, 5).unwrap(), n)
        .into_iter()
        .map(|(date, open, high, low, close, volume)| OhlcvRow { date, open, high, low, close, volume })
        .collect();
    let series = OhlcvSeries::new(ticker, rows).unwrap();
    let cache = CsvCache::new(dir);
    std::fs::create_dir_all(dir).unwrap();
    let entry = volmix_core::market_data::AssetRoster::studied_assets().get(ticker).unwrap().clone();
    let stored = cache.store(&entry, &series).unwrap();
    std::fs::rename(stored, dir.join(format!("{ticker}.csv"))).unwrap();
}

/// Flags for a model small enough to train in a few seconds.
pub const TINY: &[&str] = &[
    "--set", "lookback=32",
    "--set", "scales=1",
    "--set", "d_model=8",
    "--set", "layers=1",
    "--set", "decomp_kernel=5",
    "--set", "ff_hidden=16",
    "--set", "max_epochs=3",
    "--set", "patience=1",
    "--set", "plots=false",
];

pub fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}
