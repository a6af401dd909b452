use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use volmix_core::evaluation::{markdown_table, metrics_to_csv, parse_metrics_csv, MetricsRecord};
use volmix_core::market_data::{AssetClass, CsvCache, RosterEntry};

use crate::config::RunConfig;
use crate::error::{CliError, EXIT_OK, EXIT_PARTIAL, EXIT_RUNTIME};
use crate::manifest::{InputFile, Manifest, PairStatus};
use crate::pipeline::{self, PairMetrics};

pub const METRICS_FILE: &str = "metrics.csv";
pub const PERSISTENCE_FILE: &str = "baseline_persistence.csv";
pub const MEAN21_FILE: &str = "baseline_mean21.csv";
pub const REPORT_FILE: &str = "report.md";
pub const MANIFEST_FILE: &str = "manifest.json";

/// A ticker or (ticker, horizon) pair that could not be processed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub ticker: String,
    pub horizon: Option<usize>,
    pub stage: String,
    pub error: String,
}

impl Failure {
    fn new(ticker: &str, horizon: Option<usize>, stage: &str, err: &anyhow::Error) -> Self {
        Self { ticker: ticker.to_string(), horizon, stage: stage.to_string(), error: format!("{err:#}") }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub succeeded: usize,
    pub failures: Vec<Failure>,
}

impl Outcome {
    /// 0 when everything succeeded, 3 when some units failed and 2 when
    /// none succeeded.
    pub fn exit_code(&self) -> i32 {
        match (self.failures.is_empty(), self.succeeded) {
            (true, _) => EXIT_OK,
            (false, 0) => EXIT_RUNTIME,
            (false, _) => EXIT_PARTIAL,
        }
    }

    fn report_failures(&self) {
        for f in &self.failures {
            match f.horizon {
                Some(h) => eprintln!("FAILED {} F={h} [{}]: {}", f.ticker, f.stage, f.error),
                None => eprintln!("FAILED {} [{}]: {}", f.ticker, f.stage, f.error),
            }
        }
    }
}

fn pool(cfg: &RunConfig, jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let n = if cfg.workers == 0 { cores } else { cfg.workers };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n.min(jobs.max(1)))
        .build()
        .map_err(|e| CliError::Runtime(e.into()))
}

fn pairs(cfg: &RunConfig, entries: &[RosterEntry]) -> Vec<(RosterEntry, usize)> {
    entries.iter().flat_map(|e| cfg.horizons.iter().map(move |&h| (e.clone(), h))).collect()
}

pub fn cmd_fetch(cfg: &RunConfig, entries: &[RosterEntry]) -> Result<Outcome, CliError> {
    let source = pipeline::chart_source(cfg);
    let mut outcome = Outcome::default();
    for entry in entries {
        match pipeline::fetch_entry(cfg, source.as_ref(), entry) {
            Ok(s) => {
                let span = match (s.first, s.last) {
                    (Some(a), Some(b)) => format!("{a}..{b}"),
                    _ => "empty".into(),
                };
                println!("{}: {} rows {span} ({} dropped) -> {}", s.ticker, s.rows, s.dropped, s.path.display());
                outcome.succeeded += 1;
            }
            Err(e) => outcome.failures.push(Failure::new(&entry.ticker, None, "fetch", &e)),
        }
    }
    outcome.report_failures();
    Ok(outcome)
}

pub fn cmd_prepare(cfg: &RunConfig, entries: &[RosterEntry]) -> Result<Outcome, CliError> {
    let results: Vec<_> = pool(cfg, entries.len())?
        .install(|| entries.par_iter().map(|e| (e, pipeline::prepare_entry(cfg, e))).collect());
    let mut outcome = Outcome::default();
    for (entry, r) in results {
        match r {
            Ok(summaries) => {
                for s in summaries {
                    println!("{} F={}: train {} / val {} / test {} (gap {})", s.ticker, s.horizon, s.train, s.val, s.test, s.gap);
                }
                outcome.succeeded += 1;
            }
            Err(e) => outcome.failures.push(Failure::new(&entry.ticker, None, "prepare", &e)),
        }
    }
    outcome.report_failures();
    Ok(outcome)
}

pub fn cmd_train(cfg: &RunConfig, entries: &[RosterEntry]) -> Result<Outcome, CliError> {
    let jobs = pairs(cfg, entries);
    let results: Vec<_> = pool(cfg, jobs.len())?
        .install(|| jobs.par_iter().map(|(e, h)| pipeline::train_pair(cfg, e, *h)).collect());
    let mut outcome = Outcome::default();
    for ((entry, h), r) in jobs.iter().zip(results) {
        match r {
            Ok(rep) => {
                println!(
                    "{} F={h}: best epoch {} of {}, val mse {:.6e} ({:?})",
                    entry.ticker,
                    rep.best_epoch,
                    rep.epochs.len(),
                    rep.best_val_loss,
                    rep.stopping_reason
                );
                outcome.succeeded += 1;
            }
            Err(e) => outcome.failures.push(Failure::new(&entry.ticker, Some(*h), "train", &e)),
        }
    }
    outcome.report_failures();
    Ok(outcome)
}

fn write_metrics(cfg: &RunConfig, metrics: &[PairMetrics]) -> Result<()> {
    let out = &cfg.out_dir;
    let pick = |f: fn(&PairMetrics) -> &MetricsRecord| metrics.iter().map(f).cloned().collect::<Vec<_>>();
    std::fs::write(out.join(METRICS_FILE), metrics_to_csv(&pick(|m| &m.model)))?;
    std::fs::write(out.join(PERSISTENCE_FILE), metrics_to_csv(&pick(|m| &m.persistence)))?;
    std::fs::write(out.join(MEAN21_FILE), metrics_to_csv(&pick(|m| &m.mean21)))?;
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig, entries: &[RosterEntry]) -> Result<Outcome, CliError> {
    let jobs = pairs(cfg, entries);
    let results: Vec<_> = pool(cfg, jobs.len())?
        .install(|| jobs.par_iter().map(|(e, h)| pipeline::eval_pair(cfg, e, *h)).collect());
    let mut outcome = Outcome::default();
    let mut metrics = Vec::new();
    for ((entry, h), r) in jobs.iter().zip(results) {
        match r {
            Ok(m) => {
                println!("{} F={h}: mae {:.6} mse {:.6} rmse {:.6}", entry.ticker, m.model.mae, m.model.mse, m.model.rmse);
                metrics.push(m);
                outcome.succeeded += 1;
            }
            Err(e) => outcome.failures.push(Failure::new(&entry.ticker, Some(*h), "eval", &e)),
        }
    }
    if !metrics.is_empty() {
        write_metrics(cfg, &metrics)?;
        write_report(cfg, entries)?;
    }
    outcome.report_failures();
    Ok(outcome)
}

/// Markdown report from the metrics CSVs in the output directory, grouped
/// by asset class.
pub fn write_report(cfg: &RunConfig, entries: &[RosterEntry]) -> Result<()> {
    let read = |name: &str| -> Result<Option<Vec<MetricsRecord>>> {
        let path = cfg.out_dir.join(name);
        if !path.is_file() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path)?;
        Ok(Some(parse_metrics_csv(&text).with_context(|| path.display().to_string())?))
    };
    let model = read(METRICS_FILE)?.with_context(|| format!("no {METRICS_FILE} in {}; run `volmix eval` first", cfg.out_dir.display()))?;
    let sources = [
        ("model", Some(model)),
        ("persistence baseline", read(PERSISTENCE_FILE)?),
        ("21-day mean baseline", read(MEAN21_FILE)?),
    ];

    let mut md = String::from("# Volatility forecast report\n\n");
    let _ = writeln!(
        md,
        "Model: lookback {}, scales {}, d_model {}, layers {}, decomp_kernel {}, ff_hidden {}, channels {}, seed {}.  ",
        cfg.lookback, cfg.scales, cfg.d_model, cfg.layers, cfg.decomp_kernel, cfg.ff_hidden, cfg.channels.as_str(), cfg.seed
    );
    let _ = writeln!(
        md,
        "Training: batch {}, learning rate {}, max epochs {}, patience {}.  ",
        cfg.batch_size, cfg.learning_rate, cfg.max_epochs, cfg.patience
    );
    let _ = writeln!(
        md,
        "Target: {}-day rolling volatility annualized by sqrt({}); test fraction {}; metrics on the volatility scale.\n",
        cfg.vol_window, cfg.annualization, cfg.test_fraction
    );

    let class_of = |t: &str| entries.iter().find(|e| e.ticker == t).map(|e| e.asset_class);
    let classes = [AssetClass::Stock, AssetClass::IndexEtf, AssetClass::Forex, AssetClass::Crypto];
    for class in classes.iter().map(|&c| Some(c)).chain([None]) {
        let title = class.map(|c| c.title().to_string()).unwrap_or_else(|| "Other".into());
        let mut section = String::new();
        for (label, records) in &sources {
            let Some(records) = records else { continue };
            let subset: Vec<MetricsRecord> = records.iter().filter(|r| class_of(&r.ticker) == class).cloned().collect();
            if !subset.is_empty() {
                section.push_str(&markdown_table(&format!("{title}: {label}"), &subset));
                section.push('\n');
            }
        }
        if !section.is_empty() {
            let _ = writeln!(md, "## {title}\n\n{section}");
        }
    }
    std::fs::write(cfg.out_dir.join(REPORT_FILE), md.trim_end().to_string() + "\n")?;
    Ok(())
}

pub fn cmd_report(cfg: &RunConfig, entries: &[RosterEntry]) -> Result<Outcome, CliError> {
    write_report(cfg, entries)?;
    println!("wrote {}", cfg.out_dir.join(REPORT_FILE).display());
    Ok(Outcome { succeeded: 1, failures: Vec::new() })
}

fn input_file(cfg: &RunConfig, entry: &RosterEntry) -> Option<InputFile> {
    let cache = CsvCache::new(&cfg.data_dir);
    [cache.path_for(entry), cfg.data_dir.join(format!("{}.csv", entry.ticker))]
        .into_iter()
        .find(|p| p.is_file())
        .and_then(|p| InputFile::describe(&entry.ticker, &p).ok())
}

/// Fetches missing data, then trains and evaluates every (ticker,
/// horizon) pair, writes the metrics, the report and a replayable
/// manifest.
pub fn cmd_run(cfg: &RunConfig, entries: &[RosterEntry], command_line: &[String]) -> Result<Outcome, CliError> {
    let mut outcome = Outcome::default();
    let source = pipeline::chart_source(cfg);
    let cache = CsvCache::new(&cfg.data_dir);
    let mut usable = Vec::new();
    for entry in entries {
        let cached = cache.load(entry).map(|s| s.is_some()).unwrap_or(false);
        if cached {
            usable.push(entry.clone());
            continue;
        }
        match pipeline::fetch_entry(cfg, source.as_ref(), entry) {
            Ok(s) => {
                eprintln!("fetched {}: {} rows", s.ticker, s.rows);
                usable.push(entry.clone());
            }
            Err(e) => outcome.failures.push(Failure::new(&entry.ticker, None, "fetch", &e)),
        }
    }

    let jobs = pairs(cfg, &usable);
    let results: Vec<_> = pool(cfg, jobs.len())?.install(|| {
        jobs.par_iter()
            .map(|(e, h)| {
                let report = pipeline::train_pair(cfg, e, *h).map_err(|err| ("train", err))?;
                let metrics = pipeline::eval_pair(cfg, e, *h).map_err(|err| ("eval", err))?;
                Ok::<_, (&str, anyhow::Error)>((report, metrics))
            })
            .collect()
    });

    let mut metrics = Vec::new();
    let mut statuses = Vec::new();
    for ((entry, h), r) in jobs.iter().zip(results) {
        match r {
            Ok((report, m)) => {
                eprintln!("{} F={h}: mae {:.6} (persistence {:.6})", entry.ticker, m.model.mae, m.persistence.mae);
                statuses.push(PairStatus::succeeded(&m.model, &report));
                metrics.push(m);
                outcome.succeeded += 1;
            }
            Err((stage, e)) => {
                let f = Failure::new(&entry.ticker, Some(*h), stage, &e);
                statuses.push(PairStatus::failed(&f));
                outcome.failures.push(f);
            }
        }
    }
    if !metrics.is_empty() {
        write_metrics(cfg, &metrics)?;
        write_report(cfg, entries)?;
    }
    let manifest = Manifest {
        command: command_line.to_vec(),
        config: cfg.resolved(entries),
        inputs: usable.iter().filter_map(|e| input_file(cfg, e)).collect(),
        pairs: statuses,
        failures: outcome.failures.clone(),
        exit_code: outcome.exit_code(),
        ..Manifest::new()
    };
    manifest.write(&cfg.out_dir.join(MANIFEST_FILE))?;
    outcome.report_failures();
    Ok(outcome)
}

/// Loads a metrics CSV written by `eval` or `run`.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
    Ok(parse_metrics_csv(&text)?)
}
