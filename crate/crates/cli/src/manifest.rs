//! Run manifest: the resolved configuration, input fingerprints and the
//! status of every pair. Passing it back through `--config` replays the
//! run.

use std::path::{Path, PathBuf};
use std::process::Command;

use anyhow::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use volmix_core::evaluation::MetricsRecord;
use volmix_core::training::StoppingReason;
use volmix_core::TrainReport;

use crate::commands::Failure;
use crate::config::RunConfig;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub ticker: String,
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

impl InputFile {
    pub fn describe(ticker: &str, path: &Path) -> std::io::Result<Self> {
        let data = std::fs::read(path)?;
        let digest = Sha256::digest(&data);
        Ok(Self {
            ticker: ticker.to_string(),
            path: std::path::absolute(path)?,
            sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
            bytes: data.len() as u64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStatus {
    pub ticker: String,
    pub horizon: usize,
    pub ok: bool,
    pub best_epoch: Option<usize>,
    pub epochs: Option<usize>,
    pub stopping_reason: Option<StoppingReason>,
    pub mae: Option<f64>,
    pub mse: Option<f64>,
    pub rmse: Option<f64>,
    pub n_samples: Option<usize>,
    pub model_config_hash: Option<String>,
    pub data_range: Option<String>,
    pub error: Option<String>,
}

impl PairStatus {
    pub fn succeeded(m: &MetricsRecord, report: &TrainReport) -> Self {
        Self {
            ticker: m.ticker.clone(),
            horizon: m.horizon,
            ok: true,
            best_epoch: Some(report.best_epoch),
            epochs: Some(report.epochs.len()),
            stopping_reason: Some(report.stopping_reason),
            mae: Some(m.mae),
            mse: Some(m.mse),
            rmse: Some(m.rmse),
            n_samples: Some(m.n_samples),
            model_config_hash: Some(m.model_config_hash.clone()),
            data_range: Some(m.data_range.clone()),
            error: None,
        }
    }

    pub fn failed(f: &Failure) -> Self {
        Self {
            ticker: f.ticker.clone(),
            horizon: f.horizon.unwrap_or(0),
            ok: false,
            best_epoch: None,
            epochs: None,
            stopping_reason: None,
            mae: None,
            mse: None,
            rmse: None,
            n_samples: None,
            model_config_hash: None,
            data_range: None,
            error: Some(format!("[{}] {}", f.stage, f.error)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub tool: String,
    pub code_version: String,
    pub created_utc: String,
    pub command: Vec<String>,
    pub config: RunConfig,
    pub inputs: Vec<InputFile>,
    pub pairs: Vec<PairStatus>,
    pub failures: Vec<Failure>,
    pub exit_code: i32,
}

impl Manifest {
    pub fn new() -> Self {
        Self {
            manifest_version: MANIFEST_VERSION,
            tool: "volmix".into(),
            code_version: code_version(),
            created_utc: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            command: Vec::new(),
            config: RunConfig::default(),
            inputs: Vec::new(),
            pairs: Vec::new(),
            failures: Vec::new(),
            exit_code: 0,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

impl Default for Manifest {
    fn default() -> Self {
        Self::new()
    }
}

/// Package version plus `git describe` of the source tree when available.
pub fn code_version() -> String {
    let pkg = env!("CARGO_PKG_VERSION");
    let described = Command::new("git")
        .args(["-C", env!("CARGO_MANIFEST_DIR"), "describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty());
    match described {
        Some(d) => format!("{pkg}+{d}"),
        None => format!("{pkg}+unknown"),
    }
}
