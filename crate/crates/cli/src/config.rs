use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use volmix_core::market_data::{AssetRoster, ChannelSet, RosterEntry, DEFAULT_TEST_FRACTION, DEFAULT_ENDPOINT, DEFAULT_WINDOW, TRADING_DAYS};
use volmix_core::{ModelConfig, TrainConfig};

use crate::error::CliError;

/// Forecast horizons swept by default.
pub const DEFAULT_HORIZONS: [usize; 5] = [12, 96, 192, 336, 720];

/// Where the asset list comes from: a roster CSV or entries inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RosterSource {
    Path(PathBuf),
    Inline(Vec<RosterEntry>),
}

/// Declarative description of a sweep. Every field has a default; `roster:
/// null` selects the built-in list of 40 studied assets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub roster: Option<RosterSource>,
    /// Restricts the roster to these tickers when nonempty.
    pub tickers: Vec<String>,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Directory of recorded chart responses; set means offline.
    pub fixtures: Option<PathBuf>,
    pub endpoint: String,

    pub lookback: usize,
    pub horizons: Vec<usize>,
    pub scales: usize,
    pub d_model: usize,
    pub layers: usize,
    pub decomp_kernel: usize,
    pub ff_hidden: usize,
    pub embed_per_scale: bool,
    pub channels: ChannelSet,

    pub vol_window: usize,
    pub annualization: f64,
    pub stride: usize,
    pub test_fraction: f64,

    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub shuffle: bool,

    pub seed: u64,
    /// Worker threads for the (ticker, horizon) sweep; 0 picks the number
    /// of available cores.
    pub workers: usize,
    pub plots: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = ModelConfig::default();
        let train = TrainConfig::default();
        Self {
            roster: None,
            tickers: Vec::new(),
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
            fixtures: None,
            endpoint: DEFAULT_ENDPOINT.to_string(),
            lookback: model.lookback,
            horizons: DEFAULT_HORIZONS.to_vec(),
            scales: model.scales,
            d_model: model.d_model,
            layers: model.layers,
            decomp_kernel: model.decomp_kernel,
            ff_hidden: model.ff_hidden,
            embed_per_scale: model.embed_per_scale,
            channels: ChannelSet::Volatility,
            vol_window: DEFAULT_WINDOW,
            annualization: TRADING_DAYS,
            stride: 1,
            test_fraction: DEFAULT_TEST_FRACTION,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            max_epochs: train.max_epochs,
            patience: train.patience,
            adam_beta1: train.adam_beta1,
            adam_beta2: train.adam_beta2,
            adam_eps: train.adam_eps,
            shuffle: train.shuffle,
            seed: 0,
            workers: 0,
            plots: true,
        }
    }
}

/// One rejected configuration field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Command-line overrides layered on top of the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub sets: Vec<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub fixtures: Option<PathBuf>,
}

fn field(name: &str, message: impl Into<String>) -> FieldError {
    FieldError { field: name.to_string(), message: message.into() }
}

/// Sets `path` (dotted) in a JSON object tree, creating objects as needed.
fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), FieldError> {
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(field(path, "malformed key"));
    }
    for (i, part) in parts.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| field(path, format!("`{}` is not an object", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("path has at least one part")
}

/// `k=v`, with `v` read as JSON and otherwise taken as a plain string.
pub fn apply_set(root: &mut Value, assignment: &str) -> Result<(), FieldError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| field(assignment, "expected --set key=value"))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    set_path(root, key.trim(), value)
}

/// Extracts the run configuration from either a plain config document or
/// a run manifest.
fn config_value(doc: Value) -> Value {
    match doc {
        Value::Object(mut map) if map.contains_key("manifest_version") => map.remove("config").unwrap_or(Value::Null),
        other => other,
    }
}

impl RunConfig {
    /// Reads `path` (a config or a manifest), applies overrides and
    /// deserializes. Unknown keys and type errors are validation errors.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::validation(vec![field("--config", format!("{}: {e}", p.display()))]))?;
                let doc: Value = serde_json::from_str(&text)
                    .map_err(|e| CliError::validation(vec![field("--config", format!("{}: {e}", p.display()))]))?;
                config_value(doc)
            }
            None => Value::Object(Default::default()),
        };
        if !doc.is_object() {
            return Err(CliError::validation(vec![field("--config", "expected a JSON object")]));
        }
        let mut errors = Vec::new();
        for s in &overrides.sets {
            if let Err(e) = apply_set(&mut doc, s) {
                errors.push(e);
            }
        }
        if let Some(seed) = overrides.seed {
            set_path(&mut doc, "seed", Value::from(seed)).expect("top-level key");
        }
        if let Some(out) = &overrides.out {
            set_path(&mut doc, "out_dir", Value::from(out.to_string_lossy().into_owned())).expect("top-level key");
        }
        if let Some(fx) = &overrides.fixtures {
            set_path(&mut doc, "fixtures", Value::from(fx.to_string_lossy().into_owned())).expect("top-level key");
        }
        if !errors.is_empty() {
            return Err(CliError::validation(errors));
        }
        serde_json::from_value(doc).map_err(|e| CliError::validation(vec![field("config", e.to_string())]))
    }

    pub fn model_config(&self, horizon: usize) -> ModelConfig {
        ModelConfig {
            lookback: self.lookback,
            horizon,
            channels: self.channels.count(),
            d_model: self.d_model,
            layers: self.layers,
            scales: self.scales,
            decomp_kernel: self.decomp_kernel,
            ff_hidden: self.ff_hidden,
            seed: self.seed,
            embed_per_scale: self.embed_per_scale,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            patience: self.patience,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_eps: self.adam_eps,
            seed: self.seed,
            shuffle: self.shuffle,
        }
    }

    fn load_roster(&self) -> Result<AssetRoster, FieldError> {
        match &self.roster {
            None => Ok(AssetRoster::studied_assets()),
            Some(RosterSource::Inline(entries)) => AssetRoster::new(entries.clone()).map_err(|e| field("roster", e.to_string())),
            Some(RosterSource::Path(p)) => {
                let text = std::fs::read_to_string(p).map_err(|e| field("roster", format!("{}: {e}", p.display())))?;
                AssetRoster::from_csv(&text).map_err(|e| field("roster", format!("{}: {e}", p.display())))
            }
        }
    }

    /// Checks every field and returns the selected roster entries. All
    /// problems are reported together, before anything is written.
    pub fn validate(&self) -> Result<Vec<RosterEntry>, CliError> {
        let mut errors = Vec::new();
        let mut check = |ok: bool, name: &str, msg: &str| {
            if !ok {
                errors.push(field(name, msg));
            }
        };
        check(!self.horizons.is_empty(), "horizons", "must list at least one horizon");
        check(self.horizons.iter().all(|&f| f >= 1), "horizons", "every horizon must be at least 1");
        let mut sorted = self.horizons.clone();
        sorted.sort_unstable();
        sorted.dedup();
        check(sorted.len() == self.horizons.len(), "horizons", "horizons must be distinct");
        check(self.scales < 32 && (self.lookback >> self.scales.min(31)) >= 2, "lookback", "floor(lookback / 2^scales) must be at least 2");
        check(self.decomp_kernel % 2 == 1, "decomp_kernel", "must be odd");
        check(self.d_model >= 1, "d_model", "must be at least 1");
        check(self.layers >= 1, "layers", "must be at least 1");
        check(self.ff_hidden >= 1, "ff_hidden", "must be at least 1");
        check(self.vol_window >= 2, "vol_window", "must be at least 2");
        check(self.annualization.is_finite() && self.annualization > 0.0, "annualization", "must be positive");
        check(self.stride >= 1, "stride", "must be at least 1");
        check(self.test_fraction > 0.0 && self.test_fraction < 1.0, "test_fraction", "must lie in (0, 1)");
        check(!self.endpoint.is_empty(), "endpoint", "must not be empty");
        for (name, why) in self.train_config().problems() {
            errors.push(field(name, why));
        }
        if let Some(fx) = &self.fixtures {
            if !fx.is_dir() {
                errors.push(field("fixtures", format!("{} is not a directory", fx.display())));
            }
        }
        let entries = match self.load_roster() {
            Ok(roster) if roster.is_empty() => {
                errors.push(field("roster", "roster has no entries"));
                Vec::new()
            }
            Ok(roster) => {
                let mut selected = Vec::new();
                if self.tickers.is_empty() {
                    selected = roster.entries.clone();
                } else {
                    for t in &self.tickers {
                        match roster.get(t) {
                            Some(e) => selected.push(e.clone()),
                            None => errors.push(field("tickers", format!("{t} is not in the roster"))),
                        }
                    }
                }
                selected
            }
            Err(e) => {
                errors.push(e);
                Vec::new()
            }
        };
        if errors.is_empty() {
            Ok(entries)
        } else {
            Err(CliError::validation(errors))
        }
    }

    /// The fully resolved form recorded in manifests: absolute paths and
    /// the selected roster inline, so nothing outside the file is needed
    /// to describe the run.
    pub fn resolved(&self, entries: &[RosterEntry]) -> Self {
        let abs = |p: &Path| std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf());
        Self {
            roster: Some(RosterSource::Inline(entries.to_vec())),
            tickers: Vec::new(),
            data_dir: abs(&self.data_dir),
            out_dir: abs(&self.out_dir),
            fixtures: self.fixtures.as_deref().map(abs),
            ..self.clone()
        }
    }
}
