use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ModelError;
use crate::multiscale::scale_lengths;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Lookback length `P`.
    pub lookback: usize,
    /// Forecast horizon `F`.
    pub horizon: usize,
    /// Input channels `C`; channel 0 is the forecast target.
    pub channels: usize,
    pub d_model: usize,
    /// Number of mixing blocks `L`.
    pub layers: usize,
    /// Number of downsampling steps `M` (the model sees `M + 1` scales).
    pub scales: usize,
    pub decomp_kernel: usize,
    pub ff_hidden: usize,
    pub seed: u64,
    /// Pool the raw input and embed every scale, instead of embedding once
    /// and pooling in embedded space.
    pub embed_per_scale: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            lookback: 96,
            horizon: 12,
            channels: 1,
            d_model: 32,
            layers: 2,
            scales: 3,
            decomp_kernel: 25,
            ff_hidden: 64,
            seed: 0,
            embed_per_scale: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |field: &str, why: String| Err(ModelError::Config(format!("{field}: {why}")));
        if self.scales >= 32 || self.lookback < (2usize << self.scales) {
            return bad(
                "lookback",
                format!("{} is below 2 * 2^{} so the coarsest scale would be shorter than 2", self.lookback, self.scales),
            );
        }
        if self.horizon == 0 {
            return bad("horizon", "must be at least 1".into());
        }
        if self.channels == 0 {
            return bad("channels", "must be at least 1".into());
        }
        if self.d_model == 0 {
            return bad("d_model", "must be at least 1".into());
        }
        if self.layers == 0 {
            return bad("layers", "must be at least 1".into());
        }
        if self.ff_hidden == 0 {
            return bad("ff_hidden", "must be at least 1".into());
        }
        if self.decomp_kernel == 0 || self.decomp_kernel.is_multiple_of(2) {
            return bad("decomp_kernel", format!("{} is not an odd positive integer", self.decomp_kernel));
        }
        Ok(())
    }

    /// Time length of every scale, finest first.
    pub fn scale_lengths(&self) -> Vec<usize> {
        scale_lengths(self.lookback, self.scales)
    }

    /// Short stable digest of the full configuration.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
