use serde::{Deserialize, Serialize};

/// Lower clamp applied to per-channel standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel statistics of one lookback window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Maps normalized values of `channel` back to the input scale.
    pub fn denormalize(&self, channel: usize, values: &[f64]) -> Vec<f64> {
        values.iter().map(|v| v * self.std[channel] + self.mean[channel]).collect()
    }

    pub fn normalize(&self, channel: usize, values: &[f64]) -> Vec<f64> {
        values.iter().map(|v| (v - self.mean[channel]) / self.std[channel]).collect()
    }
}

/// Standardizes each channel of a row-major `len x channels` window to
/// zero mean and unit population standard deviation.
pub fn instance_normalize(x: &[f64], channels: usize) -> (Vec<f64>, NormStats) {
    let len = x.len() / channels;
    let mut mean = vec![0.0; channels];
    let mut std = vec![0.0; channels];
    for c in 0..channels {
        // shifted by the first value so constant channels come out exact
        let shift = x[c];
        let col = || (0..len).map(|t| x[t * channels + c] - shift);
        let m = col().sum::<f64>() / len as f64;
        let var = col().map(|d| (d - m).powi(2)).sum::<f64>() / len as f64;
        mean[c] = shift + m;
        std[c] = var.sqrt().max(STD_FLOOR);
    }
    let out = x
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let c = i % channels;
            (v - mean[c]) / std[c]
        })
        .collect();
    (out, NormStats { mean, std })
}
