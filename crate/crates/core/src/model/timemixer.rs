//! Embedding, stacked past-decomposable mixing blocks, the multi-predictor
//! head and the output projection.

use crate::autodiff::{Tape, Var};
use crate::multiscale::{build_multiscale, series_decomp, MultiscaleSet};

use super::norm::{instance_normalize, NormStats};
use super::params::{FeedForward, LinearLayer, ParamStore};
use super::{ModelConfig, ModelError};

/// One past-decomposable mixing block.
///
/// `bottom_up[m - 1]` maps scale `m - 1` onto scale `m` (seasonal, fine to
/// coarse); `top_down[m]` maps scale `m + 1` onto scale `m` (trend, coarse
/// to fine). Both act on the time axis. `feed_forward[m]` acts on channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PdmBlock {
    pub bottom_up: Vec<LinearLayer>,
    pub top_down: Vec<LinearLayer>,
    pub feed_forward: Vec<FeedForward>,
}

/// One bias-free time-axis predictor per scale, `floor(P / 2^m) -> F`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FmmHead {
    pub predictors: Vec<LinearLayer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeMixerModel {
    config: ModelConfig,
    params: ParamStore,
    pub input_embed: LinearLayer,
    pub blocks: Vec<PdmBlock>,
    pub head: FmmHead,
    pub output_proj: LinearLayer,
}

fn check_lengths(tape: &Tape, set: &MultiscaleSet, expected: &[usize]) -> Result<(), ModelError> {
    let got = set.lengths(tape);
    if got != expected {
        return Err(ModelError::Dimension(format!("scale lengths {got:?}, expected {expected:?}")));
    }
    Ok(())
}

/// `x_m + FeedForward(s_m + t_m)` for every scale, after seasonal mixing
/// from fine to coarse and trend mixing from coarse to fine.
pub fn pdm_forward(
    tape: &mut Tape,
    block: &PdmBlock,
    bound: &[Var],
    input: &MultiscaleSet,
    kernel: usize,
    ladder: &[usize],
) -> Result<MultiscaleSet, ModelError> {
    check_lengths(tape, input, ladder)?;
    let depth = input.depth();
    if block.bottom_up.len() != depth || block.top_down.len() != depth || block.feed_forward.len() != depth + 1 {
        return Err(ModelError::Dimension(format!(
            "block built for {} scales applied to {}",
            block.feed_forward.len(),
            depth + 1
        )));
    }
    let mut seasonal = Vec::with_capacity(depth + 1);
    let mut trend = Vec::with_capacity(depth + 1);
    for &x in &input.scales {
        let d = series_decomp(tape, x, kernel)?;
        seasonal.push(d.seasonal);
        trend.push(d.trend);
    }
    for m in 1..=depth {
        let mixed = block.bottom_up[m - 1].apply_time(tape, bound, seasonal[m - 1])?;
        seasonal[m] = tape.add(seasonal[m], mixed)?;
    }
    for m in (0..depth).rev() {
        let mixed = block.top_down[m].apply_time(tape, bound, trend[m + 1])?;
        trend[m] = tape.add(trend[m], mixed)?;
    }
    let mut scales = Vec::with_capacity(depth + 1);
    for m in 0..=depth {
        let z = tape.add(seasonal[m], trend[m])?;
        let f = block.feed_forward[m].apply(tape, bound, z)?;
        scales.push(tape.add(input.scales[m], f)?);
    }
    Ok(MultiscaleSet { scales })
}

/// `sum_m Predictor_m(x_m)`, returned as `[.., F, d]`.
pub fn fmm_forward(tape: &mut Tape, head: &FmmHead, bound: &[Var], input: &MultiscaleSet, ladder: &[usize]) -> Result<Var, ModelError> {
    check_lengths(tape, input, ladder)?;
    if head.predictors.len() != input.scales.len() {
        return Err(ModelError::Dimension(format!(
            "{} predictors for {} scales",
            head.predictors.len(),
            input.scales.len()
        )));
    }
    let mut total: Option<Var> = None;
    for (p, &x) in head.predictors.iter().zip(&input.scales) {
        let xt = tape.transpose(x)?;
        let y = p.apply(tape, bound, xt)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, y)?,
            None => y,
        });
    }
    Ok(tape.transpose(total.expect("at least one scale"))?)
}

fn at_stage(stage: impl Into<String>) -> impl FnOnce(ModelError) -> ModelError {
    move |e| match e {
        ModelError::Engine(crate::autodiff::AutodiffError::NonFinite { op }) => {
            ModelError::NonFinite { stage: stage.into(), op }
        }
        other => other,
    }
}

impl TimeMixerModel {
    /// Builds a freshly initialized model.
    pub fn init(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let seed = config.seed;
        let (d, ff, f) = (config.d_model, config.ff_hidden, config.horizon);
        let ladder = config.scale_lengths();
        let depth = config.scales;
        let mut params = ParamStore::default();

        let input_embed = LinearLayer::new(&mut params, "embed", config.channels, d, true, seed);
        let blocks = (0..config.layers)
            .map(|l| {
                let p = &mut params;
                let bottom_up = (1..=depth)
                    .map(|m| LinearLayer::new(p, &format!("blocks.{l}.bottom_up.{m}"), ladder[m - 1], ladder[m], true, seed))
                    .collect();
                let top_down = (0..depth)
                    .map(|m| LinearLayer::new(p, &format!("blocks.{l}.top_down.{m}"), ladder[m + 1], ladder[m], true, seed))
                    .collect();
                let feed_forward = (0..=depth)
                    .map(|m| FeedForward {
                        fc1: LinearLayer::new(p, &format!("blocks.{l}.ff.{m}.fc1"), d, ff, true, seed),
                        fc2: LinearLayer::new(p, &format!("blocks.{l}.ff.{m}.fc2"), ff, d, true, seed),
                    })
                    .collect();
                PdmBlock { bottom_up, top_down, feed_forward }
            })
            .collect();
        let head = FmmHead {
            predictors: (0..=depth)
                .map(|m| LinearLayer::new(&mut params, &format!("head.predictor.{m}"), ladder[m], f, false, seed))
                .collect(),
        };
        let output_proj = LinearLayer::new(&mut params, "output", d, 1, true, seed);
        Ok(Self { config, params, input_embed, blocks, head, output_proj })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.numel()
    }

    /// Forward pass on the normalized scale: `x` is `[B, P, C]`, the result
    /// is `[B, F, 1]`.
    pub fn forward_normalized(&self, tape: &mut Tape, bound: &[Var], x: Var) -> Result<Var, ModelError> {
        let c = &self.config;
        let expect = [c.lookback, c.channels];
        let shape = tape.shape(x);
        if shape.len() != 3 || shape[1..] != expect {
            return Err(ModelError::Dimension(format!("input {shape:?}, expected [B, {}, {}]", expect[0], expect[1])));
        }
        let ladder = c.scale_lengths();
        let mut set = if c.embed_per_scale {
            let raw = build_multiscale(tape, x, c.scales).map_err(at_stage("multiscale"))?;
            let scales = raw
                .scales
                .iter()
                .map(|&s| self.input_embed.apply(tape, bound, s))
                .collect::<Result<Vec<_>, _>>()
                .map_err(at_stage("embed"))?;
            MultiscaleSet { scales }
        } else {
            let h = self.input_embed.apply(tape, bound, x).map_err(at_stage("embed"))?;
            build_multiscale(tape, h, c.scales).map_err(at_stage("multiscale"))?
        };
        for (l, block) in self.blocks.iter().enumerate() {
            set = pdm_forward(tape, block, bound, &set, c.decomp_kernel, &ladder).map_err(at_stage(format!("pdm_block[{l}]")))?;
        }
        let y = fmm_forward(tape, &self.head, bound, &set, &ladder).map_err(at_stage("fmm_head"))?;
        self.output_proj.apply(tape, bound, y).map_err(at_stage("output_proj"))
    }

    /// Normalizes each window, stacks them into `[B, P, C]` and returns the
    /// per-window statistics.
    pub fn prepare_batch(&self, windows: &[&[f64]]) -> Result<(Vec<f64>, Vec<NormStats>), ModelError> {
        let c = &self.config;
        let per = c.lookback * c.channels;
        let mut data = Vec::with_capacity(windows.len() * per);
        let mut stats = Vec::with_capacity(windows.len());
        for w in windows {
            if w.len() != per {
                return Err(ModelError::Dimension(format!(
                    "window of {} values, expected {} x {}",
                    w.len(),
                    c.lookback,
                    c.channels
                )));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite { stage: "input".into(), op: "instance_normalize" });
            }
            let (n, s) = instance_normalize(w, c.channels);
            data.extend(n);
            stats.push(s);
        }
        Ok((data, stats))
    }

    /// Forecasts for a batch of windows (each `P x C`, row-major), on the
    /// scale of the target channel.
    pub fn predict_batch(&self, windows: &[&[f64]]) -> Result<Vec<Vec<f64>>, ModelError> {
        if windows.is_empty() {
            return Ok(Vec::new());
        }
        let c = &self.config;
        let (data, stats) = self.prepare_batch(windows)?;
        let mut tape = Tape::inference();
        let bound = self.params.bind(&mut tape)?;
        let x = tape.constant(vec![windows.len(), c.lookback, c.channels], data)?;
        let y = self.forward_normalized(&mut tape, &bound, x)?;
        let out = tape.value(y);
        let forecasts: Vec<Vec<f64>> = stats
            .iter()
            .enumerate()
            .map(|(b, s)| s.denormalize(0, &out[b * c.horizon..(b + 1) * c.horizon]))
            .collect();
        if forecasts.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite { stage: "denormalize".into(), op: "scale" });
        }
        Ok(forecasts)
    }

    /// Forecast for one `P x C` window.
    pub fn forward(&self, window: &[f64]) -> Result<Vec<f64>, ModelError> {
        Ok(self.predict_batch(&[window])?.remove(0))
    }

    /// Zeros the second layer of every block's feed-forward, which makes
    /// every block an exact identity map.
    pub fn zero_block_outputs(&mut self) {
        let layers: Vec<LinearLayer> =
            self.blocks.iter().flat_map(|b| b.feed_forward.iter().map(|f| f.fc2)).collect();
        for l in layers {
            l.zero(&mut self.params);
        }
    }

    pub fn zero_head(&mut self) {
        for p in self.head.predictors.clone() {
            p.zero(&mut self.params);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            lookback: 16,
            horizon: 4,
            channels: 1,
            d_model: 4,
            layers: 2,
            scales: 2,
            decomp_kernel: 5,
            ff_hidden: 6,
            seed: 3,
            embed_per_scale: false,
        }
    }

    fn window(len: usize) -> Vec<f64> {
        (0..len).map(|i| 0.2 + 0.05 * (i as f64 * 0.7).sin()).collect()
    }

    #[test]
    fn parameter_count_matches_shape_ledger() {
        // values from an independent count over the shape ledger
        let cfg = ModelConfig {
            lookback: 64,
            horizon: 12,
            channels: 1,
            d_model: 16,
            layers: 2,
            scales: 2,
            ff_hidden: 32,
            ..tiny()
        };
        assert_eq!(TimeMixerModel::init(cfg).unwrap().parameter_count(), 18_353);
    }

    #[test]
    fn seeded_init() {
        let a = TimeMixerModel::init(tiny()).unwrap();
        let b = TimeMixerModel::init(tiny()).unwrap();
        assert_eq!(a.params().flatten(), b.params().flatten());
        let c = TimeMixerModel::init(ModelConfig { seed: 4, ..tiny() }).unwrap();
        assert_ne!(a.params().flatten(), c.params().flatten());
        assert!(TimeMixerModel::init(ModelConfig { lookback: 7, ..tiny() }).is_err());
    }

    #[test]
    fn deterministic_forward() {
        let m = TimeMixerModel::init(tiny()).unwrap();
        let x = window(16);
        let a = m.forward(&x).unwrap();
        let b = m.forward(&x).unwrap();
        assert_eq!(a.len(), 4);
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert!(m.forward(&x[..15]).is_err());
    }

    #[test]
    fn batch_matches_single() {
        let m = TimeMixerModel::init(tiny()).unwrap();
        let x1 = window(16);
        let x2: Vec<f64> = window(16).iter().map(|v| v * 3.0 + 1.0).collect();
        let batch = m.predict_batch(&[&x1, &x2]).unwrap();
        let single = m.forward(&x2).unwrap();
        for (a, b) in batch[1].iter().zip(&single) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn nonfinite_input_names_stage() {
        let m = TimeMixerModel::init(tiny()).unwrap();
        let mut x = window(16);
        x[3] = f64::NAN;
        assert!(matches!(m.forward(&x), Err(ModelError::NonFinite { ref stage, .. }) if stage == "input"));
    }

    #[test]
    fn huge_weights_fail_with_stage() {
        let mut m = TimeMixerModel::init(tiny()).unwrap();
        let w = m.head.predictors[0].weight;
        m.params_mut().get_mut(w).values_mut().fill(1e300);
        let w = m.output_proj.weight;
        m.params_mut().get_mut(w).values_mut().fill(1e300);
        match m.forward(&window(16)) {
            Err(ModelError::NonFinite { stage, .. }) => assert!(stage == "fmm_head" || stage == "output_proj"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn embed_per_scale_agrees_with_default_path() {
        // pooling and a per-step affine embedding commute
        let a = TimeMixerModel::init(tiny()).unwrap();
        let b = TimeMixerModel::init(ModelConfig { embed_per_scale: true, ..tiny() }).unwrap();
        let x = window(16);
        for (u, v) in a.forward(&x).unwrap().iter().zip(b.forward(&x).unwrap()) {
            assert!((u - v).abs() < 1e-10);
        }
    }
}
