use std::fmt::Write as _;
use std::ops::Range;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, Tape, Var};
use crate::market_data::WindowedDataset;
use crate::model::{ModelError, TimeMixerModel};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::TrainError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 1e-3,
            max_epochs: 300,
            patience: 15,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    /// Every invalid field with the reason, in declaration order.
    pub fn problems(&self) -> Vec<(&'static str, &'static str)> {
        let mut out = Vec::new();
        if self.batch_size == 0 {
            out.push(("batch_size", "must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            out.push(("learning_rate", "must be a finite nonnegative number"));
        }
        if self.max_epochs == 0 {
            out.push(("max_epochs", "must be at least 1"));
        }
        if self.patience > self.max_epochs {
            out.push(("patience", "must not exceed max_epochs"));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                out.push((name, "must lie in (0, 1)"));
            }
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            out.push(("adam_eps", "must be positive"));
        }
        out
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        match self.problems().first() {
            Some((field, why)) => Err(TrainError::Config(format!("{field}: {why}"))),
            None => Ok(()),
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoppingReason {
    Patience,
    MaxEpochs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopping_reason: StoppingReason,
    pub wall_time_secs: f64,
    /// Gradient-carrying nodes recorded during validation passes.
    pub val_recorded_ops: usize,
}

impl TrainReport {
    pub fn to_log(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            let _ = writeln!(out, "epoch {:>4}  train_mse {:.6e}  val_mse {:.6e}", e.epoch, e.train_loss, e.val_loss);
        }
        let _ = writeln!(
            out,
            "stopped: {:?} after {} epochs; best epoch {} (val_mse {:.6e}); {:.2}s",
            self.stopping_reason,
            self.epochs.len(),
            self.best_epoch,
            self.best_val_loss,
            self.wall_time_secs
        );
        out
    }
}

/// Mean squared error, differentiable through the tape.
pub fn mse_loss(tape: &mut Tape, pred: Var, target: Var) -> Result<Var, AutodiffError> {
    if tape.shape(pred) != tape.shape(target) {
        return Err(AutodiffError::Shape(format!(
            "prediction {:?} vs target {:?}",
            tape.shape(pred),
            tape.shape(target)
        )));
    }
    let diff = tape.sub(pred, target)?;
    let sq = tape.mul(diff, diff)?;
    tape.mean(sq)
}

/// Normalized inputs `[B, P, C]` and normalized targets `[B, F, 1]`.
fn batch_tensors(model: &TimeMixerModel, dataset: &WindowedDataset, indices: &[usize]) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
    let windows: Vec<&[f64]> = indices.iter().map(|&i| dataset.x(i)).collect();
    let (x, stats) = model.prepare_batch(&windows)?;
    let y = indices.iter().zip(&stats).flat_map(|(&i, s)| s.normalize(0, dataset.y(i))).collect();
    Ok((x, y))
}

fn check_dataset(model: &TimeMixerModel, dataset: &WindowedDataset) -> Result<(), TrainError> {
    let c = model.config();
    if dataset.lookback() != c.lookback || dataset.horizon() != c.horizon || dataset.channels() != c.channels {
        return Err(TrainError::Config(format!(
            "dataset (P={}, F={}, C={}) does not match model (P={}, F={}, C={})",
            dataset.lookback(),
            dataset.horizon(),
            dataset.channels(),
            c.lookback,
            c.horizon,
            c.channels
        )));
    }
    Ok(())
}

fn diverged(epoch: usize, batch: usize) -> impl Fn(TrainError) -> TrainError {
    move |e| match e {
        TrainError::Model(ModelError::NonFinite { .. })
        | TrainError::Model(ModelError::Engine(AutodiffError::NonFinite { .. }))
        | TrainError::Engine(AutodiffError::NonFinite { .. }) => TrainError::Diverged { epoch, batch },
        other => other,
    }
}

/// One optimizer step on the samples `indices`; returns the batch loss
/// before the update.
pub fn train_step(
    model: &mut TimeMixerModel,
    state: &mut AdamState,
    adam: &AdamConfig,
    dataset: &WindowedDataset,
    indices: &[usize],
) -> Result<f64, TrainError> {
    let c = model.config().clone();
    let (x, y) = batch_tensors(model, dataset, indices)?;
    let b = indices.len();
    let mut tape = Tape::new();
    let bound = model.params().bind(&mut tape)?;
    let xv = tape.constant(vec![b, c.lookback, c.channels], x)?;
    let yv = tape.constant(vec![b, c.horizon, 1], y)?;
    let pred = model.forward_normalized(&mut tape, &bound, xv)?;
    let loss = mse_loss(&mut tape, pred, yv)?;
    let value = tape.value(loss)[0];
    let grads = tape.backward(loss)?;
    let params = model.params_mut();
    params.zero_grad();
    params.absorb(&bound, &grads)?;
    adam_step(params.tensors_mut(), state, adam)?;
    params.zero_grad();
    Ok(value)
}

/// Loss over `range` on the normalized scale, computed on inference tapes.
/// Also returns how many gradient nodes those tapes recorded.
pub fn evaluate_loss(model: &TimeMixerModel, dataset: &WindowedDataset, range: Range<usize>) -> Result<(f64, usize), ModelError> {
    const CHUNK: usize = 256;
    let c = model.config();
    let idx: Vec<usize> = range.collect();
    let mut total = 0.0;
    let mut count = 0usize;
    let mut recorded = 0;
    for chunk in idx.chunks(CHUNK) {
        let (x, y) = batch_tensors(model, dataset, chunk)?;
        let mut tape = Tape::inference();
        let bound = model.params().bind(&mut tape)?;
        let xv = tape.constant(vec![chunk.len(), c.lookback, c.channels], x)?;
        let pred = model.forward_normalized(&mut tape, &bound, xv)?;
        total += tape.value(pred).iter().zip(&y).map(|(p, t)| (p - t).powi(2)).sum::<f64>();
        count += y.len();
        recorded += tape.recorded_ops();
    }
    Ok((total / count.max(1) as f64, recorded))
}

/// Trains with shuffled mini-batches and validation early stopping.
/// Returns the model holding the best-validation parameters.
pub fn train(mut model: TimeMixerModel, dataset: &WindowedDataset, config: &TrainConfig) -> Result<(TimeMixerModel, TrainReport), TrainError> {
    config.validate()?;
    check_dataset(&model, dataset)?;
    let split = dataset
        .split()
        .ok_or_else(|| TrainError::Config("dataset has not been split".into()))?
        .clone();
    if split.train.is_empty() || split.val.is_empty() {
        return Err(TrainError::Config("train and validation splits must be nonempty".into()));
    }
    let started = Instant::now();
    let adam = config.adam();
    let mut state = AdamState::for_params(model.params().tensors());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = split.train.clone().collect();

    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    let mut since_best = 0;
    let mut val_recorded_ops = 0;
    let mut reason = StoppingReason::MaxEpochs;

    for epoch in 1..=config.max_epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut sum = 0.0;
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            let loss = train_step(&mut model, &mut state, &adam, dataset, chunk).map_err(diverged(epoch, batch))?;
            if !loss.is_finite() {
                return Err(TrainError::Diverged { epoch, batch });
            }
            sum += loss * chunk.len() as f64;
        }
        let train_loss = sum / order.len() as f64;
        let (val_loss, recorded) =
            evaluate_loss(&model, dataset, split.val.clone()).map_err(|e| diverged(epoch, usize::MAX)(e.into()))?;
        val_recorded_ops += recorded;
        epochs.push(EpochLog { epoch, train_loss, val_loss });

        match &best {
            Some((_, b, _)) if val_loss >= *b => since_best += 1,
            _ => {
                best = Some((epoch, val_loss, model.params().flatten()));
                since_best = 0;
            }
        }
        if since_best > config.patience {
            reason = StoppingReason::Patience;
            break;
        }
    }

    let (best_epoch, best_val_loss, flat) = best.expect("at least one epoch ran");
    model.params_mut().assign_flat(&flat)?;
    let report = TrainReport {
        epochs,
        best_epoch,
        best_val_loss,
        stopping_reason: reason,
        wall_time_secs: started.elapsed().as_secs_f64(),
        val_recorded_ops,
    };
    Ok((model, report))
}
