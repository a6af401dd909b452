use std::ops::Range;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{DataError, FeatureFrame};

/// Share of the training split held out for validation (|val| = 10% |train|).
pub const VAL_TO_TRAIN: f64 = 0.10;
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

/// Chronological partition of sample indices.
///
/// Samples between consecutive ranges are purged so that no later sample's
/// lookback reads a time step that an earlier split uses as a target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
    pub gap: usize,
}

/// Sliding `(lookback, horizon)` samples over a feature frame.
///
/// Sample `i` reads rows `i*stride .. i*stride + lookback` as input and the
/// target channel at rows `i*stride + lookback .. + horizon` as output.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    dates: Vec<NaiveDate>,
    data: Vec<f64>,
    target: Vec<f64>,
    channels: usize,
    lookback: usize,
    horizon: usize,
    stride: usize,
    n_samples: usize,
    split: Option<Split>,
}

pub fn make_windows(frame: &FeatureFrame, lookback: usize, horizon: usize, stride: usize) -> Result<WindowedDataset, DataError> {
    if lookback == 0 || horizon == 0 || stride == 0 {
        return Err(DataError::Config(format!(
            "lookback ({lookback}), horizon ({horizon}) and stride ({stride}) must be positive"
        )));
    }
    if frame.channels == 0 || frame.values.len() != frame.len() * frame.channels {
        return Err(DataError::Config("feature frame is malformed".into()));
    }
    let len = frame.len();
    if len < lookback + horizon {
        return Err(DataError::Length(format!(
            "series of length {len} is shorter than lookback {lookback} + horizon {horizon}"
        )));
    }
    let n_samples = (len - lookback - horizon) / stride + 1;
    let target = frame.values.iter().step_by(frame.channels).copied().collect();
    Ok(WindowedDataset {
        dates: frame.dates.clone(),
        data: frame.values.clone(),
        target,
        channels: frame.channels,
        lookback,
        horizon,
        stride,
        n_samples,
        split: None,
    })
}

/// `(train, val, test)` sizes for `n` usable samples: the last
/// `ceil(test_fraction * n)` go to test, and of the remaining `r` the last
/// `round(r / 11)` go to validation so that validation is a tenth of train.
pub fn split_counts(n: usize, test_fraction: f64) -> Result<(usize, usize, usize), DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::Config(format!("test_fraction must be in (0, 1), got {test_fraction}")));
    }
    let test = ((test_fraction * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let rest = n.saturating_sub(test);
    let val = (rest as f64 * VAL_TO_TRAIN / (1.0 + VAL_TO_TRAIN)).round() as usize;
    let train = rest.saturating_sub(val);
    if train == 0 || val == 0 || test == 0 {
        return Err(DataError::Config(format!(
            "{n} usable samples cannot fill train/val/test (got {train}/{val}/{test})"
        )));
    }
    Ok((train, val, test))
}

/// Partitions `dataset` into train, validation and test, earliest first.
pub fn split_chronological(mut dataset: WindowedDataset, test_fraction: f64) -> Result<WindowedDataset, DataError> {
    // purge enough samples that (gap + 1) * stride >= lookback + horizon
    let span = dataset.lookback + dataset.horizon;
    let gap = span.div_ceil(dataset.stride) - 1;
    let usable = dataset.n_samples.checked_sub(2 * gap).ok_or_else(|| {
        DataError::Config(format!(
            "{} samples cannot hold two purge gaps of {gap}",
            dataset.n_samples
        ))
    })?;
    let (train, val, test) = split_counts(usable, test_fraction)?;
    let val_start = train + gap;
    let test_start = val_start + val + gap;
    dataset.split = Some(Split {
        train: 0..train,
        val: val_start..val_start + val,
        test: test_start..test_start + test,
        gap,
    });
    Ok(dataset)
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.n_samples
    }

    pub fn is_empty(&self) -> bool {
        self.n_samples == 0
    }

    pub fn lookback(&self) -> usize {
        self.lookback
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn split(&self) -> Option<&Split> {
        self.split.as_ref()
    }

    pub fn start(&self, i: usize) -> usize {
        i * self.stride
    }

    /// Lookback window of sample `i`, row-major `lookback x channels`.
    pub fn x(&self, i: usize) -> &[f64] {
        let s = self.start(i) * self.channels;
        &self.data[s..s + self.lookback * self.channels]
    }

    /// Target values of sample `i`.
    pub fn y(&self, i: usize) -> &[f64] {
        let s = self.start(i) + self.lookback;
        &self.target[s..s + self.horizon]
    }

    /// Time indices (rows) read by sample `i`'s lookback.
    pub fn x_rows(&self, i: usize) -> Range<usize> {
        self.start(i)..self.start(i) + self.lookback
    }

    /// Time indices (rows) of sample `i`'s targets.
    pub fn y_rows(&self, i: usize) -> Range<usize> {
        let s = self.start(i) + self.lookback;
        s..s + self.horizon
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    /// Target channel over the whole frame.
    pub fn target_series(&self) -> &[f64] {
        &self.target
    }

    /// Date span covered by the targets of `range`.
    pub fn target_date_span(&self, range: &Range<usize>) -> Option<(NaiveDate, NaiveDate)> {
        if range.is_empty() {
            return None;
        }
        let first = self.y_rows(range.start).start;
        let last = self.y_rows(range.end - 1).end - 1;
        Some((self.dates[first], self.dates[last]))
    }
}
