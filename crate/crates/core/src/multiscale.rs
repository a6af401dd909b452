//! Multiscale views of a window and the seasonal/trend split consumed by
//! the mixing blocks.

use crate::autodiff::{Tape, Var};
use crate::model::ModelError;

/// `x_0 .. x_M`, each `[.., floor(T / 2^m), d]`, finest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiscaleSet {
    pub scales: Vec<Var>,
}

impl MultiscaleSet {
    /// Number of downsampling steps `M` (one less than the number of scales).
    pub fn depth(&self) -> usize {
        self.scales.len() - 1
    }

    /// Time length of each scale.
    pub fn lengths(&self, tape: &Tape) -> Vec<usize> {
        self.scales.iter().map(|&v| time_len(tape, v)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecompPair {
    pub seasonal: Var,
    pub trend: Var,
}

fn time_len(tape: &Tape, v: Var) -> usize {
    let s = tape.shape(v);
    s[s.len() - 2]
}

/// Lengths `floor(len / 2^m)` for `m = 0..=depth`.
pub fn scale_lengths(len: usize, depth: usize) -> Vec<usize> {
    (0..=depth).map(|m| len >> m).collect()
}

/// Repeated pairwise average pooling along time. Requires the coarsest
/// scale to keep at least two steps.
pub fn build_multiscale(tape: &mut Tape, x: Var, depth: usize) -> Result<MultiscaleSet, ModelError> {
    if tape.shape(x).len() < 2 {
        return Err(ModelError::Dimension(format!("expected [.., T, d], got {:?}", tape.shape(x))));
    }
    let len = time_len(tape, x);
    if depth >= usize::BITS as usize || (len >> depth) < 2 {
        return Err(ModelError::Config(format!(
            "length {len} is too short for {depth} downsampling steps"
        )));
    }
    let mut scales = Vec::with_capacity(depth + 1);
    scales.push(x);
    for _ in 0..depth {
        let next = tape.avg_pool_halve(*scales.last().unwrap())?;
        scales.push(next);
    }
    Ok(MultiscaleSet { scales })
}

/// `trend = moving_average(x)`, `seasonal = x - trend`.
pub fn series_decomp(tape: &mut Tape, x: Var, kernel: usize) -> Result<DecompPair, ModelError> {
    let trend = tape.moving_average(x, kernel)?;
    let seasonal = tape.sub(x, trend)?;
    Ok(DecompPair { seasonal, trend })
}
