use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Gradients, Tape, Tensor, Var};

use super::ModelError;

/// Index of a tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Flat, ordered, named parameter storage.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

impl ParamStore {
    pub(crate) fn push(&mut self, name: String, tensor: Tensor) -> ParamId {
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, drawn from a stream
    /// keyed by `(seed, name)` so a tensor's initial values do not depend
    /// on which other tensors exist.
    pub(crate) fn uniform(&mut self, name: String, shape: Vec<usize>, fan_in: usize, seed: u64) -> ParamId {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ fnv1a(&name));
        let n = shape.iter().product();
        let values = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        self.push(name, Tensor::parameter(shape, values).expect("shape matches"))
    }

    pub(crate) fn zeros(&mut self, name: String, shape: Vec<usize>) -> ParamId {
        let n = shape.iter().product();
        self.push(name, Tensor::parameter(shape, vec![0.0; n]).expect("shape matches"))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// Every scalar, concatenated in store order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.values().iter().copied()).collect()
    }

    /// Inverse of [`ParamStore::flatten`].
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<(), ModelError> {
        if flat.len() != self.numel() {
            return Err(ModelError::Dimension(format!(
                "{} values for {} parameters",
                flat.len(),
                self.numel()
            )));
        }
        let mut at = 0;
        for t in &mut self.tensors {
            let n = t.len();
            t.values_mut().copy_from_slice(&flat[at..at + n]);
            at += n;
        }
        Ok(())
    }

    /// Records every tensor as a leaf; the returned vars are indexed like
    /// the store.
    pub fn bind(&self, tape: &mut Tape) -> Result<Vec<Var>, ModelError> {
        self.tensors.iter().map(|t| tape.leaf(t).map_err(ModelError::from)).collect()
    }

    /// Adds the gradients of `bound` into each tensor's grad buffer.
    pub fn absorb(&mut self, bound: &[Var], grads: &Gradients) -> Result<(), ModelError> {
        for (t, &v) in self.tensors.iter_mut().zip(bound) {
            grads.accumulate_into(v, t)?;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }
}

/// `y = x W (+ b)` over the trailing axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearLayer {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl LinearLayer {
    pub(crate) fn new(store: &mut ParamStore, name: &str, n_in: usize, n_out: usize, bias: bool, seed: u64) -> Self {
        let weight = store.uniform(format!("{name}.weight"), vec![n_in, n_out], n_in, seed);
        let bias = bias.then(|| store.zeros(format!("{name}.bias"), vec![n_out]));
        Self { weight, bias }
    }

    pub fn apply(&self, tape: &mut Tape, bound: &[Var], x: Var) -> Result<Var, ModelError> {
        let b = self.bias.map(|b| bound[b.0]);
        Ok(tape.linear(x, bound[self.weight.0], b)?)
    }

    /// Applies the map along the time axis of `[.., T, d]`, shared across
    /// channels.
    pub fn apply_time(&self, tape: &mut Tape, bound: &[Var], x: Var) -> Result<Var, ModelError> {
        let xt = tape.transpose(x)?;
        let y = self.apply(tape, bound, xt)?;
        Ok(tape.transpose(y)?)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        std::iter::once(self.weight).chain(self.bias)
    }

    /// Sets weight and bias to zero.
    pub fn zero(&self, store: &mut ParamStore) {
        for id in self.ids() {
            store.get_mut(id).values_mut().fill(0.0);
        }
    }
}

/// Two-layer channel MLP with GELU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeedForward {
    pub fc1: LinearLayer,
    pub fc2: LinearLayer,
}

impl FeedForward {
    pub fn apply(&self, tape: &mut Tape, bound: &[Var], x: Var) -> Result<Var, ModelError> {
        let h = self.fc1.apply(tape, bound, x)?;
        let h = tape.gelu(h)?;
        self.fc2.apply(tape, bound, h)
    }
}
