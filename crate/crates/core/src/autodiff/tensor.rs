use serde::{Deserialize, Serialize};

use super::AutodiffError;

/// Dense row-major `f64` array with an optional gradient buffer.
///
/// Parameters live as `Tensor`s outside any tape; a [`Tape`](super::Tape)
/// copies their values in when they are bound and hands gradients back
/// after `backward`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    requires_grad: bool,
    #[serde(skip)]
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, AutodiffError> {
        check_shape(&shape, values.len())?;
        Ok(Self { shape, values, requires_grad: false, grad: None })
    }

    /// Same as [`Tensor::new`] but marked as a trainable parameter.
    pub fn parameter(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, AutodiffError> {
        let mut t = Self::new(shape, values)?;
        t.requires_grad = true;
        Ok(t)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, values: vec![0.0; n], requires_grad: false, grad: None }
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: vec![1], values: vec![value], requires_grad: false, grad: None }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, on: bool) {
        self.requires_grad = on;
        if !on {
            self.grad = None;
        }
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Adds `delta` into the gradient buffer, allocating it on first use.
    pub fn accumulate_grad(&mut self, delta: &[f64]) -> Result<(), AutodiffError> {
        if delta.len() != self.values.len() {
            return Err(AutodiffError::Shape(format!(
                "gradient of length {} for tensor of length {}",
                delta.len(),
                self.values.len()
            )));
        }
        match &mut self.grad {
            Some(g) => g.iter_mut().zip(delta).for_each(|(g, d)| *g += d),
            None => self.grad = Some(delta.to_vec()),
        }
        Ok(())
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

pub(crate) fn check_shape(shape: &[usize], len: usize) -> Result<(), AutodiffError> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(AutodiffError::Shape(format!("invalid shape {shape:?}")));
    }
    let n: usize = shape.iter().product();
    if n != len {
        return Err(AutodiffError::Shape(format!(
            "shape {shape:?} holds {n} values, got {len}"
        )));
    }
    Ok(())
}
