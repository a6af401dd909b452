//! Define-by-run tape. Every op computes its value eagerly, checks it is
//! finite, and (in recording mode) appends a node carrying enough input
//! references to replay the local gradient rule in reverse.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

use super::tensor::check_shape;
use super::{AutodiffError, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Divisor used by [`Tape::variance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Divisor {
    /// Divide by `n`.
    Population,
    /// Divide by `n - 1`.
    Sample,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Linear { x: Var, w: Var, b: Option<Var> },
    Gelu(Var),
    AvgPoolHalve(Var),
    MovingAverage { x: Var, kernel: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Mean(Var),
    SumAxis { x: Var, axis: usize },
    MeanAxis { x: Var, axis: usize },
    Variance { x: Var, axis: Option<usize>, divisor: Divisor },
    Sqrt(Var),
    Transpose(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Record,
    Inference,
}

/// Ordered record of forward operations. Single use: after
/// [`Tape::backward`] the tape is cleared and refuses further work.
#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    mode: Mode,
    consumed: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by one backward pass, indexed by leaf [`Var`].
#[derive(Debug, Default)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradient of `var` (if any) into `tensor`'s grad buffer.
    pub fn accumulate_into(&self, var: Var, tensor: &mut Tensor) -> Result<(), AutodiffError> {
        if let Some(g) = self.get(var) {
            tensor.accumulate_grad(g)?;
        }
        Ok(())
    }
}

/// `(outer, n, inner)` view of `shape` around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut out: Vec<usize> = shape.to_vec();
    out.remove(axis);
    if out.is_empty() {
        out.push(1);
    }
    out
}

fn accumulate(grads: &mut [Option<Vec<f64>>], var: Var, delta: Vec<f64>) {
    match &mut grads[var.0] {
        Some(g) => g.iter_mut().zip(&delta).for_each(|(g, d)| *g += d),
        slot @ None => *slot = Some(delta),
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu_value(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

fn gelu_derivative(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

impl Tape {
    /// A tape that records gradient rules.
    pub fn new() -> Self {
        Self { nodes: Vec::new(), mode: Mode::Record, consumed: false }
    }

    /// A tape that computes values only. No gradient rule is stored and
    /// `backward` is rejected.
    pub fn inference() -> Self {
        Self { nodes: Vec::new(), mode: Mode::Inference, consumed: false }
    }

    pub fn is_recording(&self) -> bool {
        self.mode == Mode::Record
    }

    /// Number of nodes that carry a gradient rule.
    pub fn recorded_ops(&self) -> usize {
        self.nodes.iter().filter(|n| !matches!(n.op, Op::Leaf)).count()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// Copies the value of `v` out as a standalone tensor.
    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("tape nodes hold valid shapes")
    }

    fn ensure_live(&self) -> Result<(), AutodiffError> {
        if self.consumed {
            Err(AutodiffError::TapeConsumed)
        } else {
            Ok(())
        }
    }

    fn push(&mut self, op: &'static str, shape: Vec<usize>, value: Vec<f64>, rule: Op, inputs: &[Var]) -> Result<Var, AutodiffError> {
        if value.iter().any(|v| !v.is_finite()) {
            return Err(AutodiffError::NonFinite { op });
        }
        let requires_grad =
            self.mode == Mode::Record && inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let op = if requires_grad { rule } else { Op::Leaf };
        self.nodes.push(Node { shape, value, op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records `tensor` as a leaf. Gradients flow to it only if the tensor
    /// requires them and the tape is recording.
    pub fn leaf(&mut self, tensor: &Tensor) -> Result<Var, AutodiffError> {
        self.ensure_live()?;
        if tensor.values().iter().any(|v| !v.is_finite()) {
            return Err(AutodiffError::NonFinite { op: "leaf" });
        }
        self.nodes.push(Node {
            shape: tensor.shape().to_vec(),
            value: tensor.values().to_vec(),
            op: Op::Leaf,
            requires_grad: self.mode == Mode::Record && tensor.requires_grad(),
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records a non-differentiable input.
    pub fn constant(&mut self, shape: Vec<usize>, values: Vec<f64>) -> Result<Var, AutodiffError> {
        self.ensure_live()?;
        check_shape(&shape, values.len())?;
        self.push("constant", shape, values, Op::Leaf, &[])
    }

    /// `out[..., j] = sum_i x[..., i] * w[i, j] + b[j]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var, AutodiffError> {
        self.ensure_live()?;
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if ws.len() != 2 {
            return Err(AutodiffError::Shape(format!("linear weight must be 2-d, got {ws:?}")));
        }
        let (n_in, n_out) = (ws[0], ws[1]);
        if *xs.last().unwrap() != n_in {
            return Err(AutodiffError::Shape(format!(
                "linear input {xs:?} does not end in {n_in}"
            )));
        }
        if let Some(b) = b {
            if self.shape(b) != [n_out] {
                return Err(AutodiffError::Shape(format!(
                    "linear bias {:?} does not match width {n_out}",
                    self.shape(b)
                )));
            }
        }
        let rows = self.value(x).len() / n_in;
        let mut out = vec![0.0; rows * n_out];
        if let Some(b) = b {
            let bv = self.value(b);
            out.chunks_exact_mut(n_out).for_each(|row| row.copy_from_slice(bv));
        }
        gemm(self.value(x), (rows, n_in), false, self.value(w), (n_in, n_out), false, &mut out);
        let mut shape = xs;
        *shape.last_mut().unwrap() = n_out;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push("linear", shape, out, Op::Linear { x, w, b }, &inputs)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.ensure_live()?;
        let out = self.value(x).iter().map(|&v| gelu_value(v)).collect();
        self.push("gelu", self.shape(x).to_vec(), out, Op::Gelu(x), &[x])
    }

    /// Averages adjacent pairs along the time axis (second to last). A
    /// trailing odd step is dropped.
    pub fn avg_pool_halve(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.ensure_live()?;
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 {
            return Err(AutodiffError::Shape(format!("pooling needs [.., T, C], got {shape:?}")));
        }
        let axis = shape.len() - 2;
        let (outer, t, c) = split_axis(&shape, axis);
        if t < 2 {
            return Err(AutodiffError::Length(format!("cannot halve a series of length {t}")));
        }
        let half = t / 2;
        let xv = self.value(x);
        let mut out = Vec::with_capacity(outer * half * c);
        for o in 0..outer {
            let base = o * t * c;
            for s in 0..half {
                let a = &xv[base + 2 * s * c..base + (2 * s + 1) * c];
                let b = &xv[base + (2 * s + 1) * c..base + (2 * s + 2) * c];
                out.extend(a.iter().zip(b).map(|(a, b)| (a + b) / 2.0));
            }
        }
        let mut oshape = shape;
        oshape[axis] = half;
        self.push("avg_pool_halve", oshape, out, Op::AvgPoolHalve(x), &[x])
    }

    /// Centered moving average along the time axis with edge replication,
    /// so the output has the same length as the input.
    pub fn moving_average(&mut self, x: Var, kernel: usize) -> Result<Var, AutodiffError> {
        self.ensure_live()?;
        if kernel == 0 || kernel.is_multiple_of(2) {
            return Err(AutodiffError::Parameter(format!(
                "moving-average kernel must be odd and positive, got {kernel}"
            )));
        }
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 {
            return Err(AutodiffError::Shape(format!(
                "moving average needs [.., T, C], got {shape:?}"
            )));
        }
        let (outer, t, c) = split_axis(&shape, shape.len() - 2);
        let half = (kernel - 1) as isize / 2;
        let xv = self.value(x);
        let mut out = vec![0.0; xv.len()];
        let inv = 1.0 / kernel as f64;
        for o in 0..outer {
            let base = o * t * c;
            for s in 0..t {
                let orow = &mut out[base + s * c..base + (s + 1) * c];
                for j in -half..=half {
                    let src = (s as isize + j).clamp(0, t as isize - 1) as usize;
                    let xrow = &xv[base + src * c..base + (src + 1) * c];
                    orow.iter_mut().zip(xrow).for_each(|(o, v)| *o += v);
                }
                orow.iter_mut().for_each(|o| *o *= inv);
            }
        }
        self.push("moving_average", shape, out, Op::MovingAverage { x, kernel }, &[x])
    }

    fn same_shape(&self, a: Var, b: Var, op: &str) -> Result<(), AutodiffError> {
        if self.shape(a) != self.shape(b) {
            return Err(AutodiffError::Shape(format!(
                "{op}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, name: &'static str, rule: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var, AutodiffError> {
        self.ensure_live()?;
        self.same_shape(a, b, name)?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| f(x, y)).collect();
        self.push(name, self.shape(a).to_vec(), out, rule, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_with(a, b, "add", Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_with(a, b, "sub", Op::Sub(a, b), |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.zip_with(a, b, "mul", Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var, AutodiffError> {
        self.ensure_live()?;
        let out = self.value(x).iter().map(|v| v * factor).collect();
        self.push("scale", self.shape(x).to_vec(), out, Op::Scale(x, factor), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.ensure_live()?;
        let s = self.value(x).iter().sum();
        self.push("sum", vec![1], vec![s], Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.ensure_live()?;
        let v = self.value(x);
        let m = v.iter().sum::<f64>() / v.len() as f64;
        self.push("mean", vec![1], vec![m], Op::Mean(x), &[x])
    }

    fn check_axis(&self, x: Var, axis: usize) -> Result<(), AutodiffError> {
        if axis >= self.shape(x).len() {
            return Err(AutodiffError::Shape(format!(
                "axis {axis} out of range for {:?}",
                self.shape(x)
            )));
        }
        Ok(())
    }

    fn axis_sums(&self, x: Var, axis: usize) -> Vec<f64> {
        let (outer, n, inner) = split_axis(self.shape(x), axis);
        let xv = self.value(x);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..n {
                let src = &xv[(o * n + k) * inner..(o * n + k + 1) * inner];
                out[o * inner..(o + 1) * inner].iter_mut().zip(src).for_each(|(a, b)| *a += b);
            }
        }
        out
    }

    /// Sum along `axis`, removing it.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var, AutodiffError> {
        self.ensure_live()?;
        self.check_axis(x, axis)?;
        let out = self.axis_sums(x, axis);
        let shape = reduced_shape(self.shape(x), axis);
        self.push("sum_axis", shape, out, Op::SumAxis { x, axis }, &[x])
    }

    /// Mean along `axis`, removing it.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var, AutodiffError> {
        self.ensure_live()?;
        self.check_axis(x, axis)?;
        let n = self.shape(x)[axis] as f64;
        let out = self.axis_sums(x, axis).into_iter().map(|s| s / n).collect();
        let shape = reduced_shape(self.shape(x), axis);
        self.push("mean_axis", shape, out, Op::MeanAxis { x, axis }, &[x])
    }

    /// Variance over `axis` (or over every element when `None`).
    pub fn variance(&mut self, x: Var, axis: Option<usize>, divisor: Divisor) -> Result<Var, AutodiffError> {
        self.ensure_live()?;
        let shape = self.shape(x).to_vec();
        let (outer, n, inner, oshape) = match axis {
            Some(a) => {
                self.check_axis(x, a)?;
                let (o, n, i) = split_axis(&shape, a);
                (o, n, i, reduced_shape(&shape, a))
            }
            None => (1, self.value(x).len(), 1, vec![1]),
        };
        let denom = match divisor {
            Divisor::Population => n as f64,
            Divisor::Sample if n >= 2 => (n - 1) as f64,
            Divisor::Sample => {
                return Err(AutodiffError::Length("sample variance needs at least two values".into()))
            }
        };
        let xv = self.value(x);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| xv[(o * n + k) * inner + i];
                let mean = (0..n).map(at).sum::<f64>() / n as f64;
                out[o * inner + i] = (0..n).map(|k| (at(k) - mean).powi(2)).sum::<f64>() / denom;
            }
        }
        self.push("variance", oshape, out, Op::Variance { x, axis, divisor }, &[x])
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.ensure_live()?;
        if self.value(x).iter().any(|&v| v < 0.0) {
            return Err(AutodiffError::NonFinite { op: "sqrt" });
        }
        let out = self.value(x).iter().map(|v| v.sqrt()).collect();
        self.push("sqrt", self.shape(x).to_vec(), out, Op::Sqrt(x), &[x])
    }

    /// Swaps the trailing two dimensions.
    pub fn transpose(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.ensure_live()?;
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 {
            return Err(AutodiffError::Shape(format!("transpose needs 2+ dims, got {shape:?}")));
        }
        let (r, c) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        let out = transpose_blocks(self.value(x), r, c);
        let mut oshape = shape;
        let n = oshape.len();
        oshape.swap(n - 2, n - 1);
        self.push("transpose", oshape, out, Op::Transpose(x), &[x])
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, AutodiffError> {
        self.ensure_live()?;
        let first = *inputs
            .first()
            .ok_or_else(|| AutodiffError::Shape("concat of nothing".into()))?;
        self.check_axis(first, axis)?;
        let base = self.shape(first).to_vec();
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let agrees = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !agrees {
                return Err(AutodiffError::Shape(format!("concat: {s:?} vs {base:?} on axis {axis}")));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let n = self.shape(v)[axis];
                out.extend_from_slice(&self.value(v)[o * n * inner..(o + 1) * n * inner]);
            }
        }
        let mut oshape = base;
        oshape[axis] = total;
        self.push("concat", oshape, out, Op::Concat { inputs: inputs.to_vec(), axis }, inputs)
    }

    /// Keeps indices `start..end` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, end: usize) -> Result<Var, AutodiffError> {
        self.ensure_live()?;
        self.check_axis(x, axis)?;
        let shape = self.shape(x).to_vec();
        if start >= end || end > shape[axis] {
            return Err(AutodiffError::Shape(format!(
                "slice {start}..{end} out of range for axis {axis} of {shape:?}"
            )));
        }
        let (outer, n, inner) = split_axis(&shape, axis);
        let xv = self.value(x);
        let mut out = Vec::with_capacity(outer * (end - start) * inner);
        for o in 0..outer {
            out.extend_from_slice(&xv[(o * n + start) * inner..(o * n + end) * inner]);
        }
        let mut oshape = shape;
        oshape[axis] = end - start;
        self.push("slice", oshape, out, Op::Slice { x, axis, start }, &[x])
    }

    /// Replays the tape in reverse from a scalar `loss`. Consumes the tape:
    /// a second call fails with [`AutodiffError::TapeConsumed`].
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, AutodiffError> {
        self.ensure_live()?;
        if self.mode == Mode::Inference {
            return Err(AutodiffError::Contract("backward on an inference tape".into()));
        }
        if self.value(loss).len() != 1 {
            return Err(AutodiffError::Contract(format!(
                "loss must be scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        let nodes = std::mem::take(&mut self.nodes);
        self.consumed = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let node = &nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            backprop_node(&nodes, node, &g, &mut grads);
        }
        for (g, node) in grads.iter_mut().zip(&nodes) {
            if !(node.requires_grad && matches!(node.op, Op::Leaf)) {
                *g = None;
            } else if let Some(v) = g {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(AutodiffError::NonFinite { op: "backward" });
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// `out += op(a) * op(b)` for row-major buffers; `dims` are the stored
/// shapes and the flags transpose before multiplying.
fn gemm(a: &[f64], a_dims: (usize, usize), a_t: bool, b: &[f64], b_dims: (usize, usize), b_t: bool, out: &mut [f64]) {
    let a = ArrayView2::from_shape(a_dims, a).expect("operand a matches its shape");
    let b = ArrayView2::from_shape(b_dims, b).expect("operand b matches its shape");
    let a = if a_t { a.reversed_axes() } else { a };
    let b = if b_t { b.reversed_axes() } else { b };
    let mut c = ArrayViewMut2::from_shape((a.nrows(), b.ncols()), out).expect("output matches its shape");
    general_mat_mul(1.0, &a, &b, 1.0, &mut c);
}

fn transpose_blocks(xv: &[f64], r: usize, c: usize) -> Vec<f64> {
    let blocks = xv.len() / (r * c);
    let mut out = vec![0.0; xv.len()];
    for b in 0..blocks {
        let src = &xv[b * r * c..(b + 1) * r * c];
        let dst = &mut out[b * r * c..(b + 1) * r * c];
        for i in 0..r {
            for j in 0..c {
                dst[j * r + i] = src[i * c + j];
            }
        }
    }
    out
}

fn needs(nodes: &[Node], v: Var) -> bool {
    nodes[v.0].requires_grad
}

fn backprop_node(nodes: &[Node], node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let val = |v: Var| nodes[v.0].value.as_slice();
    let shape = |v: Var| nodes[v.0].shape.as_slice();
    match &node.op {
        Op::Leaf => {}
        Op::Linear { x, w, b } => {
            let ws = shape(*w);
            let (n_in, n_out) = (ws[0], ws[1]);
            let xv = val(*x);
            let rows = xv.len() / n_in;
            if needs(nodes, *x) {
                let mut dx = vec![0.0; xv.len()];
                gemm(g, (rows, n_out), false, val(*w), (n_in, n_out), true, &mut dx);
                accumulate(grads, *x, dx);
            }
            if needs(nodes, *w) {
                let mut dw = vec![0.0; n_in * n_out];
                gemm(xv, (rows, n_in), true, g, (rows, n_out), false, &mut dw);
                accumulate(grads, *w, dw);
            }
            if let Some(b) = b {
                if needs(nodes, *b) {
                    let mut db = vec![0.0; n_out];
                    for r in 0..rows {
                        db.iter_mut().zip(&g[r * n_out..(r + 1) * n_out]).for_each(|(d, gj)| *d += gj);
                    }
                    accumulate(grads, *b, db);
                }
            }
        }
        Op::Gelu(x) => {
            let dx = val(*x).iter().zip(g).map(|(&v, gi)| gelu_derivative(v) * gi).collect();
            accumulate(grads, *x, dx);
        }
        Op::AvgPoolHalve(x) => {
            let xs = shape(*x);
            let (outer, t, c) = split_axis(xs, xs.len() - 2);
            let half = t / 2;
            let mut dx = vec![0.0; val(*x).len()];
            for o in 0..outer {
                for s in 0..half {
                    for k in 0..c {
                        let gi = g[(o * half + s) * c + k] / 2.0;
                        dx[(o * t + 2 * s) * c + k] += gi;
                        dx[(o * t + 2 * s + 1) * c + k] += gi;
                    }
                }
            }
            accumulate(grads, *x, dx);
        }
        Op::MovingAverage { x, kernel } => {
            let xs = shape(*x);
            let (outer, t, c) = split_axis(xs, xs.len() - 2);
            let half = (*kernel - 1) as isize / 2;
            let inv = 1.0 / *kernel as f64;
            let mut dx = vec![0.0; val(*x).len()];
            for o in 0..outer {
                let base = o * t * c;
                for s in 0..t {
                    let grow = &g[base + s * c..base + (s + 1) * c];
                    for j in -half..=half {
                        let src = (s as isize + j).clamp(0, t as isize - 1) as usize;
                        dx[base + src * c..base + (src + 1) * c]
                            .iter_mut()
                            .zip(grow)
                            .for_each(|(d, gi)| *d += gi * inv);
                    }
                }
            }
            accumulate(grads, *x, dx);
        }
        Op::Add(a, b) => {
            if needs(nodes, *a) {
                accumulate(grads, *a, g.to_vec());
            }
            if needs(nodes, *b) {
                accumulate(grads, *b, g.to_vec());
            }
        }
        Op::Sub(a, b) => {
            if needs(nodes, *a) {
                accumulate(grads, *a, g.to_vec());
            }
            if needs(nodes, *b) {
                accumulate(grads, *b, g.iter().map(|v| -v).collect());
            }
        }
        Op::Mul(a, b) => {
            if needs(nodes, *a) {
                accumulate(grads, *a, g.iter().zip(val(*b)).map(|(gi, bi)| gi * bi).collect());
            }
            if needs(nodes, *b) {
                accumulate(grads, *b, g.iter().zip(val(*a)).map(|(gi, ai)| gi * ai).collect());
            }
        }
        Op::Scale(x, f) => accumulate(grads, *x, g.iter().map(|gi| gi * f).collect()),
        Op::Sum(x) => accumulate(grads, *x, vec![g[0]; val(*x).len()]),
        Op::Mean(x) => {
            let n = val(*x).len();
            accumulate(grads, *x, vec![g[0] / n as f64; n]);
        }
        Op::SumAxis { x, axis } | Op::MeanAxis { x, axis } => {
            let (outer, n, inner) = split_axis(shape(*x), *axis);
            let f = if matches!(node.op, Op::MeanAxis { .. }) { 1.0 / n as f64 } else { 1.0 };
            let mut dx = vec![0.0; outer * n * inner];
            for o in 0..outer {
                for k in 0..n {
                    dx[(o * n + k) * inner..(o * n + k + 1) * inner]
                        .iter_mut()
                        .zip(&g[o * inner..(o + 1) * inner])
                        .for_each(|(d, gi)| *d = gi * f);
                }
            }
            accumulate(grads, *x, dx);
        }
        Op::Variance { x, axis, divisor } => {
            let xv = val(*x);
            let (outer, n, inner) = match axis {
                Some(a) => split_axis(shape(*x), *a),
                None => (1, xv.len(), 1),
            };
            let denom = match divisor {
                Divisor::Population => n as f64,
                Divisor::Sample => (n - 1) as f64,
            };
            let mut dx = vec![0.0; xv.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let idx = |k: usize| (o * n + k) * inner + i;
                    let mean = (0..n).map(|k| xv[idx(k)]).sum::<f64>() / n as f64;
                    let gi = g[o * inner + i];
                    for k in 0..n {
                        dx[idx(k)] = gi * 2.0 * (xv[idx(k)] - mean) / denom;
                    }
                }
            }
            accumulate(grads, *x, dx);
        }
        Op::Sqrt(x) => {
            let dx = node.value.iter().zip(g).map(|(y, gi)| gi / (2.0 * y)).collect();
            accumulate(grads, *x, dx);
        }
        Op::Transpose(x) => {
            let s = &node.shape;
            let (r, c) = (s[s.len() - 2], s[s.len() - 1]);
            accumulate(grads, *x, transpose_blocks(g, r, c));
        }
        Op::Concat { inputs, axis } => {
            let outer: usize = node.shape[..*axis].iter().product();
            let inner: usize = node.shape[axis + 1..].iter().product();
            let total = node.shape[*axis];
            let mut offset = 0;
            for &v in inputs {
                let n = shape(v)[*axis];
                if needs(nodes, v) {
                    let mut dx = Vec::with_capacity(outer * n * inner);
                    for o in 0..outer {
                        let start = (o * total + offset) * inner;
                        dx.extend_from_slice(&g[start..start + n * inner]);
                    }
                    accumulate(grads, v, dx);
                }
                offset += n;
            }
        }
        Op::Slice { x, axis, start } => {
            let (outer, n, inner) = split_axis(shape(*x), *axis);
            let len = node.shape[*axis];
            let mut dx = vec![0.0; outer * n * inner];
            for o in 0..outer {
                dx[(o * n + start) * inner..(o * n + start + len) * inner]
                    .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            accumulate(grads, *x, dx);
        }
    }
}
