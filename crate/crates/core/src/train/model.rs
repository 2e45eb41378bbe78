use alloc::vec::Vec;

use rand::Rng;

use super::tensor::Matrix;
use crate::error::{bail, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    Relu,
    /// Output layer: emits logits; the softmax lives in the loss.
    Softmax,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DenseLayer {
    /// `inputs x outputs`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.cols() {
            bail!(Shape, "bias of {} for {} outputs", bias.len(), weights.cols());
        }
        Ok(Self { weights, bias, activation })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let a = math::sqrt(6.0 / (inputs + outputs) as f64);
        let data = (0..inputs * outputs).map(|_| rng.random_range(-a..a)).collect();
        Self {
            weights: Matrix::from_vec(inputs, outputs, data).unwrap_or_else(|_| Matrix::zeros(inputs, outputs)),
            bias: alloc::vec![0.0; outputs],
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn param_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.len()
    }
}

/// Gradients of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Activations cached by a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    inputs: Vec<Matrix>,
    pre: Vec<Matrix>,
    pub output: Matrix,
}

/// A chain of dense layers: a whole network or one side of a split.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Stack {
    pub layers: Vec<DenseLayer>,
}

impl Stack {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].outputs() != w[1].inputs() {
                bail!(Shape, "layer {} emits {} values but layer {} takes {}", i + 1, w[0].outputs(), i + 2, w[1].inputs());
            }
        }
        Ok(Self { layers })
    }

    /// `widths[0]` inputs, relu hidden layers, logits output of `widths.last()`.
    pub fn init<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Self {
        let n = widths.len().saturating_sub(1);
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { Activation::Softmax } else { Activation::Relu };
                DenseLayer::init(widths[i], widths[i + 1], act, rng)
            })
            .collect();
        Self { layers }
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    /// Layer-major parameters: each layer's row-major weights, then its bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weights.as_mut_slice().iter_mut().chain(l.bias.iter_mut()))
    }

    fn same_shape(&self, other: &Stack) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.inputs() == b.inputs() && a.outputs() == b.outputs() && a.activation == b.activation
            })
    }

    pub fn forward(&self, x: &Matrix) -> Result<Trace> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            if h.cols() != l.inputs() {
                bail!(Shape, "layer {} expects {} inputs, got {}", i + 1, l.inputs(), h.cols());
            }
            let mut z = h.matmul(&l.weights)?;
            for r in 0..z.rows() {
                for (c, b) in l.bias.iter().enumerate() {
                    z.set(r, c, z.get(r, c) + b);
                }
            }
            let out = match l.activation {
                Activation::Relu => z.map(|v| v.max(0.0)),
                Activation::Softmax => z.clone(),
            };
            inputs.push(h);
            pre.push(z);
            h = out;
        }
        Ok(Trace { inputs, pre, output: h })
    }

    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(x)?.output)
    }

    /// Gradients given `dL/d output`; also returns `dL/d input`.
    pub fn backward(&self, trace: &Trace, grad_out: &Matrix) -> Result<(Vec<LayerGrad>, Matrix)> {
        if grad_out.rows() != trace.output.rows() || grad_out.cols() != trace.output.cols() {
            bail!(
                Shape,
                "output gradient is {}x{}, output is {}x{}",
                grad_out.rows(),
                grad_out.cols(),
                trace.output.rows(),
                trace.output.cols()
            );
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.clone();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let dz = match l.activation {
                Activation::Relu => {
                    let mut dz = g;
                    for (d, z) in dz.as_mut_slice().iter_mut().zip(trace.pre[i].as_slice()) {
                        if *z <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    dz
                }
                Activation::Softmax => g,
            };
            let dw = trace.inputs[i].t_matmul(&dz)?;
            let db = dz.col_sums();
            g = dz.matmul_t(&l.weights)?;
            grads.push(LayerGrad { weights: dw, bias: db });
        }
        grads.reverse();
        Ok((grads, g))
    }

    /// Plain SGD step.
    pub fn apply(&mut self, grads: &[LayerGrad], lr: f64) -> Result<()> {
        if grads.len() != self.layers.len() {
            bail!(Shape, "{} layer gradients for {} layers", grads.len(), self.layers.len());
        }
        for (l, g) in self.layers.iter_mut().zip(grads) {
            if g.weights.rows() != l.inputs() || g.weights.cols() != l.outputs() || g.bias.len() != l.outputs() {
                bail!(Shape, "gradient shape does not match its layer");
            }
            for (w, d) in l.weights.as_mut_slice().iter_mut().zip(g.weights.as_slice()) {
                *w -= lr * d;
            }
            for (b, d) in l.bias.iter_mut().zip(&g.bias) {
                *b -= lr * d;
            }
        }
        Ok(())
    }

    /// Splits after layer `v` (1-based): layers `1..=v` form the device part.
    pub fn split(self, v: usize) -> Result<SplitModel> {
        if v == 0 || v > self.layers.len() {
            bail!(Domain, "cut {} outside 1..={}", v, self.layers.len());
        }
        let mut device = self.layers;
        let server = device.split_off(v);
        Ok(SplitModel { device: Stack { layers: device }, server: Stack { layers: server } })
    }
}

/// A network cut into its device-side and server-side parts.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitModel {
    pub device: Stack,
    pub server: Stack,
}

impl SplitModel {
    pub fn cut(&self) -> usize {
        self.device.len()
    }

    pub fn merge(self) -> Stack {
        let mut layers = self.device.layers;
        layers.extend(self.server.layers);
        Stack { layers }
    }
}

/// Mean negative log-likelihood of softmax(`logits`) and its gradient
/// w.r.t. the logits, with every row weighted by `1 / norm`.
pub fn nll_loss(logits: &Matrix, labels: &[usize], norm: f64) -> Result<(f64, Matrix)> {
    if labels.len() != logits.rows() {
        bail!(Shape, "{} labels for {} rows", labels.len(), logits.rows());
    }
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut total = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        if y >= logits.cols() {
            bail!(Shape, "label {} outside {} classes", y, logits.cols());
        }
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|z| math::exp(z - max)).sum();
        let log_z = max + math::ln(sum);
        total += log_z - row[y];
        for (c, z) in row.iter().enumerate() {
            let p = math::exp(z - log_z);
            let target = if c == y { 1.0 } else { 0.0 };
            grad.set(r, c, (p - target) / norm);
        }
    }
    Ok((total / norm, grad))
}

/// Fraction of rows whose arg-max logit equals the label.
pub fn accuracy(logits: &Matrix, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(r, &y)| {
            let row = logits.row(r);
            let mut best = 0;
            for (c, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = c;
                }
            }
            best == y
        })
        .count();
    hits as f64 / labels.len() as f64
}

/// Weighted parameter-wise average `sum_k a_k w_k` with `a_k = weights_k / sum(weights)`.
///
/// Computed as `w_1 + sum_k a_k (w_k - w_1)`, so identical inputs come back
/// unchanged bit for bit.
pub fn fedavg(models: &[Stack], weights: &[f64]) -> Result<Stack> {
    let Some(first) = models.first() else {
        bail!(Validation, "nothing to aggregate");
    };
    if weights.len() != models.len() {
        bail!(Validation, "{} weights for {} models", weights.len(), models.len());
    }
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        bail!(Validation, "aggregation weights must be positive");
    }
    if let Some(i) = models.iter().position(|m| !first.same_shape(m)) {
        bail!(Shape, "model {} has a different architecture", i);
    }
    let total: f64 = weights.iter().sum();
    let base = first.flatten();
    let mut out = first.clone();
    let others: Vec<Vec<f64>> = models.iter().map(Stack::flatten).collect();
    for (i, p) in out.params_mut().enumerate() {
        let mut delta = 0.0;
        for (m, w) in others.iter().zip(weights) {
            delta += (w / total) * (m[i] - base[i]);
        }
        *p = base[i] + delta;
    }
    Ok(out)
}
