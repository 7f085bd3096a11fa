//! Small feedforward networks with a scalar output.
//!
//! A net is a chain of affine layers, each followed by an activation; the
//! last activation is the identity. Inputs pass through a fixed affine
//! normalization first, so the trainers always see `z ∈ [-1, 1]` for
//! points of the spatial domain. The optimizers live in [`train`].

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::{Error, Result};

pub mod train;

pub use train::{fit, levenberg_marquardt, loss_and_gradient, Evidence, Optimizer, TrainConfig, TrainReport};

/// Activation applied after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    /// Sort consecutive groups of the given size in decreasing order.
    GroupSort(usize),
    Identity,
}

/// Dense layer `w z + b`; `weights` is row-major `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs], activation }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.inputs..(i + 1) * self.inputs]
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Constants of the Lipschitz wrapper `Ψ(x) = γβ Φ((x + α) / β)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzScaling {
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub zeta: f64,
}

/// Feedforward network `R^d -> R`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedforwardNet {
    layers: Vec<Layer>,
    /// Input normalization `z = (x - shift) * scale`, per input coordinate.
    shift: Vec<f64>,
    scale: Vec<f64>,
    pub scaling: Option<LipschitzScaling>,
}

/// Sorts each block of `group` entries of `v` in decreasing order.
pub fn groupsort(v: &mut [f64], group: usize) -> Result<()> {
    if group == 0 || v.len() % group != 0 {
        return Err(Error::GroupSize { len: v.len(), group });
    }
    for block in v.chunks_exact_mut(group) {
        block.sort_unstable_by(|a, b| b.total_cmp(a));
    }
    Ok(())
}

impl FeedforwardNet {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        let first = layers.first().ok_or_else(|| Error::InvalidConfig("a net needs a layer".into()))?;
        let d = first.inputs;
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::DimensionMismatch { expected: pair[0].outputs, found: pair[1].inputs });
            }
        }
        for layer in &layers {
            if layer.weights.len() != layer.inputs * layer.outputs || layer.bias.len() != layer.outputs {
                return Err(Error::DimensionMismatch {
                    expected: layer.inputs * layer.outputs,
                    found: layer.weights.len(),
                });
            }
            if let Activation::GroupSort(s) = layer.activation {
                if s == 0 || layer.outputs % s != 0 {
                    return Err(Error::GroupSize { len: layer.outputs, group: s });
                }
            }
        }
        let last = layers.last().expect("non-empty");
        if last.outputs != 1 || last.activation != Activation::Identity {
            return Err(Error::InvalidConfig("the output layer must be a single identity unit".into()));
        }
        Ok(Self { layers, shift: vec![0.0; d], scale: vec![1.0; d], scaling: None })
    }

    /// One hidden layer of `hidden` units on a scalar input, weights drawn
    /// uniformly from `±1/√fan_in`.
    pub fn shallow<R: Rng>(hidden: usize, activation: Activation, rng: &mut R) -> Result<Self> {
        let mut first = Layer::zeros(1, hidden, activation);
        let mut out = Layer::zeros(hidden, 1, Activation::Identity);
        for layer in [&mut first, &mut out] {
            let r = 1.0 / libm::sqrt(layer.inputs as f64);
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = rng.gen_range(-r..=r);
            }
        }
        Self::new(vec![first, out])
    }

    /// Zeroes the output weights and sets the output bias to `c`, so the
    /// net starts as the constant `c`.
    pub fn with_constant_output(mut self, c: f64) -> Self {
        let last = self.layers.last_mut().expect("non-empty");
        last.weights.iter_mut().for_each(|w| *w = 0.0);
        last.bias[0] = c;
        self
    }

    /// Maps the interval `[lo, hi]` of a scalar input onto `[-1, 1]`.
    pub fn with_input_range(mut self, lo: f64, hi: f64) -> Self {
        self.shift = vec![0.5 * (lo + hi)];
        self.scale = vec![if hi > lo { 2.0 / (hi - lo) } else { 1.0 }];
        self
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    pub fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_count() {
            return Err(Error::DimensionMismatch { expected: self.param_count(), found: theta.len() });
        }
        let mut at = 0;
        for layer in &mut self.layers {
            let w = layer.weights.len();
            layer.weights.copy_from_slice(&theta[at..at + w]);
            at += w;
            let b = layer.bias.len();
            layer.bias.copy_from_slice(&theta[at..at + b]);
            at += b;
        }
        Ok(())
    }

    /// Network output at a point of `R^d`.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), found: x.len() });
        }
        let mut z: Vec<f64> = x.iter().zip(&self.shift).zip(&self.scale).map(|((x, c), s)| (x - c) * s).collect();
        let mut next = Vec::new();
        for layer in &self.layers {
            affine(layer, &z, &mut next);
            activate(layer.activation, &mut next);
            core::mem::swap(&mut z, &mut next);
        }
        Ok(z[0])
    }

    /// Scalar-input forward pass without allocation for shallow nets.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let z = (x - self.shift[0]) * self.scale[0];
        if let [hidden, out] = &self.layers[..] {
            if hidden.activation == Activation::Tanh && hidden.inputs == 1 {
                let mut acc = out.bias[0];
                for ((w, b), v) in hidden.weights.iter().zip(&hidden.bias).zip(&out.weights) {
                    acc += v * libm::tanh(w * z + b);
                }
                return acc;
            }
        }
        self.forward(&[x]).expect("scalar net")
    }

    /// `γβ Φ((x + α) / β)` when Lipschitz scaling metadata is attached,
    /// the raw output otherwise.
    pub fn eval_scaled(&self, x: f64) -> f64 {
        match self.scaling {
            Some(s) => s.gamma * s.beta * self.eval((x + s.alpha) / s.beta),
            None => self.eval(x),
        }
    }

    /// Output and its gradient with respect to the parameters at `x`.
    pub fn gradient(&self, x: f64, grad: &mut [f64]) -> f64 {
        let z0 = (x - self.shift[0]) * self.scale[0];
        if let [hidden, out] = &self.layers[..] {
            if hidden.activation == Activation::Tanh && hidden.inputs == 1 {
                let k = hidden.outputs;
                let (gw0, rest) = grad.split_at_mut(k);
                let (gb0, rest) = rest.split_at_mut(k);
                let (gw1, gb1) = rest.split_at_mut(k);
                let mut acc = out.bias[0];
                for j in 0..k {
                    let a = libm::tanh(hidden.weights[j] * z0 + hidden.bias[j]);
                    acc += out.weights[j] * a;
                    let d = out.weights[j] * (1.0 - a * a);
                    gw0[j] = d * z0;
                    gb0[j] = d;
                    gw1[j] = a;
                }
                gb1[0] = 1.0;
                return acc;
            }
        }
        self.backprop(&[z0], grad)
    }

    fn backprop(&self, z0: &[f64], grad: &mut [f64]) -> f64 {
        let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut derivs: Vec<Derivative> = Vec::with_capacity(self.layers.len());
        let mut z = z0.to_vec();
        for layer in &self.layers {
            let mut pre = Vec::new();
            affine(layer, &z, &mut pre);
            let d = derivative(layer.activation, &mut pre);
            inputs.push(core::mem::replace(&mut z, pre));
            derivs.push(d);
        }
        let output = z[0];
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut at = 0;
        for layer in &self.layers {
            offsets.push(at);
            at += layer.param_count();
        }
        let mut delta = vec![1.0];
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let pre_delta = derivs[k].pull_back(&delta);
            let base = offsets[k];
            let input = &inputs[k];
            for i in 0..layer.outputs {
                for j in 0..layer.inputs {
                    grad[base + i * layer.inputs + j] = pre_delta[i] * input[j];
                }
                grad[base + layer.weights.len() + i] = pre_delta[i];
            }
            let mut back = vec![0.0; layer.inputs];
            for (i, d) in pre_delta.iter().enumerate() {
                for (b, w) in back.iter_mut().zip(layer.row(i)) {
                    *b += w * d;
                }
            }
            delta = back;
        }
        output
    }

    /// Rescales weights to `|w⁰|_{2,∞} <= 1` (largest row 2-norm) and
    /// `|wⁱ|_∞ <= 1` (largest row 1-norm), and clips biases to `[-ζ, ζ]`.
    pub fn lipschitz_project(mut self, zeta: f64) -> Self {
        for (k, layer) in self.layers.iter_mut().enumerate() {
            let norm = (0..layer.outputs)
                .map(|i| {
                    let row = layer.row(i);
                    if k == 0 {
                        libm::sqrt(row.iter().map(|w| w * w).sum())
                    } else {
                        row.iter().map(|w| w.abs()).sum()
                    }
                })
                .fold(0.0f64, f64::max);
            if norm > 1.0 {
                layer.weights.iter_mut().for_each(|w| *w /= norm);
            }
            layer.bias.iter_mut().for_each(|b| *b = b.clamp(-zeta, zeta));
        }
        self
    }
}

fn affine(layer: &Layer, z: &[f64], out: &mut Vec<f64>) {
    out.clear();
    out.extend((0..layer.outputs).map(|i| {
        layer.bias[i] + layer.row(i).iter().zip(z).map(|(w, v)| w * v).sum::<f64>()
    }));
}

fn activate(activation: Activation, v: &mut [f64]) {
    match activation {
        Activation::Tanh => v.iter_mut().for_each(|x| *x = libm::tanh(*x)),
        Activation::GroupSort(s) => groupsort(v, s).expect("validated group size"),
        Activation::Identity => {}
    }
}

enum Derivative {
    Diagonal(Vec<f64>),
    /// `out[i] = pre[perm[i]]`.
    Permutation(Vec<usize>),
}

impl Derivative {
    fn pull_back(&self, delta: &[f64]) -> Vec<f64> {
        match self {
            Derivative::Diagonal(d) => d.iter().zip(delta).map(|(a, b)| a * b).collect(),
            Derivative::Permutation(perm) => {
                let mut out = vec![0.0; delta.len()];
                for (i, &p) in perm.iter().enumerate() {
                    out[p] = delta[i];
                }
                out
            }
        }
    }
}

/// Applies the activation in place and returns its derivative.
fn derivative(activation: Activation, v: &mut [f64]) -> Derivative {
    match activation {
        Activation::Tanh => {
            let mut d = Vec::with_capacity(v.len());
            for x in v.iter_mut() {
                *x = libm::tanh(*x);
                d.push(1.0 - *x * *x);
            }
            Derivative::Diagonal(d)
        }
        Activation::Identity => Derivative::Diagonal(vec![1.0; v.len()]),
        Activation::GroupSort(s) => {
            let mut perm: Vec<usize> = (0..v.len()).collect();
            for block in perm.chunks_exact_mut(s) {
                block.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
            }
            let sorted: Vec<f64> = perm.iter().map(|&p| v[p]).collect();
            v.copy_from_slice(&sorted);
            Derivative::Permutation(perm)
        }
    }
}
