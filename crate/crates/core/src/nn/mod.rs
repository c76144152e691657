//! Small deterministic feed-forward classifiers.
//!
//! The model family is a dense MLP `x ↦ logits ∈ ℝᵏ` with softmax readout.
//! Everything downstream (variability estimation, bounds, model selection)
//! treats a classifier purely through its *tie set* at a point: the set of
//! classes attaining the maximum output. Off the decision boundary the tie
//! set is a singleton; on it, prediction is a uniform draw from the set.
//!
//! All arithmetic is `f64` and every stochastic operation takes an explicit
//! RNG, so identical seeds and inputs give bit-identical results.

mod attack;
mod checkpoint;

pub use attack::pgd_attack;
pub use checkpoint::{load_checkpoint, save_checkpoint, ModelCheckpoint, CHECKPOINT_FORMAT_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprinter;

/// Hidden-layer activation function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation *output*.
    ///
    /// For relu the subgradient at 0 is taken to be 0.
    #[inline]
    fn derivative_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
        }
    }
}

/// Architecture of a dense classifier: layer widths from input to logits.
///
/// `layer_widths = [n, h₁, …, k]` describes a network `ℝⁿ → ℝᵏ`. Hidden
/// layers use `activation`; the final layer is linear (softmax is applied by
/// [`forward`]).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, activation: Activation) -> Result<Self> {
        let spec = MlpSpec {
            layer_widths,
            activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::invalid(
                "spec needs at least an input and an output width",
            ));
        }
        if self.layer_widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid("all layer widths must be >= 1"));
        }
        if self.n_classes() < 2 {
            return Err(Error::invalid("output width (class count) must be >= 2"));
        }
        Ok(())
    }

    #[inline]
    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    #[inline]
    pub fn n_classes(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    /// Total number of scalar parameters (weights + biases).
    pub fn n_params(&self) -> usize {
        self.layer_widths
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

/// One dense layer: row-major `(out_dim, in_dim)` weights plus bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        DenseLayer {
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }
}

/// Parameters of an [`MlpSpec`]-shaped network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<DenseLayer>,
}

/// Partial derivatives of a scalar loss, shaped like [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<DenseLayer>,
}

/// SGD momentum state, shaped like [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumBuffer {
    pub layers: Vec<DenseLayer>,
}

impl MlpParams {
    /// All-zero parameters for `spec`.
    pub fn zeros(spec: &MlpSpec) -> Self {
        MlpParams {
            layers: layer_dims(spec)
                .map(|(i, o)| DenseLayer::zeros(i, o))
                .collect(),
        }
    }

    /// Glorot-uniform weights in `±√(6/(fan_in+fan_out))`, zero biases.
    pub fn glorot_init<R: rand::Rng>(spec: &MlpSpec, rng: &mut R) -> Self {
        let layers = layer_dims(spec)
            .map(|(in_dim, out_dim)| {
                let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
                let weights = (0..in_dim * out_dim)
                    .map(|_| rng.random_range(-limit..limit))
                    .collect();
                DenseLayer {
                    weights,
                    bias: vec![0.0; out_dim],
                }
            })
            .collect();
        MlpParams { layers }
    }

    /// Checks that shapes match `spec` and every entry is finite.
    pub fn validate_for(&self, spec: &MlpSpec) -> Result<()> {
        if self.layers.len() != spec.n_layers() {
            return Err(Error::contract(format!(
                "params have {} layers, spec expects {}",
                self.layers.len(),
                spec.n_layers()
            )));
        }
        for (layer, (in_dim, out_dim)) in self.layers.iter().zip(layer_dims(spec)) {
            if layer.weights.len() != in_dim * out_dim || layer.bias.len() != out_dim {
                return Err(Error::contract("layer shape does not match spec"));
            }
            if layer
                .weights
                .iter()
                .chain(layer.bias.iter())
                .any(|v| !v.is_finite())
            {
                return Err(Error::contract("non-finite parameter entry"));
            }
        }
        Ok(())
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Parameters flattened in layer order, weights before bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    /// Visits every parameter mutably, in the same order as [`flatten`].
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for layer in &mut self.layers {
            for w in &mut layer.weights {
                f(w);
            }
            for b in &mut layer.bias {
                f(b);
            }
        }
    }

    pub fn content_fingerprint(&self) -> String {
        let mut fp = Fingerprinter::new("mlp-params");
        for layer in &self.layers {
            fp.push_f64s(&layer.weights);
            fp.push_f64s(&layer.bias);
        }
        fp.finish()
    }
}

impl Gradients {
    pub fn zeros(spec: &MlpSpec) -> Self {
        Gradients {
            layers: layer_dims(spec)
                .map(|(i, o)| DenseLayer::zeros(i, o))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Max-norm over all entries.
    pub fn inf_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
            .fold(0.0_f64, |m, &v| m.max(v.abs()))
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        out
    }
}

impl MomentumBuffer {
    pub fn zeros(spec: &MlpSpec) -> Self {
        MomentumBuffer {
            layers: layer_dims(spec)
                .map(|(i, o)| DenseLayer::zeros(i, o))
                .collect(),
        }
    }
}

fn layer_dims(spec: &MlpSpec) -> impl Iterator<Item = (usize, usize)> + '_ {
    spec.layer_widths.windows(2).map(|w| (w[0], w[1]))
}

/// Output of [`forward`]: raw logits and their softmax.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Full forward pass keeping per-layer activations for backprop.
///
/// `activations[0]` is the input; `activations.last()` holds the logits.
struct ForwardTrace {
    activations: Vec<Vec<f64>>,
}

fn forward_trace(spec: &MlpSpec, params: &MlpParams, x: &[f64]) -> ForwardTrace {
    let n_layers = params.layers.len();
    let mut activations = Vec::with_capacity(n_layers + 1);
    activations.push(x.to_vec());
    for (idx, layer) in params.layers.iter().enumerate() {
        let input = activations.last().unwrap();
        let in_dim = input.len();
        let out_dim = layer.bias.len();
        let mut out = vec![0.0; out_dim];
        for (o, out_v) in out.iter_mut().enumerate() {
            let row = &layer.weights[o * in_dim..(o + 1) * in_dim];
            let mut acc = layer.bias[o];
            for (w, v) in row.iter().zip(input.iter()) {
                acc += w * v;
            }
            *out_v = if idx + 1 < n_layers {
                spec.activation.apply(acc)
            } else {
                acc
            };
        }
        activations.push(out);
    }
    ForwardTrace { activations }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// log Σ exp(zᵢ), stabilized.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln()
}

/// Evaluates the classifier at `x`, returning logits and softmax outputs.
pub fn forward(spec: &MlpSpec, params: &MlpParams, x: &[f64]) -> Result<ForwardPass> {
    if x.len() != spec.input_dim() {
        return Err(Error::contract(format!(
            "input dim {} does not match spec input dim {}",
            x.len(),
            spec.input_dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::contract("non-finite input"));
    }
    let trace = forward_trace(spec, params, x);
    let logits = trace.activations.last().unwrap().clone();
    let probs = softmax(&logits);
    Ok(ForwardPass { logits, probs })
}

/// −log probs[y], the softmax cross-entropy for a single example.
pub fn cross_entropy(probs: &[f64], y: usize) -> Result<f64> {
    if y >= probs.len() {
        return Err(Error::contract(format!(
            "label {y} out of range for {} classes",
            probs.len()
        )));
    }
    Ok(-probs[y].ln())
}

/// Cross-entropy straight from logits: `logsumexp(z) − z[y]`.
///
/// Identical to `cross_entropy(softmax(z), y)` but stays finite for extreme
/// logits, so the training loop uses this form.
pub fn cross_entropy_from_logits(logits: &[f64], y: usize) -> Result<f64> {
    if y >= logits.len() {
        return Err(Error::contract(format!(
            "label {y} out of range for {} classes",
            logits.len()
        )));
    }
    Ok(log_sum_exp(logits) - logits[y])
}

/// Backpropagation through one example, accumulating into `grads`.
///
/// `output_delta` is ∂loss/∂logits. Returns ∂loss/∂x when requested.
fn backprop_example(
    spec: &MlpSpec,
    params: &MlpParams,
    trace: &ForwardTrace,
    output_delta: Vec<f64>,
    grads: Option<&mut Gradients>,
    want_input_grad: bool,
) -> Option<Vec<f64>> {
    let mut delta = output_delta;
    let mut grads = grads;
    for (l, layer) in params.layers.iter().enumerate().rev() {
        let input = &trace.activations[l];
        let in_dim = input.len();
        if let Some(g) = grads.as_deref_mut() {
            let gl = &mut g.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                let row = &mut gl.weights[o * in_dim..(o + 1) * in_dim];
                for (gw, &v) in row.iter_mut().zip(input.iter()) {
                    *gw += d * v;
                }
                gl.bias[o] += d;
            }
        }
        if l == 0 && !want_input_grad {
            break;
        }
        // delta for the layer below: Wᵀ·delta, times activation derivative
        // unless we've reached the raw input.
        let mut prev = vec![0.0; in_dim];
        for (o, &d) in delta.iter().enumerate() {
            let row = &layer.weights[o * in_dim..(o + 1) * in_dim];
            for (p, &w) in prev.iter_mut().zip(row.iter()) {
                *p += w * d;
            }
        }
        if l > 0 {
            for (p, &a) in prev.iter_mut().zip(input.iter()) {
                *p *= spec.activation.derivative_from_output(a);
            }
        }
        delta = prev;
        if l == 0 {
            return Some(delta);
        }
    }
    None
}

/// Mean cross-entropy over a batch and its exact gradient.
pub fn backward(
    spec: &MlpSpec,
    params: &MlpParams,
    xs: &[Vec<f64>],
    ys: &[usize],
) -> Result<(f64, Gradients)> {
    if xs.is_empty() {
        return Err(Error::contract("empty batch"));
    }
    if xs.len() != ys.len() {
        return Err(Error::contract("batch inputs and labels differ in length"));
    }
    let k = spec.n_classes();
    let scale = 1.0 / xs.len() as f64;
    let mut grads = Gradients::zeros(spec);
    let mut loss = 0.0;
    for (x, &y) in xs.iter().zip(ys.iter()) {
        if x.len() != spec.input_dim() {
            return Err(Error::contract("input dim does not match spec"));
        }
        if y >= k {
            return Err(Error::contract(format!("label {y} out of range")));
        }
        let trace = forward_trace(spec, params, x);
        let logits = trace.activations.last().unwrap();
        loss += cross_entropy_from_logits(logits, y)? * scale;
        let probs = softmax(logits);
        let mut delta: Vec<f64> = probs.iter().map(|&p| p * scale).collect();
        delta[y] -= scale;
        backprop_example(spec, params, &trace, delta, Some(&mut grads), false);
    }
    Ok((loss, grads))
}

/// Gradient of `delta · logits(x)` with respect to the parameters, for an
/// arbitrary ∂loss/∂logits vector. Used by curvature estimators.
pub(crate) fn logit_delta_gradient(
    spec: &MlpSpec,
    params: &MlpParams,
    x: &[f64],
    output_delta: &[f64],
) -> (Vec<f64>, Gradients) {
    let trace = forward_trace(spec, params, x);
    let logits = trace.activations.last().unwrap().clone();
    let mut grads = Gradients::zeros(spec);
    backprop_example(
        spec,
        params,
        &trace,
        output_delta.to_vec(),
        Some(&mut grads),
        false,
    );
    (logits, grads)
}

/// ∂(cross-entropy)/∂x for a single labelled example.
pub fn input_gradient(
    spec: &MlpSpec,
    params: &MlpParams,
    x: &[f64],
    y: usize,
) -> Result<Vec<f64>> {
    if x.len() != spec.input_dim() {
        return Err(Error::contract("input dim does not match spec"));
    }
    if y >= spec.n_classes() {
        return Err(Error::contract(format!("label {y} out of range")));
    }
    let trace = forward_trace(spec, params, x);
    let logits = trace.activations.last().unwrap();
    let mut delta = softmax(logits);
    delta[y] -= 1.0;
    let grad = backprop_example(spec, params, &trace, delta, None, true)
        .expect("input gradient requested");
    Ok(grad)
}

/// One SGD step with momentum and coupled weight decay:
///
/// ```text
/// g' = g + weight_decay·θ
/// v  = momentum·v + g'
/// θ  = θ − lr·v
/// ```
pub fn sgd_step(
    params: &mut MlpParams,
    buffer: &mut MomentumBuffer,
    grads: &Gradients,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::contract("lr must be > 0"));
    }
    if !(0.0..1.0).contains(&momentum) {
        return Err(Error::contract("momentum must be in [0,1)"));
    }
    if weight_decay < 0.0 {
        return Err(Error::contract("weight_decay must be >= 0"));
    }
    if !grads.is_finite() {
        return Err(Error::contract("non-finite gradients"));
    }
    for ((pl, bl), gl) in params
        .layers
        .iter_mut()
        .zip(buffer.layers.iter_mut())
        .zip(grads.layers.iter())
    {
        for ((theta, v), &g) in pl
            .weights
            .iter_mut()
            .chain(pl.bias.iter_mut())
            .zip(bl.weights.iter_mut().chain(bl.bias.iter_mut()))
            .zip(gl.weights.iter().chain(gl.bias.iter()))
        {
            let g_wd = g + weight_decay * *theta;
            *v = momentum * *v + g_wd;
            *theta -= lr * *v;
        }
    }
    Ok(())
}

/// The set of classes attaining the maximum output, ordered ascending.
///
/// A nonempty sorted set; equality between tie sets is set equality.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TieSet(Vec<u32>);

impl TieSet {
    pub fn classes(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty() // never true: tie sets are nonempty by construction
    }

    /// True when more than one class attains the maximum.
    pub fn is_tie(&self) -> bool {
        self.0.len() > 1
    }

    pub fn contains(&self, class: usize) -> bool {
        self.0.binary_search(&(class as u32)).is_ok()
    }

    /// Canonical representative: the smallest tied class index.
    pub fn resolved(&self) -> usize {
        self.0[0] as usize
    }

    #[cfg(test)]
    pub(crate) fn from_classes(classes: Vec<u32>) -> Self {
        assert!(!classes.is_empty());
        let mut c = classes;
        c.sort_unstable();
        c.dedup();
        TieSet(c)
    }
}

/// Classes whose logit is within `tau` of the maximum.
pub fn tie_set(logits: &[f64], tau: f64) -> TieSet {
    debug_assert!(tau >= 0.0);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let classes: Vec<u32> = logits
        .iter()
        .enumerate()
        .filter(|(_, &z)| max - z <= tau)
        .map(|(i, _)| i as u32)
        .collect();
    TieSet(classes)
}

/// Predicted label: the argmax off the boundary, a uniform draw from the tie
/// set on it. The RNG is only consumed when the tie set is non-singleton.
pub fn predict_label<R: rand::Rng>(logits: &[f64], tau: f64, rng: &mut R) -> usize {
    let ties = tie_set(logits, tau);
    if ties.is_tie() {
        let idx = rng.random_range(0..ties.len());
        ties.classes()[idx] as usize
    } else {
        ties.resolved()
    }
}
