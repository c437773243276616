//! A small fully-connected network with exact backpropagation.
//!
//! Weights live in one flat `Vec<f64>` (per-layer weight matrix, then bias,
//! row-major) so the rest of the system can treat them as a point in R^n:
//! replicas exchange them, diffusion experiments measure distances on them,
//! and checkpoints serialize them without knowing the architecture.
//!
//! Training-time dropout is the "inverted" variant: each hidden activation
//! is kept with probability `p = 1 − dropout_rate` and scaled by `1/p`, so
//! eval mode needs no rescaling and the expected pre-activation of the next
//! layer is unchanged. The same mask is used by the forward and backward
//! passes of one step.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation value `h = f(z)`.
    #[inline]
    fn derivative_from_value(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Relu => {
                if h > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputLoss {
    /// Softmax over the output layer with cross-entropy against the integer
    /// label (log-sum-exp stabilized).
    SoftmaxCrossEntropy,
    /// Mean squared error of the raw outputs against the one-hot label:
    /// `½ Σ_k (z_k − 1[k = label])²` per example.
    MeanSquaredError,
}

/// Architecture description: `layer_sizes[0]` inputs, then hidden layers,
/// then `layer_sizes.last()` outputs. `hidden_activations` has one entry per
/// hidden layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activations: Vec<Activation>,
    pub output: OutputLoss,
}

/// Regularization applied during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizerConfig {
    /// Probability of dropping a hidden activation; `0` disables dropout.
    pub dropout_rate: f64,
    /// Coefficient of the `λ/2·‖W‖²` penalty over the full weight vector
    /// (biases included); `0` disables it.
    pub l2_lambda: f64,
}

impl RegularizerConfig {
    pub const NONE: RegularizerConfig = RegularizerConfig { dropout_rate: 0.0, l2_lambda: 0.0 };

    pub fn validate(&self) -> Result<(), NnError> {
        if !(0.0..1.0).contains(&self.dropout_rate) || !self.dropout_rate.is_finite() {
            return Err(NnError::DropoutOutOfRange(self.dropout_rate));
        }
        if self.l2_lambda < 0.0 || !self.l2_lambda.is_finite() {
            return Err(NnError::NegativeL2(self.l2_lambda));
        }
        Ok(())
    }
}

/// Whether a pass applies training-time stochastic regularizers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("network needs at least one hidden layer (got {layers} layer sizes)")]
    TooShallow { layers: usize },
    #[error("layer {index} has zero width")]
    ZeroWidthLayer { index: usize },
    #[error("expected {expected} hidden activations, got {got}")]
    ActivationCountMismatch { expected: usize, got: usize },
    #[error("dropout rate must lie in [0, 1), got {0}")]
    DropoutOutOfRange(f64),
    #[error("l2 coefficient must be nonnegative, got {0}")]
    NegativeL2(f64),
    #[error("weight vector has length {got}, architecture needs {expected}")]
    WeightLengthMismatch { expected: usize, got: usize },
    #[error("batch of {n} examples needs {expected} feature values, got {got}")]
    BatchShapeMismatch { n: usize, expected: usize, got: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: u32, classes: usize },
    #[error("batch is empty")]
    EmptyBatch,
}

impl MlpSpec {
    /// Spec with the same activation on every hidden layer.
    pub fn uniform(layer_sizes: Vec<usize>, activation: Activation, output: OutputLoss) -> Self {
        let hidden = layer_sizes.len().saturating_sub(2);
        MlpSpec { layer_sizes, hidden_activations: vec![activation; hidden], output }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.layer_sizes.len() < 3 {
            return Err(NnError::TooShallow { layers: self.layer_sizes.len() });
        }
        if let Some(index) = self.layer_sizes.iter().position(|&s| s == 0) {
            return Err(NnError::ZeroWidthLayer { index });
        }
        let hidden = self.layer_sizes.len() - 2;
        if self.hidden_activations.len() != hidden {
            return Err(NnError::ActivationCountMismatch {
                expected: hidden,
                got: self.hidden_activations.len(),
            });
        }
        Ok(())
    }

    /// Number of weight layers (hidden count + 1).
    pub fn layer_count(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Total flat length: `Σ_l (fan_in + 1) · fan_out`.
    pub fn n_weights(&self) -> usize {
        (0..self.layer_count()).map(|l| (self.fan_in(l) + 1) * self.fan_out(l)).sum()
    }

    pub fn fan_in(&self, layer: usize) -> usize {
        self.layer_sizes[layer]
    }

    pub fn fan_out(&self, layer: usize) -> usize {
        self.layer_sizes[layer + 1]
    }

    /// Offset of layer `layer`'s weight matrix in the flat vector.
    fn layer_offset(&self, layer: usize) -> usize {
        (0..layer).map(|l| (self.fan_in(l) + 1) * self.fan_out(l)).sum()
    }

    /// Flat index of the matrix entry `(row, col)` of layer `layer`, where
    /// `row` indexes output units and `col` input units.
    pub fn flat_index(&self, layer: usize, row: usize, col: usize) -> usize {
        debug_assert!(row < self.fan_out(layer) && col < self.fan_in(layer));
        self.layer_offset(layer) + row * self.fan_in(layer) + col
    }

    /// Flat index of the bias of output unit `row` of layer `layer`.
    pub fn bias_index(&self, layer: usize, row: usize) -> usize {
        debug_assert!(row < self.fan_out(layer));
        self.layer_offset(layer) + self.fan_out(layer) * self.fan_in(layer) + row
    }

    fn check_weights(&self, w: &[f64]) -> Result<(), NnError> {
        if w.len() != self.n_weights() {
            return Err(NnError::WeightLengthMismatch { expected: self.n_weights(), got: w.len() });
        }
        Ok(())
    }

    fn check_batch(&self, x: &[f64], labels: &[u32]) -> Result<usize, NnError> {
        let n = labels.len();
        if n == 0 {
            return Err(NnError::EmptyBatch);
        }
        let expected = n * self.input_dim();
        if x.len() != expected {
            return Err(NnError::BatchShapeMismatch { n, expected, got: x.len() });
        }
        let classes = self.output_dim();
        for &label in labels {
            if label as usize >= classes {
                return Err(NnError::LabelOutOfRange { label, classes });
            }
        }
        Ok(n)
    }
}

/// Glorot-uniform initialization: layer `l` weights are drawn uniformly from
/// `±√(6/(fan_in + fan_out))` in row-major order, biases start at zero. The
/// draw order (layer by layer, weights only) is part of the reproducibility
/// contract.
pub fn init_weights<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Vec<f64> {
    let mut w = vec![0.0; spec.n_weights()];
    for l in 0..spec.layer_count() {
        let limit = (6.0 / (spec.fan_in(l) + spec.fan_out(l)) as f64).sqrt();
        let offset = spec.layer_offset(l);
        for i in 0..spec.fan_in(l) * spec.fan_out(l) {
            w[offset + i] = rng.gen_range(-limit..limit);
        }
    }
    w
}

/// Dropout mask scales per hidden layer: `0.0` for dropped units and `1/p`
/// for kept ones, stored example-major. Empty when dropout is off.
struct Masks {
    per_layer: Vec<Vec<f64>>,
}

fn draw_masks<R: Rng + ?Sized>(spec: &MlpSpec, n: usize, dropout_rate: f64, rng: &mut R) -> Masks {
    if dropout_rate == 0.0 {
        return Masks { per_layer: Vec::new() };
    }
    let keep = 1.0 - dropout_rate;
    let scale = 1.0 / keep;
    let per_layer = (0..spec.layer_count() - 1)
        .map(|l| {
            let width = spec.fan_out(l);
            (0..n * width)
                .map(|_| if rng.gen::<f64>() < keep { scale } else { 0.0 })
                .collect()
        })
        .collect();
    Masks { per_layer }
}

/// Forward-pass record: for each hidden layer the pre-dropout activation
/// values and the post-dropout values actually fed forward, plus the raw
/// output-layer pre-activations.
struct ForwardPass {
    /// Pre-dropout activations per hidden layer, example-major.
    hidden: Vec<Vec<f64>>,
    /// Post-dropout activations per hidden layer (alias of `hidden` content
    /// when dropout is off).
    fed: Vec<Vec<f64>>,
    /// Output pre-activations, `n × output_dim`.
    outputs: Vec<f64>,
}

fn affine(
    input: &[f64],
    n: usize,
    fan_in: usize,
    fan_out: usize,
    weights: &[f64],
    layer_offset: usize,
    out: &mut Vec<f64>,
) {
    out.clear();
    out.reserve(n * fan_out);
    let bias_offset = layer_offset + fan_out * fan_in;
    for b in 0..n {
        let row_in = &input[b * fan_in..(b + 1) * fan_in];
        for j in 0..fan_out {
            let w_row = &weights[layer_offset + j * fan_in..layer_offset + (j + 1) * fan_in];
            let mut acc = weights[bias_offset + j];
            for (wi, xi) in w_row.iter().zip(row_in.iter()) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }
}

fn forward_pass(spec: &MlpSpec, w: &[f64], x: &[f64], n: usize, masks: &Masks) -> ForwardPass {
    let layers = spec.layer_count();
    let mut hidden = Vec::with_capacity(layers - 1);
    let mut fed = Vec::with_capacity(layers - 1);
    let mut current: Vec<f64> = x.to_vec();
    for l in 0..layers - 1 {
        let mut z = Vec::new();
        affine(&current, n, spec.fan_in(l), spec.fan_out(l), w, spec.layer_offset(l), &mut z);
        let act = spec.hidden_activations[l];
        for v in z.iter_mut() {
            *v = act.apply(*v);
        }
        let h = z;
        let a = if masks.per_layer.is_empty() {
            h.clone()
        } else {
            h.iter().zip(masks.per_layer[l].iter()).map(|(v, m)| v * m).collect()
        };
        current = a.clone();
        hidden.push(h);
        fed.push(a);
    }
    let last = layers - 1;
    let mut outputs = Vec::new();
    affine(&current, n, spec.fan_in(last), spec.fan_out(last), w, spec.layer_offset(last), &mut outputs);
    ForwardPass { hidden, fed, outputs }
}

/// Per-example data loss and, when requested, the output-layer error signal
/// `∂(mean loss)/∂z` (already scaled by `1/n`).
fn output_loss_and_delta(
    spec: &MlpSpec,
    outputs: &[f64],
    labels: &[u32],
    want_delta: bool,
) -> (f64, Option<Vec<f64>>) {
    let n = labels.len();
    let k = spec.output_dim();
    let inv_n = 1.0 / n as f64;
    let mut total = 0.0;
    let mut delta = if want_delta { Some(vec![0.0; n * k]) } else { None };
    match spec.output {
        OutputLoss::SoftmaxCrossEntropy => {
            for b in 0..n {
                let z = &outputs[b * k..(b + 1) * k];
                let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let sum_exp: f64 = z.iter().map(|&v| (v - zmax).exp()).sum();
                let lse = zmax + sum_exp.ln();
                total += lse - z[labels[b] as usize];
                if let Some(d) = delta.as_mut() {
                    for j in 0..k {
                        let p = (z[j] - lse).exp();
                        let target = if j == labels[b] as usize { 1.0 } else { 0.0 };
                        d[b * k + j] = (p - target) * inv_n;
                    }
                }
            }
        }
        OutputLoss::MeanSquaredError => {
            for b in 0..n {
                let z = &outputs[b * k..(b + 1) * k];
                for j in 0..k {
                    let target = if j == labels[b] as usize { 1.0 } else { 0.0 };
                    let r = z[j] - target;
                    total += 0.5 * r * r;
                    if let Some(d) = delta.as_mut() {
                        d[b * k + j] = r * inv_n;
                    }
                }
            }
        }
    }
    (total * inv_n, delta)
}

fn l2_term(l2_lambda: f64, w: &[f64]) -> f64 {
    if l2_lambda == 0.0 {
        return 0.0;
    }
    0.5 * l2_lambda * w.iter().map(|v| v * v).sum::<f64>()
}

fn loss_with_masks(
    spec: &MlpSpec,
    w: &[f64],
    x: &[f64],
    labels: &[u32],
    reg: &RegularizerConfig,
    masks: &Masks,
) -> f64 {
    let pass = forward_pass(spec, w, x, labels.len(), masks);
    let (data_loss, _) = output_loss_and_delta(spec, &pass.outputs, labels, false);
    data_loss + l2_term(reg.l2_lambda, w)
}

fn grad_with_masks(
    spec: &MlpSpec,
    w: &[f64],
    x: &[f64],
    labels: &[u32],
    reg: &RegularizerConfig,
    masks: &Masks,
) -> (f64, Vec<f64>) {
    let n = labels.len();
    let layers = spec.layer_count();
    let pass = forward_pass(spec, w, x, n, masks);
    let (data_loss, delta) = output_loss_and_delta(spec, &pass.outputs, labels, true);
    let mut grad = vec![0.0; w.len()];
    // `dz` is the error signal at the pre-activations of the layer being
    // processed, example-major.
    let mut dz = delta.unwrap();
    for l in (0..layers).rev() {
        let fan_in = spec.fan_in(l);
        let fan_out = spec.fan_out(l);
        let offset = spec.layer_offset(l);
        let bias_offset = offset + fan_out * fan_in;
        let input: &[f64] = if l == 0 { x } else { &pass.fed[l - 1] };
        for b in 0..n {
            let dz_row = &dz[b * fan_out..(b + 1) * fan_out];
            let in_row = &input[b * fan_in..(b + 1) * fan_in];
            for j in 0..fan_out {
                let g = dz_row[j];
                if g == 0.0 {
                    continue;
                }
                let w_grad = &mut grad[offset + j * fan_in..offset + (j + 1) * fan_in];
                for (gi, xi) in w_grad.iter_mut().zip(in_row.iter()) {
                    *gi += g * xi;
                }
            }
        }
        for b in 0..n {
            for j in 0..fan_out {
                grad[bias_offset + j] += dz[b * fan_out + j];
            }
        }
        if l == 0 {
            break;
        }
        // Propagate to the previous layer: through the weight matrix, then
        // the dropout mask, then the activation derivative.
        let prev_width = fan_in;
        let mut dz_prev = vec![0.0; n * prev_width];
        for b in 0..n {
            let dz_row = &dz[b * fan_out..(b + 1) * fan_out];
            let dst = &mut dz_prev[b * prev_width..(b + 1) * prev_width];
            for j in 0..fan_out {
                let g = dz_row[j];
                if g == 0.0 {
                    continue;
                }
                let w_row = &w[offset + j * fan_in..offset + (j + 1) * fan_in];
                for (di, wi) in dst.iter_mut().zip(w_row.iter()) {
                    *di += g * wi;
                }
            }
        }
        let act = spec.hidden_activations[l - 1];
        let h = &pass.hidden[l - 1];
        if masks.per_layer.is_empty() {
            for (d, hv) in dz_prev.iter_mut().zip(h.iter()) {
                *d *= act.derivative_from_value(*hv);
            }
        } else {
            let mask = &masks.per_layer[l - 1];
            for ((d, hv), m) in dz_prev.iter_mut().zip(h.iter()).zip(mask.iter()) {
                *d *= m * act.derivative_from_value(*hv);
            }
        }
        dz = dz_prev;
    }
    if reg.l2_lambda > 0.0 {
        for (g, wi) in grad.iter_mut().zip(w.iter()) {
            *g += reg.l2_lambda * wi;
        }
    }
    (data_loss + l2_term(reg.l2_lambda, w), grad)
}

fn validate_call(
    spec: &MlpSpec,
    w: &[f64],
    x: &[f64],
    labels: &[u32],
    reg: &RegularizerConfig,
) -> Result<usize, NnError> {
    spec.validate()?;
    reg.validate()?;
    spec.check_weights(w)?;
    spec.check_batch(x, labels)
}

/// Deterministic (eval-mode) batch loss: mean per-example data loss plus the
/// L2 penalty. Dropout is inactive.
pub fn loss_batch(
    spec: &MlpSpec,
    w: &[f64],
    x: &[f64],
    labels: &[u32],
    reg: &RegularizerConfig,
) -> Result<f64, NnError> {
    validate_call(spec, w, x, labels, reg)?;
    Ok(loss_with_masks(spec, w, x, labels, reg, &Masks { per_layer: Vec::new() }))
}

/// Training-mode batch loss: draws one dropout mask set from `rng` (the same
/// draws `grad_batch` would make from the same RNG state) and evaluates the
/// stochastic loss under it.
pub fn train_loss_batch<R: Rng + ?Sized>(
    spec: &MlpSpec,
    w: &[f64],
    x: &[f64],
    labels: &[u32],
    reg: &RegularizerConfig,
    rng: &mut R,
) -> Result<f64, NnError> {
    let n = validate_call(spec, w, x, labels, reg)?;
    let masks = draw_masks(spec, n, reg.dropout_rate, rng);
    Ok(loss_with_masks(spec, w, x, labels, reg, &masks))
}

/// Training-mode raw network outputs (pre-activations of the output layer)
/// under one dropout mask set drawn from `rng`.
pub fn train_outputs<R: Rng + ?Sized>(
    spec: &MlpSpec,
    w: &[f64],
    x: &[f64],
    n: usize,
    reg: &RegularizerConfig,
    rng: &mut R,
) -> Result<Vec<f64>, NnError> {
    spec.validate()?;
    reg.validate()?;
    spec.check_weights(w)?;
    let masks = draw_masks(spec, n, reg.dropout_rate, rng);
    Ok(forward_pass(spec, w, x, n, &masks).outputs)
}

/// Exact gradient of the batch loss. In `Mode::Train` a dropout mask set is
/// drawn from `rng` and shared between the forward and backward pass; in
/// `Mode::Eval` dropout is inactive and `rng` is untouched. Returns the loss
/// under the same mask alongside the gradient.
pub fn grad_batch<R: Rng + ?Sized>(
    spec: &MlpSpec,
    w: &[f64],
    x: &[f64],
    labels: &[u32],
    reg: &RegularizerConfig,
    mode: Mode,
    rng: &mut R,
) -> Result<(f64, Vec<f64>), NnError> {
    let n = validate_call(spec, w, x, labels, reg)?;
    let masks = match mode {
        Mode::Train => draw_masks(spec, n, reg.dropout_rate, rng),
        Mode::Eval => Masks { per_layer: Vec::new() },
    };
    Ok(grad_with_masks(spec, w, x, labels, reg, &masks))
}

/// Eval-mode network outputs: softmax probabilities for the cross-entropy
/// head, raw outputs for the squared-error head. `n × output_dim` row-major.
pub fn outputs_eval(spec: &MlpSpec, w: &[f64], x: &[f64], n: usize) -> Result<Vec<f64>, NnError> {
    spec.validate()?;
    spec.check_weights(w)?;
    let expected = n * spec.input_dim();
    if x.len() != expected || n == 0 {
        return Err(NnError::BatchShapeMismatch { n, expected, got: x.len() });
    }
    let pass = forward_pass(spec, w, x, n, &Masks { per_layer: Vec::new() });
    let mut out = pass.outputs;
    if spec.output == OutputLoss::SoftmaxCrossEntropy {
        let k = spec.output_dim();
        for b in 0..n {
            let row = &mut out[b * k..(b + 1) * k];
            let zmax = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|&v| (v - zmax).exp()).sum();
            for v in row.iter_mut() {
                *v = (*v - zmax).exp() / sum;
            }
        }
    }
    Ok(out)
}

/// Fraction of examples whose argmax output disagrees with the label. Ties
/// resolve to the lowest index.
pub fn classification_error(
    spec: &MlpSpec,
    w: &[f64],
    x: &[f64],
    labels: &[u32],
) -> Result<f64, NnError> {
    let n = labels.len();
    let out = outputs_eval(spec, w, x, n)?;
    let k = spec.output_dim();
    let mut wrong = 0usize;
    for b in 0..n {
        let row = &out[b * k..(b + 1) * k];
        let mut best = 0usize;
        for j in 1..k {
            if row[j] > row[best] {
                best = j;
            }
        }
        if best != labels[b] as usize {
            wrong += 1;
        }
    }
    Ok(wrong as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;
    use rand::Rng;

    fn small_spec(output: OutputLoss) -> MlpSpec {
        MlpSpec {
            layer_sizes: vec![3, 4, 2],
            hidden_activations: vec![Activation::Tanh],
            output,
        }
    }

    fn random_batch(n: usize, d: usize, k: usize, seed: u64) -> (Vec<f64>, Vec<u32>) {
        let mut rng = rng_from_seed(seed);
        let x: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let labels: Vec<u32> = (0..n).map(|_| rng.gen_range(0..k as u32)).collect();
        (x, labels)
    }

    /// Deliberately naive re-implementation of the eval-mode loss used as an
    /// independent oracle: nested Vec matrices, per-example loops, its own
    /// softmax.
    fn naive_loss(spec: &MlpSpec, w: &[f64], x: &[f64], labels: &[u32], l2: f64) -> f64 {
        let n = labels.len();
        let mut total = 0.0;
        for b in 0..n {
            let mut a: Vec<f64> =
                x[b * spec.input_dim()..(b + 1) * spec.input_dim()].to_vec();
            for l in 0..spec.layer_count() {
                let mut z = vec![0.0; spec.fan_out(l)];
                for (j, zj) in z.iter_mut().enumerate() {
                    let mut acc = w[spec.bias_index(l, j)];
                    for (c, ac) in a.iter().enumerate() {
                        acc += w[spec.flat_index(l, j, c)] * ac;
                    }
                    *zj = acc;
                }
                if l + 1 < spec.layer_count() {
                    for v in z.iter_mut() {
                        *v = match spec.hidden_activations[l] {
                            Activation::Tanh => v.tanh(),
                            Activation::Relu => v.max(0.0),
                        };
                    }
                }
                a = z;
            }
            match spec.output {
                OutputLoss::SoftmaxCrossEntropy => {
                    let m = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let s: f64 = a.iter().map(|v| (v - m).exp()).sum();
                    total += m + s.ln() - a[labels[b] as usize];
                }
                OutputLoss::MeanSquaredError => {
                    for (j, v) in a.iter().enumerate() {
                        let t = if j == labels[b] as usize { 1.0 } else { 0.0 };
                        total += 0.5 * (v - t) * (v - t);
                    }
                }
            }
        }
        total / n as f64 + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>()
    }

    #[test]
    fn zero_weights_softmax_loss_is_ln_k() {
        for k in [2usize, 3, 7] {
            let spec = MlpSpec::uniform(vec![4, 5, k], Activation::Tanh, OutputLoss::SoftmaxCrossEntropy);
            let w = vec![0.0; spec.n_weights()];
            let (x, labels) = random_batch(6, 4, k, 17);
            let loss = loss_batch(&spec, &w, &x, &labels, &RegularizerConfig::NONE).unwrap();
            assert!(
                (loss - (k as f64).ln()).abs() < 1e-14,
                "all-zero weights give uniform softmax: loss {loss} vs ln({k})"
            );
        }
    }

    #[test]
    fn loss_matches_independent_naive_path() {
        let mut rng = rng_from_seed(23);
        for output in [OutputLoss::SoftmaxCrossEntropy, OutputLoss::MeanSquaredError] {
            for activation in [Activation::Tanh, Activation::Relu] {
                let spec = MlpSpec::uniform(vec![3, 5, 4, 2], activation, output);
                let w: Vec<f64> = (0..spec.n_weights()).map(|_| rng.gen_range(-0.8..0.8)).collect();
                let (x, labels) = random_batch(9, 3, 2, 31);
                let reg = RegularizerConfig { dropout_rate: 0.0, l2_lambda: 0.02 };
                let fast = loss_batch(&spec, &w, &x, &labels, &reg).unwrap();
                let slow = naive_loss(&spec, &w, &x, &labels, 0.02);
                assert!(
                    (fast - slow).abs() <= 1e-12 * fast.abs().max(1.0),
                    "{output:?}/{activation:?}: {fast} vs naive {slow}"
                );
            }
        }
    }

    #[test]
    fn loss_is_mean_of_per_example_losses() {
        let spec = small_spec(OutputLoss::SoftmaxCrossEntropy);
        let mut rng = rng_from_seed(5);
        let w: Vec<f64> = (0..spec.n_weights()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (x, labels) = random_batch(7, 3, 2, 41);
        let batch = loss_batch(&spec, &w, &x, &labels, &RegularizerConfig::NONE).unwrap();
        let mut mean = 0.0;
        for b in 0..labels.len() {
            let xi = &x[b * 3..(b + 1) * 3];
            mean += loss_batch(&spec, &w, xi, &labels[b..b + 1], &RegularizerConfig::NONE).unwrap();
        }
        mean /= labels.len() as f64;
        assert!((batch - mean).abs() < 1e-14, "batch {batch} vs mean of singles {mean}");
    }

    #[test]
    fn loss_is_invariant_under_batch_permutation() {
        let spec = small_spec(OutputLoss::MeanSquaredError);
        let mut rng = rng_from_seed(6);
        let w: Vec<f64> = (0..spec.n_weights()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (x, labels) = random_batch(8, 3, 2, 43);
        let base = loss_batch(&spec, &w, &x, &labels, &RegularizerConfig::NONE).unwrap();
        // Reverse the batch.
        let n = labels.len();
        let mut xr = vec![0.0; x.len()];
        let mut lr = vec![0u32; n];
        for b in 0..n {
            let s = n - 1 - b;
            xr[b * 3..(b + 1) * 3].copy_from_slice(&x[s * 3..(s + 1) * 3]);
            lr[b] = labels[s];
        }
        let rev = loss_batch(&spec, &w, &xr, &lr, &RegularizerConfig::NONE).unwrap();
        assert!((base - rev).abs() <= 1e-12 * base.abs().max(1.0), "{base} vs {rev}");
    }

    fn finite_difference_check(
        spec: &MlpSpec,
        w: &[f64],
        x: &[f64],
        labels: &[u32],
        reg: &RegularizerConfig,
        mask_seed: Option<u64>,
        coords: usize,
    ) {
        let (_, grad) = match mask_seed {
            Some(s) => {
                let mut rng = rng_from_seed(s);
                grad_batch(spec, w, x, labels, reg, Mode::Train, &mut rng).unwrap()
            }
            None => {
                let mut rng = rng_from_seed(0);
                grad_batch(spec, w, x, labels, reg, Mode::Eval, &mut rng).unwrap()
            }
        };
        let h = 1e-5;
        let mut pick = rng_from_seed(777);
        let loss_at = |wp: &[f64]| -> f64 {
            match mask_seed {
                Some(s) => {
                    let mut rng = rng_from_seed(s);
                    train_loss_batch(spec, wp, x, labels, reg, &mut rng).unwrap()
                }
                None => loss_batch(spec, wp, x, labels, reg).unwrap(),
            }
        };
        for _ in 0..coords {
            let i = pick.gen_range(0..w.len());
            let mut hi = w.to_vec();
            let mut lo = w.to_vec();
            hi[i] += h;
            lo[i] -= h;
            let numeric = (loss_at(&hi) - loss_at(&lo)) / (2.0 * h);
            let analytic = grad[i];
            let rel = (numeric - analytic).abs() / (numeric.abs() + analytic.abs()).max(1e-8);
            assert!(
                rel < 1e-5,
                "coord {i}: numeric {numeric} vs analytic {analytic} (rel {rel}) for {spec:?} reg {reg:?}"
            );
        }
    }

    #[test]
    fn gradient_matches_finite_differences_without_regularization() {
        let mut rng = rng_from_seed(71);
        for output in [OutputLoss::SoftmaxCrossEntropy, OutputLoss::MeanSquaredError] {
            for activation in [Activation::Tanh, Activation::Relu] {
                let spec = MlpSpec::uniform(vec![3, 6, 5, 3], activation, output);
                let w: Vec<f64> = (0..spec.n_weights()).map(|_| rng.gen_range(-0.7..0.7)).collect();
                let (x, labels) = random_batch(5, 3, 3, 53);
                finite_difference_check(&spec, &w, &x, &labels, &RegularizerConfig::NONE, None, 20);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences_with_l2() {
        let spec = small_spec(OutputLoss::SoftmaxCrossEntropy);
        let mut rng = rng_from_seed(72);
        let w: Vec<f64> = (0..spec.n_weights()).map(|_| rng.gen_range(-0.7..0.7)).collect();
        let (x, labels) = random_batch(5, 3, 2, 59);
        let reg = RegularizerConfig { dropout_rate: 0.0, l2_lambda: 0.05 };
        finite_difference_check(&spec, &w, &x, &labels, &reg, None, 20);
    }

    #[test]
    fn gradient_matches_finite_differences_under_frozen_dropout_mask() {
        let mut rng = rng_from_seed(73);
        let spec = MlpSpec::uniform(vec![3, 6, 4, 2], Activation::Tanh, OutputLoss::SoftmaxCrossEntropy);
        let w: Vec<f64> = (0..spec.n_weights()).map(|_| rng.gen_range(-0.7..0.7)).collect();
        let (x, labels) = random_batch(4, 3, 2, 61);
        let reg = RegularizerConfig { dropout_rate: 0.4, l2_lambda: 0.01 };
        // Re-seeding the RNG reproduces the identical mask for every loss
        // evaluation, so central differences see a fixed deterministic loss.
        finite_difference_check(&spec, &w, &x, &labels, &reg, Some(4242), 20);
    }

    #[test]
    fn l2_gradient_alone_is_lambda_times_weights() {
        let spec = small_spec(OutputLoss::MeanSquaredError);
        let mut rng = rng_from_seed(74);
        let w: Vec<f64> = (0..spec.n_weights()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (x, labels) = random_batch(4, 3, 2, 67);
        let lambda = 0.3;
        let reg = RegularizerConfig { dropout_rate: 0.0, l2_lambda: lambda };
        let mut rng0 = rng_from_seed(0);
        let (_, g_with) = grad_batch(&spec, &w, &x, &labels, &reg, Mode::Eval, &mut rng0).unwrap();
        let (_, g_without) =
            grad_batch(&spec, &w, &x, &labels, &RegularizerConfig::NONE, Mode::Eval, &mut rng0)
                .unwrap();
        for i in 0..w.len() {
            let l2_part = g_with[i] - g_without[i];
            assert!(
                (l2_part - lambda * w[i]).abs() < 1e-14,
                "coord {i}: l2 gradient {l2_part} vs λw {}",
                lambda * w[i]
            );
        }
    }

    #[test]
    fn train_equals_eval_when_regularization_is_off() {
        let spec = small_spec(OutputLoss::SoftmaxCrossEntropy);
        let mut rng = rng_from_seed(75);
        let w: Vec<f64> = (0..spec.n_weights()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (x, labels) = random_batch(6, 3, 2, 71);
        let mut r1 = rng_from_seed(1);
        let mut r2 = rng_from_seed(1);
        let eval_loss = loss_batch(&spec, &w, &x, &labels, &RegularizerConfig::NONE).unwrap();
        let train_loss =
            train_loss_batch(&spec, &w, &x, &labels, &RegularizerConfig::NONE, &mut r1).unwrap();
        assert_eq!(eval_loss.to_bits(), train_loss.to_bits());
        let (_, ge) =
            grad_batch(&spec, &w, &x, &labels, &RegularizerConfig::NONE, Mode::Eval, &mut r2).unwrap();
        let (_, gt) =
            grad_batch(&spec, &w, &x, &labels, &RegularizerConfig::NONE, Mode::Train, &mut r2).unwrap();
        assert_eq!(ge, gt, "d=0, λ=0 must make train and eval passes identical");
    }

    #[test]
    fn dropout_keeps_next_preactivation_unbiased() {
        // With inverted dropout the output pre-activation is linear in the
        // masked hidden units, so its mask average must match eval mode.
        let spec = MlpSpec::uniform(vec![2, 3, 2], Activation::Tanh, OutputLoss::MeanSquaredError);
        let mut rng = rng_from_seed(81);
        let w: Vec<f64> = (0..spec.n_weights()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = [0.7, -0.4];
        let reg = RegularizerConfig { dropout_rate: 0.5, l2_lambda: 0.0 };
        let reference = outputs_eval(&spec, &w, &x, 1).unwrap()[0];
        let mut mask_rng = rng_from_seed(82);
        let trials = 20_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..trials {
            let v = train_outputs(&spec, &w, &x, 1, &reg, &mut mask_rng).unwrap()[0];
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / trials as f64;
        let var = (sum_sq / trials as f64 - mean * mean).max(0.0);
        let sigma_mean = (var / trials as f64).sqrt();
        assert!(
            (mean - reference).abs() < 3.0 * sigma_mean + 1e-12,
            "mask mean {mean} vs eval {reference} (3σ = {})",
            3.0 * sigma_mean
        );
    }

    #[test]
    fn dropout_variance_shrinks_with_keep_probability() {
        let spec = MlpSpec::uniform(vec![2, 3, 2], Activation::Tanh, OutputLoss::MeanSquaredError);
        let mut rng = rng_from_seed(83);
        let w: Vec<f64> = (0..spec.n_weights()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = [0.9, 0.2];
        let variance_at = |dropout: f64, seed: u64| {
            let reg = RegularizerConfig { dropout_rate: dropout, l2_lambda: 0.0 };
            let mut mask_rng = rng_from_seed(seed);
            let trials = 20_000;
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..trials {
                let v = train_outputs(&spec, &w, &x, 1, &reg, &mut mask_rng).unwrap()[0];
                sum += v;
                sum_sq += v * v;
            }
            let mean = sum / trials as f64;
            (sum_sq / trials as f64 - mean * mean).max(0.0)
        };
        let var_half = variance_at(0.5, 90); // keep p = 0.5
        let var_mild = variance_at(0.2, 91); // keep p = 0.8
        assert!(var_half > var_mild, "var(p=0.5) {var_half} must exceed var(p=0.8) {var_mild}");
        assert!(var_mild > 0.0, "dropout must inject strictly positive variance");
        // With dropout off the mask rng is never consulted, so repeated forward
        // passes must agree bit for bit (a variance estimate would only add
        // cancellation noise around zero).
        let reg_off = RegularizerConfig { dropout_rate: 0.0, l2_lambda: 0.0 };
        let mut mask_rng = rng_from_seed(92);
        let first = train_outputs(&spec, &w, &x, 1, &reg_off, &mut mask_rng).unwrap();
        for _ in 0..100 {
            let again = train_outputs(&spec, &w, &x, 1, &reg_off, &mut mask_rng).unwrap();
            assert_eq!(first, again, "p=1 forward passes must be bitwise identical");
        }
    }

    #[test]
    fn softmax_probabilities_sum_to_one() {
        let spec = MlpSpec::uniform(vec![3, 8, 5], Activation::Relu, OutputLoss::SoftmaxCrossEntropy);
        let mut rng = rng_from_seed(84);
        let w: Vec<f64> = (0..spec.n_weights()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (x, _) = random_batch(10, 3, 5, 85);
        let out = outputs_eval(&spec, &w, &x, 10).unwrap();
        for b in 0..10 {
            let s: f64 = out[b * 5..(b + 1) * 5].iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "row {b} sums to {s}");
        }
    }

    #[test]
    fn flat_layout_tiles_the_weight_vector_exactly() {
        let spec = MlpSpec::uniform(vec![3, 4, 5, 2], Activation::Tanh, OutputLoss::MeanSquaredError);
        let n = spec.n_weights();
        assert_eq!(n, (3 + 1) * 4 + (4 + 1) * 5 + (5 + 1) * 2);
        let mut seen = vec![false; n];
        for l in 0..spec.layer_count() {
            for j in 0..spec.fan_out(l) {
                for c in 0..spec.fan_in(l) {
                    let idx = spec.flat_index(l, j, c);
                    assert!(!seen[idx], "index {idx} claimed twice");
                    seen[idx] = true;
                }
                let idx = spec.bias_index(l, j);
                assert!(!seen[idx], "bias index {idx} claimed twice");
                seen[idx] = true;
            }
        }
        assert!(seen.iter().all(|&s| s), "layout must cover every flat index exactly once");
    }

    #[test]
    fn init_respects_glorot_bounds_and_zero_biases() {
        let spec = MlpSpec::uniform(vec![10, 20, 3], Activation::Relu, OutputLoss::SoftmaxCrossEntropy);
        let mut rng = rng_from_seed(86);
        let w = init_weights(&spec, &mut rng);
        for l in 0..spec.layer_count() {
            let limit = (6.0 / (spec.fan_in(l) + spec.fan_out(l)) as f64).sqrt();
            for j in 0..spec.fan_out(l) {
                for c in 0..spec.fan_in(l) {
                    let v = w[spec.flat_index(l, j, c)];
                    assert!(v.abs() < limit, "layer {l} weight {v} outside ±{limit}");
                }
                assert_eq!(w[spec.bias_index(l, j)], 0.0, "biases must start at zero");
            }
        }
        let mut rng2 = rng_from_seed(86);
        assert_eq!(w, init_weights(&spec, &mut rng2), "same seed, same init");
    }

    #[test]
    fn malformed_calls_are_rejected() {
        let spec = small_spec(OutputLoss::SoftmaxCrossEntropy);
        let w = vec![0.0; spec.n_weights()];
        assert_eq!(
            loss_batch(&spec, &w[..3], &[0.0; 3], &[0], &RegularizerConfig::NONE),
            Err(NnError::WeightLengthMismatch { expected: spec.n_weights(), got: 3 })
        );
        assert_eq!(
            loss_batch(&spec, &w, &[0.0; 4], &[0], &RegularizerConfig::NONE),
            Err(NnError::BatchShapeMismatch { n: 1, expected: 3, got: 4 })
        );
        assert_eq!(
            loss_batch(&spec, &w, &[0.0; 3], &[5], &RegularizerConfig::NONE),
            Err(NnError::LabelOutOfRange { label: 5, classes: 2 })
        );
        assert_eq!(
            loss_batch(&spec, &w, &[], &[], &RegularizerConfig::NONE),
            Err(NnError::EmptyBatch)
        );
        let shallow = MlpSpec::uniform(vec![3, 2], Activation::Tanh, OutputLoss::MeanSquaredError);
        assert_eq!(shallow.validate(), Err(NnError::TooShallow { layers: 2 }));
        let bad_reg = RegularizerConfig { dropout_rate: 1.0, l2_lambda: 0.0 };
        assert_eq!(bad_reg.validate(), Err(NnError::DropoutOutOfRange(1.0)));
    }
}
