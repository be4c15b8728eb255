//! Fully connected network `in → 64 → 64 → 64 → 1` with ReLU hidden layers,
//! its Donsker–Varadhan objective, and the reverse-mode gradient of that
//! objective.
//!
//! Batches are stored column-wise: an `in_dim × batch` matrix holds one
//! sample per column.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

pub const HIDDEN_WIDTH: usize = 64;
pub const HIDDEN_LAYERS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out × in`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl DenseLayer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { weights: DMatrix::zeros(outputs, inputs), bias: DVector::zeros(outputs) }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }
}

/// Weights and biases. Gradients and momentum buffers share this shape.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<DenseLayer>,
}

impl MlpParams {
    /// All-zero parameters of the standard shape.
    pub fn zeros(in_dim: usize) -> Self {
        Self::zeros_with_widths(&standard_widths(in_dim))
    }

    /// All-zero parameters with layer widths `widths[0] → … → widths[last]`.
    pub fn zeros_with_widths(widths: &[usize]) -> Self {
        assert!(widths.len() >= 2 && *widths.last().unwrap() == 1, "network must end in one output");
        let layers = widths.windows(2).map(|w| DenseLayer::zeros(w[0], w[1])).collect();
        Self { layers }
    }

    /// Zero biases, weights uniform in `±√(6/(fan_in + fan_out))`.
    pub fn glorot<R: Rng + ?Sized>(in_dim: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(in_dim);
        for layer in &mut p.layers {
            let limit = (6.0 / (layer.inputs() + layer.outputs()) as f64).sqrt();
            layer.weights.iter_mut().for_each(|w| *w = rng.gen_range(-limit..limit));
        }
        p
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn zeros_like(&self) -> Self {
        let widths: Vec<usize> = std::iter::once(self.in_dim())
            .chain(self.layers.iter().map(|l| l.outputs()))
            .collect();
        Self::zeros_with_widths(&widths)
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters, layer by layer, weights (column-major) before biases.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    fn same_shape(&self, other: &MlpParams) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.weights.shape() == b.weights.shape() && a.bias.len() == b.bias.len()
            })
    }

    fn check_input(&self, inputs: &DMatrix<f64>) -> Result<()> {
        if inputs.nrows() != self.in_dim() {
            return Err(Error::Dimension { expected: self.in_dim(), got: inputs.nrows() });
        }
        Ok(())
    }
}

fn standard_widths(in_dim: usize) -> Vec<usize> {
    let mut w = vec![in_dim];
    w.extend(std::iter::repeat_n(HIDDEN_WIDTH, HIDDEN_LAYERS));
    w.push(1);
    w
}

/// Inverted-dropout multipliers for each hidden layer: 0 for dropped units,
/// `1/(1 − rate)` for survivors.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    layers: Vec<DMatrix<f64>>,
}

impl DropoutMasks {
    pub fn sample<R: Rng + ?Sized>(params: &MlpParams, batch: usize, rate: f64, rng: &mut R) -> Self {
        let keep = 1.0 / (1.0 - rate);
        let hidden = &params.layers[..params.layers.len() - 1];
        let layers = hidden
            .iter()
            .map(|l| DMatrix::from_fn(l.outputs(), batch, |_, _| if rng.gen::<f64>() < rate { 0.0 } else { keep }))
            .collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<DMatrix<f64>>) -> Self {
        Self { layers }
    }

    pub fn batch(&self) -> usize {
        self.layers.first().map_or(0, |m| m.ncols())
    }

    fn check(&self, params: &MlpParams, batch: usize) -> Result<()> {
        let hidden = &params.layers[..params.layers.len() - 1];
        if self.layers.len() != hidden.len() {
            return Err(Error::Dimension { expected: hidden.len(), got: self.layers.len() });
        }
        for (m, l) in self.layers.iter().zip(hidden) {
            if m.nrows() != l.outputs() || m.ncols() != batch {
                return Err(Error::Dimension { expected: l.outputs() * batch, got: m.len() });
            }
        }
        Ok(())
    }
}

/// Activations retained for the backward sweep.
pub struct ForwardPass {
    /// `inputs` followed by each hidden layer's post-dropout activation.
    activations: Vec<DMatrix<f64>>,
    /// Hidden-layer pre-activations.
    pre: Vec<DMatrix<f64>>,
    pub outputs: Vec<f64>,
}

pub fn forward_batch(params: &MlpParams, inputs: &DMatrix<f64>, masks: Option<&DropoutMasks>) -> Result<ForwardPass> {
    params.check_input(inputs)?;
    if let Some(m) = masks {
        m.check(params, inputs.ncols())?;
    }
    let n_layers = params.layers.len();
    let mut activations = Vec::with_capacity(n_layers);
    let mut pre = Vec::with_capacity(n_layers - 1);
    activations.push(inputs.clone());
    for (l, layer) in params.layers.iter().enumerate() {
        let mut z = &layer.weights * activations.last().unwrap();
        for mut col in z.column_iter_mut() {
            col += &layer.bias;
        }
        if l + 1 == n_layers {
            return Ok(ForwardPass { activations, pre, outputs: z.iter().copied().collect() });
        }
        let mut h = z.map(|x| x.max(0.0));
        if let Some(m) = masks {
            h.component_mul_assign(&m.layers[l]);
        }
        pre.push(z);
        activations.push(h);
    }
    unreachable!("network has an output layer")
}

/// Network output for one input vector; `mask` must describe a batch of one.
pub fn forward(params: &MlpParams, input: &[f64], mask: Option<&DropoutMasks>) -> Result<f64> {
    let x = DMatrix::from_column_slice(input.len(), 1, input);
    Ok(forward_batch(params, &x, mask)?.outputs[0])
}

/// Adds `Σ_columns output_grad · ∂output/∂θ` into `grad`.
fn backward_batch(
    params: &MlpParams,
    pass: &ForwardPass,
    output_grad: &[f64],
    masks: Option<&DropoutMasks>,
    grad: &mut MlpParams,
) {
    let n_layers = params.layers.len();
    let mut delta = DMatrix::from_row_slice(1, output_grad.len(), output_grad);
    for l in (0..n_layers).rev() {
        let h_prev = &pass.activations[l];
        let g = &mut grad.layers[l];
        g.weights.gemm(1.0, &delta, &h_prev.transpose(), 1.0);
        for col in delta.column_iter() {
            g.bias += col;
        }
        if l == 0 {
            break;
        }
        let mut back = params.layers[l].weights.tr_mul(&delta);
        let z = &pass.pre[l - 1];
        back.zip_apply(z, |d, zv| {
            if zv <= 0.0 {
                *d = 0.0
            }
        });
        if let Some(m) = masks {
            back.component_mul_assign(&m.layers[l - 1]);
        }
        delta = back;
    }
}

/// DV value in nats and the softmax weights of the marginal outputs.
fn dv_nats(joint_out: &[f64], marginal_out: &[f64]) -> Result<(f64, Vec<f64>)> {
    if joint_out.is_empty() || marginal_out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let shift = marginal_out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() || joint_out.iter().any(|t| !t.is_finite()) {
        return Err(Error::Numeric("non-finite network output".into()));
    }
    let exps: Vec<f64> = marginal_out.iter().map(|t| (t - shift).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let mean_joint = joint_out.iter().map(|t| t - shift).sum::<f64>() / joint_out.len() as f64;
    let value = mean_joint - (sum / marginal_out.len() as f64).ln();
    let weights = exps.into_iter().map(|e| e / sum).collect();
    Ok((value, weights))
}

/// `⟨f⟩_P − log⟨e^f⟩_Q` in bits, with dropout disabled.
pub fn dv_objective(params: &MlpParams, joint: &DMatrix<f64>, marginal: &DMatrix<f64>) -> Result<f64> {
    let tj = forward_batch(params, joint, None)?.outputs;
    let tm = forward_batch(params, marginal, None)?.outputs;
    Ok(dv_nats(&tj, &tm)?.0 / std::f64::consts::LN_2)
}

/// The same expectation form evaluated on weighted outcome lists instead of
/// samples: `Σ pᵢ f(xᵢ) − log Σ qⱼ e^{f(yⱼ)}`, in bits.
pub fn dv_objective_weighted(
    params: &MlpParams,
    joint: &DMatrix<f64>,
    joint_weights: &[f64],
    marginal: &DMatrix<f64>,
    marginal_weights: &[f64],
) -> Result<f64> {
    let tj = forward_batch(params, joint, None)?.outputs;
    let tm = forward_batch(params, marginal, None)?.outputs;
    if tj.len() != joint_weights.len() || tm.len() != marginal_weights.len() {
        return Err(Error::Dimension { expected: tj.len(), got: joint_weights.len() });
    }
    let shift = tm.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let first: f64 = tj.iter().zip(joint_weights).map(|(t, p)| p * (t - shift)).sum();
    let log_term: f64 = tm.iter().zip(marginal_weights).map(|(t, q)| q * (t - shift).exp()).sum::<f64>().ln();
    Ok((first - log_term) / std::f64::consts::LN_2)
}

/// How the log-partition term is differentiated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientMode {
    /// Exact gradient of the batch objective.
    Plain,
    /// Replace the batch denominator `⟨e^f⟩_Q` by its running average with the given rate.
    EmaCorrected { rate: f64 },
}

/// Running log-average of `⟨e^f⟩_Q` for [`GradientMode::EmaCorrected`].
#[derive(Debug, Clone, Copy, Default)]
pub struct PartitionAverage {
    log_mean: Option<f64>,
}

/// Batch objective (bits, with the given masks) and its gradient.
pub fn backward(
    params: &MlpParams,
    joint: &DMatrix<f64>,
    marginal: &DMatrix<f64>,
    masks: Option<&DropoutMasks>,
) -> Result<(f64, MlpParams)> {
    backward_with_mode(params, joint, marginal, masks, GradientMode::Plain, &mut PartitionAverage::default())
}

pub fn backward_with_mode(
    params: &MlpParams,
    joint: &DMatrix<f64>,
    marginal: &DMatrix<f64>,
    masks: Option<&DropoutMasks>,
    mode: GradientMode,
    average: &mut PartitionAverage,
) -> Result<(f64, MlpParams)> {
    backward_masked(params, joint, marginal, masks, masks, mode, average)
}

/// As [`backward_with_mode`] with separate masks for the joint and marginal passes.
pub fn backward_masked(
    params: &MlpParams,
    joint: &DMatrix<f64>,
    marginal: &DMatrix<f64>,
    joint_masks: Option<&DropoutMasks>,
    marginal_masks: Option<&DropoutMasks>,
    mode: GradientMode,
    average: &mut PartitionAverage,
) -> Result<(f64, MlpParams)> {
    let pj = forward_batch(params, joint, joint_masks)?;
    let pm = forward_batch(params, marginal, marginal_masks)?;
    let (value, mut weights) = dv_nats(&pj.outputs, &pm.outputs)?;
    if let GradientMode::EmaCorrected { rate } = mode {
        let shift = pm.outputs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let batch_log_mean = value_log_mean(&pm.outputs, shift);
        let log_mean = match average.log_mean {
            None => batch_log_mean,
            Some(prev) => log_add((1.0 - rate).ln() + prev, rate.ln() + batch_log_mean),
        };
        average.log_mean = Some(log_mean);
        let m = pm.outputs.len() as f64;
        weights = pm.outputs.iter().map(|t| (t - log_mean).exp() / m).collect();
    }
    let inv_ln2 = 1.0 / std::f64::consts::LN_2;
    let nj = pj.outputs.len() as f64;
    let joint_grad = vec![inv_ln2 / nj; pj.outputs.len()];
    let marginal_grad: Vec<f64> = weights.iter().map(|w| -w * inv_ln2).collect();
    let mut grad = params.zeros_like();
    backward_batch(params, &pj, &joint_grad, joint_masks, &mut grad);
    backward_batch(params, &pm, &marginal_grad, marginal_masks, &mut grad);
    Ok((value * inv_ln2, grad))
}

fn value_log_mean(outputs: &[f64], shift: f64) -> f64 {
    let s: f64 = outputs.iter().map(|t| (t - shift).exp()).sum();
    shift + (s / outputs.len() as f64).ln()
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Momentum ascent: `v ← μ v + g`, `θ ← θ + η v`.
pub fn sgd_step(
    params: &mut MlpParams,
    gradient: &MlpParams,
    velocity: &mut MlpParams,
    learning_rate: f64,
    momentum: f64,
) -> Result<()> {
    if !params.same_shape(gradient) || !params.same_shape(velocity) {
        return Err(Error::Dimension { expected: params.param_count(), got: gradient.param_count() });
    }
    for (v, g) in velocity.values_mut().zip(gradient.values()) {
        *v = momentum * *v + g;
    }
    for (p, v) in params.values_mut().zip(velocity.values()) {
        *p += learning_rate * v;
    }
    Ok(())
}
