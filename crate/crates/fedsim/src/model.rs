//! Model definitions with analytic gradients.
//!
//! Three fixed model kinds cover the simulator's needs: a quadratic bowl
//! (deterministic, closed-form optimum, ignores data), binary logistic
//! regression, and a small tanh MLP with a softmax readout. Gradients are
//! hand-derived; `finite_diff_grad` provides the independent
//! central-difference check used throughout the test suites.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::vector::ParamVector;

/// Symmetry tolerance for quadratic matrices.
const SYMMETRY_TOL: f64 = 1e-12;
/// Tolerated negative drift on Cholesky pivots of a PSD matrix.
const PIVOT_TOL: f64 = 1e-10;

/// A mini-batch of classification samples. Models that ignore data
/// (the quadratic) accept an empty batch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Batch {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::contract(format!(
                "batch has {} inputs but {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        Ok(Batch { inputs, labels })
    }

    pub fn empty() -> Self {
        Batch::default()
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// One of the three supported model kinds. The parameter count is fully
/// determined by the spec, so a `ParamVector` of matching length is all the
/// state a model instance needs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum ModelSpec {
    /// `f(theta) = 1/2 (theta - c)^T A (theta - c)` with `A` symmetric PSD.
    /// Ignores batch data entirely.
    Quadratic {
        /// Row-major `dim x dim` matrix.
        matrix: Vec<f64>,
        center: ParamVector,
    },
    /// Binary logistic regression without bias: params are the weight
    /// vector of length `input_dim`, labels must be 0 or 1.
    Logistic { input_dim: usize },
    /// Fully-connected tanh network with softmax cross-entropy readout.
    /// `layers` lists all widths including input and output, so at least
    /// one hidden layer means `layers.len() >= 3`.
    Mlp { layers: Vec<usize> },
}

impl ModelSpec {
    /// Build a quadratic model, checking symmetry and positive
    /// semi-definiteness (Cholesky pivots may not go negative).
    pub fn quadratic(matrix: Vec<f64>, center: ParamVector) -> Result<Self> {
        let d = center.len();
        if matrix.len() != d * d {
            return Err(Error::contract(format!(
                "quadratic matrix has {} entries, expected {}",
                matrix.len(),
                d * d
            )));
        }
        for i in 0..d {
            for j in (i + 1)..d {
                let diff = (matrix[i * d + j] - matrix[j * d + i]).abs();
                if diff > SYMMETRY_TOL {
                    return Err(Error::contract(format!(
                        "quadratic matrix not symmetric at ({i},{j}): asymmetry {diff:e}"
                    )));
                }
            }
        }
        check_psd(&matrix, d)?;
        Ok(ModelSpec::Quadratic { matrix, center })
    }

    pub fn logistic(input_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::contract("logistic input_dim must be >= 1"));
        }
        Ok(ModelSpec::Logistic { input_dim })
    }

    pub fn mlp(layers: Vec<usize>) -> Result<Self> {
        if layers.len() < 3 {
            return Err(Error::contract(
                "mlp needs at least one hidden layer (>= 3 widths)",
            ));
        }
        if layers.iter().any(|&w| w == 0) {
            return Err(Error::contract("mlp layer widths must be >= 1"));
        }
        Ok(ModelSpec::Mlp { layers })
    }

    /// Number of parameters a `ParamVector` for this model must hold.
    pub fn param_count(&self) -> usize {
        match self {
            ModelSpec::Quadratic { center, .. } => center.len(),
            ModelSpec::Logistic { input_dim } => *input_dim,
            ModelSpec::Mlp { layers } => layers
                .windows(2)
                .map(|w| w[0] * w[1] + w[1])
                .sum(),
        }
    }

    /// Feature dimension expected in batches (0 for the quadratic).
    pub fn input_dim(&self) -> usize {
        match self {
            ModelSpec::Quadratic { .. } => 0,
            ModelSpec::Logistic { input_dim } => *input_dim,
            ModelSpec::Mlp { layers } => layers[0],
        }
    }

    /// Number of classes the model can predict (0 for the quadratic).
    pub fn num_classes(&self) -> usize {
        match self {
            ModelSpec::Quadratic { .. } => 0,
            ModelSpec::Logistic { .. } => 2,
            ModelSpec::Mlp { layers } => *layers.last().unwrap(),
        }
    }

    /// Initial parameters. The quadratic and logistic models start at zero;
    /// MLP weights and biases are drawn uniformly from
    /// `[-1/sqrt(fan_in), +1/sqrt(fan_in)]` using the given stream.
    pub fn init_params(&self, rng: &mut StreamRng) -> ParamVector {
        match self {
            ModelSpec::Quadratic { .. } | ModelSpec::Logistic { .. } => {
                ParamVector::zeros(self.param_count())
            }
            ModelSpec::Mlp { layers } => {
                let mut values = Vec::with_capacity(self.param_count());
                for w in layers.windows(2) {
                    let (fan_in, fan_out) = (w[0], w[1]);
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    for _ in 0..fan_out * fan_in + fan_out {
                        values.push(rng.uniform(-bound, bound));
                    }
                }
                ParamVector::new(values)
            }
        }
    }
}

fn check_psd(matrix: &[f64], d: usize) -> Result<()> {
    // In-place lower-triangular Cholesky with a tolerance: a pivot slightly
    // below zero is clamped (semi-definite case), a clearly negative pivot
    // rejects the matrix.
    let scale = (0..d)
        .map(|i| matrix[i * d + i].abs())
        .fold(1.0f64, f64::max);
    let mut l = vec![0.0; d * d];
    for k in 0..d {
        let mut pivot = matrix[k * d + k];
        for j in 0..k {
            pivot -= l[k * d + j] * l[k * d + j];
        }
        if pivot < -PIVOT_TOL * scale {
            return Err(Error::contract(format!(
                "matrix is not positive semi-definite: pivot {pivot:e} at index {k}"
            )));
        }
        let diag = pivot.max(0.0).sqrt();
        l[k * d + k] = diag;
        for i in (k + 1)..d {
            if diag == 0.0 {
                l[i * d + k] = 0.0;
                continue;
            }
            let mut v = matrix[i * d + k];
            for j in 0..k {
                v -= l[i * d + j] * l[k * d + j];
            }
            l[i * d + k] = v / diag;
        }
    }
    Ok(())
}

fn check_params(model: &ModelSpec, params: &ParamVector) -> Result<()> {
    if params.len() != model.param_count() {
        return Err(Error::contract(format!(
            "params length {} does not match model parameter count {}",
            params.len(),
            model.param_count()
        )));
    }
    Ok(())
}

fn check_batch(model: &ModelSpec, batch: &Batch) -> Result<()> {
    if matches!(model, ModelSpec::Quadratic { .. }) {
        return Ok(());
    }
    if batch.is_empty() {
        return Err(Error::contract("empty batch for a data-driven model"));
    }
    let dim = model.input_dim();
    let classes = model.num_classes();
    for (i, x) in batch.inputs.iter().enumerate() {
        if x.len() != dim {
            return Err(Error::contract(format!(
                "sample {i} has {} features, model expects {dim}",
                x.len()
            )));
        }
    }
    if let Some(&bad) = batch.labels.iter().find(|&&y| y >= classes) {
        return Err(Error::contract(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    Ok(())
}

/// Mean loss of the model on the batch. Deterministic and pure.
pub fn loss(model: &ModelSpec, params: &ParamVector, batch: &Batch) -> Result<f64> {
    check_params(model, params)?;
    check_batch(model, batch)?;
    match model {
        ModelSpec::Quadratic { matrix, center } => Ok(quadratic_loss(matrix, center, params)),
        ModelSpec::Logistic { .. } => Ok(logistic_loss(params, batch)),
        ModelSpec::Mlp { layers } => Ok(mlp_loss_grad(layers, params, batch, false).0),
    }
}

/// Analytic gradient of [`loss`] with respect to `params`.
pub fn grad(model: &ModelSpec, params: &ParamVector, batch: &Batch) -> Result<ParamVector> {
    check_params(model, params)?;
    check_batch(model, batch)?;
    match model {
        ModelSpec::Quadratic { matrix, center } => Ok(quadratic_grad(matrix, center, params)),
        ModelSpec::Logistic { .. } => Ok(logistic_grad(params, batch)),
        ModelSpec::Mlp { layers } => {
            Ok(mlp_loss_grad(layers, params, batch, true).1.unwrap())
        }
    }
}

/// Central-difference gradient, the oracle against which `grad` is checked.
pub fn finite_diff_grad(
    model: &ModelSpec,
    params: &ParamVector,
    batch: &Batch,
    h: f64,
) -> Result<ParamVector> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut out = Vec::with_capacity(params.len());
    let mut work = params.clone();
    for j in 0..params.len() {
        let orig = work[j];
        work.as_mut_slice()[j] = orig + h;
        let up = loss(model, &work, batch)?;
        work.as_mut_slice()[j] = orig - h;
        let down = loss(model, &work, batch)?;
        work.as_mut_slice()[j] = orig;
        out.push((up - down) / (2.0 * h));
    }
    Ok(ParamVector::new(out))
}

/// Predicted class per sample (argmax; first index wins ties).
pub fn predict(model: &ModelSpec, params: &ParamVector, batch: &Batch) -> Result<Vec<usize>> {
    check_params(model, params)?;
    check_batch(model, batch)?;
    match model {
        ModelSpec::Quadratic { .. } => Ok(vec![0; batch.len()]),
        ModelSpec::Logistic { .. } => Ok(batch
            .inputs
            .iter()
            .map(|x| usize::from(dot(params.as_slice(), x) >= 0.0))
            .collect()),
        ModelSpec::Mlp { layers } => {
            let mut out = Vec::with_capacity(batch.len());
            for x in &batch.inputs {
                let logits = mlp_forward_logits(layers, params, x);
                let best = logits
                    .iter()
                    .enumerate()
                    .fold((0usize, f64::NEG_INFINITY), |acc, (i, &v)| {
                        if v > acc.1 {
                            (i, v)
                        } else {
                            acc
                        }
                    })
                    .0;
                out.push(best);
            }
            Ok(out)
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn quadratic_residual_product(matrix: &[f64], center: &ParamVector, params: &ParamVector) -> (Vec<f64>, Vec<f64>) {
    let d = center.len();
    let r: Vec<f64> = (0..d).map(|i| params[i] - center[i]).collect();
    let ar: Vec<f64> = (0..d)
        .map(|i| (0..d).map(|j| matrix[i * d + j] * r[j]).sum())
        .collect();
    (r, ar)
}

fn quadratic_loss(matrix: &[f64], center: &ParamVector, params: &ParamVector) -> f64 {
    let (r, ar) = quadratic_residual_product(matrix, center, params);
    0.5 * dot(&r, &ar)
}

fn quadratic_grad(matrix: &[f64], center: &ParamVector, params: &ParamVector) -> ParamVector {
    let (_, ar) = quadratic_residual_product(matrix, center, params);
    ParamVector::new(ar)
}

/// Numerically stable log(1 + e^x).
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn logistic_loss(params: &ParamVector, batch: &Batch) -> f64 {
    let mut total = 0.0;
    for (x, &y) in batch.inputs.iter().zip(&batch.labels) {
        let s = dot(params.as_slice(), x);
        // -[y ln p + (1-y) ln(1-p)] with p = sigmoid(s)
        total += if y == 1 { softplus(-s) } else { softplus(s) };
    }
    total / batch.len() as f64
}

fn logistic_grad(params: &ParamVector, batch: &Batch) -> ParamVector {
    let d = params.len();
    let mut g = vec![0.0; d];
    for (x, &y) in batch.inputs.iter().zip(&batch.labels) {
        let s = dot(params.as_slice(), x);
        let p = 1.0 / (1.0 + (-s).exp());
        let coeff = p - y as f64;
        for j in 0..d {
            g[j] += coeff * x[j];
        }
    }
    let inv = 1.0 / batch.len() as f64;
    g.iter_mut().for_each(|v| *v *= inv);
    ParamVector::new(g)
}

/// Offsets of weight matrices and biases inside the flat parameter vector.
/// Layer `t` stores `W_t` row-major (`out x in`) followed by `b_t`.
fn layer_offsets(layers: &[usize]) -> Vec<(usize, usize, usize, usize)> {
    let mut offsets = Vec::with_capacity(layers.len() - 1);
    let mut pos = 0;
    for w in layers.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        offsets.push((pos, pos + fan_out * fan_in, fan_in, fan_out));
        pos += fan_out * fan_in + fan_out;
    }
    offsets
}

fn mlp_forward_logits(layers: &[usize], params: &ParamVector, x: &[f64]) -> Vec<f64> {
    let offsets = layer_offsets(layers);
    let p = params.as_slice();
    let mut activation = x.to_vec();
    let last = offsets.len() - 1;
    for (t, &(w_off, b_off, fan_in, fan_out)) in offsets.iter().enumerate() {
        let mut z = vec![0.0; fan_out];
        for o in 0..fan_out {
            let row = &p[w_off + o * fan_in..w_off + (o + 1) * fan_in];
            z[o] = dot(row, &activation) + p[b_off + o];
        }
        if t < last {
            z.iter_mut().for_each(|v| *v = v.tanh());
        }
        activation = z;
    }
    activation
}

/// Forward pass, and optionally the full backward pass, of the MLP on one
/// batch. Returns (mean loss, mean gradient).
fn mlp_loss_grad(
    layers: &[usize],
    params: &ParamVector,
    batch: &Batch,
    want_grad: bool,
) -> (f64, Option<ParamVector>) {
    let offsets = layer_offsets(layers);
    let p = params.as_slice();
    let n_layers = offsets.len();
    let mut grad_acc = if want_grad {
        vec![0.0; params.len()]
    } else {
        Vec::new()
    };
    let mut total_loss = 0.0;

    for (x, &y) in batch.inputs.iter().zip(&batch.labels) {
        // Forward, keeping activations for backprop.
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        activations.push(x.clone());
        for (t, &(w_off, b_off, fan_in, fan_out)) in offsets.iter().enumerate() {
            let prev = &activations[t];
            let mut z = vec![0.0; fan_out];
            for o in 0..fan_out {
                let row = &p[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                z[o] = dot(row, prev) + p[b_off + o];
            }
            if t < n_layers - 1 {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            activations.push(z);
        }

        // Stable softmax cross-entropy on the logits.
        let logits = activations.last().unwrap();
        let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum_exp: f64 = logits.iter().map(|&v| (v - max).exp()).sum();
        total_loss += max + sum_exp.ln() - logits[y];

        if !want_grad {
            continue;
        }

        // Backward: dz at the output is softmax - onehot.
        let mut dz: Vec<f64> = logits
            .iter()
            .map(|&v| (v - max).exp() / sum_exp)
            .collect();
        dz[y] -= 1.0;
        for t in (0..n_layers).rev() {
            let (w_off, b_off, fan_in, fan_out) = offsets[t];
            let prev = &activations[t];
            for o in 0..fan_out {
                let g = dz[o];
                let row = w_off + o * fan_in;
                for i in 0..fan_in {
                    grad_acc[row + i] += g * prev[i];
                }
                grad_acc[b_off + o] += g;
            }
            if t > 0 {
                let mut da = vec![0.0; fan_in];
                for o in 0..fan_out {
                    let g = dz[o];
                    let row = w_off + o * fan_in;
                    for (i, slot) in da.iter_mut().enumerate() {
                        *slot += g * p[row + i];
                    }
                }
                // tanh'(z) expressed through the stored activation a = tanh(z).
                dz = da
                    .iter()
                    .zip(prev)
                    .map(|(&d, &a)| d * (1.0 - a * a))
                    .collect();
            }
        }
    }

    let inv = 1.0 / batch.len() as f64;
    let g = want_grad.then(|| {
        grad_acc.iter_mut().for_each(|v| *v *= inv);
        ParamVector::new(grad_acc)
    });
    (total_loss * inv, g)
}
