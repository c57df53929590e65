//! Multilayer perceptron with hand-derived backpropagation and Adam.
//!
//! The network maps a stacked error state to the raw entries of a Cholesky
//! factor: tanh on hidden layers, identity on the output layer so the raw
//! entries are unconstrained in sign. Everything is plain `Vec<f64>` math;
//! the matrices involved are small enough that anything fancier would be
//! overhead.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("input has length {found}, network expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("shape mismatch in {what}")]
    ShapeMismatch { what: &'static str },
    #[error("invalid model: {reason}")]
    InvalidModel { reason: String },
}

/// Hidden-layer activation. Output layers are always affine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Self {
        Self { input_dim, hidden, output_dim, activation: Activation::Tanh }
    }

    /// Spec for the certifier head: `n` inputs, `n(n+1)/2` raw outputs.
    pub fn for_state_dim(n: usize, hidden: Vec<usize>) -> Self {
        Self::new(n, hidden, crate::lyapunov::raw_len(n))
    }

    /// Layer widths from input to output, e.g. `[2, 16, 16, 3]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden);
        dims.push(self.output_dim);
        dims
    }
}

/// One affine layer: `w` is row-major `out` x `in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParameters {
    pub spec: LayerSpec,
    pub seed: u64,
    pub layers: Vec<Layer>,
}

impl NetworkParameters {
    /// Checks that layer shapes chain correctly and all entries are finite.
    pub fn validate(&self) -> Result<(), NetworkError> {
        let dims = self.spec.dims();
        if self.layers.len() + 1 != dims.len() {
            return Err(NetworkError::InvalidModel {
                reason: format!(
                    "{} layers do not fit spec with {} stages",
                    self.layers.len(),
                    dims.len() - 1
                ),
            });
        }
        for (k, layer) in self.layers.iter().enumerate() {
            let (rows, cols) = (dims[k + 1], dims[k]);
            if layer.w.len() != rows * cols || layer.b.len() != rows {
                return Err(NetworkError::InvalidModel {
                    reason: format!("layer {k} does not match {rows}x{cols}"),
                });
            }
            if layer.w.iter().chain(layer.b.iter()).any(|v| !v.is_finite()) {
                return Err(NetworkError::InvalidModel {
                    reason: format!("layer {k} contains non-finite entries"),
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, NetworkError> {
        let params: NetworkParameters = serde_json::from_str(text)
            .map_err(|e| NetworkError::InvalidModel { reason: e.to_string() })?;
        params.validate()?;
        Ok(params)
    }
}

/// Xavier-uniform initialization from a seeded ChaCha8 generator: weights
/// drawn in `[-a, a]` with `a = sqrt(6 / (fan_in + fan_out))`, biases zero.
/// The draw order (layer by layer, weights row-major) is fixed, so identical
/// `(spec, seed)` give bit-identical parameters.
pub fn init_params(spec: &LayerSpec, seed: u64) -> NetworkParameters {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = spec.dims();
    let layers = dims
        .windows(2)
        .map(|pair| {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = (0..fan_in * fan_out).map(|_| rng.random_range(-a..=a)).collect();
            Layer { w, b: vec![0.0; fan_out] }
        })
        .collect();
    NetworkParameters { spec: spec.clone(), seed, layers }
}

/// Cached activations from one forward pass: `activations[0]` is the input,
/// `activations[k]` the output of layer `k`, the last entry the raw output.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub activations: Vec<Vec<f64>>,
}

/// Evaluates the network, returning the raw output and the trace backward
/// propagation needs.
pub fn forward(
    params: &NetworkParameters,
    xi: &[f64],
) -> Result<(Vec<f64>, ForwardTrace), NetworkError> {
    if xi.len() != params.spec.input_dim {
        return Err(NetworkError::DimensionMismatch {
            expected: params.spec.input_dim,
            found: xi.len(),
        });
    }
    let dims = params.spec.dims();
    let mut activations = Vec::with_capacity(params.layers.len() + 1);
    activations.push(xi.to_vec());
    for (k, layer) in params.layers.iter().enumerate() {
        let (rows, cols) = (dims[k + 1], dims[k]);
        let input = &activations[k];
        let last = k + 1 == params.layers.len();
        let mut out = Vec::with_capacity(rows);
        for r in 0..rows {
            let mut z = layer.b[r];
            let row = &layer.w[r * cols..(r + 1) * cols];
            for (wv, iv) in row.iter().zip(input.iter()) {
                z += wv * iv;
            }
            out.push(if last { z } else { z.tanh() });
        }
        activations.push(out);
    }
    let raw = activations.last().expect("at least the input").clone();
    Ok((raw, ForwardTrace { activations }))
}

/// Parameter gradients shaped like [`NetworkParameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(params: &NetworkParameters) -> Self {
        let layers = params
            .layers
            .iter()
            .map(|l| Layer { w: vec![0.0; l.w.len()], b: vec![0.0; l.b.len()] })
            .collect();
        Self { layers }
    }

    /// `self += c * other`. Shapes must agree.
    pub fn add_scaled(&mut self, other: &Gradients, c: f64) {
        debug_assert_eq!(self.layers.len(), other.layers.len());
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            for (d, s) in dst.w.iter_mut().zip(&src.w) {
                *d += c * s;
            }
            for (d, s) in dst.b.iter_mut().zip(&src.b) {
                *d += c * s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }

    /// All entries in a fixed order (layer by layer, weights then bias).
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
        out
    }
}

/// Reverse-mode gradient of `cotangent . raw` with respect to every weight
/// and bias. `trace` must come from [`forward`] under the same parameters.
pub fn backward(
    params: &NetworkParameters,
    trace: &ForwardTrace,
    cotangent: &[f64],
) -> Result<Gradients, NetworkError> {
    let dims = params.spec.dims();
    if trace.activations.len() != params.layers.len() + 1
        || trace.activations.iter().zip(dims.iter()).any(|(a, &d)| a.len() != d)
    {
        return Err(NetworkError::ShapeMismatch { what: "forward trace" });
    }
    if cotangent.len() != params.spec.output_dim {
        return Err(NetworkError::ShapeMismatch { what: "cotangent" });
    }

    let mut grads = Gradients::zeros_like(params);
    // Output layer is affine, so the first delta is the cotangent itself.
    let mut delta = cotangent.to_vec();
    for k in (0..params.layers.len()).rev() {
        let (rows, cols) = (dims[k + 1], dims[k]);
        let input = &trace.activations[k];
        let g = &mut grads.layers[k];
        for r in 0..rows {
            for c in 0..cols {
                g.w[r * cols + c] = delta[r] * input[c];
            }
            g.b[r] = delta[r];
        }
        if k > 0 {
            // Propagate through w' and the tanh of the layer below:
            // tanh'(z) = 1 - tanh(z)^2, and activations store tanh(z).
            let w = &params.layers[k].w;
            let mut prev = vec![0.0; cols];
            for (c, p) in prev.iter_mut().enumerate() {
                let mut sum = 0.0;
                for r in 0..rows {
                    sum += w[r * cols + c] * delta[r];
                }
                *p = sum * (1.0 - input[c] * input[c]);
            }
            delta = prev;
        }
    }
    Ok(grads)
}

/// Adam hyperparameters. Weight decay is decoupled and applied to weights
/// only, never to biases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, weight_decay: 0.0 }
    }
}

/// First and second moment accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Gradients,
    v: Gradients,
    step: u64,
}

impl AdamState {
    pub fn new(params: &NetworkParameters) -> Self {
        Self {
            m: Gradients::zeros_like(params),
            v: Gradients::zeros_like(params),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut NetworkParameters,
    grads: &Gradients,
    state: &mut AdamState,
    hp: &AdamParams,
) -> Result<(), NetworkError> {
    if grads.layers.len() != params.layers.len()
        || grads
            .layers
            .iter()
            .zip(&params.layers)
            .any(|(g, p)| g.w.len() != p.w.len() || g.b.len() != p.b.len())
    {
        return Err(NetworkError::ShapeMismatch { what: "gradients" });
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);

    let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64, decay: bool| {
        *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
        *v = hp.beta2 * *v + (1.0 - hp.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        if decay {
            *p -= hp.lr * hp.weight_decay * *p;
        }
        *p -= hp.lr * m_hat / (v_hat.sqrt() + hp.epsilon);
    };

    for ((p, g), (m, v)) in params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(state.m.layers.iter_mut().zip(state.v.layers.iter_mut()))
    {
        for i in 0..p.w.len() {
            update(&mut p.w[i], g.w[i], &mut m.w[i], &mut v.w[i], true);
        }
        for i in 0..p.b.len() {
            update(&mut p.b[i], g.b[i], &mut m.b[i], &mut v.b[i], false);
        }
    }
    Ok(())
}
