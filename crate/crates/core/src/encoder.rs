//! Small MLP encoder with l2-normalized output and a hand-written backward
//! pass. Hidden layers are rectified, the output layer is linear, and the
//! final normalization backpropagates through the Jacobian (I - vvᵀ)/‖u‖.
//! Candidate (memory-side) embeddings never receive gradient; the pair
//! gradient flows into anchors only.

use crate::embedding::{l2_normalize, EmbedError, PairPartition};
use crate::rng::{substream, STREAM_INIT};
use crate::weighting::WeightMatrix;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
// Resolves f64 math under no_std; shadowed by std's inherent methods when any
// build unit (e.g. dev-dependencies) links std into the graph.
#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, PartialEq)]
pub enum EncoderError {
    /// Layer dims must include at least the input and output sizes.
    EmptyDims,
    ZeroDim,
    /// The embedding dimension must be at least 2.
    EmbedDimTooSmall,
    DimensionMismatch { expected: usize, got: usize },
    DegenerateEmbedding,
    ShapeMismatch,
    NonFiniteParam,
    FlatLengthMismatch { expected: usize, got: usize },
}

impl fmt::Display for EncoderError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncoderError::EmptyDims => {
                write!(f, "layer dims must include input and output sizes")
            }
            EncoderError::ZeroDim => write!(f, "layer dims must be positive"),
            EncoderError::EmbedDimTooSmall => {
                write!(f, "embedding dimension must be at least 2")
            }
            EncoderError::DimensionMismatch { expected, got } => {
                write!(f, "input dimension mismatch: expected {expected}, got {got}")
            }
            EncoderError::DegenerateEmbedding => write!(f, "degenerate embedding"),
            EncoderError::ShapeMismatch => write!(f, "parameter/cache shape mismatch"),
            EncoderError::NonFiniteParam => write!(f, "parameters must be finite"),
            EncoderError::FlatLengthMismatch { expected, got } => {
                write!(f, "flat parameter length mismatch: expected {expected}, got {got}")
            }
        }
    }
}

/// One dense layer: weight is fan_out × fan_in, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub(crate) weight: Vec<f64>,
    pub(crate) bias: Vec<f64>,
}

impl LayerParams {
    pub fn new(weight: Vec<f64>, bias: Vec<f64>) -> Result<Self, EncoderError> {
        if bias.is_empty() || weight.is_empty() || weight.len() % bias.len() != 0 {
            return Err(EncoderError::ShapeMismatch);
        }
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(EncoderError::NonFiniteParam);
        }
        Ok(LayerParams { weight, bias })
    }

    pub fn fan_out(&self) -> usize {
        self.bias.len()
    }

    pub fn fan_in(&self) -> usize {
        self.weight.len() / self.bias.len()
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }
}

/// Full encoder parameters. Also serves as the gradient container, which
/// shares the shape by definition.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpEncoderParams {
    pub(crate) layers: Vec<LayerParams>,
}

/// Gradient with the same layer shapes as its parameters.
pub type ParamGradient = MlpEncoderParams;

impl MlpEncoderParams {
    /// Validates that consecutive layer shapes chain.
    pub fn from_layers(layers: Vec<LayerParams>) -> Result<Self, EncoderError> {
        if layers.is_empty() {
            return Err(EncoderError::EmptyDims);
        }
        for pair in layers.windows(2) {
            if pair[1].fan_in() != pair[0].fan_out() {
                return Err(EncoderError::ShapeMismatch);
            }
        }
        if layers.last().unwrap().fan_out() < 2 {
            return Err(EncoderError::EmbedDimTooSmall);
        }
        Ok(MlpEncoderParams { layers })
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    /// [d_in, hidden…, d_e].
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.layers.len() + 1);
        dims.push(self.layers[0].fan_in());
        dims.extend(self.layers.iter().map(LayerParams::fan_out));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn embed_dim(&self) -> usize {
        self.layers.last().unwrap().fan_out()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Layer-major serialization: per layer the row-major weight matrix,
    /// then the bias vector.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            flat.extend_from_slice(&layer.weight);
            flat.extend_from_slice(&layer.bias);
        }
        flat
    }

    pub fn from_flat(dims: &[usize], flat: &[f64]) -> Result<Self, EncoderError> {
        if dims.len() < 2 {
            return Err(EncoderError::EmptyDims);
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(EncoderError::ZeroDim);
        }
        if *dims.last().unwrap() < 2 {
            return Err(EncoderError::EmbedDimTooSmall);
        }
        let expected: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if flat.len() != expected {
            return Err(EncoderError::FlatLengthMismatch {
                expected,
                got: flat.len(),
            });
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(EncoderError::NonFiniteParam);
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        let mut cursor = 0;
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weight = flat[cursor..cursor + fan_in * fan_out].to_vec();
            cursor += fan_in * fan_out;
            let bias = flat[cursor..cursor + fan_out].to_vec();
            cursor += fan_out;
            layers.push(LayerParams { weight, bias });
        }
        Ok(MlpEncoderParams { layers })
    }

    /// Shape congruence with another parameter set (or gradient).
    pub fn shape_matches(&self, other: &Self) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.len() == b.weight.len() && a.bias.len() == b.bias.len())
    }
}

/// Cache from one forward call: per-level activations (level 0 is the raw
/// input, the last level the pre-normalization output), per-layer
/// preactivations, and the normalization state.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    activations: Vec<Vec<Vec<f64>>>,
    preactivations: Vec<Vec<Vec<f64>>>,
    norms: Vec<f64>,
    normalized: Vec<Vec<f64>>,
}

impl ForwardTrace {
    /// Smallest |z| over hidden-layer preactivations; the final layer is
    /// linear and contributes no ReLU kink. Infinity for single-layer nets.
    /// Finite-difference harnesses skip draws probing within the step size
    /// of a kink.
    pub fn min_abs_relu_preactivation(&self) -> f64 {
        let hidden = self.preactivations.len().saturating_sub(1);
        self.preactivations[..hidden]
            .iter()
            .flatten()
            .flatten()
            .fold(f64::INFINITY, |m, &z| m.min(z.abs()))
    }

    /// Pre-normalization embedding norms, one per batch row.
    pub fn norms(&self) -> &[f64] {
        &self.norms
    }
}

/// Zero-mean weights scaled by 1/sqrt(fan_in), zero biases. Deterministic
/// given the seed.
pub fn init_encoder(layer_dims: &[usize], seed: u64) -> Result<MlpEncoderParams, EncoderError> {
    if layer_dims.len() < 2 {
        return Err(EncoderError::EmptyDims);
    }
    if layer_dims.iter().any(|&d| d == 0) {
        return Err(EncoderError::ZeroDim);
    }
    if *layer_dims.last().unwrap() < 2 {
        return Err(EncoderError::EmbedDimTooSmall);
    }
    let mut rng = substream(seed, STREAM_INIT);
    let mut layers = Vec::with_capacity(layer_dims.len() - 1);
    for w in layer_dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let scale = 1.0 / (fan_in as f64).sqrt();
        let weight = (0..fan_in * fan_out)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
            .collect();
        layers.push(LayerParams {
            weight,
            bias: vec![0.0; fan_out],
        });
    }
    Ok(MlpEncoderParams { layers })
}

/// Rectified hidden layers, linear output, l2-normalized embeddings.
pub fn forward(
    params: &MlpEncoderParams,
    inputs: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, ForwardTrace), EncoderError> {
    let d_in = params.input_dim();
    for row in inputs {
        if row.len() != d_in {
            return Err(EncoderError::DimensionMismatch {
                expected: d_in,
                got: row.len(),
            });
        }
    }
    let layer_count = params.layers.len();
    let mut activations: Vec<Vec<Vec<f64>>> = Vec::with_capacity(layer_count + 1);
    let mut preactivations: Vec<Vec<Vec<f64>>> = Vec::with_capacity(layer_count);
    activations.push(inputs.to_vec());
    for (l, layer) in params.layers.iter().enumerate() {
        let fan_in = layer.fan_in();
        let fan_out = layer.fan_out();
        let level = &activations[l];
        let mut z = Vec::with_capacity(level.len());
        for a in level {
            let mut row = Vec::with_capacity(fan_out);
            for o in 0..fan_out {
                let wrow = &layer.weight[o * fan_in..(o + 1) * fan_in];
                let dot: f64 = wrow.iter().zip(a).map(|(w, x)| w * x).sum();
                row.push(dot + layer.bias[o]);
            }
            z.push(row);
        }
        let last = l + 1 == layer_count;
        let act = if last {
            z.clone()
        } else {
            z.iter()
                .map(|row| row.iter().map(|&v| v.max(0.0)).collect())
                .collect()
        };
        preactivations.push(z);
        activations.push(act);
    }
    let mut norms = Vec::with_capacity(inputs.len());
    let mut normalized = Vec::with_capacity(inputs.len());
    for u in activations.last().unwrap() {
        let v = l2_normalize(u).map_err(|e| match e {
            EmbedError::DegenerateEmbedding => EncoderError::DegenerateEmbedding,
            _ => EncoderError::ShapeMismatch,
        })?;
        let norm: f64 = u.iter().map(|x| x * x).sum::<f64>();
        norms.push(norm.sqrt());
        normalized.push(v);
    }
    Ok((
        normalized.clone(),
        ForwardTrace {
            activations,
            preactivations,
            norms,
            normalized,
        },
    ))
}

/// Exact analytic parameter gradient for the given upstream gradient with
/// respect to the normalized embeddings.
pub fn backward(
    params: &MlpEncoderParams,
    trace: &ForwardTrace,
    upstream: &[Vec<f64>],
) -> Result<ParamGradient, EncoderError> {
    let layer_count = params.layers.len();
    if trace.activations.len() != layer_count + 1
        || trace.preactivations.len() != layer_count
        || upstream.len() != trace.normalized.len()
    {
        return Err(EncoderError::ShapeMismatch);
    }
    let d_e = params.embed_dim();
    if upstream.iter().any(|g| g.len() != d_e) {
        return Err(EncoderError::ShapeMismatch);
    }
    let n = upstream.len();

    // Through the normalization: gu = (g - (g·v)·v)/‖u‖.
    let mut delta: Vec<Vec<f64>> = Vec::with_capacity(n);
    for b in 0..n {
        let g = &upstream[b];
        let v = &trace.normalized[b];
        let radial: f64 = g.iter().zip(v).map(|(gi, vi)| gi * vi).sum();
        delta.push(
            g.iter()
                .zip(v)
                .map(|(gi, vi)| (gi - radial * vi) / trace.norms[b])
                .collect(),
        );
    }

    let mut grads: Vec<LayerParams> = params
        .layers
        .iter()
        .map(|l| LayerParams {
            weight: vec![0.0; l.weight.len()],
            bias: vec![0.0; l.bias.len()],
        })
        .collect();
    for l in (0..layer_count).rev() {
        let layer = &params.layers[l];
        let fan_in = layer.fan_in();
        let fan_out = layer.fan_out();
        let level = &trace.activations[l];
        if level.len() != n || level.iter().any(|a| a.len() != fan_in) {
            return Err(EncoderError::ShapeMismatch);
        }
        let g = &mut grads[l];
        for b in 0..n {
            let d = &delta[b];
            let a = &level[b];
            for o in 0..fan_out {
                let grow = &mut g.weight[o * fan_in..(o + 1) * fan_in];
                for (gi, ai) in grow.iter_mut().zip(a) {
                    *gi += d[o] * ai;
                }
                g.bias[o] += d[o];
            }
        }
        if l > 0 {
            // Rectifier subgradient at exactly 0 is 0.
            let z_prev = &trace.preactivations[l - 1];
            let mut next: Vec<Vec<f64>> = Vec::with_capacity(n);
            for b in 0..n {
                let d = &delta[b];
                let mut row = vec![0.0; fan_in];
                for o in 0..fan_out {
                    let wrow = &layer.weight[o * fan_in..(o + 1) * fan_in];
                    for (ri, wi) in row.iter_mut().zip(wrow) {
                        *ri += d[o] * wi;
                    }
                }
                for (ri, &z) in row.iter_mut().zip(&z_prev[b]) {
                    if z <= 0.0 {
                        *ri = 0.0;
                    }
                }
                next.push(row);
            }
            delta = next;
        }
    }
    Ok(MlpEncoderParams { layers: grads })
}

/// Gradient of the surrogate loss with respect to each anchor embedding:
/// Σ_{j∈N_i} (w_ij/m)·c_j - Σ_{j∈P_i} (w_ij/m)·c_j. Candidates are treated
/// as constants; no gradient flows to the memory side.
pub fn chain_pair_gradient(
    weights: &WeightMatrix,
    part: &PairPartition,
    candidates: &[Vec<f64>],
    batch_size: usize,
) -> Vec<Vec<f64>> {
    debug_assert_eq!(weights.rows(), part.anchors());
    debug_assert_eq!(weights.cols(), candidates.len());
    let d = candidates.first().map_or(0, Vec::len);
    let m = batch_size as f64;
    let mut out = Vec::with_capacity(weights.rows());
    for i in 0..weights.rows() {
        let mut g = vec![0.0; d];
        for &j in part.negatives(i) {
            let w = weights.get(i, j) / m;
            for (gk, ck) in g.iter_mut().zip(&candidates[j]) {
                *gk += w * ck;
            }
        }
        for &j in part.positives(i) {
            let w = weights.get(i, j) / m;
            for (gk, ck) in g.iter_mut().zip(&candidates[j]) {
                *gk -= w * ck;
            }
        }
        out.push(g);
    }
    out
}
