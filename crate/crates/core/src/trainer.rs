//! Deterministic training loops over the two pair sources (in-batch and
//! memory), P×K batch sampling, Adam, and per-iteration metric logging.
//! One run owns a single RNG seed split into fixed substreams, so identical
//! configs produce bitwise-identical trajectories.

use crate::data::VectorDataset;
use crate::embedding::{partition_pairs, similarity_matrix, EmbedError, PairPartition};
use crate::encoder::{
    backward, chain_pair_gradient, forward, init_encoder, EncoderError, MlpEncoderParams,
    ParamGradient,
};
use crate::eval::{recall_at_k, EvalError};
use crate::memory::{hard_negative_count, DriftProbe, MemoryBank, MemoryError};
use crate::rng::{substream, STREAM_PROBE, STREAM_SAMPLER};
use crate::weighting::{
    compute_weights, surrogate_from_weights, NegativeHalf, PositiveHalf, WeightError,
    WeightScheme,
};
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
// Resolves f64 math under no_std; shadowed by std's inherent methods when any
// build unit (e.g. dev-dependencies) links std into the graph.
#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::index;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    InvalidConfig(&'static str),
    NotEnoughClasses { needed: usize, available: usize },
    NotEnoughSamples { label: u32, needed: usize, available: usize },
    /// Non-finite gradients reached the optimizer.
    Diverged,
    /// Non-finite loss at a specific iteration.
    DivergedAt { iteration: usize },
    Weight(WeightError),
    Encoder(EncoderError),
    Memory(MemoryError),
    Embed(EmbedError),
    Eval(EvalError),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::InvalidConfig(msg) => write!(f, "{msg}"),
            TrainError::NotEnoughClasses { needed, available } => {
                write!(f, "batch needs {needed} distinct classes, dataset has {available}")
            }
            TrainError::NotEnoughSamples { label, needed, available } => write!(
                f,
                "batch needs {needed} samples of class {label}, dataset has {available}"
            ),
            TrainError::Diverged => write!(f, "training diverged"),
            TrainError::DivergedAt { iteration } => {
                write!(f, "training diverged at iteration {iteration}")
            }
            TrainError::Weight(e) => write!(f, "{e}"),
            TrainError::Encoder(e) => write!(f, "{e}"),
            TrainError::Memory(e) => write!(f, "{e}"),
            TrainError::Embed(e) => write!(f, "{e}"),
            TrainError::Eval(e) => write!(f, "{e}"),
        }
    }
}

impl From<WeightError> for TrainError {
    fn from(e: WeightError) -> Self {
        TrainError::Weight(e)
    }
}

impl From<EncoderError> for TrainError {
    fn from(e: EncoderError) -> Self {
        TrainError::Encoder(e)
    }
}

impl From<MemoryError> for TrainError {
    fn from(e: MemoryError) -> Self {
        TrainError::Memory(e)
    }
}

impl From<EmbedError> for TrainError {
    fn from(e: EmbedError) -> Self {
        TrainError::Embed(e)
    }
}

impl From<EvalError> for TrainError {
    fn from(e: EvalError) -> Self {
        TrainError::Eval(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// Pairs come from within the batch, self-pairs excluded.
    MiniBatch,
    /// Pairs come from anchor-vs-memory; the queue is fed by the momentum
    /// encoder and zero momentum reproduces cross-batch memory exactly.
    Memory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainMode,
    /// Momentum-encoder coefficient; used in memory mode only.
    pub momentum: f64,
    pub scheme: WeightScheme,
    pub classes_per_batch: usize,
    pub samples_per_class: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub drift_interval: usize,
    pub eval_interval: usize,
    pub eval_ks: Vec<usize>,
    pub hard_neg_threshold: f64,
    /// Memory capacity in batches: capacity = memory_batches × batch size.
    pub memory_batches: usize,
    /// Drift probe size; clipped to the training-set size.
    pub probe_size: usize,
    pub hidden_dims: Vec<usize>,
    pub embed_dim: usize,
    /// 10× learning-rate drops after 50% and 80% of the run.
    pub lr_decay: bool,
    /// Memory mode: also pair anchors against the current batch
    /// (self-excluded) in addition to the memory queue.
    pub include_batch_pairs: bool,
    /// Memory mode: feed the queue from the main encoder instead of the
    /// momentum encoder. Exists to cross-check the zero-momentum regime.
    pub enqueue_with_main: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Memory,
            momentum: 0.999,
            scheme: WeightScheme {
                positive: PositiveHalf::Contrastive,
                negative: NegativeHalf::Contrastive { lambda: 0.5 },
            },
            classes_per_batch: 8,
            samples_per_class: 4,
            iterations: 2000,
            learning_rate: 1e-3,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            drift_interval: 100,
            eval_interval: 100,
            eval_ks: vec![1],
            hard_neg_threshold: 0.5,
            memory_batches: 16,
            probe_size: 256,
            hidden_dims: vec![64],
            embed_dim: 8,
            lr_decay: false,
            include_batch_pairs: false,
            enqueue_with_main: false,
        }
    }
}

impl TrainConfig {
    pub fn batch_size(&self) -> usize {
        self.classes_per_batch * self.samples_per_class
    }

    pub fn encoder_dims(&self, input_dim: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.embed_dim);
        dims
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.classes_per_batch == 0 {
            return Err(TrainError::InvalidConfig("classes per batch must be at least 1"));
        }
        if self.samples_per_class < 2 {
            return Err(TrainError::InvalidConfig(
                "samples per class must be at least 2 so every anchor has a partner",
            ));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(TrainError::InvalidConfig("learning rate must be positive"));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(TrainError::InvalidConfig("weight decay must be nonnegative"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(TrainError::InvalidConfig("adam betas must lie in [0, 1)"));
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(TrainError::InvalidConfig("adam epsilon must be positive"));
        }
        if !self.momentum.is_finite() || !(0.0..=1.0).contains(&self.momentum) {
            return Err(TrainError::InvalidConfig("momentum must lie in [0, 1]"));
        }
        if self.drift_interval == 0 {
            return Err(TrainError::InvalidConfig("drift interval must be at least 1"));
        }
        if self.eval_interval == 0 {
            return Err(TrainError::InvalidConfig("eval interval must be at least 1"));
        }
        if self.eval_ks.iter().any(|&k| k == 0) {
            return Err(TrainError::InvalidConfig("recall cutoffs must be at least 1"));
        }
        if self.memory_batches == 0 {
            return Err(TrainError::InvalidConfig("memory size must be at least 1 batch"));
        }
        if self.probe_size == 0 {
            return Err(TrainError::InvalidConfig("probe size must be at least 1"));
        }
        if self.embed_dim < 2 {
            return Err(TrainError::InvalidConfig("embedding dimension must be at least 2"));
        }
        if self.hidden_dims.iter().any(|&d| d == 0) {
            return Err(TrainError::InvalidConfig("hidden dims must be positive"));
        }
        if !self.hard_neg_threshold.is_finite()
            || !(-1.0..=1.0).contains(&self.hard_neg_threshold)
        {
            return Err(TrainError::InvalidConfig(
                "hard-negative threshold must lie in [-1, 1]",
            ));
        }
        self.scheme.validate()?;
        Ok(())
    }
}

/// One training iteration: surrogate loss, hard-negative count, and the
/// feature drift over the interval ending here when this iteration is a
/// drift checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationLog {
    pub iteration: usize,
    pub loss: f64,
    pub hard_negatives: usize,
    pub drift: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalLog {
    pub iteration: usize,
    pub recall_at: BTreeMap<usize, f64>,
}

/// Full run log: one iteration entry per step (indices 1..=iterations) plus
/// the held-out evaluations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunRecord {
    pub iterations: Vec<IterationLog>,
    pub evals: Vec<EvalLog>,
}

impl RunRecord {
    pub fn final_loss(&self) -> Option<f64> {
        self.iterations.last().map(|l| l.loss)
    }

    pub fn final_recall_at(&self, k: usize) -> Option<f64> {
        self.evals.last().and_then(|e| e.recall_at.get(&k).copied())
    }

    pub fn best_recall_at(&self, k: usize) -> Option<f64> {
        self.evals
            .iter()
            .filter_map(|e| e.recall_at.get(&k).copied())
            .fold(None, |acc, r| Some(acc.map_or(r, |a: f64| a.max(r))))
    }

    pub fn mean_hard_negatives(&self) -> Option<f64> {
        if self.iterations.is_empty() {
            return None;
        }
        let total: usize = self.iterations.iter().map(|l| l.hard_negatives).sum();
        Some(total as f64 / self.iterations.len() as f64)
    }

    /// Mean of the drift values logged at iterations in [lo, hi].
    pub fn mean_drift_between(&self, lo: usize, hi: usize) -> Option<f64> {
        let values: Vec<f64> = self
            .iterations
            .iter()
            .filter(|l| l.iteration >= lo && l.iteration <= hi)
            .filter_map(|l| l.drift)
            .collect();
        if values.is_empty() {
            return None;
        }
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// P distinct classes uniformly without replacement, K samples per class
/// without replacement. Deterministic given the RNG state; classes are
/// visited in sampling order.
pub fn sample_batch(
    dataset: &VectorDataset,
    classes_per_batch: usize,
    samples_per_class: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Vec<f64>>, Vec<u32>), TrainError> {
    let classes = dataset.classes();
    if classes.len() < classes_per_batch {
        return Err(TrainError::NotEnoughClasses {
            needed: classes_per_batch,
            available: classes.len(),
        });
    }
    let picked = index::sample(rng, classes.len(), classes_per_batch);
    let mut inputs = Vec::with_capacity(classes_per_batch * samples_per_class);
    let mut labels = Vec::with_capacity(classes_per_batch * samples_per_class);
    for class_pos in picked.iter() {
        let label = classes[class_pos];
        let members = dataset
            .class_members(label)
            .expect("label came from the dataset's own class list");
        if members.len() < samples_per_class {
            return Err(TrainError::NotEnoughSamples {
                label,
                needed: samples_per_class,
                available: members.len(),
            });
        }
        for member_pos in index::sample(rng, members.len(), samples_per_class).iter() {
            inputs.push(dataset.input(members[member_pos]).to_vec());
            labels.push(label);
        }
    }
    Ok((inputs, labels))
}

/// First and second moment accumulators plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        AdamState {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// Adam with weight decay folded into the gradient (g' = g + wd·θ) and
/// bias-corrected moments. Parameters and state are untouched on error.
#[allow(clippy::too_many_arguments)]
pub fn adam_step(
    params: &mut MlpEncoderParams,
    grads: &ParamGradient,
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    weight_decay: f64,
) -> Result<(), TrainError> {
    if !params.shape_matches(grads) || state.m.len() != params.param_count() {
        return Err(TrainError::Encoder(EncoderError::ShapeMismatch));
    }
    for layer in grads.layers() {
        if layer.weight().iter().chain(layer.bias()).any(|g| !g.is_finite()) {
            return Err(TrainError::Diverged);
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let bias1 = 1.0 - beta1.powi(t);
    let bias2 = 1.0 - beta2.powi(t);
    let mut cursor = 0;
    for (layer, glayer) in params.layers.iter_mut().zip(&grads.layers) {
        let values = layer.weight.iter_mut().chain(layer.bias.iter_mut());
        let grad_values = glayer.weight.iter().chain(glayer.bias.iter());
        for (p, &g) in values.zip(grad_values) {
            let g = g + weight_decay * *p;
            let m = &mut state.m[cursor];
            let v = &mut state.v[cursor];
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let mh = *m / bias1;
            let vh = *v / bias2;
            *p -= lr * mh / (vh.sqrt() + epsilon);
            cursor += 1;
        }
    }
    Ok(())
}

fn effective_lr(config: &TrainConfig, t: usize) -> f64 {
    if !config.lr_decay {
        return config.learning_rate;
    }
    if 10 * t > 8 * config.iterations {
        config.learning_rate * 0.01
    } else if 2 * t > config.iterations {
        config.learning_rate * 0.1
    } else {
        config.learning_rate
    }
}

/// Anchor-vs-(memory ++ batch) partition: label equality decides polarity
/// and each anchor's own batch copy is excluded.
fn partition_with_batch(
    anchor_labels: &[u32],
    memory_labels: &[u32],
    batch_labels: &[u32],
) -> PairPartition {
    let mem_len = memory_labels.len();
    let mut positives = Vec::with_capacity(anchor_labels.len());
    let mut negatives = Vec::with_capacity(anchor_labels.len());
    let mut selfs = Vec::with_capacity(anchor_labels.len());
    for (i, &la) in anchor_labels.iter().enumerate() {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (j, &lc) in memory_labels.iter().chain(batch_labels).enumerate() {
            if j == mem_len + i {
                continue;
            }
            if lc == la {
                pos.push(j);
            } else {
                neg.push(j);
            }
        }
        positives.push(pos);
        negatives.push(neg);
        selfs.push(mem_len + i);
    }
    PairPartition::new(positives, negatives, Some(selfs))
        .expect("constructed lists are disjoint and self-free")
}

/// Runs the configured loop from the given initial parameters. Evaluations
/// run on `eval_data` every `eval_interval` iterations and at the final
/// iteration. Zero iterations return the initial parameters and an empty
/// record.
pub fn train(
    config: &TrainConfig,
    train_data: &VectorDataset,
    eval_data: Option<&VectorDataset>,
    init: MlpEncoderParams,
) -> Result<(MlpEncoderParams, RunRecord), TrainError> {
    config.validate()?;
    if init.input_dim() != train_data.input_dim() {
        return Err(TrainError::Encoder(EncoderError::DimensionMismatch {
            expected: train_data.input_dim(),
            got: init.input_dim(),
        }));
    }
    let batch_size = config.batch_size();
    let mut params = init;
    let mut sampler = substream(config.seed, STREAM_SAMPLER);
    let mut record = RunRecord::default();

    let mut probe = {
        let mut probe_rng = substream(config.seed, STREAM_PROBE);
        let n = config.probe_size.min(train_data.len());
        let inputs = index::sample(&mut probe_rng, train_data.len(), n)
            .iter()
            .map(|i| train_data.input(i).to_vec())
            .collect();
        DriftProbe::new(inputs)?
    };

    let mut bank = match config.mode {
        TrainMode::Memory => Some(MemoryBank::new(
            params.clone(),
            config.momentum,
            config.memory_batches * batch_size,
        )?),
        TrainMode::MiniBatch => None,
    };
    // Drift is measured on the encoder that fills the candidate pool: the
    // momentum encoder in memory mode, the main one otherwise.
    let drift_params = |params: &MlpEncoderParams, bank: &Option<MemoryBank>| {
        match bank {
            Some(b) => b.momentum_params().clone(),
            None => params.clone(),
        }
    };
    probe.record(0, &drift_params(&params, &bank))?;

    let eval_set: Option<(Vec<Vec<f64>>, Vec<u32>)> = eval_data.map(|d| {
        let inputs = d.samples().iter().map(|(v, _)| v.clone()).collect();
        (inputs, d.labels())
    });

    let mut adam = AdamState::new(params.param_count());
    for t in 1..=config.iterations {
        let (inputs, labels) = sample_batch(
            train_data,
            config.classes_per_batch,
            config.samples_per_class,
            &mut sampler,
        )?;
        let (anchors, trace) = forward(&params, &inputs)?;

        let (sim, part, candidates) = match &mut bank {
            None => {
                let sim = similarity_matrix(&anchors, &anchors)?;
                let part = partition_pairs(&labels, &labels, true)?;
                (sim, part, anchors.clone())
            }
            Some(bank) => {
                bank.momentum_update(&params)?;
                if config.enqueue_with_main {
                    bank.enqueue_embeddings(&anchors, &labels)?;
                } else {
                    bank.enqueue_batch(&inputs, &labels)?;
                }
                if config.include_batch_pairs {
                    let mut candidates = bank.candidate_vectors();
                    let memory_labels = bank.labels();
                    candidates.extend(anchors.iter().cloned());
                    let sim = similarity_matrix(&anchors, &candidates)?;
                    let part = partition_with_batch(&labels, &memory_labels, &labels);
                    (sim, part, candidates)
                } else {
                    let (sim, part) = bank.mine_pairs(&anchors, &labels)?;
                    (sim, part, bank.candidate_vectors())
                }
            }
        };

        let weights = compute_weights(&config.scheme, &sim, &part)?;
        let loss = surrogate_from_weights(&weights, &sim, &part, batch_size);
        if !loss.is_finite() {
            return Err(TrainError::DivergedAt { iteration: t });
        }
        let hard_negatives = hard_negative_count(&sim, &part, config.hard_neg_threshold);

        let anchor_grads = chain_pair_gradient(&weights, &part, &candidates, batch_size);
        let grads = backward(&params, &trace, &anchor_grads)?;
        adam_step(
            &mut params,
            &grads,
            &mut adam,
            effective_lr(config, t),
            config.beta1,
            config.beta2,
            config.epsilon,
            config.weight_decay,
        )
        .map_err(|e| match e {
            TrainError::Diverged => TrainError::DivergedAt { iteration: t },
            other => other,
        })?;

        let drift = if t % config.drift_interval == 0 {
            probe.record(t, &drift_params(&params, &bank))?;
            Some(probe.drift_between(t - config.drift_interval, t)?)
        } else {
            None
        };

        if let Some((inputs, labels)) = &eval_set {
            if t % config.eval_interval == 0 || t == config.iterations {
                let (embeddings, _) = forward(&params, inputs)?;
                let recall_at = recall_at_k(&embeddings, labels, &config.eval_ks)?;
                record.evals.push(EvalLog { iteration: t, recall_at });
            }
        }

        record.iterations.push(IterationLog {
            iteration: t,
            loss,
            hard_negatives,
            drift,
        });
    }
    Ok((params, record))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridAxisName {
    Alpha,
    Beta,
    Lambda,
    Tau,
    A,
    B,
    Momentum,
}

impl GridAxisName {
    pub fn name(self) -> &'static str {
        match self {
            GridAxisName::Alpha => "alpha",
            GridAxisName::Beta => "beta",
            GridAxisName::Lambda => "lambda",
            GridAxisName::Tau => "tau",
            GridAxisName::A => "a",
            GridAxisName::B => "b",
            GridAxisName::Momentum => "momentum",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "alpha" => Some(GridAxisName::Alpha),
            "beta" => Some(GridAxisName::Beta),
            "lambda" => Some(GridAxisName::Lambda),
            "tau" => Some(GridAxisName::Tau),
            "a" => Some(GridAxisName::A),
            "b" => Some(GridAxisName::B),
            "momentum" => Some(GridAxisName::Momentum),
            _ => None,
        }
    }
}

impl fmt::Display for GridAxisName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub name: GridAxisName,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PointStatus {
    Ok,
    /// Parameters rejected by validation (e.g. ramp with a > b); not run.
    Invalid,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub settings: Vec<(GridAxisName, f64)>,
    pub final_recall_at_1: Option<f64>,
    pub collapsed: bool,
    pub status: PointStatus,
}

fn axis_applies(base: &TrainConfig, name: GridAxisName) -> bool {
    match name {
        GridAxisName::Alpha => matches!(
            base.scheme.positive,
            PositiveHalf::Binomial { .. } | PositiveHalf::MultiSimilarity { .. }
        ),
        GridAxisName::Beta => matches!(
            base.scheme.negative,
            NegativeHalf::Binomial { .. } | NegativeHalf::MultiSimilarity { .. }
        ),
        GridAxisName::Lambda => {
            matches!(
                base.scheme.positive,
                PositiveHalf::Binomial { .. } | PositiveHalf::MultiSimilarity { .. }
            ) || matches!(
                base.scheme.negative,
                NegativeHalf::Contrastive { .. }
                    | NegativeHalf::Binomial { .. }
                    | NegativeHalf::MultiSimilarity { .. }
            )
        }
        GridAxisName::Tau => {
            matches!(base.scheme.positive, PositiveHalf::InfoNce { .. })
                || matches!(base.scheme.negative, NegativeHalf::InfoNce { .. })
        }
        GridAxisName::A | GridAxisName::B => {
            matches!(base.scheme.negative, NegativeHalf::Ramp { .. })
        }
        GridAxisName::Momentum => base.mode == TrainMode::Memory,
    }
}

fn apply_axis(config: &mut TrainConfig, name: GridAxisName, value: f64) {
    match name {
        GridAxisName::Alpha => {
            if let PositiveHalf::Binomial { alpha, .. }
            | PositiveHalf::MultiSimilarity { alpha, .. } = &mut config.scheme.positive
            {
                *alpha = value;
            }
        }
        GridAxisName::Beta => {
            if let NegativeHalf::Binomial { beta, .. }
            | NegativeHalf::MultiSimilarity { beta, .. } = &mut config.scheme.negative
            {
                *beta = value;
            }
        }
        GridAxisName::Lambda => {
            if let PositiveHalf::Binomial { lambda, .. }
            | PositiveHalf::MultiSimilarity { lambda, .. } = &mut config.scheme.positive
            {
                *lambda = value;
            }
            if let NegativeHalf::Contrastive { lambda }
            | NegativeHalf::Binomial { lambda, .. }
            | NegativeHalf::MultiSimilarity { lambda, .. } = &mut config.scheme.negative
            {
                *lambda = value;
            }
        }
        GridAxisName::Tau => {
            if let PositiveHalf::InfoNce { tau } = &mut config.scheme.positive {
                *tau = value;
            }
            if let NegativeHalf::InfoNce { tau } = &mut config.scheme.negative {
                *tau = value;
            }
        }
        GridAxisName::A => {
            if let NegativeHalf::Ramp { a, .. } = &mut config.scheme.negative {
                *a = value;
            }
        }
        GridAxisName::B => {
            if let NegativeHalf::Ramp { b, .. } = &mut config.scheme.negative {
                *b = value;
            }
        }
        GridAxisName::Momentum => config.momentum = value,
    }
}

/// Cartesian product of the axes in row-major order (first axis outermost).
/// No axes yields the single base point.
pub fn grid_settings(axes: &[GridAxis]) -> Vec<Vec<(GridAxisName, f64)>> {
    let mut out = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.values.len());
        for base in &out {
            for &v in &axis.values {
                let mut settings = base.clone();
                settings.push((axis.name, v));
                next.push(settings);
            }
        }
        out = next;
    }
    out
}

/// One independent training run at the given axis settings. Validation
/// failures mark the point invalid without running it; runtime failures are
/// recorded in the status, and divergence also flags collapse.
pub fn run_grid_point(
    base: &TrainConfig,
    settings: Vec<(GridAxisName, f64)>,
    train_data: &VectorDataset,
    eval_data: &VectorDataset,
) -> GridPoint {
    let mut config = base.clone();
    for &(name, value) in &settings {
        apply_axis(&mut config, name, value);
    }
    if !config.eval_ks.contains(&1) {
        config.eval_ks.push(1);
    }
    if config.validate().is_err() {
        return GridPoint {
            settings,
            final_recall_at_1: None,
            collapsed: false,
            status: PointStatus::Invalid,
        };
    }
    let dims = config.encoder_dims(train_data.input_dim());
    let outcome = init_encoder(&dims, config.seed)
        .map_err(TrainError::from)
        .and_then(|init| train(&config, train_data, Some(eval_data), init));
    match outcome {
        Ok((_, record)) => {
            let final_recall_at_1 = record.final_recall_at(1);
            let chance = 1.0 / eval_data.class_count() as f64;
            let collapsed = matches!(final_recall_at_1, Some(r) if r < 2.0 * chance);
            GridPoint {
                settings,
                final_recall_at_1,
                collapsed,
                status: PointStatus::Ok,
            }
        }
        Err(e @ (TrainError::Diverged | TrainError::DivergedAt { .. })) => GridPoint {
            settings,
            final_recall_at_1: None,
            collapsed: true,
            status: PointStatus::Failed(alloc::format!("{e}")),
        },
        Err(e) => GridPoint {
            settings,
            final_recall_at_1: None,
            collapsed: false,
            status: PointStatus::Failed(alloc::format!("{e}")),
        },
    }
}

/// Upfront sweep checks: every axis non-empty, finite, and applicable to the
/// base scheme and mode. Callers that fan points out themselves run this
/// first so a bad axis fails the whole sweep instead of every point.
pub fn validate_axes(base: &TrainConfig, axes: &[GridAxis]) -> Result<(), TrainError> {
    for axis in axes {
        if axis.values.is_empty() {
            return Err(TrainError::InvalidConfig("grid axis needs at least one value"));
        }
        if axis.values.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::InvalidConfig("grid axis values must be finite"));
        }
        if !axis_applies(base, axis.name) {
            return Err(TrainError::InvalidConfig(
                "grid axis does not apply to the configured scheme or mode",
            ));
        }
    }
    Ok(())
}

/// One run per grid point, all under the base seed. Axis applicability is
/// checked upfront; per-point failures land in the point status instead of
/// aborting the sweep.
pub fn grid_run(
    base: &TrainConfig,
    axes: &[GridAxis],
    train_data: &VectorDataset,
    eval_data: &VectorDataset,
) -> Result<Vec<GridPoint>, TrainError> {
    validate_axes(base, axes)?;
    Ok(grid_settings(axes)
        .into_iter()
        .map(|settings| run_grid_point(base, settings, train_data, eval_data))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_clusters;
    use alloc::collections::BTreeSet;

    fn tiny_dataset() -> VectorDataset {
        generate_clusters(4, 6, 3, 1.0, 0.2, 1).unwrap()
    }

    fn tiny_config(mode: TrainMode, iterations: usize) -> TrainConfig {
        TrainConfig {
            mode,
            momentum: 0.5,
            classes_per_batch: 2,
            samples_per_class: 2,
            iterations,
            hidden_dims: vec![5],
            embed_dim: 2,
            probe_size: 4,
            drift_interval: 2,
            eval_interval: 2,
            memory_batches: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn sample_batch_has_pk_structure() {
        let ds = tiny_dataset();
        let mut rng = substream(9, STREAM_SAMPLER);
        let (inputs, labels) = sample_batch(&ds, 2, 2, &mut rng).unwrap();
        assert_eq!(inputs.len(), 4);
        assert_eq!(labels.len(), 4);
        let distinct: BTreeSet<u32> = labels.iter().copied().collect();
        assert_eq!(distinct.len(), 2);
        for &l in &distinct {
            assert_eq!(labels.iter().filter(|&&x| x == l).count(), 2);
        }
    }

    #[test]
    fn sample_batch_is_deterministic() {
        let ds = tiny_dataset();
        let mut a = substream(9, STREAM_SAMPLER);
        let mut b = substream(9, STREAM_SAMPLER);
        assert_eq!(
            sample_batch(&ds, 3, 2, &mut a).unwrap(),
            sample_batch(&ds, 3, 2, &mut b).unwrap()
        );
    }

    #[test]
    fn sample_batch_rejects_oversized_requests() {
        let ds = tiny_dataset();
        let mut rng = substream(9, STREAM_SAMPLER);
        assert_eq!(
            sample_batch(&ds, 5, 2, &mut rng).unwrap_err(),
            TrainError::NotEnoughClasses { needed: 5, available: 4 }
        );
        // Which class is drawn first depends on the RNG; check the counts.
        match sample_batch(&ds, 2, 7, &mut rng).unwrap_err() {
            TrainError::NotEnoughSamples { needed: 7, available: 6, .. } => {}
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn adam_zero_gradient_leaves_params_unchanged() {
        let mut params = init_encoder(&[3, 4, 2], 0).unwrap();
        let before = params.clone();
        let grads = MlpEncoderParams::from_flat(
            &[3, 4, 2],
            &vec![0.0; params.param_count()],
        )
        .unwrap();
        let mut state = AdamState::new(params.param_count());
        adam_step(&mut params, &grads, &mut state, 1e-3, 0.9, 0.999, 1e-8, 0.0).unwrap();
        assert_eq!(params, before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn adam_first_step_moves_by_roughly_lr_sign() {
        // Bias correction makes the first update ≈ -lr · sign(g).
        let dims = [2, 2];
        let mut params = MlpEncoderParams::from_flat(&dims, &[0.5; 6]).unwrap();
        let mut g = vec![0.0; 6];
        g[0] = 0.37;
        g[1] = -2.4;
        let grads = MlpEncoderParams::from_flat(&dims, &g).unwrap();
        let mut state = AdamState::new(6);
        let lr = 1e-3;
        adam_step(&mut params, &grads, &mut state, lr, 0.9, 0.999, 1e-8, 0.0).unwrap();
        let flat = params.to_flat();
        assert!((flat[0] - (0.5 - lr)).abs() < 1e-6);
        assert!((flat[1] - (0.5 + lr)).abs() < 1e-6);
        assert_eq!(flat[2], 0.5);
    }

    #[test]
    fn adam_rejects_non_finite_gradients_without_mutating() {
        let mut params = init_encoder(&[3, 4, 2], 0).unwrap();
        let before = params.clone();
        let mut g = vec![0.1; params.param_count()];
        g[3] = f64::INFINITY;
        // from_flat would reject non-finite values; build via layers.
        let grads = {
            let mut gp = params.clone();
            let mut cursor = 0;
            for layer in gp.layers.iter_mut() {
                for w in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                    *w = g[cursor];
                    cursor += 1;
                }
            }
            gp
        };
        let mut state = AdamState::new(params.param_count());
        let err = adam_step(&mut params, &grads, &mut state, 1e-3, 0.9, 0.999, 1e-8, 0.0)
            .unwrap_err();
        assert_eq!(err, TrainError::Diverged);
        assert_eq!(alloc::format!("{err}"), "training diverged");
        assert_eq!(params, before);
        assert_eq!(state.step_count(), 0);
    }

    #[test]
    fn adam_trajectories_are_bitwise_deterministic() {
        let dims = [2, 3];
        let run = || {
            let mut params = init_encoder(&dims, 4).unwrap();
            let mut state = AdamState::new(params.param_count());
            for step in 0..10 {
                let g: Vec<f64> = (0..params.param_count())
                    .map(|i| ((i + step) as f64 * 0.173).sin())
                    .collect();
                let grads = MlpEncoderParams::from_flat(&dims, &g).unwrap();
                adam_step(&mut params, &grads, &mut state, 1e-2, 0.9, 0.999, 1e-8, 5e-4)
                    .unwrap();
            }
            params.to_flat()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn zero_iterations_returns_initial_params_and_empty_record() {
        let ds = tiny_dataset();
        let config = tiny_config(TrainMode::Memory, 0);
        let init = init_encoder(&config.encoder_dims(ds.input_dim()), 0).unwrap();
        let (params, record) = train(&config, &ds, Some(&ds), init.clone()).unwrap();
        assert_eq!(params, init);
        assert_eq!(record, RunRecord::default());
    }

    #[test]
    fn run_logs_every_iteration_with_expected_checkpoints() {
        let ds = tiny_dataset();
        let config = tiny_config(TrainMode::Memory, 5);
        let init = init_encoder(&config.encoder_dims(ds.input_dim()), 0).unwrap();
        let (_, record) = train(&config, &ds, Some(&ds), init).unwrap();
        assert_eq!(record.iterations.len(), 5);
        let logged: Vec<usize> = record.iterations.iter().map(|l| l.iteration).collect();
        assert_eq!(logged, vec![1, 2, 3, 4, 5]);
        let drift_at: Vec<usize> = record
            .iterations
            .iter()
            .filter(|l| l.drift.is_some())
            .map(|l| l.iteration)
            .collect();
        assert_eq!(drift_at, vec![2, 4]);
        let eval_at: Vec<usize> = record.evals.iter().map(|e| e.iteration).collect();
        assert_eq!(eval_at, vec![2, 4, 5]);
        assert!(record.iterations.iter().all(|l| l.loss.is_finite()));
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let ds = tiny_dataset();
        let config = tiny_config(TrainMode::Memory, 6);
        let run = || {
            let init = init_encoder(&config.encoder_dims(ds.input_dim()), 0).unwrap();
            train(&config, &ds, Some(&ds), init).unwrap()
        };
        let (pa, ra) = run();
        let (pb, rb) = run();
        assert_eq!(pa, pb);
        assert_eq!(ra, rb);
    }

    #[test]
    fn memory_and_minibatch_differ_from_step_one() {
        let ds = tiny_dataset();
        let mem_config = TrainConfig {
            momentum: 0.0,
            ..tiny_config(TrainMode::Memory, 1)
        };
        let mini_config = tiny_config(TrainMode::MiniBatch, 1);
        let init = init_encoder(&mem_config.encoder_dims(ds.input_dim()), 0).unwrap();
        let (_, mem) = train(&mem_config, &ds, None, init.clone()).unwrap();
        let (_, mini) = train(&mini_config, &ds, None, init).unwrap();
        // Memory mining keeps self-pairs (the anchor's own enqueued copy),
        // mini-batch excludes them, so step-1 losses already differ.
        assert_ne!(mem.iterations[0].loss, mini.iterations[0].loss);
    }

    #[test]
    fn validate_rejects_bad_configs() {
        let mut c = TrainConfig::default();
        c.samples_per_class = 1;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.momentum = 1.5;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.scheme.negative = NegativeHalf::Ramp { a: 0.7, b: 0.3 };
        assert!(c.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn lr_decay_drops_tenfold_at_half_and_hundredfold_late() {
        let config = TrainConfig {
            lr_decay: true,
            iterations: 1000,
            ..TrainConfig::default()
        };
        assert_eq!(effective_lr(&config, 1), 1e-3);
        assert_eq!(effective_lr(&config, 500), 1e-3);
        assert_eq!(effective_lr(&config, 501), 1e-4);
        assert_eq!(effective_lr(&config, 800), 1e-4);
        assert_eq!(effective_lr(&config, 801), 1e-5);
        let constant = TrainConfig { iterations: 1000, ..TrainConfig::default() };
        assert_eq!(effective_lr(&constant, 900), 1e-3);
    }

    #[test]
    fn single_point_grid_matches_direct_training() {
        let ds = generate_clusters(6, 4, 3, 1.0, 0.2, 2).unwrap();
        let (train_data, eval_data) = crate::data::split_by_class(&ds, 0.5, 1).unwrap();
        let base = TrainConfig {
            iterations: 4,
            ..tiny_config(TrainMode::Memory, 4)
        };
        let axes = [GridAxis {
            name: GridAxisName::Momentum,
            values: vec![0.9],
        }];
        let points = grid_run(&base, &axes, &train_data, &eval_data).unwrap();
        assert_eq!(points.len(), 1);
        assert_eq!(points[0].status, PointStatus::Ok);
        let mut direct = base.clone();
        direct.momentum = 0.9;
        let init = init_encoder(&direct.encoder_dims(train_data.input_dim()), direct.seed)
            .unwrap();
        let (_, record) = train(&direct, &train_data, Some(&eval_data), init).unwrap();
        assert_eq!(points[0].final_recall_at_1, record.final_recall_at(1));
    }

    #[test]
    fn ramp_grid_marks_inverted_bounds_invalid() {
        let ds = generate_clusters(6, 4, 3, 1.0, 0.2, 2).unwrap();
        let (train_data, eval_data) = crate::data::split_by_class(&ds, 0.5, 1).unwrap();
        let base = TrainConfig {
            scheme: WeightScheme {
                positive: PositiveHalf::Constant,
                negative: NegativeHalf::Ramp { a: 0.0, b: 0.0 },
            },
            iterations: 2,
            ..tiny_config(TrainMode::Memory, 2)
        };
        let axes = [
            GridAxis { name: GridAxisName::A, values: vec![0.2, 0.6] },
            GridAxis { name: GridAxisName::B, values: vec![0.4] },
        ];
        let points = grid_run(&base, &axes, &train_data, &eval_data).unwrap();
        assert_eq!(points.len(), 2);
        assert_eq!(points[0].status, PointStatus::Ok);
        assert_eq!(points[1].status, PointStatus::Invalid);
        assert!(!points[1].collapsed);
        assert_eq!(points[1].final_recall_at_1, None);
    }

    #[test]
    fn grid_rejects_inapplicable_axes() {
        let ds = tiny_dataset();
        let base = tiny_config(TrainMode::MiniBatch, 2);
        // Contrastive halves have no alpha; mini-batch mode has no momentum.
        for name in [GridAxisName::Alpha, GridAxisName::Momentum] {
            let axes = [GridAxis { name, values: vec![1.0] }];
            assert!(grid_run(&base, &axes, &ds, &ds).is_err());
        }
    }

    #[test]
    fn grid_settings_order_is_row_major() {
        let axes = [
            GridAxis { name: GridAxisName::A, values: vec![1.0, 2.0] },
            GridAxis { name: GridAxisName::B, values: vec![10.0, 20.0] },
        ];
        let settings = grid_settings(&axes);
        let flat: Vec<(f64, f64)> = settings
            .iter()
            .map(|s| (s[0].1, s[1].1))
            .collect();
        assert_eq!(flat, vec![(1.0, 10.0), (1.0, 20.0), (2.0, 10.0), (2.0, 20.0)]);
    }
}
