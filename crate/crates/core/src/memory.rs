//! Embedding memory: a FIFO queue of labeled embeddings encoded by a
//! momentum-updated copy of the encoder. One mechanism covers three regimes:
//! no memory at all (mini-batch), zero momentum (the queue holds recent main
//! -encoder outputs, i.e. cross-batch memory), and positive momentum (a
//! slowly trailing encoder fills the queue).

use crate::embedding::{
    partition_pairs, similarity_matrix, EmbedError, LabeledEmbedding, PairPartition,
    SimilarityMatrix,
};
use crate::encoder::{forward, EncoderError, MlpEncoderParams};
use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum MemoryError {
    /// Momentum must lie in [0, 1].
    InvalidMomentum,
    ZeroCapacity,
    ShapeMismatch,
    /// Mining requires at least one enqueued batch.
    NotWarmedUp,
    EmptyProbe,
    MissingSnapshot { iteration: usize },
    Encoder(EncoderError),
    Embed(EmbedError),
}

impl fmt::Display for MemoryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MemoryError::InvalidMomentum => write!(f, "momentum must lie in [0, 1]"),
            MemoryError::ZeroCapacity => write!(f, "memory capacity must be at least 1"),
            MemoryError::ShapeMismatch => write!(f, "shape mismatch"),
            MemoryError::NotWarmedUp => write!(f, "memory not warmed up"),
            MemoryError::EmptyProbe => write!(f, "drift probe needs at least one input"),
            MemoryError::MissingSnapshot { iteration } => {
                write!(f, "no drift snapshot recorded at iteration {iteration}")
            }
            MemoryError::Encoder(e) => write!(f, "{e}"),
            MemoryError::Embed(e) => write!(f, "{e}"),
        }
    }
}

impl From<EncoderError> for MemoryError {
    fn from(e: EncoderError) -> Self {
        MemoryError::Encoder(e)
    }
}

impl From<EmbedError> for MemoryError {
    fn from(e: EmbedError) -> Self {
        MemoryError::Embed(e)
    }
}

/// FIFO embedding queue plus the momentum encoder that fills it.
#[derive(Debug, Clone)]
pub struct MemoryBank {
    momentum_params: MlpEncoderParams,
    momentum: f64,
    capacity: usize,
    entries: VecDeque<LabeledEmbedding>,
}

impl MemoryBank {
    /// The momentum encoder starts as a copy of the given parameters.
    pub fn new(
        initial_params: MlpEncoderParams,
        momentum: f64,
        capacity: usize,
    ) -> Result<Self, MemoryError> {
        if !momentum.is_finite() || !(0.0..=1.0).contains(&momentum) {
            return Err(MemoryError::InvalidMomentum);
        }
        if capacity == 0 {
            return Err(MemoryError::ZeroCapacity);
        }
        Ok(MemoryBank {
            momentum_params: initial_params,
            momentum,
            capacity,
            entries: VecDeque::with_capacity(capacity),
        })
    }

    pub fn momentum_params(&self) -> &MlpEncoderParams {
        &self.momentum_params
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &LabeledEmbedding> {
        self.entries.iter()
    }

    /// Queue contents oldest-first, for use as frozen gradient candidates.
    pub fn candidate_vectors(&self) -> Vec<Vec<f64>> {
        self.entries.iter().map(|e| e.vector().to_vec()).collect()
    }

    pub fn labels(&self) -> Vec<u32> {
        self.entries.iter().map(LabeledEmbedding::label).collect()
    }

    /// θ_M ← m·θ_M + (1-m)·θ elementwise. The endpoints are exact: m = 0
    /// copies θ bitwise, m = 1 leaves θ_M untouched.
    pub fn momentum_update(&mut self, main: &MlpEncoderParams) -> Result<(), MemoryError> {
        if !self.momentum_params.shape_matches(main) {
            return Err(MemoryError::ShapeMismatch);
        }
        if self.momentum == 0.0 {
            self.momentum_params = main.clone();
            return Ok(());
        }
        if self.momentum == 1.0 {
            return Ok(());
        }
        let m = self.momentum;
        for (mine, theirs) in self.momentum_params.layers.iter_mut().zip(&main.layers) {
            for (a, &b) in mine.weight.iter_mut().zip(&theirs.weight) {
                *a = m * *a + (1.0 - m) * b;
            }
            for (a, &b) in mine.bias.iter_mut().zip(&theirs.bias) {
                *a = m * *a + (1.0 - m) * b;
            }
        }
        Ok(())
    }

    /// Encodes the raw inputs with the momentum encoder and appends the
    /// normalized embeddings; the oldest entries beyond capacity are evicted.
    pub fn enqueue_batch(
        &mut self,
        inputs: &[Vec<f64>],
        labels: &[u32],
    ) -> Result<(), MemoryError> {
        if inputs.len() != labels.len() {
            return Err(MemoryError::ShapeMismatch);
        }
        let (embeddings, _) = forward(&self.momentum_params, inputs)?;
        self.push_embeddings(embeddings, labels)
    }

    /// Appends already-encoded unit embeddings, bypassing the momentum
    /// encoder. Exists so the zero-momentum regime can be cross-checked
    /// against feeding the queue from the main encoder directly.
    pub fn enqueue_embeddings(
        &mut self,
        embeddings: &[Vec<f64>],
        labels: &[u32],
    ) -> Result<(), MemoryError> {
        if embeddings.len() != labels.len() {
            return Err(MemoryError::ShapeMismatch);
        }
        self.push_embeddings(embeddings.to_vec(), labels)
    }

    fn push_embeddings(
        &mut self,
        embeddings: Vec<Vec<f64>>,
        labels: &[u32],
    ) -> Result<(), MemoryError> {
        for (v, &label) in embeddings.into_iter().zip(labels) {
            let entry = LabeledEmbedding::new(v, label)?;
            if self.entries.len() == self.capacity {
                self.entries.pop_front();
            }
            self.entries.push_back(entry);
        }
        Ok(())
    }

    /// Similarities of each anchor against every memory entry, partitioned
    /// by label equality. Anchors are not memory entries, so there is no
    /// self-pair to exclude.
    pub fn mine_pairs(
        &self,
        anchor_embeddings: &[Vec<f64>],
        anchor_labels: &[u32],
    ) -> Result<(SimilarityMatrix, PairPartition), MemoryError> {
        if self.entries.is_empty() {
            return Err(MemoryError::NotWarmedUp);
        }
        if anchor_embeddings.len() != anchor_labels.len() {
            return Err(MemoryError::ShapeMismatch);
        }
        let candidates = self.candidate_vectors();
        let sim = similarity_matrix(anchor_embeddings, &candidates)?;
        let part = partition_pairs(anchor_labels, &self.labels(), false)?;
        Ok((sim, part))
    }
}

/// Fixed raw inputs whose embeddings are compared across parameter
/// snapshots to measure how fast the feature space moves.
#[derive(Debug, Clone)]
pub struct DriftProbe {
    inputs: Vec<Vec<f64>>,
    snapshots: BTreeMap<usize, Vec<Vec<f64>>>,
}

impl DriftProbe {
    pub fn new(inputs: Vec<Vec<f64>>) -> Result<Self, MemoryError> {
        if inputs.is_empty() {
            return Err(MemoryError::EmptyProbe);
        }
        Ok(DriftProbe {
            inputs,
            snapshots: BTreeMap::new(),
        })
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    /// Embeds the probe under the given parameters and stores the result.
    pub fn record(
        &mut self,
        iteration: usize,
        params: &MlpEncoderParams,
    ) -> Result<(), MemoryError> {
        let (embeddings, _) = forward(params, &self.inputs)?;
        self.snapshots.insert(iteration, embeddings);
        Ok(())
    }

    pub fn recorded_iterations(&self) -> impl Iterator<Item = usize> + '_ {
        self.snapshots.keys().copied()
    }

    /// Mean squared distance between the stored snapshots of two iterations.
    pub fn drift_between(&self, from: usize, to: usize) -> Result<f64, MemoryError> {
        let a = self
            .snapshots
            .get(&from)
            .ok_or(MemoryError::MissingSnapshot { iteration: from })?;
        let b = self
            .snapshots
            .get(&to)
            .ok_or(MemoryError::MissingSnapshot { iteration: to })?;
        Ok(mean_squared_distance(a, b))
    }
}

fn mean_squared_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let total: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(xi, yi)| (xi - yi) * (xi - yi)).sum::<f64>())
        .sum();
    total / a.len() as f64
}

/// Mean squared Euclidean distance between the probe's normalized
/// embeddings under two parameter snapshots. Unit embeddings bound the
/// value to [0, 4].
pub fn feature_drift(
    probe: &DriftProbe,
    params_t: &MlpEncoderParams,
    params_prev: &MlpEncoderParams,
) -> Result<f64, MemoryError> {
    let (now, _) = forward(params_t, &probe.inputs)?;
    let (before, _) = forward(params_prev, &probe.inputs)?;
    Ok(mean_squared_distance(&now, &before))
}

/// Negative pairs strictly above the similarity threshold.
pub fn hard_negative_count(
    sim: &SimilarityMatrix,
    part: &PairPartition,
    threshold: f64,
) -> usize {
    (0..part.anchors())
        .map(|i| {
            part.negatives(i)
                .iter()
                .filter(|&&j| sim.get(i, j) > threshold)
                .count()
        })
        .sum()
}
