//! Embedding-space primitives: l2 normalization, cosine similarity matrices,
//! and label-driven pair partitions.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
// Resolves f64 math under no_std; shadowed by std's inherent methods when any
// build unit (e.g. dev-dependencies) links std into the graph.
#[allow(unused_imports)]
use num_traits::Float;

/// Tolerance within which stored embeddings must be unit-norm.
pub const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub enum EmbedError {
    /// Zero or non-finite norm; the vector has no direction.
    DegenerateEmbedding,
    /// Operands disagree on a dimension or length.
    DimensionMismatch { expected: usize, got: usize },
    /// A stored embedding must be unit-norm within `UNIT_NORM_TOL`.
    NotUnitNorm { norm: f64 },
    /// Cosine similarities live in [-1, 1] (up to 1e-9 rounding).
    SimilarityOutOfRange { value: f64 },
    /// A pair partition listed the same candidate as positive and negative,
    /// or listed the anchor's own self index.
    InconsistentPartition,
}

impl fmt::Display for EmbedError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmbedError::DegenerateEmbedding => write!(f, "degenerate embedding"),
            EmbedError::DimensionMismatch { expected, got } => {
                write!(f, "dimension mismatch: expected {expected}, got {got}")
            }
            EmbedError::NotUnitNorm { norm } => {
                write!(f, "embedding norm {norm} is not 1 within {UNIT_NORM_TOL}")
            }
            EmbedError::SimilarityOutOfRange { value } => {
                write!(f, "similarity {value} outside [-1, 1]")
            }
            EmbedError::InconsistentPartition => {
                write!(f, "positive and negative sets must be disjoint and self-free")
            }
        }
    }
}

/// Unit-norm embedding paired with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbedding {
    vector: Vec<f64>,
    label: u32,
}

impl LabeledEmbedding {
    pub fn new(vector: Vec<f64>, label: u32) -> Result<Self, EmbedError> {
        let norm = norm(&vector);
        if !norm.is_finite() {
            return Err(EmbedError::DegenerateEmbedding);
        }
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(EmbedError::NotUnitNorm { norm });
        }
        Ok(Self { vector, label })
    }

    pub fn vector(&self) -> &[f64] {
        &self.vector
    }

    pub fn label(&self) -> u32 {
        self.label
    }
}

/// Cosine similarities of anchors (rows) against candidates (columns).
/// Entries stay in [-1, 1] up to 1e-9 rounding; an anchors-vs-anchors matrix
/// is symmetric with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl SimilarityMatrix {
    pub fn from_values(values: Vec<f64>, rows: usize, cols: usize) -> Result<Self, EmbedError> {
        if values.len() != rows * cols {
            return Err(EmbedError::DimensionMismatch {
                expected: rows * cols,
                got: values.len(),
            });
        }
        for &v in &values {
            if !v.is_finite() || v.abs() > 1.0 + 1e-9 {
                return Err(EmbedError::SimilarityOutOfRange { value: v });
            }
        }
        Ok(Self { values, rows, cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, anchor: usize, candidate: usize) -> f64 {
        self.values[anchor * self.cols + candidate]
    }

    pub fn row(&self, anchor: usize) -> &[f64] {
        &self.values[anchor * self.cols..(anchor + 1) * self.cols]
    }

    /// Copy with one entry replaced; finite-difference probes use this.
    pub fn with_entry(&self, anchor: usize, candidate: usize, value: f64) -> Self {
        let mut next = self.clone();
        next.values[anchor * self.cols + candidate] = value;
        next
    }
}

/// Per-anchor index sets of positive and negative candidates. P_i and N_i
/// are disjoint; in the square anchors-vs-anchors case the anchor's own
/// column belongs to neither and is listed in `self_indices`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairPartition {
    positives: Vec<Vec<usize>>,
    negatives: Vec<Vec<usize>>,
    self_indices: Option<Vec<usize>>,
}

impl PairPartition {
    pub fn new(
        positives: Vec<Vec<usize>>,
        negatives: Vec<Vec<usize>>,
        self_indices: Option<Vec<usize>>,
    ) -> Result<Self, EmbedError> {
        if positives.len() != negatives.len() {
            return Err(EmbedError::DimensionMismatch {
                expected: positives.len(),
                got: negatives.len(),
            });
        }
        if let Some(selfs) = &self_indices {
            if selfs.len() != positives.len() {
                return Err(EmbedError::DimensionMismatch {
                    expected: positives.len(),
                    got: selfs.len(),
                });
            }
        }
        for i in 0..positives.len() {
            for &p in &positives[i] {
                if negatives[i].contains(&p) {
                    return Err(EmbedError::InconsistentPartition);
                }
            }
            if let Some(selfs) = &self_indices {
                let s = selfs[i];
                if positives[i].contains(&s) || negatives[i].contains(&s) {
                    return Err(EmbedError::InconsistentPartition);
                }
            }
        }
        Ok(Self {
            positives,
            negatives,
            self_indices,
        })
    }

    pub fn anchors(&self) -> usize {
        self.positives.len()
    }

    pub fn positives(&self, anchor: usize) -> &[usize] {
        &self.positives[anchor]
    }

    pub fn negatives(&self, anchor: usize) -> &[usize] {
        &self.negatives[anchor]
    }

    pub fn self_indices(&self) -> Option<&[usize]> {
        self.self_indices.as_deref()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scales to unit length. (3,4) becomes (0.6, 0.8); a zero vector has no
/// direction and is rejected.
pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>, EmbedError> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(EmbedError::DegenerateEmbedding);
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Dot products of unit vectors; rows are anchors, columns candidates.
/// Inputs must already be l2-normalized and share one dimension.
pub fn similarity_matrix(
    anchors: &[Vec<f64>],
    candidates: &[Vec<f64>],
) -> Result<SimilarityMatrix, EmbedError> {
    let dim = anchors
        .first()
        .or_else(|| candidates.first())
        .map(Vec::len)
        .unwrap_or(0);
    for v in anchors.iter().chain(candidates.iter()) {
        if v.len() != dim {
            return Err(EmbedError::DimensionMismatch {
                expected: dim,
                got: v.len(),
            });
        }
    }
    let mut values = Vec::with_capacity(anchors.len() * candidates.len());
    for a in anchors {
        for c in candidates {
            values.push(a.iter().zip(c).map(|(x, y)| x * y).sum());
        }
    }
    Ok(SimilarityMatrix {
        values,
        rows: anchors.len(),
        cols: candidates.len(),
    })
}

/// Labels decide polarity: candidate j is positive for anchor i iff the
/// labels match. With `exclude_self` the two sides are the same collection
/// and each anchor's own column joins neither set.
pub fn partition_pairs(
    anchor_labels: &[u32],
    candidate_labels: &[u32],
    exclude_self: bool,
) -> Result<PairPartition, EmbedError> {
    if exclude_self && anchor_labels.len() != candidate_labels.len() {
        return Err(EmbedError::DimensionMismatch {
            expected: anchor_labels.len(),
            got: candidate_labels.len(),
        });
    }
    let mut positives = vec![Vec::new(); anchor_labels.len()];
    let mut negatives = vec![Vec::new(); anchor_labels.len()];
    for (i, &la) in anchor_labels.iter().enumerate() {
        for (j, &lc) in candidate_labels.iter().enumerate() {
            if exclude_self && i == j {
                continue;
            }
            if la == lc {
                positives[i].push(j);
            } else {
                negatives[i].push(j);
            }
        }
    }
    let self_indices = exclude_self.then(|| (0..anchor_labels.len()).collect());
    Ok(PairPartition {
        positives,
        negatives,
        self_indices,
    })
}
