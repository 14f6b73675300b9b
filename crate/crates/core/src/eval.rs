//! Retrieval metrics over a labeled embedding set: Recall@K with
//! deterministic tie handling and similarity histograms split by pair
//! polarity.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
// Resolves f64 math under no_std; shadowed by std's inherent methods when any
// build unit (e.g. dev-dependencies) links std into the graph.
#[allow(unused_imports)]
use num_traits::Float;

pub const DEFAULT_BINS: usize = 80;

#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    TooFewSamples,
    LengthMismatch,
    /// Recall is undefined for a query with no same-label candidate.
    SingletonLabel { label: u32 },
    ZeroK,
    ZeroBins,
    DimensionMismatch,
    NonFiniteSimilarity,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::TooFewSamples => write!(f, "need at least 2 samples"),
            EvalError::LengthMismatch => write!(f, "embeddings and labels differ in length"),
            EvalError::SingletonLabel { label } => {
                write!(f, "label {label} appears only once")
            }
            EvalError::ZeroK => write!(f, "recall cutoff k must be at least 1"),
            EvalError::ZeroBins => write!(f, "histogram needs at least 1 bin"),
            EvalError::DimensionMismatch => write!(f, "embedding dimensions differ"),
            EvalError::NonFiniteSimilarity => write!(f, "similarities must be finite"),
        }
    }
}

/// Recall@K per requested K plus similarity histograms over [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub recall_at: BTreeMap<usize, f64>,
    pub positive_hist: Vec<u64>,
    pub negative_hist: Vec<u64>,
}

fn validate(embeddings: &[Vec<f64>], labels: &[u32]) -> Result<(), EvalError> {
    if embeddings.len() != labels.len() {
        return Err(EvalError::LengthMismatch);
    }
    if embeddings.len() < 2 {
        return Err(EvalError::TooFewSamples);
    }
    let d = embeddings[0].len();
    if embeddings.iter().any(|v| v.len() != d) {
        return Err(EvalError::DimensionMismatch);
    }
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0) += 1;
    }
    for (&label, &count) in &counts {
        if count < 2 {
            return Err(EvalError::SingletonLabel { label });
        }
    }
    Ok(())
}

/// Fraction of queries whose K nearest other samples (by cosine, descending;
/// ties broken by ascending candidate index) contain a same-label sample.
pub fn recall_at_k(
    embeddings: &[Vec<f64>],
    labels: &[u32],
    ks: &[usize],
) -> Result<BTreeMap<usize, f64>, EvalError> {
    validate(embeddings, labels)?;
    if ks.iter().any(|&k| k == 0) {
        return Err(EvalError::ZeroK);
    }
    let n = embeddings.len();
    // Rank of the first same-label candidate per query; recall@k is then the
    // fraction of queries with rank < k, which is non-decreasing in k.
    let mut first_hit = Vec::with_capacity(n);
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for q in 0..n {
        order.clear();
        for c in 0..n {
            if c == q {
                continue;
            }
            let s: f64 = embeddings[q]
                .iter()
                .zip(&embeddings[c])
                .map(|(a, b)| a * b)
                .sum();
            if !s.is_finite() {
                return Err(EvalError::NonFiniteSimilarity);
            }
            order.push((s, c));
        }
        order.sort_unstable_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let rank = order
            .iter()
            .position(|&(_, c)| labels[c] == labels[q])
            .expect("validated: every label appears at least twice");
        first_hit.push(rank);
    }
    let mut result = BTreeMap::new();
    for &k in ks {
        let hits = first_hit.iter().filter(|&&r| r < k).count();
        result.insert(k, hits as f64 / n as f64);
    }
    Ok(result)
}

fn bin_of(s: f64, bins: usize) -> usize {
    let idx = ((s + 1.0) / 2.0 * bins as f64).floor() as isize;
    idx.clamp(0, bins as isize - 1) as usize
}

/// Histograms of all unordered pair similarities, split by label equality.
/// Self-pairs are excluded; the histogram totals are the exact pair counts.
pub fn similarity_distributions(
    embeddings: &[Vec<f64>],
    labels: &[u32],
    bins: usize,
) -> Result<(Vec<u64>, Vec<u64>), EvalError> {
    validate(embeddings, labels)?;
    if bins == 0 {
        return Err(EvalError::ZeroBins);
    }
    let n = embeddings.len();
    let mut pos = vec![0u64; bins];
    let mut neg = vec![0u64; bins];
    for i in 0..n {
        for j in (i + 1)..n {
            let s: f64 = embeddings[i]
                .iter()
                .zip(&embeddings[j])
                .map(|(a, b)| a * b)
                .sum();
            if !s.is_finite() {
                return Err(EvalError::NonFiniteSimilarity);
            }
            let hist = if labels[i] == labels[j] { &mut pos } else { &mut neg };
            hist[bin_of(s, bins)] += 1;
        }
    }
    Ok((pos, neg))
}

/// Recall table and both histograms in one pass over the embedding set.
pub fn evaluate(
    embeddings: &[Vec<f64>],
    labels: &[u32],
    ks: &[usize],
    bins: usize,
) -> Result<RetrievalResult, EvalError> {
    let recall_at = recall_at_k(embeddings, labels, ks)?;
    let (positive_hist, negative_hist) = similarity_distributions(embeddings, labels, bins)?;
    Ok(RetrievalResult {
        recall_at,
        positive_hist,
        negative_hist,
    })
}
