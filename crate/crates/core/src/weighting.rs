//! Pair-weight decomposition of the supported loss families. A family is
//! described by two weight-magnitude halves; the loss gradient with respect
//! to a pair similarity is +w/m for negatives and -w/m for positives, with m
//! the batch size. Weights are stored as nonnegative magnitudes and polarity
//! comes from the pair partition, so halves from different families mix
//! freely.
//!
//! The four classic families also carry a reconstructed scalar loss whose
//! S-derivatives reproduce the weights exactly; the ramp family is defined by
//! its weights alone and has no scalar form.

use crate::embedding::{PairPartition, SimilarityMatrix};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
// Resolves f64 math under no_std; shadowed by std's inherent methods when any
// build unit (e.g. dev-dependencies) links std into the graph.
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, PartialEq)]
pub enum WeightError {
    InvalidParameter(&'static str),
    /// The ramp family has weight magnitudes only.
    SurrogateOnly,
    ShapeMismatch { expected: usize, got: usize },
}

impl fmt::Display for WeightError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightError::InvalidParameter(msg) => write!(f, "{msg}"),
            WeightError::SurrogateOnly => write!(f, "surrogate-only family"),
            WeightError::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected {expected}, got {got}")
            }
        }
    }
}

/// Positive-half weight magnitude. The stored value is |∂L/∂S|·m; the
/// positive-pair gradient itself is -magnitude/m.
#[derive(Debug, Clone, PartialEq)]
pub enum PositiveHalf {
    /// Constant 1.
    Contrastive,
    /// sigmoid(alpha·(lambda - S)).
    Binomial { alpha: f64, lambda: f64 },
    /// e^{alpha(lambda-S)} over 1 + the anchor's whole positive set.
    MultiSimilarity { alpha: f64, lambda: f64 },
    /// (1/tau)·(1 - softmax of S against the anchor's negatives).
    InfoNce { tau: f64 },
    /// Constant 1; the positive half used with the ramp negative half.
    Constant,
}

/// Negative-half weight magnitude; the negative-pair gradient is +magnitude/m.
#[derive(Debug, Clone, PartialEq)]
pub enum NegativeHalf {
    /// Indicator of S >= lambda.
    Contrastive { lambda: f64 },
    /// sigmoid(beta·(S - lambda)).
    Binomial { beta: f64, lambda: f64 },
    /// e^{beta(S-lambda)} over 1 + the anchor's whole negative set.
    MultiSimilarity { beta: f64, lambda: f64 },
    /// (1/tau)·sum over positives of per-positive softmax terms; each
    /// positive's denominator spans that positive plus all negatives.
    InfoNce { tau: f64 },
    /// 0 below a, linear (S-a)/(b-a) between, 1 at and above b. With a = b
    /// the ramp degenerates to the step S >= a.
    Ramp { a: f64, b: f64 },
}

/// Independently mixable positive and negative weight halves.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightScheme {
    pub positive: PositiveHalf,
    pub negative: NegativeHalf,
}

fn check_scale(value: f64, msg: &'static str) -> Result<(), WeightError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(WeightError::InvalidParameter(msg))
    }
}

fn check_margin(lambda: f64) -> Result<(), WeightError> {
    if lambda.is_finite() && (-1.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(WeightError::InvalidParameter("lambda must lie in [-1, 1]"))
    }
}

impl WeightScheme {
    pub fn validate(&self) -> Result<(), WeightError> {
        match &self.positive {
            PositiveHalf::Contrastive | PositiveHalf::Constant => {}
            PositiveHalf::Binomial { alpha, lambda }
            | PositiveHalf::MultiSimilarity { alpha, lambda } => {
                check_scale(*alpha, "alpha must be positive")?;
                check_margin(*lambda)?;
            }
            PositiveHalf::InfoNce { tau } => check_scale(*tau, "tau must be positive")?,
        }
        match &self.negative {
            NegativeHalf::Contrastive { lambda } => check_margin(*lambda)?,
            NegativeHalf::Binomial { beta, lambda }
            | NegativeHalf::MultiSimilarity { beta, lambda } => {
                check_scale(*beta, "beta must be positive")?;
                check_margin(*lambda)?;
            }
            NegativeHalf::InfoNce { tau } => check_scale(*tau, "tau must be positive")?,
            NegativeHalf::Ramp { a, b } => {
                if !a.is_finite() || !b.is_finite() {
                    return Err(WeightError::InvalidParameter("ramp bounds must be finite"));
                }
                if b < a {
                    return Err(WeightError::InvalidParameter("ramp requires b >= a"));
                }
            }
        }
        Ok(())
    }
}

/// Similarities of the anchor's remaining pairs, grouped by polarity. The
/// queried pair itself is excluded and travels as the explicit `s` argument,
/// so a hypothetical similarity can be probed on a grid under a fixed
/// context. A pair that is the sole member of its polarity has an empty
/// same-polarity slice here.
#[derive(Debug, Clone, Copy, Default)]
pub struct AnchorContext<'a> {
    pub positives: &'a [f64],
    pub negatives: &'a [f64],
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// e^{t_j} / (1 + Σ_k e^{t_k}) for every member exponent, max-shifted so
/// beta up to 100 cannot overflow.
fn softmax_plus_one(ts: &[f64]) -> Vec<f64> {
    let m = ts.iter().fold(0.0_f64, |a, &b| a.max(b));
    let den = (-m).exp() + ts.iter().map(|&t| (t - m).exp()).sum::<f64>();
    ts.iter().map(|&t| (t - m).exp() / den).collect()
}

/// ln(1 + Σ e^{t_k}), max-shifted; empty input gives 0.
fn ln1p_sum_exp(ts: &[f64]) -> f64 {
    let m = ts.iter().fold(0.0_f64, |a, &b| a.max(b));
    m + ((-m).exp() + ts.iter().map(|&t| (t - m).exp()).sum::<f64>()).ln()
}

fn ramp_weight(s: f64, a: f64, b: f64) -> f64 {
    if a == b {
        return if s >= a { 1.0 } else { 0.0 };
    }
    if s < a {
        0.0
    } else if s >= b {
        1.0
    } else {
        (s - a) / (b - a)
    }
}

fn infonce_pos(s: f64, negatives: &[f64], tau: f64) -> f64 {
    let z0 = s / tau;
    let m = negatives.iter().fold(z0, |a, &n| a.max(n / tau));
    let num = (z0 - m).exp();
    let den = num + negatives.iter().map(|&n| (n / tau - m).exp()).sum::<f64>();
    (1.0 - num / den) / tau
}

fn infonce_neg(s: f64, positives: &[f64], other_negatives: &[f64], tau: f64) -> f64 {
    let z0 = s / tau;
    let mut acc = 0.0;
    for &p in positives {
        let zp = p / tau;
        let m = other_negatives
            .iter()
            .fold(zp.max(z0), |a, &n| a.max(n / tau));
        let den = (zp - m).exp()
            + (z0 - m).exp()
            + other_negatives
                .iter()
                .map(|&n| (n / tau - m).exp())
                .sum::<f64>();
        acc += (z0 - m).exp() / den;
    }
    acc / tau
}

/// Positive-pair weight magnitude at similarity `s`. Degenerate contexts
/// follow the loss forms: an InfoNce positive with no negatives weighs 0.
pub fn positive_weight(scheme: &WeightScheme, s: f64, ctx: &AnchorContext<'_>) -> f64 {
    match &scheme.positive {
        PositiveHalf::Contrastive | PositiveHalf::Constant => 1.0,
        PositiveHalf::Binomial { alpha, lambda } => sigmoid(alpha * (lambda - s)),
        PositiveHalf::MultiSimilarity { alpha, lambda } => {
            let mut ts = Vec::with_capacity(1 + ctx.positives.len());
            ts.push(alpha * (lambda - s));
            ts.extend(ctx.positives.iter().map(|&k| alpha * (lambda - k)));
            softmax_plus_one(&ts)[0]
        }
        PositiveHalf::InfoNce { tau } => infonce_pos(s, ctx.negatives, *tau),
    }
}

/// Negative-pair weight magnitude at similarity `s`; an InfoNce negative
/// with no positives weighs 0.
pub fn negative_weight(scheme: &WeightScheme, s: f64, ctx: &AnchorContext<'_>) -> f64 {
    match &scheme.negative {
        NegativeHalf::Contrastive { lambda } => {
            if s >= *lambda {
                1.0
            } else {
                0.0
            }
        }
        NegativeHalf::Binomial { beta, lambda } => sigmoid(beta * (s - lambda)),
        NegativeHalf::MultiSimilarity { beta, lambda } => {
            let mut ts = Vec::with_capacity(1 + ctx.negatives.len());
            ts.push(beta * (s - lambda));
            ts.extend(ctx.negatives.iter().map(|&k| beta * (k - lambda)));
            softmax_plus_one(&ts)[0]
        }
        NegativeHalf::InfoNce { tau } => infonce_neg(s, ctx.positives, ctx.negatives, *tau),
        NegativeHalf::Ramp { a, b } => ramp_weight(s, *a, *b),
    }
}

/// Nonnegative weight magnitudes per (anchor, candidate); polarity is
/// carried by the partition. Entries outside the partition, including self
/// indices, stay 0.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl WeightMatrix {
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
}

/// Evaluates both halves over a full similarity matrix. Equivalent to the
/// scalar functions called per pair with the rest of the row as context.
pub fn compute_weights(
    scheme: &WeightScheme,
    sim: &SimilarityMatrix,
    part: &PairPartition,
) -> Result<WeightMatrix, WeightError> {
    if part.anchors() != sim.rows() {
        return Err(WeightError::ShapeMismatch {
            expected: sim.rows(),
            got: part.anchors(),
        });
    }
    let (rows, cols) = (sim.rows(), sim.cols());
    let mut values = vec![0.0; rows * cols];
    for i in 0..rows {
        let row = sim.row(i);
        let pos = part.positives(i);
        let neg = part.negatives(i);
        if pos.iter().chain(neg).any(|&j| j >= cols) {
            return Err(WeightError::ShapeMismatch {
                expected: cols,
                got: *pos.iter().chain(neg).max().unwrap() + 1,
            });
        }
        let out = &mut values[i * cols..(i + 1) * cols];
        match &scheme.positive {
            PositiveHalf::Contrastive | PositiveHalf::Constant => {
                for &j in pos {
                    out[j] = 1.0;
                }
            }
            PositiveHalf::Binomial { alpha, lambda } => {
                for &j in pos {
                    out[j] = sigmoid(alpha * (lambda - row[j]));
                }
            }
            PositiveHalf::MultiSimilarity { alpha, lambda } => {
                let ts: Vec<f64> = pos.iter().map(|&j| alpha * (lambda - row[j])).collect();
                for (&j, w) in pos.iter().zip(softmax_plus_one(&ts)) {
                    out[j] = w;
                }
            }
            PositiveHalf::InfoNce { tau } => {
                let negs: Vec<f64> = neg.iter().map(|&j| row[j]).collect();
                for &j in pos {
                    out[j] = infonce_pos(row[j], &negs, *tau);
                }
            }
        }
        match &scheme.negative {
            NegativeHalf::Contrastive { lambda } => {
                for &j in neg {
                    out[j] = if row[j] >= *lambda { 1.0 } else { 0.0 };
                }
            }
            NegativeHalf::Binomial { beta, lambda } => {
                for &j in neg {
                    out[j] = sigmoid(beta * (row[j] - lambda));
                }
            }
            NegativeHalf::MultiSimilarity { beta, lambda } => {
                let ts: Vec<f64> = neg.iter().map(|&j| beta * (row[j] - lambda)).collect();
                for (&j, w) in neg.iter().zip(softmax_plus_one(&ts)) {
                    out[j] = w;
                }
            }
            NegativeHalf::InfoNce { tau } => {
                // Per-positive denominators shared across all negatives of
                // the anchor; one pass per positive instead of per pair.
                let zn: Vec<f64> = neg.iter().map(|&j| row[j] / tau).collect();
                for &p in part.positives(i) {
                    let zp = row[p] / tau;
                    let m = zn.iter().fold(zp, |a, &z| a.max(z));
                    let den =
                        (zp - m).exp() + zn.iter().map(|&z| (z - m).exp()).sum::<f64>();
                    for (&j, &z) in neg.iter().zip(&zn) {
                        out[j] += (z - m).exp() / den / tau;
                    }
                }
            }
            NegativeHalf::Ramp { a, b } => {
                for &j in neg {
                    out[j] = ramp_weight(row[j], *a, *b);
                }
            }
        }
    }
    Ok(WeightMatrix { values, rows, cols })
}

/// A loss family with a scalar form whose S-derivatives equal the signed
/// weights. `Ramp` is listed so callers can name it, but it is
/// surrogate-only.
#[derive(Debug, Clone, PartialEq)]
pub enum LossFamily {
    Contrastive { lambda: f64 },
    Binomial { alpha: f64, beta: f64, lambda: f64 },
    MultiSimilarity { alpha: f64, beta: f64, lambda: f64 },
    InfoNce { tau: f64 },
    Ramp { a: f64, b: f64 },
}

impl LossFamily {
    /// The scheme whose magnitudes are this family's |∂L/∂S|·m.
    pub fn scheme(&self) -> WeightScheme {
        match *self {
            LossFamily::Contrastive { lambda } => WeightScheme {
                positive: PositiveHalf::Contrastive,
                negative: NegativeHalf::Contrastive { lambda },
            },
            LossFamily::Binomial { alpha, beta, lambda } => WeightScheme {
                positive: PositiveHalf::Binomial { alpha, lambda },
                negative: NegativeHalf::Binomial { beta, lambda },
            },
            LossFamily::MultiSimilarity { alpha, beta, lambda } => WeightScheme {
                positive: PositiveHalf::MultiSimilarity { alpha, lambda },
                negative: NegativeHalf::MultiSimilarity { beta, lambda },
            },
            LossFamily::InfoNce { tau } => WeightScheme {
                positive: PositiveHalf::InfoNce { tau },
                negative: NegativeHalf::InfoNce { tau },
            },
            LossFamily::Ramp { a, b } => WeightScheme {
                positive: PositiveHalf::Constant,
                negative: NegativeHalf::Ramp { a, b },
            },
        }
    }
}

/// Scalar loss averaged over anchors. Derivative w.r.t. S_ij is exactly
/// -w_ij/m at positives and +w_ij/m at negatives.
pub fn true_loss(
    family: &LossFamily,
    sim: &SimilarityMatrix,
    part: &PairPartition,
) -> Result<f64, WeightError> {
    if part.anchors() != sim.rows() {
        return Err(WeightError::ShapeMismatch {
            expected: sim.rows(),
            got: part.anchors(),
        });
    }
    let m = part.anchors();
    if m == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for i in 0..m {
        let row = sim.row(i);
        let pos = part.positives(i);
        let neg = part.negatives(i);
        total += match *family {
            LossFamily::Contrastive { lambda } => {
                let p: f64 = pos.iter().map(|&j| 1.0 - row[j]).sum();
                let n: f64 = neg.iter().map(|&j| (row[j] - lambda).max(0.0)).sum();
                p + n
            }
            LossFamily::Binomial { alpha, beta, lambda } => {
                let p: f64 = pos
                    .iter()
                    .map(|&j| softplus(alpha * (lambda - row[j])) / alpha)
                    .sum();
                let n: f64 = neg
                    .iter()
                    .map(|&j| softplus(beta * (row[j] - lambda)) / beta)
                    .sum();
                p + n
            }
            LossFamily::MultiSimilarity { alpha, beta, lambda } => {
                let tp: Vec<f64> = pos.iter().map(|&j| alpha * (lambda - row[j])).collect();
                let tn: Vec<f64> = neg.iter().map(|&j| beta * (row[j] - lambda)).collect();
                ln1p_sum_exp(&tp) / alpha + ln1p_sum_exp(&tn) / beta
            }
            LossFamily::InfoNce { tau } => {
                let zn: Vec<f64> = neg.iter().map(|&j| row[j] / tau).collect();
                pos.iter()
                    .map(|&p| {
                        let zp = row[p] / tau;
                        let m = zn.iter().fold(zp, |a, &z| a.max(z));
                        let lse = m
                            + ((zp - m).exp()
                                + zn.iter().map(|&z| (z - m).exp()).sum::<f64>())
                            .ln();
                        lse - zp
                    })
                    .sum()
            }
            LossFamily::Ramp { .. } => return Err(WeightError::SurrogateOnly),
        };
    }
    Ok(total / m as f64)
}

/// L = (1/m)·Σ_i [Σ_{j∈N_i} w·S - Σ_{j∈P_i} w·S] with the weights held
/// constant, so ∂L/∂S_ij is ±w_ij/m by construction.
pub fn surrogate_loss(
    scheme: &WeightScheme,
    sim: &SimilarityMatrix,
    part: &PairPartition,
    batch_size: usize,
) -> Result<f64, WeightError> {
    let weights = compute_weights(scheme, sim, part)?;
    Ok(surrogate_from_weights(&weights, sim, part, batch_size))
}

/// Surrogate value from precomputed weights; the trainer reuses the weight
/// matrix it already needs for the gradient.
pub fn surrogate_from_weights(
    weights: &WeightMatrix,
    sim: &SimilarityMatrix,
    part: &PairPartition,
    batch_size: usize,
) -> f64 {
    let mut total = 0.0;
    for i in 0..part.anchors() {
        for &j in part.negatives(i) {
            total += weights.get(i, j) * sim.get(i, j);
        }
        for &j in part.positives(i) {
            total -= weights.get(i, j) * sim.get(i, j);
        }
    }
    total / batch_size as f64
}

/// Signed ∂L/∂S_ij: +w/m at negatives, -w/m at positives, 0 elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMatrix {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl GradientMatrix {
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
}

pub fn grad_wrt_similarity(
    scheme: &WeightScheme,
    sim: &SimilarityMatrix,
    part: &PairPartition,
    batch_size: usize,
) -> Result<GradientMatrix, WeightError> {
    let weights = compute_weights(scheme, sim, part)?;
    let cols = weights.cols();
    let mut values = vec![0.0; weights.rows() * cols];
    let m = batch_size as f64;
    for i in 0..part.anchors() {
        for &j in part.negatives(i) {
            values[i * cols + j] = weights.get(i, j) / m;
        }
        for &j in part.positives(i) {
            values[i * cols + j] = -weights.get(i, j) / m;
        }
    }
    Ok(GradientMatrix {
        values,
        rows: weights.rows(),
        cols,
    })
}

/// One curve sample: both weight halves at a probed similarity.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub similarity: f64,
    pub w_pos: f64,
    pub w_neg: f64,
}

/// Evaluates both halves over a similarity grid under a fixed context; the
/// probed pair acts as the sole varied member of its own polarity.
pub fn sample_weight_curve(
    scheme: &WeightScheme,
    grid: &[f64],
    ctx: &AnchorContext<'_>,
) -> Vec<CurvePoint> {
    grid.iter()
        .map(|&s| CurvePoint {
            similarity: s,
            w_pos: positive_weight(scheme, s, ctx),
            w_neg: negative_weight(scheme, s, ctx),
        })
        .collect()
}

/// Sum of weight magnitudes per similarity bin, split by polarity. Bins are
/// uniform over [-1, 1]; `bins` must be at least 1.
pub fn gradient_contribution_histogram(
    scheme: &WeightScheme,
    sim: &SimilarityMatrix,
    part: &PairPartition,
    bins: usize,
) -> Result<(Vec<f64>, Vec<f64>), WeightError> {
    if bins == 0 {
        return Err(WeightError::InvalidParameter("bins must be at least 1"));
    }
    let weights = compute_weights(scheme, sim, part)?;
    let bin_of = |s: f64| -> usize {
        let idx = ((s + 1.0) / 2.0 * bins as f64).floor() as isize;
        idx.clamp(0, bins as isize - 1) as usize
    };
    let mut pos_mass = vec![0.0; bins];
    let mut neg_mass = vec![0.0; bins];
    for i in 0..part.anchors() {
        for &j in part.positives(i) {
            pos_mass[bin_of(sim.get(i, j))] += weights.get(i, j);
        }
        for &j in part.negatives(i) {
            neg_mass[bin_of(sim.get(i, j))] += weights.get(i, j);
        }
    }
    Ok((pos_mass, neg_mass))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::PairPartition;
    use alloc::vec;

    fn scheme(positive: PositiveHalf, negative: NegativeHalf) -> WeightScheme {
        WeightScheme { positive, negative }
    }

    const ANY_NEG: NegativeHalf = NegativeHalf::Contrastive { lambda: 0.5 };
    const ANY_POS: PositiveHalf = PositiveHalf::Contrastive;

    #[test]
    fn contrastive_positive_is_constant_one() {
        let sch = scheme(PositiveHalf::Contrastive, ANY_NEG);
        for s in [-1.0, -0.3, 0.0, 0.7, 1.0] {
            assert_eq!(positive_weight(&sch, s, &AnchorContext::default()), 1.0);
        }
    }

    #[test]
    fn binomial_positive_at_lambda_is_half() {
        for alpha in [0.5, 2.0, 40.0] {
            let sch = scheme(PositiveHalf::Binomial { alpha, lambda: 0.3 }, ANY_NEG);
            let w = positive_weight(&sch, 0.3, &AnchorContext::default());
            assert!((w - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn binomial_positive_matches_logistic_value() {
        // alpha=2, lambda=0.5, S=0: e^1/(1+e^1).
        let sch = scheme(
            PositiveHalf::Binomial { alpha: 2.0, lambda: 0.5 },
            ANY_NEG,
        );
        let w = positive_weight(&sch, 0.0, &AnchorContext::default());
        assert!((w - 0.731_058_578_630_004_9).abs() < 1e-12);
    }

    #[test]
    fn multi_similarity_singleton_reduces_to_binomial() {
        let ms = scheme(
            PositiveHalf::MultiSimilarity { alpha: 2.0, lambda: 0.5 },
            ANY_NEG,
        );
        let bi = scheme(
            PositiveHalf::Binomial { alpha: 2.0, lambda: 0.5 },
            ANY_NEG,
        );
        let ctx = AnchorContext::default();
        let mut s = -1.0;
        while s <= 1.0 {
            let a = positive_weight(&ms, s, &ctx);
            let b = positive_weight(&bi, s, &ctx);
            assert!((a - b).abs() < 1e-12, "s={s}: ms={a} binomial={b}");
            s += 0.05;
        }
    }

    #[test]
    fn contrastive_negative_indicator_with_tie_at_lambda() {
        let sch = scheme(ANY_POS, NegativeHalf::Contrastive { lambda: 0.5 });
        let ctx = AnchorContext::default();
        assert_eq!(negative_weight(&sch, 0.6, &ctx), 1.0);
        assert_eq!(negative_weight(&sch, 0.4, &ctx), 0.0);
        assert_eq!(negative_weight(&sch, 0.5, &ctx), 1.0);
    }

    #[test]
    fn ramp_midpoint_and_degenerate_step() {
        let ramp = scheme(ANY_POS, NegativeHalf::Ramp { a: 0.3, b: 0.7 });
        let ctx = AnchorContext::default();
        assert!((negative_weight(&ramp, 0.5, &ctx) - 0.5).abs() < 1e-15);
        assert_eq!(negative_weight(&ramp, 0.2, &ctx), 0.0);
        assert_eq!(negative_weight(&ramp, 0.9, &ctx), 1.0);
        let step = scheme(ANY_POS, NegativeHalf::Ramp { a: 0.5, b: 0.5 });
        assert_eq!(negative_weight(&step, 0.5, &ctx), 1.0);
        assert_eq!(negative_weight(&step, 0.499, &ctx), 0.0);
    }

    #[test]
    fn infonce_symmetric_two_way_softmax() {
        // One positive at 0, the probed negative at 0, tau=1: weight 0.5.
        let sch = scheme(ANY_POS, NegativeHalf::InfoNce { tau: 1.0 });
        let ctx = AnchorContext {
            positives: &[0.0],
            negatives: &[],
        };
        assert!((negative_weight(&sch, 0.0, &ctx) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn infonce_single_positive_balances_negative_sum() {
        let sch = scheme(
            PositiveHalf::InfoNce { tau: 0.3 },
            NegativeHalf::InfoNce { tau: 0.3 },
        );
        let negs = [0.8, -0.2, 0.1, 0.55];
        let s_pos = 0.4;
        let w_pos = positive_weight(
            &sch,
            s_pos,
            &AnchorContext {
                positives: &[],
                negatives: &negs,
            },
        );
        let mut neg_sum = 0.0;
        for (i, &n) in negs.iter().enumerate() {
            let others: Vec<f64> = negs
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != i)
                .map(|(_, &v)| v)
                .collect();
            neg_sum += negative_weight(
                &sch,
                n,
                &AnchorContext {
                    positives: &[s_pos],
                    negatives: &others,
                },
            );
        }
        assert!((w_pos - neg_sum).abs() < 1e-12);
    }

    fn one_anchor(pos: &[usize], neg: &[usize]) -> PairPartition {
        PairPartition::new(vec![pos.to_vec()], vec![neg.to_vec()], None).unwrap()
    }

    #[test]
    fn true_loss_contrastive_perfect_separation_is_zero() {
        let sim = SimilarityMatrix::from_values(vec![1.0, 0.0], 1, 2).unwrap();
        let part = one_anchor(&[0], &[1]);
        let l = true_loss(&LossFamily::Contrastive { lambda: 0.5 }, &sim, &part).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn true_loss_binomial_at_margin_is_log2_per_pair() {
        let sim = SimilarityMatrix::from_values(vec![0.5, 0.5, 0.5], 1, 3).unwrap();
        let part = one_anchor(&[0, 1], &[2]);
        let fam = LossFamily::Binomial { alpha: 1.0, beta: 1.0, lambda: 0.5 };
        let l = true_loss(&fam, &sim, &part).unwrap();
        assert!((l - 3.0 * core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn true_loss_infonce_uniform_pair_is_log2() {
        let sim = SimilarityMatrix::from_values(vec![0.0, 0.0], 1, 2).unwrap();
        let part = one_anchor(&[0], &[1]);
        let l = true_loss(&LossFamily::InfoNce { tau: 1.0 }, &sim, &part).unwrap();
        assert!((l - core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn true_loss_ramp_is_surrogate_only() {
        let sim = SimilarityMatrix::from_values(vec![0.0], 1, 1).unwrap();
        let part = one_anchor(&[], &[0]);
        assert_eq!(
            true_loss(&LossFamily::Ramp { a: 0.1, b: 0.2 }, &sim, &part),
            Err(WeightError::SurrogateOnly)
        );
    }

    #[test]
    fn surrogate_hand_evaluated_single_anchor() {
        // Contrastive(0.5), pos S=0.8, neg S=0.3: 0·0.3 - 1·0.8 = -0.8.
        let sim = SimilarityMatrix::from_values(vec![0.8, 0.3], 1, 2).unwrap();
        let part = one_anchor(&[0], &[1]);
        let sch = scheme(
            PositiveHalf::Contrastive,
            NegativeHalf::Contrastive { lambda: 0.5 },
        );
        let l = surrogate_loss(&sch, &sim, &part, 1).unwrap();
        assert!((l + 0.8).abs() < 1e-15);
        // Doubling m halves the value.
        let l2 = surrogate_loss(&sch, &sim, &part, 2).unwrap();
        assert!((l2 + 0.4).abs() < 1e-15);
    }

    #[test]
    fn surrogate_all_zero_weights_is_zero() {
        let sim = SimilarityMatrix::from_values(vec![0.1, 0.2], 1, 2).unwrap();
        let part = one_anchor(&[], &[0, 1]);
        let sch = scheme(ANY_POS, NegativeHalf::Contrastive { lambda: 0.9 });
        assert_eq!(surrogate_loss(&sch, &sim, &part, 1).unwrap(), 0.0);
    }

    #[test]
    fn gradient_of_contrastive_positive_is_minus_one_over_m() {
        let sim = SimilarityMatrix::from_values(vec![0.8, 0.3], 1, 2).unwrap();
        let part = one_anchor(&[0], &[1]);
        let sch = scheme(
            PositiveHalf::Contrastive,
            NegativeHalf::Contrastive { lambda: 0.5 },
        );
        let g = grad_wrt_similarity(&sch, &sim, &part, 4).unwrap();
        assert_eq!(g.get(0, 0), -0.25);
        assert_eq!(g.get(0, 1), 0.0);
    }

    #[test]
    fn curve_of_degenerate_ramp_matches_contrastive() {
        let ramp = scheme(PositiveHalf::Constant, NegativeHalf::Ramp { a: 0.5, b: 0.5 });
        let contr = scheme(
            PositiveHalf::Contrastive,
            NegativeHalf::Contrastive { lambda: 0.5 },
        );
        let grid: Vec<f64> = (0..=200).map(|i| -1.0 + i as f64 / 100.0).collect();
        let ctx = AnchorContext::default();
        let a = sample_weight_curve(&ramp, &grid, &ctx);
        let b = sample_weight_curve(&contr, &grid, &ctx);
        assert_eq!(a, b);
    }

    #[test]
    fn contrastive_negative_curve_on_three_point_grid() {
        let sch = scheme(ANY_POS, NegativeHalf::Contrastive { lambda: 0.5 });
        let pts = sample_weight_curve(&sch, &[0.4, 0.5, 0.6], &AnchorContext::default());
        let w: Vec<f64> = pts.iter().map(|p| p.w_neg).collect();
        assert_eq!(w, vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn binomial_positive_small_alpha_approaches_constant_half() {
        let sch = scheme(
            PositiveHalf::Binomial { alpha: 1e-4, lambda: 0.5 },
            ANY_NEG,
        );
        let ctx = AnchorContext::default();
        let mut s = -1.0;
        while s <= 1.0 {
            assert!((positive_weight(&sch, s, &ctx) - 0.5).abs() < 0.01);
            s += 0.1;
        }
    }

    #[test]
    fn histogram_mass_equals_weight_totals() {
        let sim =
            SimilarityMatrix::from_values(vec![0.9, -0.2, 0.6, 0.1, 0.3, -0.7], 2, 3).unwrap();
        let part = PairPartition::new(
            vec![vec![0], vec![2]],
            vec![vec![1, 2], vec![0, 1]],
            None,
        )
        .unwrap();
        let sch = scheme(
            PositiveHalf::Binomial { alpha: 2.0, lambda: 0.5 },
            NegativeHalf::Binomial { beta: 5.0, lambda: 0.5 },
        );
        let (pos_mass, neg_mass) =
            gradient_contribution_histogram(&sch, &sim, &part, 10).unwrap();
        let w = compute_weights(&sch, &sim, &part).unwrap();
        let mut pos_total = 0.0;
        let mut neg_total = 0.0;
        for i in 0..2 {
            for &j in part.positives(i) {
                pos_total += w.get(i, j);
            }
            for &j in part.negatives(i) {
                neg_total += w.get(i, j);
            }
        }
        assert!((pos_mass.iter().sum::<f64>() - pos_total).abs() < 1e-12);
        assert!((neg_mass.iter().sum::<f64>() - neg_total).abs() < 1e-12);
    }

    #[test]
    fn contrastive_histogram_has_no_mass_below_margin() {
        let sim = SimilarityMatrix::from_values(vec![-0.8, -0.2, 0.1], 1, 3).unwrap();
        let part = one_anchor(&[], &[0, 1, 2]);
        let sch = scheme(ANY_POS, NegativeHalf::Contrastive { lambda: 0.5 });
        let (_, neg_mass) = gradient_contribution_histogram(&sch, &sim, &part, 80).unwrap();
        assert!(neg_mass.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn validate_rejects_bad_parameters() {
        assert!(scheme(
            PositiveHalf::Binomial { alpha: 0.0, lambda: 0.5 },
            ANY_NEG
        )
        .validate()
        .is_err());
        assert!(scheme(ANY_POS, NegativeHalf::Ramp { a: 0.7, b: 0.3 })
            .validate()
            .is_err());
        assert!(scheme(
            PositiveHalf::Binomial { alpha: 2.0, lambda: 1.5 },
            ANY_NEG
        )
        .validate()
        .is_err());
        assert!(scheme(PositiveHalf::InfoNce { tau: -1.0 }, ANY_NEG)
            .validate()
            .is_err());
    }

    #[test]
    fn large_beta_stays_finite() {
        let sch = scheme(ANY_POS, NegativeHalf::Binomial { beta: 100.0, lambda: -0.5 });
        let w = negative_weight(&sch, 1.0, &AnchorContext::default());
        assert!(w.is_finite() && (w - 1.0).abs() < 1e-12);
        let ms = scheme(
            ANY_POS,
            NegativeHalf::MultiSimilarity { beta: 100.0, lambda: -0.5 },
        );
        let ctx = AnchorContext {
            positives: &[],
            negatives: &[0.9, 0.95, 1.0],
        };
        let w = negative_weight(&ms, 1.0, &ctx);
        assert!(w.is_finite() && w > 0.0 && w <= 1.0);
    }
}
