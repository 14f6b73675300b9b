//! Finite-difference oracle: the signed pair weights must equal the
//! derivative of the matching closed-form loss at every pair, on random
//! similarity layouts. Central differences with h = 1e-5; positions off the
//! contrastive hinge kink by at least 1e-3.

use pairmem_core::{grad_wrt_similarity, true_loss, LossFamily, PairPartition, SimilarityMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const REL_TOL: f64 = 1e-5;
const ABS_TOL: f64 = 1e-8;

fn random_context(rng: &mut ChaCha8Rng) -> (SimilarityMatrix, PairPartition) {
    let rows = rng.gen_range(1..=4);
    let cols = rng.gen_range(4..=9);
    let values = (0..rows * cols)
        .map(|_| rng.gen_range(-0.999..=0.999))
        .collect();
    let mut positives = Vec::with_capacity(rows);
    let mut negatives = Vec::with_capacity(rows);
    for _ in 0..rows {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for j in 0..cols {
            match rng.gen_range(0..3) {
                0 => pos.push(j),
                1 => neg.push(j),
                _ => {}
            }
        }
        positives.push(pos);
        negatives.push(neg);
    }
    let sim = SimilarityMatrix::from_values(values, rows, cols).unwrap();
    let part = PairPartition::new(positives, negatives, None).unwrap();
    (sim, part)
}

/// The hinge is non-differentiable at lambda; FD only holds away from it.
fn nudge_off_kink(sim: SimilarityMatrix, part: &PairPartition, lambda: f64) -> SimilarityMatrix {
    let mut out = sim;
    for i in 0..part.anchors() {
        for &j in part.negatives(i) {
            if (out.get(i, j) - lambda).abs() <= 1e-3 {
                out = out.with_entry(i, j, lambda + 2e-3);
            }
        }
    }
    out
}

fn check_family(family: &LossFamily, trials: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scheme = family.scheme();
    for trial in 0..trials {
        let (mut sim, part) = random_context(&mut rng);
        if let LossFamily::Contrastive { lambda } = *family {
            sim = nudge_off_kink(sim, &part, lambda);
        }
        let grad = grad_wrt_similarity(&scheme, &sim, &part, part.anchors()).unwrap();
        for i in 0..part.anchors() {
            for j in 0..sim.cols() {
                let s = sim.get(i, j);
                let up = true_loss(family, &sim.with_entry(i, j, s + H), &part).unwrap();
                let down = true_loss(family, &sim.with_entry(i, j, s - H), &part).unwrap();
                let fd = (up - down) / (2.0 * H);
                let analytic = grad.get(i, j);
                let tol = ABS_TOL + REL_TOL * fd.abs();
                assert!(
                    (analytic - fd).abs() <= tol,
                    "{family:?} trial {trial} pair ({i},{j}): analytic {analytic} vs fd {fd}"
                );
            }
        }
    }
}

#[test]
fn contrastive_gradient_matches_finite_differences() {
    check_family(&LossFamily::Contrastive { lambda: 0.5 }, 30, 101);
    check_family(&LossFamily::Contrastive { lambda: 0.25 }, 30, 102);
}

#[test]
fn binomial_gradient_matches_finite_differences() {
    check_family(
        &LossFamily::Binomial {
            alpha: 2.0,
            beta: 10.0,
            lambda: 0.5,
        },
        30,
        103,
    );
    check_family(
        &LossFamily::Binomial {
            alpha: 0.5,
            beta: 40.0,
            lambda: 0.6,
        },
        30,
        104,
    );
}

#[test]
fn multi_similarity_gradient_matches_finite_differences() {
    check_family(
        &LossFamily::MultiSimilarity {
            alpha: 2.0,
            beta: 50.0,
            lambda: 1.0,
        },
        30,
        105,
    );
    check_family(
        &LossFamily::MultiSimilarity {
            alpha: 1.0,
            beta: 5.0,
            lambda: 0.5,
        },
        30,
        106,
    );
}

#[test]
fn infonce_gradient_matches_finite_differences() {
    check_family(&LossFamily::InfoNce { tau: 0.2 }, 30, 107);
    check_family(&LossFamily::InfoNce { tau: 1.0 }, 30, 108);
}

#[test]
fn gradient_is_zero_outside_the_partition() {
    let mut rng = ChaCha8Rng::seed_from_u64(109);
    let family = LossFamily::Binomial {
        alpha: 2.0,
        beta: 10.0,
        lambda: 0.5,
    };
    let scheme = family.scheme();
    for _ in 0..20 {
        let (sim, part) = random_context(&mut rng);
        let grad = grad_wrt_similarity(&scheme, &sim, &part, part.anchors()).unwrap();
        for i in 0..part.anchors() {
            for j in 0..sim.cols() {
                if !part.positives(i).contains(&j) && !part.negatives(i).contains(&j) {
                    assert_eq!(grad.get(i, j), 0.0);
                }
            }
        }
    }
}
