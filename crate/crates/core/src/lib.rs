//! Pair-weighted metric learning at desk scale.
//!
//! The crate decomposes pair-based embedding losses into per-pair weight
//! magnitudes (general pair weighting): the loss gradient with respect to a
//! pair similarity is `+w/m` for negatives and `-w/m` for positives, so a
//! loss family is fully described by its two weight-half functions. On top of
//! that sit a small MLP encoder with manual backprop, a FIFO embedding memory
//! fed by a momentum-updated copy of the encoder (cross-batch memory is the
//! zero-momentum case), deterministic training loops, synthetic clustered
//! datasets, and retrieval metrics.
//!
//! Everything computes in `f64`; finite-difference oracles in the test suite
//! need the headroom. The crate is `no_std` + `alloc`; IO lives in the
//! companion CLI crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod data;
pub mod embedding;
pub mod encoder;
pub mod eval;
pub mod memory;
mod rng;
pub mod trainer;
pub mod weighting;

pub use embedding::{
    l2_normalize, partition_pairs, similarity_matrix, EmbedError, LabeledEmbedding,
    PairPartition, SimilarityMatrix,
};
pub use weighting::{
    compute_weights, grad_wrt_similarity, gradient_contribution_histogram, negative_weight,
    positive_weight, sample_weight_curve, surrogate_from_weights, surrogate_loss, true_loss,
    AnchorContext, CurvePoint, GradientMatrix, LossFamily, NegativeHalf, PositiveHalf,
    WeightError, WeightMatrix, WeightScheme,
};
pub use encoder::{
    backward, chain_pair_gradient, forward, init_encoder, EncoderError, ForwardTrace,
    LayerParams, MlpEncoderParams, ParamGradient,
};
pub use memory::{
    feature_drift, hard_negative_count, DriftProbe, MemoryBank, MemoryError,
};
pub use data::{generate_clusters, split_by_class, DataError, VectorDataset};
pub use eval::{
    evaluate, recall_at_k, similarity_distributions, EvalError, RetrievalResult, DEFAULT_BINS,
};
pub use trainer::{
    adam_step, grid_run, grid_settings, run_grid_point, sample_batch, train, validate_axes,
    AdamState, EvalLog, GridAxis, GridAxisName, GridPoint, IterationLog, PointStatus, RunRecord,
    TrainConfig, TrainError, TrainMode,
};
