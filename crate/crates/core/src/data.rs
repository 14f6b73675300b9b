//! Labeled vector datasets: synthetic isotropic clusters and class-disjoint
//! splits. Raw inputs are not pre-normalized; the encoder owns normalization.

use crate::rng::{substream, STREAM_INIT};
use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, PartialEq)]
pub enum DataError {
    Empty,
    /// Cluster generation needs at least 2 classes and 2 samples per class.
    TooFewClasses,
    TooFewPerClass,
    ZeroDimension,
    InconsistentDimension { expected: usize, got: usize },
    NonFiniteSample,
    /// Every class must keep at least 2 samples for retrieval metrics.
    SingletonClass { label: u32 },
    BadScale(&'static str),
    BadFraction,
    EmptySide,
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataError::Empty => write!(f, "dataset has no samples"),
            DataError::TooFewClasses => write!(f, "need at least 2 classes"),
            DataError::TooFewPerClass => write!(f, "need at least 2 samples per class"),
            DataError::ZeroDimension => write!(f, "input dimension must be at least 1"),
            DataError::InconsistentDimension { expected, got } => {
                write!(f, "inconsistent input dimension: expected {expected}, got {got}")
            }
            DataError::NonFiniteSample => write!(f, "sample values must be finite"),
            DataError::SingletonClass { label } => {
                write!(f, "class {label} has fewer than 2 samples")
            }
            DataError::BadScale(what) => write!(f, "{what} must be finite and nonnegative"),
            DataError::BadFraction => {
                write!(f, "train fraction must lie strictly between 0 and 1")
            }
            DataError::EmptySide => write!(f, "class split leaves one side empty"),
        }
    }
}

/// Labeled raw vectors with a per-class index. Every class holds at least
/// two samples and all vectors share one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorDataset {
    samples: Vec<(Vec<f64>, u32)>,
    class_index: BTreeMap<u32, Vec<usize>>,
    input_dim: usize,
}

impl VectorDataset {
    pub fn new(samples: Vec<(Vec<f64>, u32)>) -> Result<Self, DataError> {
        let input_dim = match samples.first() {
            None => return Err(DataError::Empty),
            Some((v, _)) => v.len(),
        };
        if input_dim == 0 {
            return Err(DataError::ZeroDimension);
        }
        let mut class_index: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, (v, label)) in samples.iter().enumerate() {
            if v.len() != input_dim {
                return Err(DataError::InconsistentDimension {
                    expected: input_dim,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(DataError::NonFiniteSample);
            }
            class_index.entry(*label).or_default().push(i);
        }
        for (&label, idxs) in &class_index {
            if idxs.len() < 2 {
                return Err(DataError::SingletonClass { label });
            }
        }
        Ok(VectorDataset {
            samples,
            class_index,
            input_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn samples(&self) -> &[(Vec<f64>, u32)] {
        &self.samples
    }

    pub fn input(&self, index: usize) -> &[f64] {
        &self.samples[index].0
    }

    pub fn label(&self, index: usize) -> u32 {
        self.samples[index].1
    }

    /// Sorted class labels.
    pub fn classes(&self) -> Vec<u32> {
        self.class_index.keys().copied().collect()
    }

    pub fn class_count(&self) -> usize {
        self.class_index.len()
    }

    /// Sample indices of one class, in dataset order.
    pub fn class_members(&self, label: u32) -> Option<&[usize]> {
        self.class_index.get(&label).map(Vec::as_slice)
    }

    pub fn labels(&self) -> Vec<u32> {
        self.samples.iter().map(|(_, l)| *l).collect()
    }
}

/// Isotropic Gaussian clusters: zero-mean centers scaled by `center_scale`,
/// samples at center + `noise_sigma`-scaled noise. Class-major layout,
/// labels 0..num_classes. Deterministic given the seed; zero noise makes
/// every sample of a class identical to its center.
pub fn generate_clusters(
    num_classes: usize,
    per_class: usize,
    input_dim: usize,
    center_scale: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<VectorDataset, DataError> {
    if num_classes < 2 {
        return Err(DataError::TooFewClasses);
    }
    if per_class < 2 {
        return Err(DataError::TooFewPerClass);
    }
    if input_dim == 0 {
        return Err(DataError::ZeroDimension);
    }
    if !center_scale.is_finite() || center_scale <= 0.0 {
        return Err(DataError::BadScale("center scale"));
    }
    if !noise_sigma.is_finite() || noise_sigma < 0.0 {
        return Err(DataError::BadScale("noise sigma"));
    }
    let mut rng = substream(seed, STREAM_INIT);
    let mut centers = Vec::with_capacity(num_classes);
    for _ in 0..num_classes {
        let center: Vec<f64> = (0..input_dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * center_scale)
            .collect();
        centers.push(center);
    }
    let mut samples = Vec::with_capacity(num_classes * per_class);
    for (label, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            let v: Vec<f64> = center
                .iter()
                .map(|&c| c + rng.sample::<f64, _>(StandardNormal) * noise_sigma)
                .collect();
            samples.push((v, label as u32));
        }
    }
    VectorDataset::new(samples)
}

/// Partitions the classes (not the samples) into train and test datasets.
/// floor(classes · train_fraction) shuffled classes go to train; sample
/// order within each side follows the source dataset.
pub fn split_by_class(
    dataset: &VectorDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<(VectorDataset, VectorDataset), DataError> {
    if !train_fraction.is_finite() || train_fraction <= 0.0 || train_fraction >= 1.0 {
        return Err(DataError::BadFraction);
    }
    let mut classes = dataset.classes();
    let mut rng = substream(seed, STREAM_INIT);
    classes.shuffle(&mut rng);
    let k = (classes.len() as f64 * train_fraction) as usize;
    if k == 0 || k == classes.len() {
        return Err(DataError::EmptySide);
    }
    let train_classes: alloc::collections::BTreeSet<u32> =
        classes[..k].iter().copied().collect();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (v, label) in dataset.samples() {
        if train_classes.contains(label) {
            train.push((v.clone(), *label));
        } else {
            test.push((v.clone(), *label));
        }
    }
    Ok((VectorDataset::new(train)?, VectorDataset::new(test)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_noise_duplicates_class_centers() {
        let ds = generate_clusters(3, 4, 5, 1.0, 0.0, 42).unwrap();
        for label in ds.classes() {
            let members = ds.class_members(label).unwrap();
            let first = ds.input(members[0]);
            for &i in members {
                assert_eq!(ds.input(i), first);
            }
        }
        // Centers of distinct classes differ.
        assert_ne!(ds.input(0), ds.input(4));
    }

    #[test]
    fn cluster_shapes_and_labels() {
        let ds = generate_clusters(16, 64, 16, 1.0, 0.1, 1).unwrap();
        assert_eq!(ds.len(), 1024);
        assert_eq!(ds.input_dim(), 16);
        assert_eq!(ds.class_count(), 16);
        for label in ds.classes() {
            assert_eq!(ds.class_members(label).unwrap().len(), 64);
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let a = generate_clusters(4, 3, 6, 2.0, 0.5, 9).unwrap();
        let b = generate_clusters(4, 3, 6, 2.0, 0.5, 9).unwrap();
        assert_eq!(a, b);
        let c = generate_clusters(4, 3, 6, 2.0, 0.5, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generation_rejects_degenerate_requests() {
        assert_eq!(
            generate_clusters(1, 4, 5, 1.0, 0.1, 0).unwrap_err(),
            DataError::TooFewClasses
        );
        assert_eq!(
            generate_clusters(3, 1, 5, 1.0, 0.1, 0).unwrap_err(),
            DataError::TooFewPerClass
        );
        assert_eq!(
            generate_clusters(3, 4, 0, 1.0, 0.1, 0).unwrap_err(),
            DataError::ZeroDimension
        );
        assert!(generate_clusters(3, 4, 5, 0.0, 0.1, 0).is_err());
        assert!(generate_clusters(3, 4, 5, 1.0, -0.1, 0).is_err());
    }

    #[test]
    fn split_partitions_classes_disjointly() {
        let ds = generate_clusters(16, 8, 4, 1.0, 0.1, 3).unwrap();
        let (train, test) = split_by_class(&ds, 0.5, 1).unwrap();
        assert_eq!(train.class_count(), 8);
        assert_eq!(test.class_count(), 8);
        assert_eq!(train.len() + test.len(), ds.len());
        let train_classes = train.classes();
        for label in test.classes() {
            assert!(!train_classes.contains(&label));
        }
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let ds = generate_clusters(16, 8, 4, 1.0, 0.1, 3).unwrap();
        let (a, _) = split_by_class(&ds, 0.5, 1).unwrap();
        let (b, _) = split_by_class(&ds, 0.5, 1).unwrap();
        assert_eq!(a, b);
        let mut differs = false;
        for seed in 2..12 {
            let (c, _) = split_by_class(&ds, 0.5, seed).unwrap();
            if c.classes() != a.classes() {
                differs = true;
                break;
            }
        }
        assert!(differs, "ten reseeds never changed the class split");
    }

    #[test]
    fn split_rejects_degenerate_fractions() {
        let ds = generate_clusters(4, 2, 3, 1.0, 0.1, 0).unwrap();
        assert_eq!(split_by_class(&ds, 1.0, 0).unwrap_err(), DataError::BadFraction);
        assert_eq!(split_by_class(&ds, 0.0, 0).unwrap_err(), DataError::BadFraction);
        // floor(4 · 0.1) = 0 classes on the train side.
        assert_eq!(split_by_class(&ds, 0.1, 0).unwrap_err(), DataError::EmptySide);
    }

    #[test]
    fn dataset_validation_rejects_bad_input() {
        assert_eq!(VectorDataset::new(Vec::new()).unwrap_err(), DataError::Empty);
        assert_eq!(
            VectorDataset::new(vec![(vec![1.0], 0), (vec![1.0], 0), (vec![2.0], 1)])
                .unwrap_err(),
            DataError::SingletonClass { label: 1 }
        );
        assert_eq!(
            VectorDataset::new(vec![(vec![1.0], 0), (vec![1.0, 2.0], 0)]).unwrap_err(),
            DataError::InconsistentDimension { expected: 1, got: 2 }
        );
        assert_eq!(
            VectorDataset::new(vec![(vec![f64::NAN], 0), (vec![1.0], 0)]).unwrap_err(),
            DataError::NonFiniteSample
        );
    }
}
