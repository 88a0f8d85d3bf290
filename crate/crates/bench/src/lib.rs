//! Synthetic feature data for benchmarks.

use dsi_core::{ClassFeatureSet, DatasetFeatures, FeatureVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `n` vectors of dimension `dim` around `modes` random centers. Non-negative
/// like pooled CNN activations.
pub fn class_vectors(seed: u64, n: usize, dim: usize, modes: usize) -> Vec<FeatureVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..modes.max(1))
        .map(|_| (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect())
        .collect();
    (0..n)
        .map(|_| {
            let c = &centers[rng.gen_range(0..centers.len())];
            let row = c
                .iter()
                .map(|x| (x + rng.gen_range(-0.05..0.05)).max(0.0) + 1e-3)
                .collect();
            FeatureVector::new(row).expect("positive entries")
        })
        .collect()
}

pub fn dataset(seed: u64, classes: usize, per_class: usize, dim: usize) -> DatasetFeatures {
    let classes = (0..classes)
        .map(|c| {
            let vs = class_vectors(seed.wrapping_add(c as u64), per_class, dim, 16);
            ClassFeatureSet::with_default_ids(format!("class_{c:03}"), vs).expect("valid class")
        })
        .collect();
    DatasetFeatures::new(classes).expect("consistent dimensions")
}
