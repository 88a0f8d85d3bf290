//! Cosine similarity, class centroids and the class similarity matrix.
//!
//! The matrix holds cosine *distance* (`1 - similarity`) between class
//! centroids, so lower values mean more confusable classes and the diagonal
//! is zero.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feature_store::{ClassFeatureSet, DatasetFeatures};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("cosine distance is undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("centroid of class {0:?} has zero norm")]
    ZeroNormCentroid(String),
    #[error("class has no samples")]
    EmptyClass,
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Combines a dot product and two norms into a similarity clamped to [-1, 1].
///
/// Every cosine computation in the crate funnels through here so that a
/// distance evaluated from cached norms is bit-identical to one evaluated
/// from scratch.
#[inline]
pub(crate) fn similarity_from_parts(dot: f64, norm_a: f64, norm_b: f64) -> f64 {
    (dot / (norm_a * norm_b)).clamp(-1.0, 1.0)
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

/// `a·b / (‖a‖ ‖b‖)`, clamped to [-1, 1].
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    check_dims(a, b)?;
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(MetricError::ZeroNorm);
    }
    Ok(similarity_from_parts(dot(a, b), na, nb))
}

/// `1 - cosine_similarity(a, b)`, in [0, 2].
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    cosine_similarity(a, b).map(|s| 1.0 - s)
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    check_dims(a, b)?;
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Component-wise mean of a non-empty set of equal-length vectors.
pub fn mean_vector<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Vec<f64>, MetricError> {
    let first = vectors.first().ok_or(MetricError::EmptyClass)?.as_ref();
    let mut sum = vec![0.0; first.len()];
    for v in vectors {
        let v = v.as_ref();
        check_dims(first, v)?;
        sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
    }
    let n = vectors.len() as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    Ok(sum)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCentroid {
    pub class_name: String,
    pub vector: Vec<f64>,
}

/// The single-cluster k-means centre of a class, i.e. its mean vector.
pub fn class_centroid(cfs: &ClassFeatureSet) -> ClassCentroid {
    ClassCentroid {
        class_name: cfs.name().to_string(),
        vector: mean_vector(cfs.vectors()).expect("classes are non-empty and share a dimension"),
    }
}

/// Sum of squared Euclidean distances from each sample to the class centroid.
pub fn class_inertia(cfs: &ClassFeatureSet) -> f64 {
    let centroid = class_centroid(cfs).vector;
    cfs.vectors()
        .iter()
        .map(|v| {
            v.as_slice()
                .iter()
                .zip(&centroid)
                .map(|(x, c)| (x - c) * (x - c))
                .sum::<f64>()
        })
        .sum()
}

/// Pairwise cosine distances between class centroids, in class order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    #[serde(rename = "classes")]
    pub class_names: Vec<String>,
    #[serde(rename = "distances")]
    pub entries: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.class_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_names.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    pub fn index_of(&self, class: &str) -> Option<usize> {
        self.class_names.iter().position(|c| c == class)
    }

    /// Off-diagonal upper-triangle entries as `(i, j, distance)` with `i < j`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.len();
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j, self.entries[i][j])))
    }

    /// Smallest distance from class `i` to any other class.
    pub fn nearest_distance(&self, i: usize) -> Option<f64> {
        self.entries[i]
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &d)| d)
            .reduce(f64::min)
    }
}

/// Builds the class similarity matrix from class mean vectors.
///
/// Only the upper triangle is evaluated; the lower triangle is its mirror and
/// the diagonal is exactly zero.
pub fn similarity_matrix(ds: &DatasetFeatures) -> Result<SimilarityMatrix, MetricError> {
    let centroids: Vec<ClassCentroid> = ds.classes().par_iter().map(class_centroid).collect();
    let norms: Vec<f64> = centroids.iter().map(|c| norm(&c.vector)).collect();
    if let Some(i) = norms.iter().position(|&n| n == 0.0 || !n.is_finite()) {
        return Err(MetricError::ZeroNormCentroid(
            centroids[i].class_name.clone(),
        ));
    }

    let n = centroids.len();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            (i + 1..n)
                .map(|j| {
                    let d = dot(&centroids[i].vector, &centroids[j].vector);
                    1.0 - similarity_from_parts(d, norms[i], norms[j])
                })
                .collect()
        })
        .collect();

    let mut entries = vec![vec![0.0; n]; n];
    for (i, row) in upper.iter().enumerate() {
        for (k, &d) in row.iter().enumerate() {
            let j = i + 1 + k;
            entries[i][j] = d;
            entries[j][i] = d;
        }
    }
    Ok(SimilarityMatrix {
        class_names: centroids.into_iter().map(|c| c.class_name).collect(),
        entries,
    })
}
