//! Variety contribution ratio (VCR) and redundancy pruning.
//!
//! A class's VCR is the number of eps-connected clusters among its samples
//! divided by its sample count. A ratio of 1 means no two samples are
//! redundant at that threshold. Pruning keeps one representative per cluster.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{check_eps, ClusterError, ClusterLabels, ClusterOptions, Metric};
use crate::feature_store::{ClassFeatureSet, DatasetFeatures};
use crate::metrics::{
    cosine_distance, mean_vector, similarity_matrix, MetricError, SimilarityMatrix,
};

pub const DEFAULT_EPS: f64 = 0.05;
pub const DEFAULT_ALPHA: f64 = 0.5;
/// Lower bound on any adaptive threshold.
pub const EPS_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VcrError {
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("adaptive eps needs at least two classes")]
    SingleClass,
    #[error("alpha must be in (0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("class index {0} out of range")]
    UnknownClass(usize),
    #[error("prune manifest does not match dataset: {0}")]
    ManifestMismatch(String),
}

/// How the per-class clustering threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsPolicy {
    Fixed {
        eps: f64,
    },
    /// Heuristic: `min(base_eps, alpha * d_min)` where `d_min` is the class's
    /// distance to its most similar other class.
    Adaptive {
        base_eps: f64,
        alpha: f64,
    },
}

impl EpsPolicy {
    pub fn fixed(eps: f64) -> EpsPolicy {
        EpsPolicy::Fixed { eps }
    }

    pub fn validate(&self) -> Result<(), VcrError> {
        match *self {
            EpsPolicy::Fixed { eps } => check_eps(eps)?,
            EpsPolicy::Adaptive { base_eps, alpha } => {
                check_eps(base_eps)?;
                check_alpha(alpha)?;
            }
        }
        Ok(())
    }

    /// Resolves one threshold per class, in class order.
    pub fn resolve(&self, ds: &DatasetFeatures) -> Result<Vec<f64>, VcrError> {
        self.validate()?;
        let n = ds.classes().len();
        match *self {
            EpsPolicy::Fixed { eps } => Ok(vec![eps; n]),
            EpsPolicy::Adaptive { base_eps, .. } if n < 2 => Ok(vec![base_eps; n]),
            EpsPolicy::Adaptive { base_eps, alpha } => {
                let simmat = similarity_matrix(ds)?;
                (0..n)
                    .map(|c| adaptive_eps(c, &simmat, base_eps, alpha))
                    .collect()
            }
        }
    }
}

fn check_alpha(alpha: f64) -> Result<(), VcrError> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(VcrError::InvalidAlpha(alpha))
    }
}

/// Tightens the threshold for classes that sit close to another class:
/// `max(EPS_FLOOR, min(base_eps, alpha * d_min))`.
///
/// Returns [`VcrError::SingleClass`] for a one-class matrix; callers fall back
/// to `base_eps` there.
pub fn adaptive_eps(
    class_index: usize,
    simmat: &SimilarityMatrix,
    base_eps: f64,
    alpha: f64,
) -> Result<f64, VcrError> {
    check_eps(base_eps)?;
    check_alpha(alpha)?;
    if class_index >= simmat.len() {
        return Err(VcrError::UnknownClass(class_index));
    }
    let d_min = simmat
        .nearest_distance(class_index)
        .ok_or(VcrError::SingleClass)?;
    Ok(base_eps.min(alpha * d_min).max(EPS_FLOOR))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassVcr {
    pub cluster_count: usize,
    pub vcr: f64,
}

pub fn class_vcr(cfs: &ClassFeatureSet, eps: f64) -> Result<ClassVcr, VcrError> {
    class_vcr_with(cfs, eps, &ClusterOptions::default())
}

pub fn class_vcr_with(
    cfs: &ClassFeatureSet,
    eps: f64,
    opts: &ClusterOptions,
) -> Result<ClassVcr, VcrError> {
    check_eps(eps)?;
    let labels = opts.distances(cfs.vectors())?.components(eps);
    Ok(ratio(labels.cluster_count, cfs.len()))
}

pub(crate) fn ratio(cluster_count: usize, samples: usize) -> ClassVcr {
    ClassVcr {
        cluster_count,
        vcr: cluster_count as f64 / samples as f64,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VcrRecord {
    pub class_name: String,
    pub sample_count: usize,
    /// Number of clusters, i.e. samples that contribute variety.
    pub cluster_count: usize,
    pub vcr: f64,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VcrTotals {
    pub samples: usize,
    pub clusters: usize,
    pub vcr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VcrReport {
    pub eps_policy: EpsPolicy,
    pub metric: Metric,
    pub classes: Vec<VcrRecord>,
    pub totals: VcrTotals,
}

pub fn dataset_vcr(ds: &DatasetFeatures, policy: EpsPolicy) -> Result<VcrReport, VcrError> {
    dataset_vcr_with(ds, policy, &ClusterOptions::default())
}

pub fn dataset_vcr_with(
    ds: &DatasetFeatures,
    policy: EpsPolicy,
    opts: &ClusterOptions,
) -> Result<VcrReport, VcrError> {
    let eps = policy.resolve(ds)?;
    let classes = ds
        .classes()
        .par_iter()
        .zip(eps.par_iter())
        .map(|(cfs, &eps)| {
            let r = class_vcr_with(cfs, eps, opts)?;
            Ok(VcrRecord {
                class_name: cfs.name().to_string(),
                sample_count: cfs.len(),
                cluster_count: r.cluster_count,
                vcr: r.vcr,
                eps,
            })
        })
        .collect::<Result<Vec<_>, VcrError>>()?;
    let samples = classes.iter().map(|c| c.sample_count).sum();
    let clusters = classes.iter().map(|c| c.cluster_count).sum();
    Ok(VcrReport {
        eps_policy: policy,
        metric: opts.metric,
        classes,
        totals: VcrTotals {
            samples,
            clusters,
            vcr: ratio(clusters, samples).vcr,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub representative: String,
    pub size: usize,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPrune {
    pub name: String,
    pub eps: f64,
    /// Kept ids in sample order.
    pub kept: Vec<String>,
    /// Removed ids in sample order.
    pub removed: Vec<String>,
    pub clusters: Vec<ClusterRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneTotals {
    pub original: usize,
    pub optimized: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneManifest {
    pub eps_policy: EpsPolicy,
    pub metric: Metric,
    pub classes: Vec<ClassPrune>,
    pub totals: PruneTotals,
}

pub fn prune(ds: &DatasetFeatures, policy: EpsPolicy) -> Result<PruneManifest, VcrError> {
    prune_with(ds, policy, &ClusterOptions::default())
}

/// Builds a prune manifest: per eps-cluster, keep the member nearest (cosine
/// distance) to the cluster mean, lowest index on ties, and drop the rest.
pub fn prune_with(
    ds: &DatasetFeatures,
    policy: EpsPolicy,
    opts: &ClusterOptions,
) -> Result<PruneManifest, VcrError> {
    let eps = policy.resolve(ds)?;
    let classes = ds
        .classes()
        .par_iter()
        .zip(eps.par_iter())
        .map(|(cfs, &eps)| prune_class(cfs, eps, opts))
        .collect::<Result<Vec<_>, VcrError>>()?;
    let totals = PruneTotals {
        original: ds.total_samples(),
        optimized: classes.iter().map(|c| c.kept.len()).sum(),
    };
    Ok(PruneManifest {
        eps_policy: policy,
        metric: opts.metric,
        classes,
        totals,
    })
}

fn prune_class(
    cfs: &ClassFeatureSet,
    eps: f64,
    opts: &ClusterOptions,
) -> Result<ClassPrune, VcrError> {
    check_eps(eps)?;
    let labels: ClusterLabels = opts.distances(cfs.vectors())?.components(eps);
    let ids = cfs.sample_ids();
    let mut keep = vec![false; cfs.len()];
    let mut clusters = Vec::with_capacity(labels.cluster_count);
    for members in labels.members() {
        let rep = representative(cfs, &members);
        keep[rep] = true;
        clusters.push(ClusterRecord {
            representative: ids[rep].clone(),
            size: members.len(),
            members: members.iter().map(|&m| ids[m].clone()).collect(),
        });
    }
    let (kept, removed): (Vec<_>, Vec<_>) = ids.iter().zip(&keep).partition(|(_, &k)| k);
    Ok(ClassPrune {
        name: cfs.name().to_string(),
        eps,
        kept: kept.into_iter().map(|(id, _)| id.clone()).collect(),
        removed: removed.into_iter().map(|(id, _)| id.clone()).collect(),
        clusters,
    })
}

/// Index of the member closest to the cluster mean. `members` is ascending,
/// so a strict `<` keeps the lowest index on ties.
fn representative(cfs: &ClassFeatureSet, members: &[usize]) -> usize {
    if members.len() == 1 {
        return members[0];
    }
    let vectors: Vec<&[f64]> = members
        .iter()
        .map(|&m| cfs.vectors()[m].as_slice())
        .collect();
    let mean = mean_vector(&vectors).expect("cluster members share a dimension");
    let mut best = members[0];
    let mut best_d = f64::INFINITY;
    for (&m, v) in members.iter().zip(&vectors) {
        // a mean that cancels to zero has no direction; keep the first member
        let Ok(d) = cosine_distance(v, &mean) else {
            return members[0];
        };
        if d < best_d {
            best = m;
            best_d = d;
        }
    }
    best
}

/// Materializes the pruned dataset: only kept samples, original order.
pub fn apply_prune(ds: &DatasetFeatures, m: &PruneManifest) -> Result<DatasetFeatures, VcrError> {
    let mismatch = |msg: String| VcrError::ManifestMismatch(msg);
    if m.classes.len() != ds.classes().len() {
        return Err(mismatch(format!(
            "manifest lists {} classes, dataset has {}",
            m.classes.len(),
            ds.classes().len()
        )));
    }
    let mut out = Vec::with_capacity(ds.classes().len());
    for (cfs, entry) in ds.classes().iter().zip(&m.classes) {
        if cfs.name() != entry.name {
            return Err(mismatch(format!(
                "expected class {:?}, manifest has {:?}",
                cfs.name(),
                entry.name
            )));
        }
        let index: HashMap<&str, usize> = cfs
            .sample_ids()
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let mut seen = vec![None; cfs.len()];
        for (ids, kept) in [(&entry.kept, true), (&entry.removed, false)] {
            for id in ids {
                let i = *index.get(id.as_str()).ok_or_else(|| {
                    mismatch(format!("class {:?}: unknown sample {id:?}", entry.name))
                })?;
                if seen[i].replace(kept).is_some() {
                    return Err(mismatch(format!(
                        "class {:?}: sample {id:?} listed twice",
                        entry.name
                    )));
                }
            }
        }
        if let Some(i) = seen.iter().position(Option::is_none) {
            return Err(mismatch(format!(
                "class {:?}: sample {:?} is neither kept nor removed",
                entry.name,
                cfs.sample_ids()[i]
            )));
        }
        let keep: Vec<bool> = seen.into_iter().map(|s| s == Some(true)).collect();
        if !keep.iter().any(|&k| k) {
            return Err(mismatch(format!("class {:?}: nothing kept", entry.name)));
        }
        out.push(cfs.retain_indices(&keep));
    }
    Ok(ds.replace_classes(out))
}
