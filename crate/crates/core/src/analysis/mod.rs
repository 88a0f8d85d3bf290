//! Threshold sweeps, model-choice hints and report rendering.

pub mod report;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{check_eps, ClusterError, ClusterOptions, Metric};
use crate::feature_store::ClassFeatureSet;
use crate::metrics::SimilarityMatrix;
use crate::vcr::ratio;

pub use report::{render_report, Report, ReportFormat};

pub const DEFAULT_HINT_LOW: f64 = 0.05;
pub const DEFAULT_HINT_HIGH: f64 = 0.15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("eps grid must be strictly increasing (value {0} follows {1})")]
    GridNotIncreasing(f64, f64),
    #[error("a model hint needs at least two classes")]
    SingleClass,
    #[error("hint thresholds must satisfy 0 < low < high, got low={low} high={high}")]
    InvalidThresholds { low: f64, high: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub eps: f64,
    pub vcr: f64,
    pub cluster_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub class_name: String,
    pub metric: Metric,
    pub points: Vec<SweepPoint>,
}

/// VCR of one class at each eps in `eps_values`.
///
/// Pairwise distances are evaluated once and re-thresholded per point.
pub fn sweep(cfs: &ClassFeatureSet, eps_values: &[f64]) -> Result<SweepCurve, AnalysisError> {
    sweep_with(cfs, eps_values, &ClusterOptions::default())
}

pub fn sweep_with(
    cfs: &ClassFeatureSet,
    eps_values: &[f64],
    opts: &ClusterOptions,
) -> Result<SweepCurve, AnalysisError> {
    for &eps in eps_values {
        check_eps(eps)?;
    }
    if let Some(w) = eps_values.windows(2).find(|w| w[1] <= w[0]) {
        return Err(AnalysisError::GridNotIncreasing(w[1], w[0]));
    }
    let mut points = Vec::with_capacity(eps_values.len());
    if !eps_values.is_empty() {
        let table = opts.distances(cfs.vectors())?;
        for &eps in eps_values {
            let r = ratio(table.components(eps).cluster_count, cfs.len());
            points.push(SweepPoint {
                eps,
                vcr: r.vcr,
                cluster_count: r.cluster_count,
            });
        }
    }
    Ok(SweepCurve {
        class_name: cfs.name().to_string(),
        metric: opts.metric,
        points,
    })
}

/// Expands `start:stop:step` into `start + k*step` for every value up to
/// `stop` (inclusive, with a small tolerance for rounding). Values are
/// snapped to 12 decimals so `0.01:0.1:0.03` yields `0.07`, not
/// `0.06999999999999999`.
pub fn eps_grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) || step <= 0.0 || stop < start {
        return Vec::new();
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=n)
        .map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    SimpleClassifierSufficient,
    StandardCnn,
    DeepCnnRecommended,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::SimpleClassifierSufficient => "SimpleClassifierSufficient",
            Verdict::StandardCnn => "StandardCnn",
            Verdict::DeepCnnRecommended => "DeepCnnRecommended",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HintEvidence {
    pub min_offdiag: f64,
    pub mean_offdiag: f64,
    pub most_confusable_pair: (String, String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHint {
    pub verdict: Verdict,
    pub evidence: HintEvidence,
    pub low: f64,
    pub high: f64,
    /// Always true: the thresholds are a calibration, not a guarantee.
    pub heuristic: bool,
}

/// Suggests model capacity from how close the closest pair of classes is.
///
/// Keyed on the minimum off-diagonal distance: `>= high` means a simple
/// classifier on the features should do, `<= low` means the classes are
/// easily confused.
pub fn model_hint(
    simmat: &SimilarityMatrix,
    low: f64,
    high: f64,
) -> Result<ModelHint, AnalysisError> {
    if !(low > 0.0 && low < high && high.is_finite()) {
        return Err(AnalysisError::InvalidThresholds { low, high });
    }
    let mut pairs = simmat.pairs();
    let first = pairs.next().ok_or(AnalysisError::SingleClass)?;
    let mut min = first;
    let mut sum = first.2;
    let mut count = 1usize;
    for p in pairs {
        if p.2 < min.2 {
            min = p;
        }
        sum += p.2;
        count += 1;
    }
    let verdict = if min.2 >= high {
        Verdict::SimpleClassifierSufficient
    } else if min.2 <= low {
        Verdict::DeepCnnRecommended
    } else {
        Verdict::StandardCnn
    };
    Ok(ModelHint {
        verdict,
        evidence: HintEvidence {
            min_offdiag: min.2,
            mean_offdiag: sum / count as f64,
            most_confusable_pair: (
                simmat.class_names[min.0].clone(),
                simmat.class_names[min.1].clone(),
            ),
        },
        low,
        high,
        heuristic: true,
    })
}
