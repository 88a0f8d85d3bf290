//! Dataset structural index (DSI) for labeled visual datasets.
//!
//! Works on pre-extracted feature vectors, one archive per dataset:
//!
//! - [`metrics`]: cosine distance, class centroids and the class similarity
//!   matrix.
//! - [`clustering`]: DBSCAN and eps-connected components.
//! - [`vcr`]: variety contribution ratio per class and redundancy pruning.
//! - [`analysis`]: threshold sweeps, model hints and report rendering.
//! - [`feature_store`]: the on-disk archive format.

pub mod analysis;
pub mod clustering;
pub mod feature_store;
pub mod metrics;
pub mod vcr;

use thiserror::Error;

pub use analysis::{
    model_hint, render_report, sweep, AnalysisError, ModelHint, Report, ReportFormat, SweepCurve,
    Verdict,
};
pub use clustering::{
    dbscan, eps_components, ClusterError, ClusterLabels, ClusterOptions, ClusteringParams, Metric,
};
pub use feature_store::{
    load_dataset, validate, write_dataset, ClassFeatureSet, DatasetFeatures, FeatureVector,
    StoreError, ValidationReport,
};
pub use metrics::{
    class_centroid, class_inertia, cosine_distance, cosine_similarity, similarity_matrix,
    MetricError, SimilarityMatrix,
};
pub use vcr::{
    adaptive_eps, apply_prune, class_vcr, dataset_vcr, prune, EpsPolicy, PruneManifest, VcrError,
    VcrReport,
};

/// Any failure raised by this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Vcr(#[from] VcrError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}
