//! Density-based clustering over feature vectors.
//!
//! [`dbscan`] is the general algorithm. [`eps_components`] is the
//! `min_samples = 1` special case, where every point is a core point and the
//! clusters are the connected components of the graph with an edge wherever
//! `d(u, v) <= eps`. It runs as a union-find over threshold edges.
//!
//! Both share [`PairwiseDistances`], so a given pair always gets the same
//! distance no matter which path asks for it.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{dot, norm, similarity_from_parts};

/// Classes larger than this are clustered without materializing the full
/// distance matrix.
pub const DEFAULT_DENSE_CAP: usize = 20_000;

const ROW_BLOCK: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("no vectors to cluster")]
    NoSamples,
    #[error("vector {index} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("vector {index} has zero norm; cosine distance is undefined")]
    ZeroNorm { index: usize },
    #[error("eps must be finite and positive, got {0}")]
    InvalidEps(f64),
    #[error("min_samples must be at least 1")]
    InvalidMinSamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Cosine,
    Euclidean,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Cosine => "cosine",
            Metric::Euclidean => "euclidean",
        })
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Metric, String> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "euclidean" => Ok(Metric::Euclidean),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusteringParams {
    pub eps: f64,
    pub min_samples: usize,
    pub metric: Metric,
}

impl ClusteringParams {
    pub fn new(
        eps: f64,
        min_samples: usize,
        metric: Metric,
    ) -> Result<ClusteringParams, ClusterError> {
        check_eps(eps)?;
        if min_samples == 0 {
            return Err(ClusterError::InvalidMinSamples);
        }
        Ok(ClusteringParams {
            eps,
            min_samples,
            metric,
        })
    }
}

pub(crate) fn check_eps(eps: f64) -> Result<(), ClusterError> {
    if eps.is_finite() && eps > 0.0 {
        Ok(())
    } else {
        Err(ClusterError::InvalidEps(eps))
    }
}

/// Metric and memory policy for pairwise distance evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterOptions {
    pub metric: Metric,
    /// Largest sample count for which the full distance matrix is stored.
    pub dense_cap: usize,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        ClusterOptions {
            metric: Metric::Cosine,
            dense_cap: DEFAULT_DENSE_CAP,
        }
    }
}

impl ClusterOptions {
    pub fn with_metric(metric: Metric) -> ClusterOptions {
        ClusterOptions {
            metric,
            ..ClusterOptions::default()
        }
    }

    pub fn distances<'a, V: AsRef<[f64]> + Sync>(
        &self,
        vectors: &'a [V],
    ) -> Result<PairwiseDistances<'a, V>, ClusterError> {
        PairwiseDistances::with_dense_cap(vectors, self.metric, self.dense_cap)
    }
}

/// Per-sample cluster ids; `None` marks noise.
///
/// Ids run `0..cluster_count` and are numbered by first appearance in sample
/// order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterLabels {
    pub labels: Vec<Option<usize>>,
    pub cluster_count: usize,
}

impl ClusterLabels {
    /// Renumbers arbitrary raw ids by first appearance.
    fn from_raw(raw: &[Option<usize>]) -> ClusterLabels {
        let mut remap: Vec<Option<usize>> = Vec::new();
        let mut next = 0;
        let labels = raw
            .iter()
            .map(|r| {
                r.map(|id| {
                    if id >= remap.len() {
                        remap.resize(id + 1, None);
                    }
                    *remap[id].get_or_insert_with(|| {
                        next += 1;
                        next - 1
                    })
                })
            })
            .collect();
        ClusterLabels {
            labels,
            cluster_count: next,
        }
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }

    /// Member indices of each cluster, ascending, in cluster-id order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.cluster_count];
        for (i, l) in self.labels.iter().enumerate() {
            if let Some(c) = l {
                out[*c].push(i);
            }
        }
        out
    }
}

/// Distance lookups over a fixed set of vectors.
///
/// Up to `dense_cap` vectors the condensed upper triangle is computed once
/// and stored; above it distances are evaluated on demand in row blocks.
pub struct PairwiseDistances<'a, V> {
    vectors: &'a [V],
    metric: Metric,
    norms: Vec<f64>,
    dense: Option<Vec<f64>>,
}

impl<'a, V: AsRef<[f64]> + Sync> PairwiseDistances<'a, V> {
    pub fn new(vectors: &'a [V], metric: Metric) -> Result<Self, ClusterError> {
        Self::with_dense_cap(vectors, metric, DEFAULT_DENSE_CAP)
    }

    pub fn with_dense_cap(
        vectors: &'a [V],
        metric: Metric,
        dense_cap: usize,
    ) -> Result<Self, ClusterError> {
        let first = vectors
            .first()
            .ok_or(ClusterError::NoSamples)?
            .as_ref()
            .len();
        for (index, v) in vectors.iter().enumerate() {
            let found = v.as_ref().len();
            if found != first {
                return Err(ClusterError::DimensionMismatch {
                    index,
                    expected: first,
                    found,
                });
            }
        }
        let norms = match metric {
            Metric::Cosine => {
                let norms: Vec<f64> = vectors.iter().map(|v| norm(v.as_ref())).collect();
                if let Some(index) = norms.iter().position(|&n| n == 0.0 || !n.is_finite()) {
                    return Err(ClusterError::ZeroNorm { index });
                }
                norms
            }
            Metric::Euclidean => Vec::new(),
        };
        let mut table = PairwiseDistances {
            vectors,
            metric,
            norms,
            dense: None,
        };
        let n = vectors.len();
        if n <= dense_cap {
            let rows: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|i| (i + 1..n).map(|j| table.compute(i, j)).collect())
                .collect();
            table.dense = Some(rows.concat());
        }
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn is_dense(&self) -> bool {
        self.dense.is_some()
    }

    fn compute(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.vectors[i].as_ref(), self.vectors[j].as_ref());
        match self.metric {
            Metric::Cosine => 1.0 - similarity_from_parts(dot(a, b), self.norms[i], self.norms[j]),
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Distance between samples `i` and `j`; exactly symmetric, zero on the
    /// diagonal.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        match &self.dense {
            Some(d) => {
                let n = self.len();
                d[i * n - i * (i + 1) / 2 + (j - i - 1)]
            }
            None => self.compute(i, j),
        }
    }

    /// All `(i, j)` with `i < j` and `d(i, j) <= eps`, in lexicographic order.
    pub fn edges_within(&self, eps: f64) -> Vec<(usize, usize)> {
        let n = self.len();
        let starts: Vec<usize> = (0..n).step_by(ROW_BLOCK).collect();
        starts
            .par_iter()
            .map(|&start| {
                let mut out = Vec::new();
                for i in start..(start + ROW_BLOCK).min(n) {
                    for j in i + 1..n {
                        if self.distance(i, j) <= eps {
                            out.push((i, j));
                        }
                    }
                }
                out
            })
            .collect::<Vec<_>>()
            .concat()
    }

    /// Indices within `eps` of `i`, including `i` itself, ascending.
    pub fn neighbors(&self, i: usize, eps: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&j| self.distance(i, j) <= eps)
            .collect()
    }

    /// Connected components of the `d <= eps` graph.
    pub fn components(&self, eps: f64) -> ClusterLabels {
        let n = self.len();
        let mut uf = UnionFind::new(n);
        for (i, j) in self.edges_within(eps) {
            uf.union(i, j);
        }
        let raw: Vec<Option<usize>> = (0..n).map(|i| Some(uf.find(i))).collect();
        ClusterLabels::from_raw(&raw)
    }

    pub fn dbscan(&self, eps: f64, min_samples: usize) -> ClusterLabels {
        let n = self.len();
        let neighborhoods: Vec<Vec<usize>> = (0..n)
            .into_par_iter()
            .map(|i| self.neighbors(i, eps))
            .collect();
        let core: Vec<bool> = neighborhoods
            .iter()
            .map(|nb| nb.len() >= min_samples)
            .collect();

        let mut raw: Vec<Option<usize>> = vec![None; n];
        let mut cluster = 0;
        let mut stack = Vec::new();
        for seed in 0..n {
            if raw[seed].is_some() || !core[seed] {
                continue;
            }
            raw[seed] = Some(cluster);
            stack.push(seed);
            while let Some(p) = stack.pop() {
                for &q in &neighborhoods[p] {
                    if raw[q].is_none() {
                        raw[q] = Some(cluster);
                        if core[q] {
                            stack.push(q);
                        }
                    }
                }
            }
            cluster += 1;
        }
        ClusterLabels::from_raw(&raw)
    }
}

/// DBSCAN: a point is core when at least `min_samples` points (itself
/// included) lie within `eps`; clusters grow through core points and border
/// points join the first cluster that reaches them.
pub fn dbscan<V: AsRef<[f64]> + Sync>(
    vectors: &[V],
    params: &ClusteringParams,
) -> Result<ClusterLabels, ClusterError> {
    let params = ClusteringParams::new(params.eps, params.min_samples, params.metric)?;
    Ok(PairwiseDistances::new(vectors, params.metric)?.dbscan(params.eps, params.min_samples))
}

/// Connected components under `d <= eps`; same labeling as
/// `dbscan` with `min_samples = 1`.
pub fn eps_components<V: AsRef<[f64]> + Sync>(
    vectors: &[V],
    eps: f64,
    metric: Metric,
) -> Result<ClusterLabels, ClusterError> {
    check_eps(eps)?;
    Ok(PairwiseDistances::new(vectors, metric)?.components(eps))
}

/// Disjoint-set forest with union by size and path halving.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> UnionFind {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns true if `a` and `b` were in different sets.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}
