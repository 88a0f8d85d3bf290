//! On-disk feature archives.
//!
//! An archive is a directory holding `manifest.json` and one `.npy` array per
//! class. Each array row is the feature vector of one sample.
//!
//! ```json
//! { "dimension": 2048,
//!   "classes": [ { "name": "beagle", "file": "000_beagle.npy", "sample_ids": ["..."] } ] }
//! ```
//!
//! `sample_ids` is optional; missing ids are synthesized as `<class>/<row>`.

pub mod npy;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use npy::{parse_array_file, serialize_array, ArrayData, Dtype, NpyError};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Why a single row was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowDefect {
    NonFinite,
    ZeroNorm,
}

impl fmt::Display for RowDefect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowDefect::NonFinite => f.write_str("non-finite value"),
            RowDefect::ZeroNorm => f.write_str("zero-norm vector"),
        }
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{}: no such archive directory", .0.display())]
    RootMissing(PathBuf),
    #[error("{}: manifest.json not found", .0.display())]
    ManifestMissing(PathBuf),
    #[error("manifest.json is invalid: {0}")]
    ManifestInvalid(String),
    #[error("class {class:?}: array file {} not found", .path.display())]
    ManifestClassFileMissing { class: String, path: PathBuf },
    #[error("class {class:?}: {source}")]
    Array {
        class: String,
        #[source]
        source: NpyError,
    },
    #[error("class {class:?}: dimension {found} does not match dataset dimension {expected}")]
    DimensionMismatch {
        class: String,
        expected: usize,
        found: usize,
    },
    #[error("class {class:?}: {message}")]
    SampleIds { class: String, message: String },
    #[error("class {class:?} row {row}: {defect}")]
    InvariantViolation {
        class: String,
        row: usize,
        defect: RowDefect,
    },
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl StoreError {
    /// Stable identifier used in validation reports.
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::RootMissing(_) => "RootMissing",
            StoreError::ManifestMissing(_) => "ManifestMissing",
            StoreError::ManifestInvalid(_) => "ManifestInvalid",
            StoreError::ManifestClassFileMissing { .. } => "ManifestClassFileMissing",
            StoreError::Array { .. } => "ArrayFormat",
            StoreError::DimensionMismatch { .. } => "DimensionMismatch",
            StoreError::SampleIds { .. } => "SampleIds",
            StoreError::InvariantViolation { .. } => "InvariantViolation",
            StoreError::Io { .. } => "IoFailure",
        }
    }

    /// True for failures of the filesystem rather than of archive content.
    pub fn is_io(&self) -> bool {
        matches!(self, StoreError::RootMissing(_) | StoreError::Io { .. })
    }

    fn class(&self) -> Option<&str> {
        match self {
            StoreError::ManifestClassFileMissing { class, .. }
            | StoreError::Array { class, .. }
            | StoreError::DimensionMismatch { class, .. }
            | StoreError::SampleIds { class, .. }
            | StoreError::InvariantViolation { class, .. } => Some(class),
            _ => None,
        }
    }

    fn row(&self) -> Option<usize> {
        match self {
            StoreError::InvariantViolation { row, .. } => Some(*row),
            _ => None,
        }
    }

    fn io(path: &Path, source: io::Error) -> StoreError {
        StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// One sample's embedding. Always finite with a positive Euclidean norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<FeatureVector, RowDefect> {
        check_row(&values)?;
        Ok(FeatureVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = RowDefect;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        FeatureVector::new(values)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(v: FeatureVector) -> Vec<f64> {
        v.0
    }
}

fn check_row(values: &[f64]) -> Result<(), RowDefect> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(RowDefect::NonFinite);
    }
    // the norm must be usable as a divisor, so underflow counts as zero and
    // overflow as non-finite
    let sq: f64 = values.iter().map(|v| v * v).sum();
    if sq == 0.0 {
        Err(RowDefect::ZeroNorm)
    } else if !sq.is_finite() {
        Err(RowDefect::NonFinite)
    } else {
        Ok(())
    }
}

/// All samples of one class, in archive row order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassFeatureSet {
    name: String,
    sample_ids: Vec<String>,
    vectors: Vec<FeatureVector>,
}

impl ClassFeatureSet {
    pub fn new(
        name: impl Into<String>,
        sample_ids: Vec<String>,
        vectors: Vec<FeatureVector>,
    ) -> Result<ClassFeatureSet, StoreError> {
        let name = name.into();
        let ids_err = |message: String| StoreError::SampleIds {
            class: name.clone(),
            message,
        };
        if vectors.is_empty() {
            return Err(ids_err("class has no samples".into()));
        }
        if sample_ids.len() != vectors.len() {
            return Err(ids_err(format!(
                "{} sample ids for {} vectors",
                sample_ids.len(),
                vectors.len()
            )));
        }
        if let Some(dup) = first_duplicate(&sample_ids) {
            return Err(ids_err(format!("duplicate sample id {dup:?}")));
        }
        let dim = vectors[0].dim();
        if let Some(v) = vectors.iter().find(|v| v.dim() != dim) {
            return Err(StoreError::DimensionMismatch {
                class: name,
                expected: dim,
                found: v.dim(),
            });
        }
        Ok(ClassFeatureSet {
            name,
            sample_ids,
            vectors,
        })
    }

    /// Builds a class with ids synthesized as `<class>/<row>`.
    pub fn with_default_ids(
        name: impl Into<String>,
        vectors: Vec<FeatureVector>,
    ) -> Result<ClassFeatureSet, StoreError> {
        let name = name.into();
        let ids = default_ids(&name, vectors.len());
        ClassFeatureSet::new(name, ids, vectors)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn vectors(&self) -> &[FeatureVector] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].dim()
    }

    /// Keeps the samples whose index satisfies `keep`, preserving order.
    pub(crate) fn retain_indices(&self, keep: &[bool]) -> ClassFeatureSet {
        let (sample_ids, vectors) = self
            .sample_ids
            .iter()
            .zip(&self.vectors)
            .zip(keep)
            .filter(|(_, &k)| k)
            .map(|((id, v), _)| (id.clone(), v.clone()))
            .unzip();
        ClassFeatureSet {
            name: self.name.clone(),
            sample_ids,
            vectors,
        }
    }
}

/// An ordered set of classes sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFeatures {
    classes: Vec<ClassFeatureSet>,
    dimension: usize,
    source_meta: BTreeMap<String, serde_json::Value>,
}

impl DatasetFeatures {
    pub fn new(classes: Vec<ClassFeatureSet>) -> Result<DatasetFeatures, StoreError> {
        let first = classes
            .first()
            .ok_or_else(|| StoreError::ManifestInvalid("dataset has no classes".into()))?;
        let dimension = first.dim();
        if let Some(c) = classes.iter().find(|c| c.dim() != dimension) {
            return Err(StoreError::DimensionMismatch {
                class: c.name.clone(),
                expected: dimension,
                found: c.dim(),
            });
        }
        let names: Vec<&str> = classes.iter().map(|c| c.name.as_str()).collect();
        if let Some(dup) = first_duplicate(&names) {
            return Err(StoreError::ManifestInvalid(format!(
                "duplicate class name {dup:?}"
            )));
        }
        Ok(DatasetFeatures {
            classes,
            dimension,
            source_meta: BTreeMap::new(),
        })
    }

    pub fn with_meta(mut self, meta: BTreeMap<String, serde_json::Value>) -> DatasetFeatures {
        self.source_meta = meta;
        self
    }

    pub fn classes(&self) -> &[ClassFeatureSet] {
        &self.classes
    }

    pub fn class(&self, name: &str) -> Option<&ClassFeatureSet> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn source_meta(&self) -> &BTreeMap<String, serde_json::Value> {
        &self.source_meta
    }

    pub fn total_samples(&self) -> usize {
        self.classes.iter().map(ClassFeatureSet::len).sum()
    }

    pub(crate) fn replace_classes(&self, classes: Vec<ClassFeatureSet>) -> DatasetFeatures {
        DatasetFeatures {
            classes,
            dimension: self.dimension,
            source_meta: self.source_meta.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub dimension: usize,
    pub classes: Vec<ManifestClass>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestClass {
    pub name: String,
    pub file: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_ids: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCount {
    pub name: String,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row: Option<usize>,
}

impl From<&StoreError> for Violation {
    fn from(e: &StoreError) -> Violation {
        Violation {
            code: e.code().to_string(),
            message: e.to_string(),
            class: e.class().map(str::to_string),
            row: e.row(),
        }
    }
}

/// Outcome of [`validate`]: per-class counts plus every problem found.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub dimension: Option<usize>,
    pub classes: Vec<ClassCount>,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Loads an archive, failing on the first problem encountered.
pub fn load_dataset(root: impl AsRef<Path>) -> Result<DatasetFeatures, StoreError> {
    let mut scan = Scanner::new(root.as_ref(), true);
    scan.run()?;
    let dataset = DatasetFeatures::new(scan.loaded)?;
    Ok(dataset.with_meta(scan.meta))
}

/// Checks an archive and collects every content problem.
///
/// Only filesystem failures are returned as `Err`.
pub fn validate(root: impl AsRef<Path>) -> Result<ValidationReport, StoreError> {
    let mut scan = Scanner::new(root.as_ref(), false);
    match scan.run() {
        Ok(()) => {}
        Err(e) if e.is_io() => return Err(e),
        Err(e) => scan.violations.push(e),
    }
    Ok(ValidationReport {
        dimension: scan.dimension,
        classes: scan.counts,
        violations: scan.violations.iter().map(Violation::from).collect(),
    })
}

/// Writes `ds` as an archive under `root`, storing values as `f8`.
pub fn write_dataset(ds: &DatasetFeatures, root: impl AsRef<Path>) -> Result<(), StoreError> {
    let root = root.as_ref();
    fs::create_dir_all(root).map_err(|e| StoreError::io(root, e))?;
    let mut entries = Vec::with_capacity(ds.classes.len());
    for (idx, class) in ds.classes.iter().enumerate() {
        let file = format!("{idx:03}_{}.npy", file_stem(&class.name));
        let values: Vec<f64> = class
            .vectors
            .iter()
            .flat_map(|v| v.as_slice().iter().copied())
            .collect();
        let bytes = serialize_array(class.len(), ds.dimension, &values, Dtype::F8);
        let path = root.join(&file);
        fs::write(&path, bytes).map_err(|e| StoreError::io(&path, e))?;
        entries.push(ManifestClass {
            name: class.name.clone(),
            file,
            sample_ids: Some(class.sample_ids.clone()),
        });
    }
    let manifest = Manifest {
        dimension: ds.dimension,
        classes: entries,
        meta: ds.source_meta.clone(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| StoreError::ManifestInvalid(e.to_string()))?;
    text.push('\n');
    let path = root.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(|e| StoreError::io(&path, e))
}

/// Walks an archive. In fail-fast mode the first content error is returned;
/// otherwise content errors are accumulated in `violations`.
struct Scanner<'a> {
    root: &'a Path,
    fail_fast: bool,
    dimension: Option<usize>,
    meta: BTreeMap<String, serde_json::Value>,
    counts: Vec<ClassCount>,
    loaded: Vec<ClassFeatureSet>,
    violations: Vec<StoreError>,
}

impl<'a> Scanner<'a> {
    fn new(root: &'a Path, fail_fast: bool) -> Scanner<'a> {
        Scanner {
            root,
            fail_fast,
            dimension: None,
            meta: BTreeMap::new(),
            counts: Vec::new(),
            loaded: Vec::new(),
            violations: Vec::new(),
        }
    }

    fn report(&mut self, e: StoreError) -> Result<(), StoreError> {
        if self.fail_fast || e.is_io() {
            Err(e)
        } else {
            self.violations.push(e);
            Ok(())
        }
    }

    fn run(&mut self) -> Result<(), StoreError> {
        if !self.root.is_dir() {
            return Err(StoreError::RootMissing(self.root.to_path_buf()));
        }
        let manifest_path = self.root.join(MANIFEST_FILE);
        let text = match fs::read_to_string(&manifest_path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::ManifestMissing(manifest_path))
            }
            Err(e) => return Err(StoreError::io(&manifest_path, e)),
        };
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| StoreError::ManifestInvalid(e.to_string()))?;
        if manifest.dimension == 0 {
            return Err(StoreError::ManifestInvalid("dimension must be >= 1".into()));
        }
        if manifest.classes.is_empty() {
            return Err(StoreError::ManifestInvalid("no classes listed".into()));
        }
        let names: Vec<&str> = manifest.classes.iter().map(|c| c.name.as_str()).collect();
        if let Some(dup) = first_duplicate(&names) {
            self.report(StoreError::ManifestInvalid(format!(
                "duplicate class name {dup:?}"
            )))?;
        }
        self.dimension = Some(manifest.dimension);
        self.meta = manifest.meta.clone();
        for entry in &manifest.classes {
            self.scan_class(entry, manifest.dimension)?;
        }
        Ok(())
    }

    fn scan_class(&mut self, entry: &ManifestClass, dimension: usize) -> Result<(), StoreError> {
        let class = entry.name.clone();
        let path = self.root.join(&entry.file);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return self.report(StoreError::ManifestClassFileMissing { class, path });
            }
            Err(e) => return Err(StoreError::io(&path, e)),
        };
        let array = match parse_array_file(&bytes) {
            Ok(a) => a,
            Err(source) => return self.report(StoreError::Array { class, source }),
        };
        self.counts.push(ClassCount {
            name: class.clone(),
            samples: array.rows,
        });
        if array.cols != dimension {
            return self.report(StoreError::DimensionMismatch {
                class,
                expected: dimension,
                found: array.cols,
            });
        }

        let ids = match &entry.sample_ids {
            Some(ids) if ids.len() != array.rows => {
                return self.report(StoreError::SampleIds {
                    class,
                    message: format!("{} sample ids for {} rows", ids.len(), array.rows),
                });
            }
            Some(ids) => {
                if let Some(dup) = first_duplicate(ids) {
                    return self.report(StoreError::SampleIds {
                        class,
                        message: format!("duplicate sample id {dup:?}"),
                    });
                }
                ids.clone()
            }
            None => default_ids(&class, array.rows),
        };

        let mut vectors = Vec::with_capacity(array.rows);
        let mut clean = true;
        for row in 0..array.rows {
            match FeatureVector::new(array.row(row).to_vec()) {
                Ok(v) => vectors.push(v),
                Err(defect) => {
                    clean = false;
                    self.report(StoreError::InvariantViolation {
                        class: class.clone(),
                        row,
                        defect,
                    })?;
                }
            }
        }
        if clean {
            self.loaded.push(ClassFeatureSet {
                name: class,
                sample_ids: ids,
                vectors,
            });
        }
        Ok(())
    }
}

fn default_ids(class: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{class}/{i}")).collect()
}

fn first_duplicate<T: AsRef<str>>(items: &[T]) -> Option<&str> {
    let mut seen = HashSet::with_capacity(items.len());
    items
        .iter()
        .map(AsRef::as_ref)
        .find(|item| !seen.insert(*item))
}

fn file_stem(name: &str) -> String {
    let stem: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .take(64)
        .collect();
    if stem.is_empty() {
        "class".into()
    } else {
        stem
    }
}
