//! The three classifiers under comparison (KNN, linear SVM, quadratic SVM)
//! and the persisted model that bundles a classifier with its standardizer
//! and binning resolution.

pub mod knn;
pub mod svm;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureError, Standardizer};
use crate::labels::{bin_all, ClassLabel, Resolution};

pub use knn::KnnModel;
pub use svm::{KernelSpec, OvoSvm, SmoConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("k = {k} is outside 1..={n}")]
    BadK { k: usize, n: usize },
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("bad hyperparameter: {0}")]
    BadHyperparameter(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("SMO did not converge for {positive} vs {negative} after {iterations} iterations")]
    SolverNotConverged {
        positive: ClassLabel,
        negative: ClassLabel,
        iterations: usize,
    },
    #[error("model schema version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: u64, expected: u32 },
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Knn,
    Lsvm,
    Qsvm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Knn, Algorithm::Lsvm, Algorithm::Qsvm];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Knn => "knn",
            Algorithm::Lsvm => "lsvm",
            Algorithm::Qsvm => "qsvm",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "knn" => Ok(Algorithm::Knn),
            "lsvm" => Ok(Algorithm::Lsvm),
            "qsvm" => Ok(Algorithm::Qsvm),
            other => Err(format!(
                "unknown algorithm {other:?} (expected knn, lsvm or qsvm)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub k: usize,
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            k: 10,
            c: 1.0,
            tol: 1e-3,
            max_iter: 1_000_000,
        }
    }
}

impl Hyperparams {
    pub fn smo(&self) -> SmoConfig {
        SmoConfig {
            c: self.c,
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelParams {
    Knn(KnnModel),
    Svm(OvoSvm),
}

/// A classifier together with everything needed to apply it to raw feature
/// rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub algorithm: Algorithm,
    pub hyperparams: Hyperparams,
    pub resolution: Resolution,
    pub classes: Vec<ClassLabel>,
    pub standardizer: Standardizer,
    pub params: ModelParams,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema_version: u32,
    algorithm: Algorithm,
    resolution: Resolution,
    classes: Vec<ClassLabel>,
    feature_width: usize,
    hyperparams: Hyperparams,
    standardizer: Standardizer,
    payload: ModelParams,
}

impl TrainedModel {
    /// Fits the standardizer on `x`, bins `humidity` at `resolution` and
    /// trains the chosen classifier on the standardized rows.
    pub fn fit(
        x: ArrayView2<f64>,
        humidity: &[f64],
        algorithm: Algorithm,
        resolution: Resolution,
        hyperparams: Hyperparams,
    ) -> Result<Self, ClassifyError> {
        if x.nrows() != humidity.len() {
            return Err(ClassifyError::ShapeMismatch(format!(
                "{} rows for {} humidity values",
                x.nrows(),
                humidity.len()
            )));
        }
        let standardizer = Standardizer::fit(x)?;
        let z = standardizer.apply_matrix(x)?;
        let labels = bin_all(humidity, resolution);
        let mut classes = labels.clone();
        classes.sort_unstable();
        classes.dedup();
        let params = match algorithm {
            Algorithm::Knn => ModelParams::Knn(KnnModel::train(z, labels, hyperparams.k)?),
            Algorithm::Lsvm => ModelParams::Svm(OvoSvm::train(
                z.view(),
                &labels,
                KernelSpec::Linear,
                hyperparams.smo(),
            )?),
            Algorithm::Qsvm => ModelParams::Svm(OvoSvm::train(
                z.view(),
                &labels,
                KernelSpec::Poly2,
                hyperparams.smo(),
            )?),
        };
        Ok(Self {
            algorithm,
            hyperparams,
            resolution,
            classes,
            standardizer,
            params,
        })
    }

    pub fn feature_width(&self) -> usize {
        self.standardizer.width()
    }

    /// Classifies an already standardized row.
    pub fn predict_standardized(&self, z: ArrayView1<f64>) -> ClassLabel {
        match &self.params {
            ModelParams::Knn(m) => m.predict(z),
            ModelParams::Svm(m) => m.predict(z),
        }
    }

    pub fn predict(&self, raw: &[f64]) -> Result<ClassLabel, ClassifyError> {
        if raw.len() != self.feature_width() {
            return Err(FeatureError::WidthMismatch {
                expected: self.feature_width(),
                got: raw.len(),
            }
            .into());
        }
        let z = self.standardizer.apply(raw);
        Ok(self.predict_standardized(ArrayView1::from(&z)))
    }

    pub fn predict_matrix(&self, raw: ArrayView2<f64>) -> Result<Vec<ClassLabel>, ClassifyError> {
        let z = self.standardizer.apply_matrix(raw)?;
        Ok(match &self.params {
            ModelParams::Knn(m) => m.predict_matrix(z.view()),
            ModelParams::Svm(m) => m.predict_matrix(z.view()),
        })
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            schema_version: SCHEMA_VERSION,
            algorithm: self.algorithm,
            resolution: self.resolution,
            classes: self.classes.clone(),
            feature_width: self.feature_width(),
            hyperparams: self.hyperparams,
            standardizer: self.standardizer.clone(),
            payload: self.params.clone(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ClassifyError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ClassifyError::CorruptFile(e.to_string()))?;
        let version = value
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| ClassifyError::CorruptFile("missing schema_version".into()))?;
        if version != u64::from(SCHEMA_VERSION) {
            return Err(ClassifyError::SchemaVersionMismatch {
                found: version,
                expected: SCHEMA_VERSION,
            });
        }
        let file: ModelFile =
            serde_json::from_value(value).map_err(|e| ClassifyError::CorruptFile(e.to_string()))?;
        if file.standardizer.mean.len() != file.feature_width
            || file.standardizer.std.len() != file.feature_width
        {
            return Err(ClassifyError::CorruptFile(
                "standardizer width disagrees with feature_width".into(),
            ));
        }
        if file.classes.is_empty() {
            return Err(ClassifyError::CorruptFile("empty class list".into()));
        }
        let width_ok = match &file.payload {
            ModelParams::Knn(m) => m.width() == file.feature_width && !m.is_empty(),
            ModelParams::Svm(m) => {
                m.pool.ncols() == file.feature_width
                    && m.machines
                        .iter()
                        .all(|mc| mc.support.iter().all(|&s| s < m.pool.nrows()))
            }
        };
        if !width_ok {
            return Err(ClassifyError::CorruptFile(
                "payload inconsistent with header".into(),
            ));
        }
        Ok(Self {
            algorithm: file.algorithm,
            hyperparams: file.hyperparams,
            resolution: file.resolution,
            classes: file.classes,
            standardizer: file.standardizer,
            params: file.payload,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassifyError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClassifyError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}
