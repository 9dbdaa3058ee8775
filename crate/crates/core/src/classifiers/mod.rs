//! The six classical classifiers behind one train/predict contract.
//!
//! Every trainer is a deterministic function of its dataset and hyperparameters.
//! Classes are indexed in ascending [`SubjectId`] order and every predictor breaks
//! ties toward the lowest index, i.e. the smallest subject id.

mod bayes;
mod codec;
mod knn;
mod lda;
pub(crate) mod linalg;
mod logistic;
mod svc;
mod tree;

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::dataset::SubjectId;
use crate::features::FeatureVector;

pub use bayes::{train_nb, NbModel, NbParams};
pub use codec::{deserialize_model, serialize_model, CodecError, FORMAT_VERSION, MAGIC};
pub use knn::{train_knn, Distance, KnnModel, KnnParams};
pub use lda::{train_lda, LdaModel, LdaParams};
pub use logistic::{softmax_objective, train_lr, LrModel, LrParams, SoftmaxObjective};
pub use svc::{hinge_objective, train_svc, SvcModel, SvcParams};
pub use tree::{train_dt, DtParams, TreeModel, TreeNode};

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("feature dimension {found} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("covariance factorization failed: {0}")]
    FactorizationFailed(String),
    #[error("non-finite loss at iteration {0}")]
    NonFiniteLoss(usize),
}

/// Row-major feature matrix with parallel labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    n: usize,
    dim: usize,
    data: Vec<f64>,
    labels: Vec<SubjectId>,
    classes: Vec<SubjectId>,
    targets: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<SubjectId>) -> Result<Self, ClassifierError> {
        if rows.len() != labels.len() {
            return Err(ClassifierError::InvalidDataset(format!(
                "{} feature rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || dim == 0 {
            return Err(ClassifierError::InvalidDataset(
                "no samples or zero-dimensional features".into(),
            ));
        }
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(ClassifierError::InvalidDataset(format!(
                "row {i} has dimension {}, expected {dim}",
                r.len()
            )));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ClassifierError::InvalidDataset("non-finite feature value".into()));
        }
        let classes: Vec<SubjectId> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let targets = labels
            .iter()
            .map(|l| classes.binary_search(l).expect("label drawn from class set"))
            .collect();
        Ok(Self {
            n: rows.len(),
            dim,
            data: rows.into_iter().flatten().collect(),
            labels,
            classes,
            targets,
        })
    }

    pub fn from_features(features: &[FeatureVector], labels: Vec<SubjectId>) -> Result<Self, ClassifierError> {
        Self::new(features.iter().map(|f| f.0.clone()).collect(), labels)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[SubjectId] {
        &self.classes
    }

    pub fn labels(&self) -> &[SubjectId] {
        &self.labels
    }

    /// Class index (position in [`classes`](Self::classes)) of every sample.
    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count()];
        for &t in &self.targets {
            counts[t] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelType {
    Svc,
    Lda,
    Knn,
    Dt,
    Lr,
    Nb,
}

impl ModelType {
    pub const ALL: [ModelType; 6] = [
        ModelType::Svc,
        ModelType::Lda,
        ModelType::Knn,
        ModelType::Dt,
        ModelType::Lr,
        ModelType::Nb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelType::Svc => "SVC",
            ModelType::Lda => "LDA",
            ModelType::Knn => "KNN",
            ModelType::Dt => "DT",
            ModelType::Lr => "LR",
            ModelType::Nb => "NB",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        self as u8 + 1
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag.checked_sub(1)? as usize).copied()
    }
}

impl fmt::Display for ModelType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown model {s:?} (expected one of svc, lda, knn, dt, lr, nb)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    Svc(SvcModel),
    Lda(LdaModel),
    Knn(KnnModel),
    Dt(TreeModel),
    Lr(LrModel),
    Nb(NbModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub classes: Vec<SubjectId>,
    pub dim: usize,
    /// Fingerprint of the feature configuration the model was trained on; 0 if unknown.
    pub feature_fingerprint: u64,
    /// Canonical trainer description, e.g. `svc c=1 iters=2000`.
    pub hyperparameters: String,
    pub kind: ModelKind,
}

impl TrainedModel {
    pub(crate) fn new(ds: &LabeledDataset, hyperparameters: String, kind: ModelKind) -> Self {
        Self {
            classes: ds.classes().to_vec(),
            dim: ds.dim(),
            feature_fingerprint: 0,
            hyperparameters,
            kind,
        }
    }

    pub fn with_feature_fingerprint(mut self, fingerprint: u64) -> Self {
        self.feature_fingerprint = fingerprint;
        self
    }

    pub fn model_type(&self) -> ModelType {
        match self.kind {
            ModelKind::Svc(_) => ModelType::Svc,
            ModelKind::Lda(_) => ModelType::Lda,
            ModelKind::Knn(_) => ModelType::Knn,
            ModelKind::Dt(_) => ModelType::Dt,
            ModelKind::Lr(_) => ModelType::Lr,
            ModelKind::Nb(_) => ModelType::Nb,
        }
    }

    /// Class index of the prediction.
    pub fn predict_index(&self, x: &[f64]) -> Result<usize, ClassifierError> {
        if x.len() != self.dim {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(match &self.kind {
            ModelKind::Svc(m) => m.predict_index(x),
            ModelKind::Lda(m) => m.predict_index(x),
            ModelKind::Knn(m) => m.predict_index(x, self.classes.len()),
            ModelKind::Dt(m) => m.predict_index(x),
            ModelKind::Lr(m) => m.predict_index(x),
            ModelKind::Nb(m) => m.predict_index(x),
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<SubjectId, ClassifierError> {
        self.predict_index(x).map(|i| self.classes[i])
    }
}

/// Hyperparameters for all six trainers.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Hyperparameters {
    pub svc: SvcParams,
    pub lda: LdaParams,
    pub knn: KnnParams,
    pub dt: DtParams,
    pub lr: LrParams,
    pub nb: NbParams,
}

impl Hyperparameters {
    pub fn describe(&self, model: ModelType) -> String {
        match model {
            ModelType::Svc => self.svc.to_string(),
            ModelType::Lda => self.lda.to_string(),
            ModelType::Knn => self.knn.to_string(),
            ModelType::Dt => self.dt.to_string(),
            ModelType::Lr => self.lr.to_string(),
            ModelType::Nb => self.nb.to_string(),
        }
    }
}

pub fn train(model: ModelType, ds: &LabeledDataset, hyper: &Hyperparameters) -> Result<TrainedModel, ClassifierError> {
    match model {
        ModelType::Svc => train_svc(ds, &hyper.svc),
        ModelType::Lda => train_lda(ds, &hyper.lda),
        ModelType::Knn => train_knn(ds, &hyper.knn),
        ModelType::Dt => train_dt(ds, &hyper.dt),
        ModelType::Lr => train_lr(ds, &hyper.lr),
        ModelType::Nb => train_nb(ds, &hyper.nb),
    }
}
