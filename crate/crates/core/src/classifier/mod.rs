//! Three-way multinomial logistic regression, grid-searched regularization
//! and the undersampled bagging ensemble.

mod ensemble;
mod logreg;
mod tune;

pub use ensemble::{average, ensemble_proba, train_ensemble, undersample_balance, undersample_indices, Ensemble, StackedEnsemble};
pub use logreg::{predict_proba, train_logreg, train_logreg_traced, Hyperparams, LogRegModel, Objective, Params, TrainStatus};
pub use tune::{tune_hyperparams, tune_hyperparams_scored, DEFAULT_L2_GRID};

pub use crate::labels::Rel3;

use crate::features::{FeatureMatrix, FeatureVector, SchemaId};
use crate::pair::PairKey;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClassifierError {
    #[error("training set has fewer than two distinct classes")]
    SingleClass,
    #[error("training set is empty")]
    Empty,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("schema mismatch: expected {expected}, found {found}")]
    SchemaMismatch { expected: SchemaId, found: SchemaId },
    #[error("label count {labels} does not match row count {rows}")]
    LabelCount { rows: usize, labels: usize },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("ensemble size must be at least 1")]
    EmptyEnsemble,
}

/// Feature rows with their pair keys and three-way labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRows {
    pub keys: Vec<PairKey>,
    pub features: FeatureMatrix,
    pub labels: Vec<Rel3>,
}

impl LabeledRows {
    pub fn empty(dim: usize, schema: SchemaId) -> Self {
        LabeledRows {
            keys: Vec::new(),
            features: FeatureMatrix::empty(dim, schema),
            labels: Vec::new(),
        }
    }

    pub fn push(&mut self, key: PairKey, fv: &FeatureVector, label: Rel3) {
        self.keys.push(key);
        self.features.push(fv);
        self.labels.push(label);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn truncate(&mut self, rows: usize) {
        self.keys.truncate(rows);
        self.features.truncate(rows);
        self.labels.truncate(rows);
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, indexes: &[usize]) -> LabeledRows {
        LabeledRows {
            keys: indexes.iter().map(|&i| self.keys[i].clone()).collect(),
            features: self.features.select(indexes),
            labels: indexes.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    pub fn concat(&self, other: &LabeledRows) -> LabeledRows {
        let mut out = self.clone();
        out.keys.extend(other.keys.iter().cloned());
        out.features.extend(&other.features);
        out.labels.extend_from_slice(&other.labels);
        out
    }

    pub fn class_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for l in &self.labels {
            c[l.index()] += 1;
        }
        c
    }
}

/// Index of the largest probability; ties go to the lower class index.
pub fn argmax(p: &[f64; 3]) -> Rel3 {
    let mut best = 0;
    for c in 1..3 {
        if p[c] > p[best] {
            best = c;
        }
    }
    Rel3::from_index(best).expect("three classes")
}
