//! Metrics, fold plans, held-out evaluation and gain analysis.

mod diversity;
mod evaluate;
mod folds;
mod gains;
mod metrics;

pub use diversity::{diversity, DiversityTracker, DEFAULT_DIVERSITY_N_MAX};
pub use evaluate::{evaluate_ensemble, predict, BagMetrics, EvalOutcome};
pub use folds::{make_fold_plan, FoldPlan, InnerSplit};
pub use gains::{emit_gain_records, gain_correlation, write_gains_csv, GainRecord, RoundBags, Setting};
pub use metrics::{macro_f1, pearson, per_class_f1};

use crate::pair::PairKey;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    Empty,
    #[error("need at least {needed} rows, got {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("test pair {0} also appears in the training data")]
    Leakage(PairKey),
    #[error(transparent)]
    Classifier(#[from] crate::classifier::ClassifierError),
    #[error("gain records need a round-0 baseline for fold {0}")]
    MissingBaseline(usize),
}
