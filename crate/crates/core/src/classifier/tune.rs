use super::logreg::{train_logreg, Hyperparams};
use super::{argmax, ClassifierError, LabeledRows};
use crate::eval::macro_f1;

pub const DEFAULT_L2_GRID: [f64; 5] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];

/// Picks `l2_lambda` by validation macro-F1. Ties go to the larger lambda.
pub fn tune_hyperparams(
    train: &LabeledRows,
    val: &LabeledRows,
    grid: &[f64],
    base: &Hyperparams,
) -> Result<Hyperparams, ClassifierError> {
    tune_hyperparams_scored(train, val, grid, base).map(|(hp, _)| hp)
}

/// Like [`tune_hyperparams`], also returning the score of each grid point.
pub fn tune_hyperparams_scored(
    train: &LabeledRows,
    val: &LabeledRows,
    grid: &[f64],
    base: &Hyperparams,
) -> Result<(Hyperparams, Vec<(f64, f64)>), ClassifierError> {
    if grid.is_empty() {
        return Err(ClassifierError::InvalidHyperparams("empty grid".into()));
    }
    let mut scores = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let hp = Hyperparams { l2_lambda: lambda, ..*base };
        let model = train_logreg(&train.features, &train.labels, &hp)?;
        let preds: Vec<_> = val.features.iter_rows().map(|r| argmax(&model.proba_row(r))).collect();
        let f1 = if val.is_empty() { 0.0 } else { macro_f1(&preds, &val.labels).unwrap_or(0.0) };
        scores.push((lambda, f1));
    }
    let mut best = scores[0];
    for &(lambda, f1) in &scores[1..] {
        if f1 > best.1 || (f1 == best.1 && lambda > best.0) {
            best = (lambda, f1);
        }
    }
    log::debug!("tuned l2_lambda={} (val macro-F1 {:.4})", best.0, best.1);
    Ok((Hyperparams { l2_lambda: best.0, ..*base }, scores))
}
