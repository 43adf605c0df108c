use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{macro_f1, EvalError};
use crate::classifier::{argmax, average, Ensemble, LabeledRows};
use crate::labels::Rel3;
use crate::pair::PairKey;

/// Scores of one bag's model, plus the diversity of that bag's training set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BagMetrics {
    pub bag: usize,
    pub id_macro_f1: f64,
    pub ood_macro_f1: f64,
    pub diversity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub id_macro_f1: f64,
    pub ood_macro_f1: f64,
    /// `(id, ood)` macro-F1 of each member model.
    pub per_bag: Vec<(f64, f64)>,
}

/// Ensemble predictions (argmax of the averaged probabilities) and each
/// member's own predictions.
pub fn predict(ensemble: &Ensemble, rows: &LabeledRows) -> Result<(Vec<Rel3>, Vec<Vec<Rel3>>), EvalError> {
    ensemble.models[0].check(rows.features.schema(), rows.features.dim())?;
    let mut combined = Vec::with_capacity(rows.len());
    let mut members = vec![Vec::with_capacity(rows.len()); ensemble.len()];
    for row in rows.features.iter_rows() {
        let probas = ensemble.member_probas_row(row);
        for (m, p) in members.iter_mut().zip(&probas) {
            m.push(argmax(p));
        }
        combined.push(argmax(&average(&probas)));
    }
    Ok((combined, members))
}

/// Macro-F1 on the ID and OOD test sets. Any test key present in
/// `training_keys` is a hard error.
pub fn evaluate_ensemble(
    ensemble: &Ensemble,
    id_test: &LabeledRows,
    ood_test: &LabeledRows,
    training_keys: &HashSet<PairKey>,
) -> Result<EvalOutcome, EvalError> {
    if let Some(k) = id_test.keys.iter().chain(&ood_test.keys).find(|k| training_keys.contains(k)) {
        return Err(EvalError::Leakage(k.clone()));
    }
    let (id_pred, id_members) = predict(ensemble, id_test)?;
    let (ood_pred, ood_members) = predict(ensemble, ood_test)?;
    let per_bag = id_members
        .iter()
        .zip(&ood_members)
        .map(|(i, o)| Ok((macro_f1(i, &id_test.labels)?, macro_f1(o, &ood_test.labels)?)))
        .collect::<Result<_, EvalError>>()?;
    Ok(EvalOutcome {
        id_macro_f1: macro_f1(&id_pred, &id_test.labels)?,
        ood_macro_f1: macro_f1(&ood_pred, &ood_test.labels)?,
        per_bag,
    })
}
