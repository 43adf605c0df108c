use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::logreg::{train_logreg, Hyperparams, LogRegModel};
use super::{ClassifierError, LabeledRows};
use crate::annotation::LlmLabeledSet;
use crate::features::{FeatureVector, SchemaId};
use crate::labels::Rel3;
use crate::pair::PairKey;
use crate::seed::{derive_seed, rng_from};

/// Sorted indexes of a class-balanced subsample: every non-empty class
/// contributes `m` rows, where `m` is the smallest non-empty class size.
pub fn undersample_indices(labels: &[Rel3], seed: u64) -> Vec<usize> {
    let mut by_class: [Vec<usize>; 3] = Default::default();
    for (i, l) in labels.iter().enumerate() {
        by_class[l.index()].push(i);
    }
    let Some(m) = by_class.iter().map(Vec::len).filter(|&n| n > 0).min() else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(3 * m);
    for (c, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        let mut rng = rng_from(derive_seed(seed, &[c as u64]));
        members.shuffle(&mut rng);
        out.extend_from_slice(&members[..m]);
    }
    out.sort_unstable();
    out
}

/// Balanced subsample of LLM-labeled pairs, in key order.
pub fn undersample_balance(set: &LlmLabeledSet, seed: u64) -> Vec<PairKey> {
    let keys: Vec<&PairKey> = set.iter().map(|(k, _)| k).collect();
    let labels: Vec<Rel3> = set.iter().map(|(_, r)| r.rel3).collect();
    undersample_indices(&labels, seed)
        .into_iter()
        .map(|i| keys[i].clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub models: Vec<LogRegModel>,
    pub bag_seeds: Vec<u64>,
    /// LLM-labeled pairs drawn into each bag.
    pub bag_members: Vec<Vec<PairKey>>,
    pub human_rows: usize,
    pub llm_rows: usize,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn schema(&self) -> SchemaId {
        self.models[0].schema
    }

    pub fn dim(&self) -> usize {
        self.models[0].dim
    }

    /// Per-member class probabilities for a raw row.
    pub fn member_probas_row(&self, row: &[f64]) -> Vec<[f64; 3]> {
        self.models.iter().map(|m| m.proba_row(row)).collect()
    }

    pub fn member_probas(&self, fv: &FeatureVector) -> Result<Vec<[f64; 3]>, ClassifierError> {
        self.models[0].check(fv.schema, fv.values.len())?;
        Ok(self.member_probas_row(&fv.values))
    }

    pub fn proba_row(&self, row: &[f64]) -> [f64; 3] {
        average(&self.member_probas_row(row))
    }
}

/// All member weights in one feature-major block, for scoring many rows.
/// Per-class sums run over features in ascending order, as in
/// [`LogRegModel::proba_row`], so results match member by member.
pub struct StackedEnsemble {
    k: usize,
    dim: usize,
    /// `wt[j * 3k + 3m + c]` = weight of feature j, member m, class c.
    wt: Vec<f64>,
    bias: Vec<f64>,
}

impl StackedEnsemble {
    pub fn new(e: &Ensemble) -> Self {
        let k = e.models.len();
        let dim = e.dim();
        let mut wt = vec![0.0; dim * 3 * k];
        let mut bias = Vec::with_capacity(3 * k);
        for (m, model) in e.models.iter().enumerate() {
            for c in 0..3 {
                for j in 0..dim {
                    wt[j * 3 * k + 3 * m + c] = model.params.weights[c * dim + j];
                }
                bias.push(model.params.bias[c]);
            }
        }
        StackedEnsemble { k, dim, wt, bias }
    }

    /// Member probabilities for `row`, written into `out`.
    pub fn member_probas_into(&self, row: &[f64], acc: &mut Vec<f64>, out: &mut Vec<[f64; 3]>) {
        debug_assert_eq!(row.len(), self.dim);
        let w = 3 * self.k;
        acc.clear();
        acc.resize(w, 0.0);
        for (j, &x) in row.iter().enumerate() {
            if x != 0.0 {
                for (a, wv) in acc.iter_mut().zip(&self.wt[j * w..(j + 1) * w]) {
                    *a += x * wv;
                }
            }
        }
        out.clear();
        for m in 0..self.k {
            let z: [f64; 3] = std::array::from_fn(|c| self.bias[3 * m + c] + acc[3 * m + c]);
            out.push(softmax3(z));
        }
    }
}

fn softmax3(z: [f64; 3]) -> [f64; 3] {
    let m = z[0].max(z[1]).max(z[2]);
    let e = z.map(|v| (v - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

/// Mean of member probabilities. Each class is summed in ascending value
/// order, which makes the result independent of member order.
pub fn average(members: &[[f64; 3]]) -> [f64; 3] {
    std::array::from_fn(|c| {
        let mut vals: Vec<f64> = members.iter().map(|p| p[c]).collect();
        vals.sort_by(f64::total_cmp);
        vals.iter().sum::<f64>() / members.len() as f64
    })
}

pub fn ensemble_proba(ensemble: &Ensemble, fv: &FeatureVector) -> Result<[f64; 3], ClassifierError> {
    Ok(average(&ensemble.member_probas(fv)?))
}

/// Trains `k` models. Bag `j` holds every human row plus a balanced
/// subsample of `llm` drawn with `derive_seed(seed, [j])`. Bags that end up
/// with identical rows share one fitted model.
pub fn train_ensemble(
    human: &LabeledRows,
    llm: &LabeledRows,
    k: usize,
    seed: u64,
    hp: &Hyperparams,
) -> Result<Ensemble, ClassifierError> {
    if k == 0 {
        return Err(ClassifierError::EmptyEnsemble);
    }
    if !llm.is_empty() {
        if llm.features.schema() != human.features.schema() {
            return Err(ClassifierError::SchemaMismatch {
                expected: human.features.schema(),
                found: llm.features.schema(),
            });
        }
        if llm.features.dim() != human.features.dim() {
            return Err(ClassifierError::DimensionMismatch {
                expected: human.features.dim(),
                found: llm.features.dim(),
            });
        }
    }
    let bag_seeds: Vec<u64> = (0..k as u64).map(|j| derive_seed(seed, &[j])).collect();
    let bags: Vec<Vec<usize>> = bag_seeds.iter().map(|&s| undersample_indices(&llm.labels, s)).collect();

    let mut unique: BTreeMap<&[usize], usize> = BTreeMap::new();
    let mut slot = Vec::with_capacity(k);
    let mut distinct: Vec<&[usize]> = Vec::new();
    for bag in &bags {
        let next = distinct.len();
        let id = *unique.entry(bag.as_slice()).or_insert(next);
        if id == next {
            distinct.push(bag);
        }
        slot.push(id);
    }

    let fitted: Vec<LogRegModel> = distinct
        .par_iter()
        .map(|bag| {
            let rows = human.concat(&llm.select(bag));
            train_logreg(&rows.features, &rows.labels, hp)
        })
        .collect::<Result<_, _>>()?;

    Ok(Ensemble {
        models: slot.iter().map(|&i| fitted[i].clone()).collect(),
        bag_members: bags
            .iter()
            .map(|b| b.iter().map(|&i| llm.keys[i].clone()).collect())
            .collect(),
        bag_seeds,
        human_rows: human.len(),
        llm_rows: llm.len(),
    })
}
