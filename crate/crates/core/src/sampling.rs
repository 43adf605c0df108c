//! Candidate-pair generation, uncertainty scoring and per-category selection.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::ItemCatalog;
use crate::classifier::{average, ClassifierError, Ensemble, StackedEnsemble};
use crate::features::FeatureMatrix;
use crate::pair::PairKey;
use crate::seed::{derive_seed, hash_str, rng_from};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SamplingError {
    #[error("{scores} scores for {pairs} pairs")]
    LengthMismatch { pairs: usize, scores: usize },
    #[error("score for pair {index} is not finite")]
    NonFinite { index: usize },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

/// A candidate in presentation order: the query first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CandidatePair {
    pub query: String,
    pub candidate: String,
    pub fine_category: String,
}

impl CandidatePair {
    pub fn key(&self) -> PairKey {
        PairKey::new(&self.query, &self.candidate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateBatch {
    pub round: u32,
    pub pairs: Vec<CandidatePair>,
}

impl CandidateBatch {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Random,
    Qbc,
    Margin,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Random, Strategy::Qbc, Strategy::Margin];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Qbc => "qbc",
            Strategy::Margin => "margin",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown strategy '{s}' (valid: random, qbc, margin)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub pair: CandidatePair,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedBatch {
    pub strategy: Strategy,
    pub pairs: Vec<ScoredPair>,
}

/// Two-stage draw: up to `q` queries per fine category, then up to `c`
/// candidates per query from the query's broad category. Pairs in
/// `excluded` and pairs already drawn earlier in the batch are skipped.
pub fn sample_candidates(
    catalog: &ItemCatalog,
    excluded: &HashSet<PairKey>,
    q: usize,
    c: usize,
    seed: u64,
    round: u32,
) -> CandidateBatch {
    let mut pairs = Vec::new();
    let mut seen: HashSet<PairKey> = HashSet::new();
    for fine in catalog.fine_categories() {
        let mut rng = rng_from(derive_seed(seed, &[u64::from(round), hash_str(fine)]));
        let members = catalog.items_in_fine(fine);
        let broad = catalog.broad_of(fine).expect("fine category has a broad parent");
        let pool = catalog.items_in_broad(broad);
        for &qi in members.choose_multiple(&mut rng, q.min(members.len())) {
            let query = &catalog.item(qi).id;
            let eligible: Vec<usize> = pool
                .iter()
                .copied()
                .filter(|&ci| {
                    let cand = &catalog.item(ci).id;
                    ci != qi && {
                        let key = PairKey::new(query, cand);
                        !excluded.contains(&key) && !seen.contains(&key)
                    }
                })
                .collect();
            for &ci in eligible.choose_multiple(&mut rng, c.min(eligible.len())) {
                let candidate = &catalog.item(ci).id;
                seen.insert(PairKey::new(query, candidate));
                pairs.push(CandidatePair {
                    query: query.clone(),
                    candidate: candidate.clone(),
                    fine_category: fine.clone(),
                });
            }
        }
    }
    CandidateBatch { round, pairs }
}

/// I.i.d. Uniform(0, 1) scores.
pub fn score_random(batch: &CandidateBatch, seed: u64) -> Vec<f64> {
    let mut rng = rng_from(seed);
    (0..batch.len()).map(|_| rng.random::<f64>()).collect()
}

/// Mean over classes of the population variance of member probabilities.
pub fn qbc_score(members: &[[f64; 3]]) -> f64 {
    if members.is_empty() {
        return 0.0;
    }
    let k = members.len() as f64;
    let mut total = 0.0;
    for c in 0..3 {
        let mut vals: Vec<f64> = members.iter().map(|p| p[c]).collect();
        vals.sort_by(f64::total_cmp);
        // Shifted by the smallest value so identical members give exactly 0.
        let lo = vals[0];
        let mean = vals.iter().map(|v| v - lo).sum::<f64>() / k;
        total += vals.iter().map(|v| (v - lo - mean) * (v - lo - mean)).sum::<f64>() / k;
    }
    total / 3.0
}

/// `1 - (p_first - p_second)`.
pub fn margin_score(p: &[f64; 3]) -> f64 {
    let mut s = *p;
    s.sort_by(|a, b| b.total_cmp(a));
    (1.0 - (s[0] - s[1])).clamp(0.0, 1.0)
}

fn score_rows(
    ensemble: &Ensemble,
    features: &FeatureMatrix,
    f: impl Fn(&[[f64; 3]]) -> f64 + Sync,
) -> Result<Vec<f64>, SamplingError> {
    ensemble.models[0].check(features.schema(), features.dim())?;
    let stacked = StackedEnsemble::new(ensemble);
    Ok((0..features.rows())
        .into_par_iter()
        .map_init(
            || (Vec::new(), Vec::new()),
            |(acc, out), i| {
                stacked.member_probas_into(features.row(i), acc, out);
                f(out)
            },
        )
        .collect())
}

/// QBC scores for the rows of `features` (one row per batch pair).
pub fn score_qbc(ensemble: &Ensemble, features: &FeatureMatrix) -> Result<Vec<f64>, SamplingError> {
    score_rows(ensemble, features, qbc_score)
}

/// Margin scores for the rows of `features` (one row per batch pair).
pub fn score_margin(ensemble: &Ensemble, features: &FeatureMatrix) -> Result<Vec<f64>, SamplingError> {
    score_rows(ensemble, features, |m| margin_score(&average(m)))
}

/// Highest-scoring pair per fine category; ties go to the smallest
/// (query, candidate). Output is ordered by fine category name.
pub fn select_per_category(
    batch: &CandidateBatch,
    scores: &[f64],
    strategy: Strategy,
) -> Result<SelectedBatch, SamplingError> {
    if scores.len() != batch.len() {
        return Err(SamplingError::LengthMismatch {
            pairs: batch.len(),
            scores: scores.len(),
        });
    }
    if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
        return Err(SamplingError::NonFinite { index });
    }
    let mut best: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, p) in batch.pairs.iter().enumerate() {
        best.entry(&p.fine_category)
            .and_modify(|b| {
                let cur = &batch.pairs[*b];
                let better = scores[i] > scores[*b]
                    || (scores[i] == scores[*b]
                        && (p.query.as_str(), p.candidate.as_str()) < (cur.query.as_str(), cur.candidate.as_str()));
                if better {
                    *b = i;
                }
            })
            .or_insert(i);
    }
    Ok(SelectedBatch {
        strategy,
        pairs: best
            .into_values()
            .map(|i| ScoredPair {
                pair: batch.pairs[i].clone(),
                score: scores[i],
            })
            .collect(),
    })
}
