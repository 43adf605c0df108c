use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::labels::Rel3;
use crate::seed::{derive_seed, rng_from};

const INNER_VAL_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InnerSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Stratified outer folds over a labeled set, each with a stratified
/// 80/20 inner split of its training portion. All index lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub outer: Vec<Vec<usize>>,
    pub inner: Vec<InnerSplit>,
}

impl FoldPlan {
    /// Indexes outside outer fold `f`.
    pub fn train_indices(&self, f: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .outer
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != f)
            .flat_map(|(_, idx)| idx.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }

    pub fn test_indices(&self, f: usize) -> &[usize] {
        &self.outer[f]
    }
}

fn by_class(labels: &[Rel3], idx: impl Iterator<Item = usize>) -> [Vec<usize>; 3] {
    let mut out: [Vec<usize>; 3] = Default::default();
    for i in idx {
        out[labels[i].index()].push(i);
    }
    out
}

/// Members of each class are shuffled and dealt round-robin onto the folds,
/// with the dealing position carried over from one class to the next so
/// that overall fold sizes also differ by at most one.
pub fn make_fold_plan(labels: &[Rel3], k: usize, seed: u64) -> Result<FoldPlan, EvalError> {
    if k < 2 || labels.len() < k {
        return Err(EvalError::TooFewRows {
            needed: k.max(2),
            found: labels.len(),
        });
    }
    let mut outer = vec![Vec::new(); k];
    let mut pos = 0;
    for (c, mut members) in by_class(labels, 0..labels.len()).into_iter().enumerate() {
        if !members.is_empty() && members.len() < k {
            log::warn!(
                "class {} has {} members, fewer than {k} folds; it cannot be stratified",
                Rel3::ALL[c].name(),
                members.len()
            );
        }
        members.shuffle(&mut rng_from(derive_seed(seed, &[0, c as u64])));
        for m in members {
            outer[pos % k].push(m);
            pos += 1;
        }
    }
    for f in &mut outer {
        f.sort_unstable();
    }
    let mut plan = FoldPlan {
        k,
        seed,
        outer,
        inner: Vec::with_capacity(k),
    };
    for f in 0..k {
        let mut train = Vec::new();
        let mut val = Vec::new();
        for (c, mut members) in by_class(labels, plan.train_indices(f).into_iter()).into_iter().enumerate() {
            members.shuffle(&mut rng_from(derive_seed(seed, &[1, f as u64, c as u64])));
            let n_val = (members.len() as f64 * INNER_VAL_FRACTION).round() as usize;
            val.extend_from_slice(&members[..n_val]);
            train.extend_from_slice(&members[n_val..]);
        }
        train.sort_unstable();
        val.sort_unstable();
        plan.inner.push(InnerSplit { train, val });
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(counts: [usize; 3]) -> Vec<Rel3> {
        let mut out = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            out.extend(std::iter::repeat_n(Rel3::ALL[c], n));
        }
        out
    }

    #[test]
    fn stratified_sizes() {
        let l = labels([50, 30, 20]);
        let plan = make_fold_plan(&l, 5, 3).unwrap();
        for fold in &plan.outer {
            assert_eq!(fold.len(), 20);
            let mut counts = [0; 3];
            for &i in fold {
                counts[l[i].index()] += 1;
            }
            assert_eq!(counts, [10, 6, 4]);
        }
    }

    #[test]
    fn partition_and_inner_split() {
        let l = labels([17, 9, 4]);
        let plan = make_fold_plan(&l, 5, 1).unwrap();
        let mut all: Vec<usize> = plan.outer.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..30).collect::<Vec<_>>());
        let sizes: Vec<usize> = plan.outer.iter().map(Vec::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for f in 0..5 {
            let train = plan.train_indices(f);
            let inner = &plan.inner[f];
            assert_eq!(inner.train.len() + inner.val.len(), train.len());
            assert!(inner.val.iter().all(|i| train.contains(i) && !inner.train.contains(i)));
            assert!(inner.train.iter().all(|i| train.contains(i)));
        }
        assert_eq!(plan, make_fold_plan(&l, 5, 1).unwrap());
    }

    #[test]
    fn too_small() {
        assert!(make_fold_plan(&labels([2, 1, 1]), 5, 0).is_err());
    }
}
