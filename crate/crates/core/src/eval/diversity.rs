use rand::seq::index::sample;
use rayon::prelude::*;

use super::EvalError;
use crate::features::FeatureMatrix;
use crate::seed::rng_from;

pub const DEFAULT_DIVERSITY_N_MAX: usize = 2000;

/// Centered, unit-norm copy of a row; `None` for constant rows.
fn normalize(row: &[f64]) -> Option<Vec<f64>> {
    let mean = row.iter().sum::<f64>() / row.len() as f64;
    let centered: Vec<f64> = row.iter().map(|v| v - mean).collect();
    let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
    (norm > 0.0).then(|| centered.into_iter().map(|v| v / norm).collect())
}

fn abs_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().abs().min(1.0)
}

fn from_sum(sum: f64, n: usize) -> f64 {
    let n = n as f64;
    (1.0 - 2.0 * sum / (n * (n - 1.0))).clamp(0.0, 1.0)
}

/// `1 - 2/(n(n-1)) * sum_{i<j} |rho(row_i, row_j)|`. Constant rows count as
/// uncorrelated with everything.
pub fn diversity(x: &FeatureMatrix) -> Result<f64, EvalError> {
    let n = x.rows();
    if n < 2 {
        return Err(EvalError::TooFewRows { needed: 2, found: n });
    }
    let rows: Vec<Option<Vec<f64>>> = x.iter_rows().map(normalize).collect();
    let constant = rows.iter().filter(|r| r.is_none()).count();
    if constant > 0 {
        log::debug!("diversity: {constant} constant rows treated as uncorrelated");
    }
    let partial: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| match &rows[i] {
            None => 0.0,
            Some(a) => rows[i + 1..].iter().flatten().map(|b| abs_dot(a, b)).sum(),
        })
        .collect();
    Ok(from_sum(partial.iter().sum(), n))
}

/// Sparse row with its mean and inverse centered norm (0 for constant rows).
#[derive(Debug, Clone)]
struct SparseRow {
    idx: Vec<u32>,
    val: Vec<f64>,
    mean: f64,
    inv_norm: f64,
}

impl SparseRow {
    fn new(row: &[f64]) -> Self {
        let d = row.len() as f64;
        let mean = row.iter().sum::<f64>() / d;
        let ss: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum();
        let (idx, val) = row
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u32, *v))
            .unzip();
        SparseRow {
            idx,
            val,
            mean,
            inv_norm: if ss > 0.0 { 1.0 / ss.sqrt() } else { 0.0 },
        }
    }

    fn abs_corr(&self, other: &SparseRow, dim: usize) -> f64 {
        if self.inv_norm == 0.0 || other.inv_norm == 0.0 {
            return 0.0;
        }
        let (mut i, mut j, mut dot) = (0, 0, 0.0);
        while i < self.idx.len() && j < other.idx.len() {
            match self.idx[i].cmp(&other.idx[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    dot += self.val[i] * other.val[j];
                    i += 1;
                    j += 1;
                }
            }
        }
        let centered = dot - dim as f64 * self.mean * other.mean;
        (centered * self.inv_norm * other.inv_norm).abs().min(1.0)
    }
}

/// Incremental diversity over a fixed base block plus a growing list of
/// extra rows. Pairwise terms are computed once, so the diversity of the
/// base plus any subset of extras costs only lookups.
#[derive(Debug, Clone)]
pub struct DiversityTracker {
    dim: usize,
    base: Vec<SparseRow>,
    base_sum: f64,
    extra: Vec<SparseRow>,
    /// Sum of |rho| between extra row i and every base row.
    cross: Vec<f64>,
    /// `tri[i][j]` = |rho| between extra rows i and j < i.
    tri: Vec<Vec<f64>>,
}

impl DiversityTracker {
    pub fn new(base: &FeatureMatrix) -> Self {
        let dim = base.dim();
        let rows: Vec<SparseRow> = base.iter_rows().map(SparseRow::new).collect();
        let partial: Vec<f64> = (0..rows.len())
            .into_par_iter()
            .map(|i| rows[i + 1..].iter().map(|b| rows[i].abs_corr(b, dim)).sum())
            .collect();
        DiversityTracker {
            dim,
            base_sum: partial.iter().sum(),
            base: rows,
            extra: Vec::new(),
            cross: Vec::new(),
            tri: Vec::new(),
        }
    }

    pub fn base_len(&self) -> usize {
        self.base.len()
    }

    pub fn extra_len(&self) -> usize {
        self.extra.len()
    }

    /// Appends a row and returns its extra index.
    pub fn push(&mut self, row: &[f64]) -> usize {
        let r = SparseRow::new(row);
        let cross = self.base.par_iter().map(|b| r.abs_corr(b, self.dim)).collect::<Vec<f64>>().iter().sum();
        let tri = self.extra.iter().map(|e| r.abs_corr(e, self.dim)).collect();
        self.extra.push(r);
        self.cross.push(cross);
        self.tri.push(tri);
        self.extra.len() - 1
    }

    /// Drops extra rows from index `len` on.
    pub fn truncate(&mut self, len: usize) {
        self.extra.truncate(len);
        self.cross.truncate(len);
        self.tri.truncate(len);
    }

    /// Diversity of the base rows plus the extra rows in `subset` (sorted,
    /// deduplicated). Above `n_max` rows a seeded uniform subsample of
    /// `n_max` rows is used instead; the flag reports whether that happened.
    pub fn diversity_with(&self, subset: &[usize], n_max: usize, seed: u64) -> Result<(f64, bool), EvalError> {
        let n = self.base.len() + subset.len();
        if n < 2 {
            return Err(EvalError::TooFewRows { needed: 2, found: n });
        }
        if n > n_max.max(2) {
            return Ok((self.subsampled(subset, n_max.max(2), seed), true));
        }
        let mut sum = self.base_sum;
        for (a, &i) in subset.iter().enumerate() {
            sum += self.cross[i];
            sum += subset[..a].iter().map(|&j| self.tri[i][j]).sum::<f64>();
        }
        Ok((from_sum(sum, n), false))
    }

    fn subsampled(&self, subset: &[usize], n_max: usize, seed: u64) -> f64 {
        let all: Vec<&SparseRow> = self.base.iter().chain(subset.iter().map(|&i| &self.extra[i])).collect();
        let mut picked = sample(&mut rng_from(seed), all.len(), n_max).into_vec();
        picked.sort_unstable();
        let partial: Vec<f64> = (0..picked.len())
            .into_par_iter()
            .map(|a| picked[a + 1..].iter().map(|&b| all[picked[a]].abs_corr(all[b], self.dim)).sum())
            .collect();
        from_sum(partial.iter().sum(), n_max)
    }
}
