use serde::{Deserialize, Serialize};

use super::RunState;
use crate::eval::BagMetrics;
use crate::sampling::Strategy;

/// Outcome of one round on one fold. Metrics are `None` on rounds skipped
/// by the evaluation stride.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u32,
    pub candidates: usize,
    pub selected: usize,
    pub adopted: usize,
    pub non_unanimous: usize,
    pub skipped: usize,
    pub id_macro_f1: Option<f64>,
    pub ood_macro_f1: Option<f64>,
    pub diversity: Option<f64>,
    pub diversity_subsampled: bool,
    pub per_bag: Vec<BagMetrics>,
    pub wall_clock_ms: u64,
}

impl RoundReport {
    pub fn empty(round: u32) -> Self {
        RoundReport {
            round,
            candidates: 0,
            selected: 0,
            adopted: 0,
            non_unanimous: 0,
            skipped: 0,
            id_macro_f1: None,
            ood_macro_f1: None,
            diversity: None,
            diversity_subsampled: false,
            per_bag: Vec::new(),
            wall_clock_ms: 0,
        }
    }
}

/// One `reports.csv` row: metrics averaged over folds, counts summed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: u32,
    pub strategy: Strategy,
    pub id_macro_f1: Option<f64>,
    pub ood_macro_f1: Option<f64>,
    pub diversity: Option<f64>,
    pub adopted: usize,
    pub skipped: usize,
    pub candidates: usize,
    pub selected: usize,
    pub non_unanimous: usize,
    pub diversity_subsampled: bool,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

pub(crate) fn summarize(state: &RunState, strategy: Strategy) -> Vec<RoundSummary> {
    let rounds = state.folds.first().map_or(0, |f| f.reports.len());
    (0..rounds)
        .map(|i| {
            let reports: Vec<&RoundReport> = state.folds.iter().map(|f| &f.reports[i]).collect();
            let sum = |g: fn(&RoundReport) -> usize| reports.iter().map(|r| g(r)).sum();
            RoundSummary {
                round: reports[0].round,
                strategy,
                id_macro_f1: mean(reports.iter().map(|r| r.id_macro_f1)),
                ood_macro_f1: mean(reports.iter().map(|r| r.ood_macro_f1)),
                diversity: mean(reports.iter().map(|r| r.diversity)),
                adopted: sum(|r| r.adopted),
                skipped: sum(|r| r.skipped),
                candidates: sum(|r| r.candidates),
                selected: sum(|r| r.selected),
                non_unanimous: sum(|r| r.non_unanimous),
                diversity_subsampled: reports.iter().any(|r| r.diversity_subsampled),
            }
        })
        .collect()
}
