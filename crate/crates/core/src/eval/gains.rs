use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{pearson, BagMetrics, EvalError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Setting {
    #[serde(rename = "ID")]
    Id,
    #[serde(rename = "OOD")]
    Ood,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::Id => "ID",
            Setting::Ood => "OOD",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRecord {
    pub fold: usize,
    pub round: u32,
    pub bag: usize,
    pub setting: Setting,
    pub f1_gain: f64,
    pub diversity_gain: f64,
}

/// Per-bag metrics of one evaluated round.
#[derive(Debug, Clone, Copy)]
pub struct RoundBags<'a> {
    pub round: u32,
    pub bags: &'a [BagMetrics],
}

/// One record per (round, bag, setting), measured against the round-0 entry
/// of the same bag. Output is ordered by setting, round, then bag.
pub fn emit_gain_records(fold: usize, rounds: &[RoundBags<'_>]) -> Result<Vec<GainRecord>, EvalError> {
    let base = rounds
        .iter()
        .find(|r| r.round == 0)
        .ok_or(EvalError::MissingBaseline(fold))?;
    let mut out = Vec::new();
    for setting in [Setting::Id, Setting::Ood] {
        for r in rounds {
            for b in r.bags {
                let b0 = base.bags.iter().find(|x| x.bag == b.bag).ok_or(EvalError::MissingBaseline(fold))?;
                let f1 = |m: &BagMetrics| match setting {
                    Setting::Id => m.id_macro_f1,
                    Setting::Ood => m.ood_macro_f1,
                };
                out.push(GainRecord {
                    fold,
                    round: r.round,
                    bag: b.bag,
                    setting,
                    f1_gain: f1(b) - f1(b0),
                    diversity_gain: b.diversity - b0.diversity,
                });
            }
        }
    }
    Ok(out)
}

/// Pearson correlation of diversity gain against F1 gain over the records
/// of `setting` with round >= 1. `None` with fewer than two such records.
pub fn gain_correlation(records: &[GainRecord], setting: Setting) -> Option<f64> {
    let (d, f): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter(|r| r.setting == setting && r.round >= 1)
        .map(|r| (r.diversity_gain, r.f1_gain))
        .unzip();
    pearson(&d, &f).ok()
}

pub fn write_gains_csv(records: &[GainRecord], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bags(f1: f64, div: f64, k: usize) -> Vec<BagMetrics> {
        (0..k)
            .map(|bag| BagMetrics {
                bag,
                id_macro_f1: f1,
                ood_macro_f1: f1 + bag as f64 * 0.01,
                diversity: div + bag as f64 * 0.001,
            })
            .collect()
    }

    #[test]
    fn counts_and_baseline() {
        let r0 = bags(0.5, 0.2, 10);
        let r1 = bags(0.6, 0.3, 10);
        let r2 = bags(0.7, 0.3, 10);
        let rounds = [
            RoundBags { round: 0, bags: &r0 },
            RoundBags { round: 1, bags: &r1 },
            RoundBags { round: 2, bags: &r2 },
        ];
        let recs = emit_gain_records(0, &rounds).unwrap();
        let ood_late: Vec<_> = recs.iter().filter(|r| r.setting == Setting::Ood && r.round >= 1).collect();
        assert_eq!(ood_late.len(), 20);
        assert!(recs.iter().filter(|r| r.round == 0).all(|r| r.f1_gain == 0.0 && r.diversity_gain == 0.0));
        assert!(ood_late.iter().filter(|r| r.round == 1).all(|r| r.f1_gain != 0.0));
        assert!(gain_correlation(&recs, Setting::Ood).is_some());
    }

    #[test]
    fn missing_baseline() {
        let r1 = bags(0.6, 0.3, 2);
        assert_eq!(
            emit_gain_records(3, &[RoundBags { round: 1, bags: &r1 }]),
            Err(EvalError::MissingBaseline(3))
        );
    }

    #[test]
    fn csv_columns() {
        let r0 = bags(0.5, 0.2, 1);
        let recs = emit_gain_records(0, &[RoundBags { round: 0, bags: &r0 }]).unwrap();
        let mut buf = Vec::new();
        write_gains_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("fold,round,bag,setting,f1_gain,diversity_gain\n0,0,0,ID,0.0,0.0\n"), "{text}");
    }
}
