//! Run-directory layout and (de)serialization.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::report::summarize;
use super::RunState;
use crate::classifier::Ensemble;
use crate::config::RunConfig;
use crate::eval::{emit_gain_records, gain_correlation, write_gains_csv, GainRecord, RoundBags, Setting};
use crate::fsutil::{sha256_hex, write_atomic};
use crate::sampling::Strategy;
use crate::seed::{stream_seed, Stream};
use crate::{Error, Result};

pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const MODELS_FILE: &str = "models.json";
pub const ADOPTED_FILE: &str = "adopted.csv";
pub const REPORTS_FILE: &str = "reports.csv";
pub const FOLD_REPORTS_FILE: &str = "fold_reports.csv";
pub const GAINS_FILE: &str = "gains.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format: u32,
    models_sha256: String,
    state: RunState,
}

pub(crate) fn round_dir(out: &Path, round: u32) -> PathBuf {
    out.join(format!("round_{round:04}"))
}

pub(crate) fn prepare_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_config(out: &Path, config: &RunConfig) -> Result<()> {
    write(&out.join(CONFIG_FILE), config.to_json().as_bytes())
}

pub(crate) fn read_config(out: &Path) -> Result<RunConfig> {
    let path = out.join(CONFIG_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Highest committed round in `out`, if any.
pub fn latest_round(out: &Path) -> Result<Option<u32>> {
    let entries = match fs::read_dir(out) {
        Ok(e) => e,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(out, e)),
    };
    let mut best = None;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(out, e))?;
        let name = entry.file_name();
        let Some(n) = name.to_str().and_then(|s| s.strip_prefix("round_")) else {
            continue;
        };
        if n.len() == 4 && entry.path().is_dir() {
            if let Ok(r) = n.parse::<u32>() {
                best = best.max(Some(r));
            }
        }
    }
    Ok(best)
}

#[derive(Serialize)]
struct AdoptedRow<'a> {
    fold: usize,
    item_x_id: &'a str,
    item_y_id: &'a str,
    label: &'a str,
    fbl9: String,
    annotator: &'a str,
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::io("<csv>", io::Error::other(e)))?;
    }
    w.into_inner().map_err(|e| Error::io("<csv>", io::Error::other(e.to_string())))
}

/// Writes `round_####/` through a temporary directory and a rename.
pub(crate) fn write_round(out: &Path, state: &RunState) -> Result<()> {
    let dir = round_dir(out, state.round);
    let tmp = out.join(format!(".round_{:04}.tmp", state.round));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;

    let models: Vec<&Ensemble> = state
        .folds
        .iter()
        .map(|f| f.ensemble.as_ref().expect("every fold has an ensemble at commit"))
        .collect();
    let models_json = serde_json::to_vec(&models).expect("models serialize");
    let checkpoint = Checkpoint {
        format: CHECKPOINT_FORMAT,
        models_sha256: sha256_hex(&models_json),
        state: state.clone(),
    };
    let adopted = state.folds.iter().flat_map(|f| {
        f.d_llm.iter().filter(|(_, r)| r.round == state.round).map(move |(_, r)| AdoptedRow {
            fold: f.fold,
            item_x_id: &r.x,
            item_y_id: &r.y,
            label: r.rel3.name(),
            fbl9: r.fbl9.to_string(),
            annotator: &r.annotator,
        })
    });
    write(&tmp.join(MODELS_FILE), &models_json)?;
    write(&tmp.join(ADOPTED_FILE), &csv_bytes(adopted)?)?;
    write(
        &tmp.join(CHECKPOINT_FILE),
        &serde_json::to_vec(&checkpoint).expect("checkpoint serializes"),
    )?;
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    fs::rename(&tmp, &dir).map_err(|e| Error::io(&dir, e))
}

pub(crate) fn read_checkpoint(out: &Path, round: u32) -> Result<RunState> {
    let dir = round_dir(out, round);
    let corrupt = |reason: String| Error::CorruptCheckpoint {
        path: dir.clone(),
        reason,
    };
    let read = |name: &str| fs::read(dir.join(name)).map_err(|e| corrupt(format!("{name}: {e}")));
    let cp: Checkpoint =
        serde_json::from_slice(&read(CHECKPOINT_FILE)?).map_err(|e| corrupt(format!("{CHECKPOINT_FILE}: {e}")))?;
    if cp.format != CHECKPOINT_FORMAT {
        return Err(corrupt(format!("unsupported checkpoint format {}", cp.format)));
    }
    if cp.state.round != round {
        return Err(corrupt(format!("checkpoint holds round {}", cp.state.round)));
    }
    let models_json = read(MODELS_FILE)?;
    if sha256_hex(&models_json) != cp.models_sha256 {
        return Err(corrupt(format!("{MODELS_FILE} does not match its recorded hash")));
    }
    let models: Vec<Ensemble> =
        serde_json::from_slice(&models_json).map_err(|e| corrupt(format!("{MODELS_FILE}: {e}")))?;
    let mut state = cp.state;
    if models.len() != state.folds.len() {
        return Err(corrupt("model count does not match fold count".into()));
    }
    for (f, m) in state.folds.iter_mut().zip(models) {
        f.ensemble = Some(m);
    }
    Ok(state)
}

#[derive(Serialize)]
struct FoldReportRow {
    fold: usize,
    round: u32,
    id_macro_f1: Option<f64>,
    ood_macro_f1: Option<f64>,
    diversity: Option<f64>,
    adopted: usize,
    skipped: usize,
    candidates: usize,
    selected: usize,
    non_unanimous: usize,
    l2_lambda: f64,
}

pub(crate) fn write_reports(out: &Path, state: &RunState, strategy: Strategy) -> Result<()> {
    write(&out.join(REPORTS_FILE), &csv_bytes(summarize(state, strategy))?)?;
    let rows = state.folds.iter().flat_map(|f| {
        f.reports.iter().map(move |r| FoldReportRow {
            fold: f.fold,
            round: r.round,
            id_macro_f1: r.id_macro_f1,
            ood_macro_f1: r.ood_macro_f1,
            diversity: r.diversity,
            adopted: r.adopted,
            skipped: r.skipped,
            candidates: r.candidates,
            selected: r.selected,
            non_unanimous: r.non_unanimous,
            l2_lambda: f.hyperparams.l2_lambda,
        })
    });
    write(&out.join(FOLD_REPORTS_FILE), &csv_bytes(rows)?)
}

#[derive(Serialize)]
struct Manifest<'a> {
    config_hash: &'a str,
    schema_id: String,
    master_seed: u64,
    seeds: BTreeMap<&'static str, u64>,
    inputs: &'a BTreeMap<String, String>,
    strategy: Strategy,
    rounds_completed: u32,
    folds: usize,
    annotator: &'a str,
    l2_lambda_per_fold: Vec<f64>,
    qbc_aggregation: &'static str,
    diversity_rows: &'static str,
    final_id_macro_f1: Option<f64>,
    final_ood_macro_f1: Option<f64>,
    gain_correlation: BTreeMap<String, Option<f64>>,
    diversity_subsampled: bool,
    reports_sha256: String,
    gains_sha256: String,
}

/// Gain records of every fold, over the evaluated rounds.
pub(crate) fn gain_records(state: &RunState) -> Result<Vec<GainRecord>> {
    let mut records = Vec::new();
    for f in &state.folds {
        let rounds: Vec<RoundBags<'_>> = f
            .reports
            .iter()
            .filter(|r| !r.per_bag.is_empty())
            .map(|r| RoundBags {
                round: r.round,
                bags: &r.per_bag,
            })
            .collect();
        records.extend(emit_gain_records(f.fold, &rounds)?);
    }
    Ok(records)
}

/// Writes `gains.csv` and `manifest.json`. Neither holds timestamps or
/// absolute paths, so identical runs produce identical bytes.
pub(crate) fn write_final(
    out: &Path,
    state: &RunState,
    config: &RunConfig,
    annotator: &str,
    inputs: &BTreeMap<String, String>,
) -> Result<()> {
    let records = gain_records(state)?;
    let mut gains = Vec::new();
    write_gains_csv(&records, &mut gains).map_err(|e| Error::io(GAINS_FILE, io::Error::other(e)))?;
    write(&out.join(GAINS_FILE), &gains)?;

    let summaries = summarize(state, config.sampling.strategy);
    let last = summaries.last();
    let master = config.run.seed;
    let seeds = [
        ("candidates", Stream::Candidates),
        ("random_scores", Stream::RandomScores),
        ("annotation", Stream::Annotation),
        ("bags", Stream::Bags),
        ("folds", Stream::Folds),
        ("diversity_subsample", Stream::DiversitySubsample),
    ]
    .into_iter()
    .map(|(n, s)| (n, stream_seed(master, s, &[])))
    .collect();
    let mut correlation = BTreeMap::new();
    for s in [Setting::Id, Setting::Ood] {
        let r = gain_correlation(&records, s);
        log::info!("diversity/F1 gain correlation ({s}): {r:?}");
        correlation.insert(s.to_string(), r);
    }
    let reports = fs::read(out.join(REPORTS_FILE)).map_err(|e| Error::io(out.join(REPORTS_FILE), e))?;
    let manifest = Manifest {
        config_hash: &state.config_hash,
        schema_id: state.schema.to_string(),
        master_seed: master,
        seeds,
        inputs,
        strategy: config.sampling.strategy,
        rounds_completed: state.round,
        folds: state.folds.len(),
        annotator,
        l2_lambda_per_fold: state.folds.iter().map(|f| f.hyperparams.l2_lambda).collect(),
        qbc_aggregation: "mean over classes of the population variance across members",
        diversity_rows: "human training rows plus the union of bag members, deduplicated by pair key",
        final_id_macro_f1: last.and_then(|s| s.id_macro_f1),
        final_ood_macro_f1: last.and_then(|s| s.ood_macro_f1),
        gain_correlation: correlation,
        diversity_subsampled: summaries.iter().any(|s| s.diversity_subsampled),
        reports_sha256: sha256_hex(&reports),
        gains_sha256: sha256_hex(&gains),
    };
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    write(&out.join(MANIFEST_FILE), &json)
}
