//! The resumable round loop.
//!
//! Each outer fold of the ID human set runs its own loop: the fold's
//! training portion is the human set, the held-out fold is the ID test set,
//! and the whole OOD human set is the OOD test set. Rounds advance all folds
//! together and are committed to the run directory as a unit.

mod report;
mod store;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use report::{RoundReport, RoundSummary};
pub use store::{latest_round, CHECKPOINT_FILE, CONFIG_FILE, MANIFEST_FILE, MODELS_FILE, REPORTS_FILE};

use crate::annotation::{
    annotate_consistent, AnnotationCache, AnnotationLog, Annotator, HumanLabeledSet, LlmAnnotator, LlmClient,
    LlmLabeledSet, LlmRecord, OracleAnnotator,
};
use crate::catalog::ItemCatalog;
use crate::classifier::{train_ensemble, tune_hyperparams, Ensemble, Hyperparams, LabeledRows};
use crate::config::{AnnotatorKind, LoadedData, RunConfig};
use crate::eval::{evaluate_ensemble, macro_f1, make_fold_plan, predict, BagMetrics, DiversityTracker, EvalError, FoldPlan, GainRecord};
use crate::features::{Featurizer, SchemaId};
use crate::pair::PairKey;
use crate::sampling::{sample_candidates, score_margin, score_qbc, score_random, select_per_category, CandidateBatch, Strategy};
use crate::seed::{derive_seed, stream_seed, Stream};
use crate::{Error, Result};

pub const CACHE_FILE: &str = "annotation_cache.jsonl";
pub const ANNOTATION_LOG_FILE: &str = "annotation_log.jsonl";
const SCORE_CHUNK: usize = 4096;

/// Persistent state of one outer fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldState {
    pub fold: usize,
    pub hyperparams: Hyperparams,
    #[serde(skip)]
    pub ensemble: Option<Ensemble>,
    pub d_llm: LlmLabeledSet,
    /// Every pair that may not be drawn again: human-labeled pairs and
    /// every pair ever selected for annotation.
    pub excluded: BTreeSet<PairKey>,
    pub reports: Vec<RoundReport>,
}

/// Everything needed to continue a run. Component seeds are derived from
/// the master seed and the (fold, round) counters, so no generator state is
/// stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub round: u32,
    pub config_hash: String,
    pub schema: SchemaId,
    pub folds: Vec<FoldState>,
}

/// Derived, rebuildable per-fold data.
struct FoldRuntime {
    train: LabeledRows,
    inner_train: LabeledRows,
    inner_val: LabeledRows,
    id_test: LabeledRows,
    /// Annotated rows in (round, key) order.
    llm_rows: LabeledRows,
    llm_index: HashMap<PairKey, usize>,
    tracker: DiversityTracker,
}

pub struct Engine {
    config: RunConfig,
    catalog: ItemCatalog,
    featurizer: Featurizer,
    annotator: Arc<dyn Annotator>,
    cache: AnnotationCache,
    pool: rayon::ThreadPool,
    out: PathBuf,
    input_hashes: std::collections::BTreeMap<String, String>,
    ood_test: LabeledRows,
    state: RunState,
    runtime: Vec<FoldRuntime>,
}

/// Builds the annotator named in the config. LLM requests are logged to
/// `log_dir` when given.
pub fn build_annotator(config: &RunConfig, data: &LoadedData, log_dir: Option<&Path>) -> Result<Arc<dyn Annotator>> {
    match config.annotator.kind {
        AnnotatorKind::Oracle => {
            let mut oracle = data
                .oracle
                .clone()
                .ok_or_else(|| Error::Config("the oracle annotator needs a data source with an oracle".into()))?;
            if let Some(p) = config.annotator.noise_rate {
                oracle = oracle.with_noise_rate(p)?;
            }
            Ok(Arc::new(OracleAnnotator::new(Arc::new(oracle))))
        }
        AnnotatorKind::Llm => {
            let log = match log_dir {
                Some(d) => Some(Arc::new(AnnotationLog::open(&d.join(ANNOTATION_LOG_FILE))?)),
                None => None,
            };
            Ok(Arc::new(LlmAnnotator::new(LlmClient::new(config.annotator.llm.clone(), log))))
        }
    }
}

fn featurize_set(featurizer: &Featurizer, catalog: &ItemCatalog, set: &HumanLabeledSet, idx: &[usize]) -> Result<LabeledRows> {
    let mut rows = LabeledRows::empty(featurizer.dim(), featurizer.schema());
    for &i in idx {
        let r = &set.records()[i];
        let fv = featurizer.featurize_pair(catalog.require(&r.x)?, catalog.require(&r.y)?);
        rows.push(r.key(), &fv, r.label);
    }
    Ok(rows)
}

impl Engine {
    /// Loads the configured data, builds the configured annotator and starts
    /// a fresh run in `out`.
    pub fn start(config: RunConfig, out: &Path) -> Result<Engine> {
        config.validate()?;
        let data = config.data.load()?;
        store::prepare_dir(out)?;
        let annotator = build_annotator(&config, &data, Some(out))?;
        Self::start_with(config, data, annotator, out)
    }

    /// Starts a fresh run with explicit data and annotator: writes the
    /// resolved config, trains and evaluates the round-0 ensembles and
    /// commits round 0.
    pub fn start_with(config: RunConfig, data: LoadedData, annotator: Arc<dyn Annotator>, out: &Path) -> Result<Engine> {
        config.validate()?;
        store::prepare_dir(out)?;
        if latest_round(out)?.is_some() {
            return Err(Error::Config(format!(
                "{} already holds a run; resume it or choose another directory",
                out.display()
            )));
        }
        store::write_config(out, &config)?;
        let mut engine = Self::assemble(config, data, annotator, out, None)?;
        engine.install_round_zero()?;
        engine.commit()?;
        Ok(engine)
    }

    /// Reopens the run in `out` at its latest committed round, using the
    /// annotator named in its config.
    pub fn resume(out: &Path) -> Result<Engine> {
        let config = store::read_config(out)?;
        let data = config.data.load()?;
        let annotator = build_annotator(&config, &data, Some(out))?;
        Self::resume_with(out, data, annotator)
    }

    pub fn resume_with(out: &Path, data: LoadedData, annotator: Arc<dyn Annotator>) -> Result<Engine> {
        let config = store::read_config(out)?;
        let round = latest_round(out)?.ok_or_else(|| Error::MissingCheckpoint(out.to_path_buf()))?;
        let state = store::read_checkpoint(out, round)?;
        if state.config_hash != config.hash() {
            return Err(Error::CorruptCheckpoint {
                path: store::round_dir(out, round),
                reason: "config hash does not match config.json".into(),
            });
        }
        let engine = Self::assemble(config, data, annotator, out, Some(state))?;
        // Reports may lag the checkpoint if the process died between the two writes.
        engine.write_reports()?;
        Ok(engine)
    }

    fn assemble(
        config: RunConfig,
        data: LoadedData,
        annotator: Arc<dyn Annotator>,
        out: &Path,
        state: Option<RunState>,
    ) -> Result<Engine> {
        let featurizer = Featurizer::new(config.features.clone(), &data.catalog).map_err(Error::Config)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.run.parallelism)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        let cache = AnnotationCache::open(&out.join(CACHE_FILE))?;
        let master = config.run.seed;
        let id_labels = data.id_set.labels();
        let plan: FoldPlan = make_fold_plan(&id_labels, config.run.outer_folds, stream_seed(master, Stream::Folds, &[]))?;
        let all_ood: Vec<usize> = (0..data.ood_set.len()).collect();
        let ood_test = featurize_set(&featurizer, &data.catalog, &data.ood_set, &all_ood)?;

        let n_folds = config.folds_to_run();
        let mut runtime = Vec::with_capacity(n_folds);
        for f in 0..n_folds {
            let train_idx = plan.train_indices(f);
            let train = featurize_set(&featurizer, &data.catalog, &data.id_set, &train_idx)?;
            let inner = &plan.inner[f];
            runtime.push(FoldRuntime {
                tracker: pool.install(|| DiversityTracker::new(&train.features)),
                inner_train: featurize_set(&featurizer, &data.catalog, &data.id_set, &inner.train)?,
                inner_val: featurize_set(&featurizer, &data.catalog, &data.id_set, &inner.val)?,
                id_test: featurize_set(&featurizer, &data.catalog, &data.id_set, plan.test_indices(f))?,
                train,
                llm_rows: LabeledRows::empty(featurizer.dim(), featurizer.schema()),
                llm_index: HashMap::new(),
            });
        }

        let state = match state {
            Some(s) => {
                if s.folds.len() != n_folds || s.schema != featurizer.schema() {
                    return Err(Error::CorruptCheckpoint {
                        path: out.to_path_buf(),
                        reason: "checkpoint does not match the configured folds or feature schema".into(),
                    });
                }
                s
            }
            None => {
                let mut excluded: BTreeSet<PairKey> = data.id_set.keys().collect();
                excluded.extend(data.ood_set.keys());
                RunState {
                    round: 0,
                    config_hash: config.hash(),
                    schema: featurizer.schema(),
                    folds: (0..n_folds)
                        .map(|fold| FoldState {
                            fold,
                            hyperparams: Hyperparams::default(),
                            ensemble: None,
                            d_llm: LlmLabeledSet::new(),
                            excluded: excluded.clone(),
                            reports: Vec::new(),
                        })
                        .collect(),
                }
            }
        };

        let mut engine = Engine {
            config,
            catalog: data.catalog,
            featurizer,
            annotator,
            cache,
            pool,
            out: out.to_path_buf(),
            input_hashes: data.input_hashes,
            ood_test,
            state,
            runtime,
        };
        engine.rebuild_llm_rows()?;
        Ok(engine)
    }

    fn rebuild_llm_rows(&mut self) -> Result<()> {
        for f in 0..self.runtime.len() {
            let mut records: Vec<&LlmRecord> = self.state.folds[f].d_llm.iter().map(|(_, r)| r).collect();
            records.sort_by(|a, b| (a.round, PairKey::new(&a.x, &a.y)).cmp(&(b.round, PairKey::new(&b.x, &b.y))));
            let records: Vec<LlmRecord> = records.into_iter().cloned().collect();
            self.append_llm_rows(f, &records)?;
        }
        Ok(())
    }

    fn append_llm_rows(&mut self, f: usize, records: &[LlmRecord]) -> Result<()> {
        let rt = &mut self.runtime[f];
        for r in records {
            let fv = self
                .featurizer
                .featurize_pair(self.catalog.require(&r.x)?, self.catalog.require(&r.y)?);
            let key = PairKey::new(&r.x, &r.y);
            rt.llm_index.insert(key.clone(), rt.llm_rows.len());
            rt.llm_rows.push(key, &fv, r.rel3);
            self.pool.install(|| rt.tracker.push(&fv.values));
        }
        Ok(())
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn round(&self) -> u32 {
        self.state.round
    }

    pub fn is_finished(&self) -> bool {
        self.state.round >= self.config.run.rounds
    }

    /// Fold-averaged report rows, one per committed round.
    pub fn summaries(&self) -> Vec<RoundSummary> {
        report::summarize(&self.state, self.config.sampling.strategy)
    }

    /// Gain records over every evaluated round so far.
    pub fn gain_records(&self) -> Result<Vec<GainRecord>> {
        store::gain_records(&self.state)
    }

    /// Macro-F1 of each fold's current ensemble on an external labeled set.
    /// Pairs the fold trained on are a leakage error.
    pub fn evaluate_external(&self, set: &HumanLabeledSet) -> Result<Vec<f64>> {
        let idx: Vec<usize> = (0..set.len()).collect();
        let rows = featurize_set(&self.featurizer, &self.catalog, set, &idx)?;
        let mut out = Vec::with_capacity(self.runtime.len());
        for (rt, fs) in self.runtime.iter().zip(&self.state.folds) {
            let mut training: HashSet<PairKey> = rt.train.keys.iter().cloned().collect();
            training.extend(rt.llm_rows.keys.iter().cloned());
            if let Some(k) = rows.keys.iter().find(|k| training.contains(k)) {
                return Err(EvalError::Leakage(k.clone()).into());
            }
            let ensemble = fs.ensemble.as_ref().expect("committed folds have ensembles");
            let (pred, _) = predict(ensemble, &rows)?;
            out.push(macro_f1(&pred, &rows.labels)?);
        }
        Ok(out)
    }

    fn hp_base(&self) -> Hyperparams {
        Hyperparams {
            max_iters: self.config.classifier.max_iters,
            tol: self.config.classifier.tol,
            ..Hyperparams::default()
        }
    }

    fn install_round_zero(&mut self) -> Result<()> {
        let started = Instant::now();
        for f in 0..self.runtime.len() {
            let rt = &self.runtime[f];
            let grid = &self.config.classifier.l2_grid;
            let base = self.hp_base();
            let seed = stream_seed(self.config.run.seed, Stream::Bags, &[f as u64, 0]);
            let k = self.config.run.ensemble_size;
            let (hp, ensemble) = self.pool.install(|| -> Result<_> {
                let hp = tune_hyperparams(&rt.inner_train, &rt.inner_val, grid, &base)?;
                let e = train_ensemble(&rt.train, &rt.llm_rows, k, seed, &hp)?;
                Ok((hp, e))
            })?;
            let mut report = RoundReport::empty(0);
            self.evaluate_into(f, &ensemble, 0, &mut report)?;
            report.wall_clock_ms = started.elapsed().as_millis() as u64;
            let fs = &mut self.state.folds[f];
            fs.hyperparams = hp;
            fs.ensemble = Some(ensemble);
            fs.reports.push(report);
        }
        Ok(())
    }

    fn should_evaluate(&self, round: u32) -> bool {
        round == 0 || round % self.config.run.eval_stride == 0 || round == self.config.run.rounds
    }

    fn evaluate_into(&self, f: usize, ensemble: &Ensemble, round: u32, report: &mut RoundReport) -> Result<()> {
        if !self.should_evaluate(round) {
            return Ok(());
        }
        let rt = &self.runtime[f];
        let mut training: HashSet<PairKey> = rt.train.keys.iter().cloned().collect();
        training.extend(rt.llm_rows.keys.iter().cloned());
        let outcome = self
            .pool
            .install(|| evaluate_ensemble(ensemble, &rt.id_test, &self.ood_test, &training))?;

        let n_max = self.config.run.diversity_n_max;
        let div_seed = |bag: u64| stream_seed(self.config.run.seed, Stream::DiversitySubsample, &[f as u64, u64::from(round), bag]);
        let members = |keys: &[PairKey]| -> Vec<usize> {
            let mut idx: Vec<usize> = keys.iter().map(|k| rt.llm_index[k]).collect();
            idx.sort_unstable();
            idx.dedup();
            idx
        };
        let union: Vec<PairKey> = ensemble.bag_members.iter().flatten().cloned().collect();
        let (diversity, mut subsampled) = rt.tracker.diversity_with(&members(&union), n_max, div_seed(u64::MAX))?;
        let mut per_bag = Vec::with_capacity(ensemble.len());
        for (bag, keys) in ensemble.bag_members.iter().enumerate() {
            let (d, s) = rt.tracker.diversity_with(&members(keys), n_max, div_seed(bag as u64))?;
            subsampled |= s;
            let (id, ood) = outcome.per_bag[bag];
            per_bag.push(BagMetrics {
                bag,
                id_macro_f1: id,
                ood_macro_f1: ood,
                diversity: d,
            });
        }
        report.id_macro_f1 = Some(outcome.id_macro_f1);
        report.ood_macro_f1 = Some(outcome.ood_macro_f1);
        report.diversity = Some(diversity);
        report.diversity_subsampled = subsampled;
        report.per_bag = per_bag;
        Ok(())
    }

    fn score(&self, f: usize, batch: &CandidateBatch, round: u32) -> Result<Vec<f64>> {
        let strategy = self.config.sampling.strategy;
        if strategy == Strategy::Random {
            let seed = stream_seed(self.config.run.seed, Stream::RandomScores, &[f as u64, u64::from(round)]);
            return Ok(score_random(batch, seed));
        }
        let ensemble = self.state.folds[f].ensemble.as_ref().expect("ensemble trained before scoring");
        let mut scores = Vec::with_capacity(batch.len());
        for chunk in batch.pairs.chunks(SCORE_CHUNK) {
            let pairs = chunk
                .iter()
                .map(|p| Ok((self.catalog.require(&p.query)?, self.catalog.require(&p.candidate)?)))
                .collect::<Result<Vec<_>>>()?;
            let m = self.featurizer.featurize_batch(&pairs);
            let s = match strategy {
                Strategy::Qbc => score_qbc(ensemble, &m)?,
                _ => score_margin(ensemble, &m)?,
            };
            scores.extend(s);
        }
        Ok(scores)
    }

    fn fold_round(&mut self, f: usize, round: u32) -> Result<()> {
        let started = Instant::now();
        let cfg = &self.config;
        let master = cfg.run.seed;
        let excluded: HashSet<PairKey> = self.state.folds[f].excluded.iter().cloned().collect();
        let cand_seed = cfg.sampling.seed.unwrap_or_else(|| stream_seed(master, Stream::Candidates, &[]));
        let batch = sample_candidates(
            &self.catalog,
            &excluded,
            cfg.sampling.per_category_queries,
            cfg.sampling.per_query_candidates,
            derive_seed(cand_seed, &[f as u64]),
            round,
        );
        let scores = self.pool.install(|| self.score(f, &batch, round))?;
        let selected = select_per_category(&batch, &scores, cfg.sampling.strategy)?;

        let ann_seed = stream_seed(master, Stream::Annotation, &[]);
        let results = self.pool.install(|| {
            selected
                .pairs
                .par_iter()
                .map(|sp| {
                    let x = self.catalog.require(&sp.pair.query)?;
                    let y = self.catalog.require(&sp.pair.candidate)?;
                    Ok(annotate_consistent(
                        self.annotator.as_ref(),
                        x,
                        y,
                        cfg.run.draws,
                        ann_seed,
                        cfg.run.unanimity,
                        Some(&self.cache),
                    ))
                })
                .collect::<Result<Vec<_>>>()
        })?;

        let mut report = RoundReport::empty(round);
        report.candidates = batch.len();
        report.selected = selected.pairs.len();
        let mut adopted = Vec::new();
        for (sp, res) in selected.pairs.iter().zip(results) {
            match res {
                Ok(r) => match r.adopted {
                    Some(label) => adopted.push(LlmRecord {
                        x: r.x,
                        y: r.y,
                        fbl9: label,
                        rel3: crate::labels::map_to_rel3(label),
                        round,
                        annotator: r.annotator,
                    }),
                    None => report.non_unanimous += 1,
                },
                Err(e) if e.is_skippable() => {
                    log::warn!("round {round} fold {f}: skipping {}: {e}", sp.pair.key());
                    report.skipped += 1;
                }
                Err(e) => return Err(e.into()),
            }
        }
        report.adopted = adopted.len();
        adopted.sort_by_key(|r| PairKey::new(&r.x, &r.y));

        {
            let fs = &mut self.state.folds[f];
            fs.excluded.extend(selected.pairs.iter().map(|sp| sp.pair.key()));
            for r in &adopted {
                fs.d_llm.insert(r.clone())?;
            }
        }
        self.append_llm_rows(f, &adopted)?;

        let rt = &self.runtime[f];
        let mut hp = self.state.folds[f].hyperparams;
        let grid = &self.config.classifier.l2_grid;
        let k = self.config.run.ensemble_size;
        let bag_seed = stream_seed(master, Stream::Bags, &[f as u64, u64::from(round)]);
        let retune = self.config.run.retune_each_round;
        let ensemble = self.pool.install(|| -> Result<_> {
            if retune {
                hp = tune_hyperparams(&rt.inner_train.concat(&rt.llm_rows), &rt.inner_val, grid, &hp)?;
            }
            Ok(train_ensemble(&rt.train, &rt.llm_rows, k, bag_seed, &hp)?)
        })?;
        self.evaluate_into(f, &ensemble, round, &mut report)?;
        report.wall_clock_ms = started.elapsed().as_millis() as u64;

        let fs = &mut self.state.folds[f];
        fs.hyperparams = hp;
        fs.ensemble = Some(ensemble);
        fs.reports.push(report);
        Ok(())
    }

    /// Runs one round on every fold and commits it. On error the in-memory
    /// state is rolled back and nothing is written.
    pub fn run_round(&mut self) -> Result<&RunState> {
        let round = self.state.round + 1;
        let snapshot = self.state.clone();
        let lens: Vec<usize> = self.runtime.iter().map(|rt| rt.llm_rows.len()).collect();
        let mut result = (0..self.runtime.len()).try_for_each(|f| self.fold_round(f, round));
        if result.is_ok() {
            self.state.round = round;
            result = self.commit();
        }
        if let Err(e) = result {
            self.state = snapshot;
            for (rt, &n) in self.runtime.iter_mut().zip(&lens) {
                for k in rt.llm_rows.keys.drain(n..) {
                    rt.llm_index.remove(&k);
                }
                rt.llm_rows.truncate(n);
                rt.tracker.truncate(n);
            }
            return Err(e);
        }
        log::info!("round {round} committed");
        Ok(&self.state)
    }

    /// Runs the remaining rounds and writes the final artifacts.
    pub fn run_to_end(&mut self) -> Result<Vec<RoundSummary>> {
        while !self.is_finished() {
            self.run_round()?;
        }
        Ok(self.summaries())
    }

    fn commit(&self) -> Result<()> {
        store::write_round(&self.out, &self.state)?;
        self.write_reports()
    }

    fn write_reports(&self) -> Result<()> {
        store::write_reports(&self.out, &self.state, self.config.sampling.strategy)?;
        if self.is_finished() {
            store::write_final(
                &self.out,
                &self.state,
                &self.config,
                self.annotator.id(),
                &self.input_hashes,
            )?;
        }
        Ok(())
    }
}

/// Starts a run of `config` in `out` and runs it to the end.
pub fn run(config: RunConfig, out: &Path) -> Result<Vec<RoundSummary>> {
    Engine::start(config, out)?.run_to_end()
}
