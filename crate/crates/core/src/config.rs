//! Run configuration, read from TOML. Every section and key is optional.
//!
//! ```toml
//! [run]
//! rounds = 20
//! seed = 7
//!
//! [sampling]
//! strategy = "margin"
//!
//! [data]
//! kind = "world_dir"
//! path = "world/"
//!
//! [annotator]
//! kind = "oracle"
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::annotation::{load_human_labels, HumanLabeledSet, LabelSource, LlmConfig, Unanimity};
use crate::catalog::{generate_synthetic_world, load_catalog, ItemCatalog, RelationOracle, SyntheticWorld, WorldConfig};
use crate::classifier::DEFAULT_L2_GRID;
use crate::eval::DEFAULT_DIVERSITY_N_MAX;
use crate::features::FeaturizerConfig;
use crate::fsutil::sha256_hex;
use crate::sampling::Strategy;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub rounds: u32,
    /// Master seed; every component seed is derived from it.
    pub seed: u64,
    pub ensemble_size: usize,
    pub draws: usize,
    pub outer_folds: usize,
    /// Run only the first `n` outer folds.
    pub fold_limit: Option<usize>,
    pub retune_each_round: bool,
    /// Evaluate every `eval_stride` rounds (round 0 and the last round are
    /// always evaluated).
    pub eval_stride: u32,
    pub unanimity: Unanimity,
    pub diversity_n_max: usize,
    /// Worker threads for scoring, training and annotation; 0 = all cores.
    pub parallelism: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            rounds: 20,
            seed: 0,
            ensemble_size: 10,
            draws: 3,
            outer_folds: 5,
            fold_limit: None,
            retune_each_round: false,
            eval_stride: 1,
            unanimity: Unanimity::Fbl9,
            diversity_n_max: DEFAULT_DIVERSITY_N_MAX,
            parallelism: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub strategy: Strategy,
    pub per_category_queries: usize,
    pub per_query_candidates: usize,
    /// Overrides the candidate-sampling seed derived from the master seed.
    pub seed: Option<u64>,
}

impl Default for SamplingSection {
    fn default() -> Self {
        SamplingSection {
            strategy: Strategy::Margin,
            per_category_queries: 10,
            per_query_candidates: 100,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub l2_grid: Vec<f64>,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        let hp = crate::classifier::Hyperparams::default();
        ClassifierSection {
            l2_grid: DEFAULT_L2_GRID.to_vec(),
            max_iters: hp.max_iters,
            tol: hp.tol,
        }
    }
}

/// Where items and human labels come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// A directory written by `genworld`.
    WorldDir { path: PathBuf },
    /// Plain files. An oracle file is needed only for the oracle annotator.
    Files {
        items: PathBuf,
        id_labels: PathBuf,
        ood_labels: PathBuf,
        #[serde(default)]
        oracle: Option<PathBuf>,
    },
    /// A world generated in memory.
    Synthetic {
        seed: u64,
        #[serde(default)]
        world: WorldConfig,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            seed: 7,
            world: WorldConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotatorKind {
    #[default]
    Oracle,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotatorSection {
    pub kind: AnnotatorKind,
    /// Replaces the oracle's own noise rate.
    pub noise_rate: Option<f64>,
    pub llm: LlmConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub sampling: SamplingSection,
    pub classifier: ClassifierSection,
    pub features: FeaturizerConfig,
    pub data: DataSource,
    pub annotator: AnnotatorSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML file; relative data paths are resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(dir) = path.parent() {
            cfg.data.resolve_relative(dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.run.ensemble_size == 0 {
            return bad("run.ensemble_size must be at least 1".into());
        }
        if self.run.draws == 0 {
            return bad("run.draws must be at least 1".into());
        }
        if self.run.outer_folds < 2 {
            return bad("run.outer_folds must be at least 2".into());
        }
        if self.run.fold_limit.is_some_and(|n| n == 0 || n > self.run.outer_folds) {
            return bad("run.fold_limit must be between 1 and run.outer_folds".into());
        }
        if self.run.eval_stride == 0 {
            return bad("run.eval_stride must be at least 1".into());
        }
        if self.run.diversity_n_max < 2 {
            return bad("run.diversity_n_max must be at least 2".into());
        }
        if self.classifier.l2_grid.is_empty() || self.classifier.l2_grid.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return bad("classifier.l2_grid must hold positive values".into());
        }
        if !(self.classifier.tol > 0.0) {
            return bad("classifier.tol must be positive".into());
        }
        if self.annotator.noise_rate.is_some_and(|p| !(0.0..=1.0).contains(&p)) {
            return bad("annotator.noise_rate must lie in [0, 1]".into());
        }
        self.features.validate().map_err(Error::Config)?;
        if let DataSource::Synthetic { world, .. } = &self.data {
            world.validate()?;
        }
        Ok(())
    }

    pub fn folds_to_run(&self) -> usize {
        self.run.fold_limit.unwrap_or(self.run.outer_folds)
    }

    /// Canonical JSON of the resolved configuration.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }
}

/// Reads a world configuration from a TOML file of top-level keys.
pub fn load_world_config(path: &Path) -> Result<WorldConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg: WorldConfig = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

impl DataSource {
    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match self {
            DataSource::WorldDir { path } => fix(path),
            DataSource::Files {
                items,
                id_labels,
                ood_labels,
                oracle,
            } => {
                fix(items);
                fix(id_labels);
                fix(ood_labels);
                if let Some(o) = oracle {
                    fix(o);
                }
            }
            DataSource::Synthetic { .. } => {}
        }
    }

    pub fn load(&self) -> Result<LoadedData> {
        match self {
            DataSource::WorldDir { path } => {
                let world = SyntheticWorld::load_dir(path)?;
                Ok(LoadedData::from_world(world))
            }
            DataSource::Synthetic { seed, world } => Ok(LoadedData::from_world(generate_synthetic_world(world, *seed)?)),
            DataSource::Files {
                items,
                id_labels,
                ood_labels,
                oracle,
            } => {
                let mut input_hashes = BTreeMap::new();
                let mut hash = |name: &str, p: &Path| -> Result<()> {
                    let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
                    input_hashes.insert(name.to_string(), sha256_hex(&bytes));
                    Ok(())
                };
                hash("items", items)?;
                hash("id_labels", id_labels)?;
                hash("ood_labels", ood_labels)?;
                let catalog = load_catalog(items)?;
                let id_set = load_human_labels(id_labels, &catalog, LabelSource::IdDataset)?;
                let ood_set = load_human_labels(ood_labels, &catalog, LabelSource::OodDataset)?;
                let oracle = match oracle {
                    Some(p) => {
                        hash("oracle", p)?;
                        let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
                        Some(serde_json::from_slice(&bytes).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?)
                    }
                    None => None,
                };
                Ok(LoadedData {
                    catalog,
                    id_set,
                    ood_set,
                    oracle,
                    input_hashes,
                })
            }
        }
    }
}

/// Items, human labels, the optional oracle, and content hashes of inputs.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub catalog: ItemCatalog,
    pub id_set: HumanLabeledSet,
    pub ood_set: HumanLabeledSet,
    pub oracle: Option<RelationOracle>,
    pub input_hashes: BTreeMap<String, String>,
}

impl LoadedData {
    pub fn from_world(world: SyntheticWorld) -> Self {
        let input_hashes = world
            .to_files()
            .into_iter()
            .map(|(name, bytes)| (name.to_string(), sha256_hex(&bytes)))
            .collect();
        LoadedData {
            catalog: world.catalog,
            id_set: world.id_set,
            ood_set: world.ood_set,
            oracle: Some(world.oracle),
            input_hashes,
        }
    }
}
