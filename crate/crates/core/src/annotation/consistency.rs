use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::cache::{AnnotationCache, CacheKey};
use super::prompt::{build_prompt, prompt_hash};
use super::AnnotationError;
use crate::catalog::{Item, RelationOracle};
use crate::labels::{map_to_rel3, Fbl9, Rel3};
use crate::pair::PairKey;
use crate::seed::{derive_seed, hash_str};

/// Source of one label draw for an ordered item pair.
pub trait Annotator: Send + Sync {
    /// Stable identifier, part of every cache key and labeled record.
    fn id(&self) -> &str;

    /// One independent draw. `draw_seed` distinguishes draws for annotators
    /// whose randomness is local.
    fn annotate(&self, x: &Item, y: &Item, draw_seed: u64) -> Result<Fbl9, AnnotationError>;
}

/// Annotator backed by a synthetic world's relation oracle.
pub struct OracleAnnotator {
    oracle: Arc<RelationOracle>,
    id: String,
}

impl OracleAnnotator {
    pub fn new(oracle: Arc<RelationOracle>) -> Self {
        let id = format!(
            "oracle-{:016x}",
            derive_seed(oracle.seed(), &[oracle.noise_rate().to_bits()])
        );
        OracleAnnotator { oracle, id }
    }
}

impl Annotator for OracleAnnotator {
    fn id(&self) -> &str {
        &self.id
    }

    fn annotate(&self, x: &Item, y: &Item, draw_seed: u64) -> Result<Fbl9, AnnotationError> {
        Ok(self.oracle.annotate(&x.id, &y.id, draw_seed)?)
    }
}

/// Level at which draws must agree for adoption.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unanimity {
    /// All nine-way labels identical.
    #[default]
    Fbl9,
    /// All mapped three-way labels identical (ablation); the first draw is
    /// kept as the adopted nine-way label.
    Rel3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyResult {
    pub pair: PairKey,
    pub x: String,
    pub y: String,
    pub annotator: String,
    pub draws: Vec<Fbl9>,
    pub adopted: Option<Fbl9>,
    pub from_cache: bool,
}

impl ConsistencyResult {
    pub fn adopted_rel3(&self) -> Option<Rel3> {
        self.adopted.map(map_to_rel3)
    }
}

fn unanimous(draws: &[Fbl9], level: Unanimity) -> Option<Fbl9> {
    let first = *draws.first()?;
    let agree = match level {
        Unanimity::Fbl9 => draws.iter().all(|&d| d == first),
        Unanimity::Rel3 => draws.iter().all(|&d| map_to_rel3(d) == map_to_rel3(first)),
    };
    agree.then_some(first)
}

/// Runs `draws` independent annotator calls on (x, y) and adopts the label
/// only when every draw agrees.
///
/// Draw seeds depend on the ordered pair, the draw index and `seed` only, so
/// replaying from the cache and recomputing give the same draws. Any draw
/// error aborts the pair; callers decide whether to skip it.
pub fn annotate_consistent(
    annotator: &dyn Annotator,
    x: &Item,
    y: &Item,
    draws: usize,
    seed: u64,
    unanimity: Unanimity,
    cache: Option<&AnnotationCache>,
) -> Result<ConsistencyResult, AnnotationError> {
    let pair = PairKey::new(&x.id, &y.id);
    let cache_key = CacheKey {
        pair: pair.clone(),
        prompt_hash: prompt_hash(&build_prompt(x, y)),
        annotator: annotator.id().to_owned(),
    };
    let cached = cache.and_then(|c| c.get(&cache_key)).filter(|d| d.len() == draws);
    let from_cache = cached.is_some();
    let labels = match cached {
        Some(d) => d,
        None => {
            let pair_seed = derive_seed(seed, &[hash_str(&x.id), hash_str(&y.id)]);
            let labels = (0..draws as u64)
                .map(|d| annotator.annotate(x, y, derive_seed(pair_seed, &[d])))
                .collect::<Result<Vec<_>, _>>()?;
            if let Some(c) = cache {
                c.put(cache_key, labels.clone())?;
            }
            labels
        }
    };
    Ok(ConsistencyResult {
        pair,
        x: x.id.clone(),
        y: y.id.clone(),
        annotator: annotator.id().to_owned(),
        adopted: unanimous(&labels, unanimity),
        draws: labels,
        from_cache,
    })
}
