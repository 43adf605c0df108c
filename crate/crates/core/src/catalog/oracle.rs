use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::CatalogError;
use crate::labels::Fbl9;
use crate::seed::{derive_seed, hash_str, rng_from};

/// A directed complement relation between two function tags.
///
/// `label` describes the ordered pair (`from`, `to`); the reverse direction
/// uses [`Fbl9::swapped`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplementEdge {
    pub from: u32,
    pub to: u32,
    pub label: Fbl9,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleFile {
    seed: u64,
    noise_rate: f64,
    function_tags: BTreeMap<String, u32>,
    complement_edges: Vec<ComplementEdge>,
    vague_pairs: Vec<(u32, u32)>,
}

/// Ground-truth relation labels for a synthetic world.
///
/// Rules, evaluated in order for an ordered pair (x, y):
/// same function tag gives A; a complement edge between the tags gives its
/// subtype (swapped when stored in the opposite direction); a vague tag pair
/// gives E; anything else is D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OracleFile", into = "OracleFile")]
pub struct RelationOracle {
    seed: u64,
    noise_rate: f64,
    function_tags: BTreeMap<String, u32>,
    complement_edges: Vec<ComplementEdge>,
    vague_pairs: Vec<(u32, u32)>,
    edge_lookup: HashMap<(u32, u32), Fbl9>,
}

impl TryFrom<OracleFile> for RelationOracle {
    type Error = CatalogError;

    fn try_from(f: OracleFile) -> Result<Self, Self::Error> {
        RelationOracle::new(f.seed, f.noise_rate, f.function_tags, f.complement_edges, f.vague_pairs)
    }
}

impl From<RelationOracle> for OracleFile {
    fn from(o: RelationOracle) -> Self {
        OracleFile {
            seed: o.seed,
            noise_rate: o.noise_rate,
            function_tags: o.function_tags,
            complement_edges: o.complement_edges,
            vague_pairs: o.vague_pairs,
        }
    }
}

impl RelationOracle {
    pub fn new(
        seed: u64,
        noise_rate: f64,
        function_tags: BTreeMap<String, u32>,
        complement_edges: Vec<ComplementEdge>,
        vague_pairs: Vec<(u32, u32)>,
    ) -> Result<Self, CatalogError> {
        if !(0.0..=1.0).contains(&noise_rate) {
            return Err(CatalogError::InvalidConfig(format!(
                "noise_rate {noise_rate} outside [0, 1]"
            )));
        }
        let mut edge_lookup = HashMap::new();
        for e in &complement_edges {
            if matches!(e.label, Fbl9::A | Fbl9::D | Fbl9::E) {
                return Err(CatalogError::InvalidConfig(format!(
                    "complement edge {}->{} carries non-complement label {}",
                    e.from, e.to, e.label
                )));
            }
            if e.from == e.to {
                return Err(CatalogError::InvalidConfig(format!("self edge on tag {}", e.from)));
            }
            if edge_lookup.insert((e.from, e.to), e.label).is_some()
                || edge_lookup.insert((e.to, e.from), e.label.swapped()).is_some()
            {
                return Err(CatalogError::InvalidConfig(format!(
                    "duplicate edge between tags {} and {}",
                    e.from, e.to
                )));
            }
        }
        let vague_pairs = vague_pairs
            .into_iter()
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        Ok(RelationOracle {
            seed,
            noise_rate,
            function_tags,
            complement_edges,
            vague_pairs,
            edge_lookup,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn noise_rate(&self) -> f64 {
        self.noise_rate
    }

    /// Same oracle with a different noise rate.
    pub fn with_noise_rate(&self, noise_rate: f64) -> Result<Self, CatalogError> {
        RelationOracle::new(
            self.seed,
            noise_rate,
            self.function_tags.clone(),
            self.complement_edges.clone(),
            self.vague_pairs.clone(),
        )
    }

    pub fn tag_of(&self, id: &str) -> Result<u32, CatalogError> {
        self.function_tags
            .get(id)
            .copied()
            .ok_or_else(|| CatalogError::UnknownItem(id.to_owned()))
    }

    /// Noise-free label of the ordered pair.
    pub fn rule_label(&self, x: &str, y: &str) -> Result<Fbl9, CatalogError> {
        let (tx, ty) = (self.tag_of(x)?, self.tag_of(y)?);
        if tx == ty {
            return Ok(Fbl9::A);
        }
        if let Some(&label) = self.edge_lookup.get(&(tx, ty)) {
            return Ok(label);
        }
        if self.vague_pairs.binary_search(&(tx.min(ty), tx.max(ty))).is_ok() {
            return Ok(Fbl9::E);
        }
        Ok(Fbl9::D)
    }

    /// One noisy annotation: with probability `1 - noise_rate` the rule label,
    /// otherwise one of the eight other labels uniformly. Deterministic in
    /// (x, y, draw_seed).
    pub fn annotate(&self, x: &str, y: &str, draw_seed: u64) -> Result<Fbl9, CatalogError> {
        let truth = self.rule_label(x, y)?;
        let mut rng = rng_from(derive_seed(self.seed, &[hash_str(x), hash_str(y), draw_seed]));
        let u: f64 = rng.random();
        if u < self.noise_rate {
            let k = rng.random_range(0..8);
            let wrong = Fbl9::ALL
                .into_iter()
                .filter(|&l| l != truth)
                .nth(k)
                .expect("eight alternatives");
            Ok(wrong)
        } else {
            Ok(truth)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle(noise: f64) -> RelationOracle {
        let tags: BTreeMap<String, u32> = [("p1", 0), ("p2", 0), ("ink", 1), ("case", 2), ("mug", 3), ("tray", 4)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let edges = vec![
            ComplementEdge { from: 0, to: 1, label: Fbl9::B1 },
            ComplementEdge { from: 0, to: 2, label: Fbl9::C1 },
            ComplementEdge { from: 2, to: 4, label: Fbl9::C2 },
        ];
        RelationOracle::new(11, noise, tags, edges, vec![(4, 3)]).unwrap()
    }

    #[test]
    fn rules() {
        let o = oracle(0.0);
        assert_eq!(o.rule_label("p1", "p2").unwrap(), Fbl9::A);
        assert_eq!(o.rule_label("p1", "ink").unwrap(), Fbl9::B1);
        assert_eq!(o.rule_label("ink", "p1").unwrap(), Fbl9::B2);
        assert_eq!(o.rule_label("p1", "case").unwrap(), Fbl9::C1);
        assert_eq!(o.rule_label("tray", "case").unwrap(), Fbl9::C3);
        assert_eq!(o.rule_label("mug", "tray").unwrap(), Fbl9::E);
        assert_eq!(o.rule_label("mug", "p1").unwrap(), Fbl9::D);
        assert!(matches!(o.rule_label("nope", "p1"), Err(CatalogError::UnknownItem(_))));
    }

    #[test]
    fn noiseless_annotation_is_rule_label() {
        let o = oracle(0.0);
        for seed in 0..50 {
            assert_eq!(o.annotate("p1", "case", seed).unwrap(), Fbl9::C1);
            assert_eq!(o.annotate("p2", "p1", seed).unwrap(), Fbl9::A);
        }
    }

    #[test]
    fn full_noise_never_returns_rule_label() {
        let o = oracle(1.0);
        for seed in 0..500 {
            assert_ne!(o.annotate("p1", "case", seed).unwrap(), Fbl9::C1);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let o = oracle(0.5);
        for seed in 0..100 {
            assert_eq!(o.annotate("p1", "ink", seed).unwrap(), o.annotate("p1", "ink", seed).unwrap());
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(RelationOracle::new(0, 1.5, BTreeMap::new(), vec![], vec![]).is_err());
        let bad = vec![ComplementEdge { from: 0, to: 1, label: Fbl9::A }];
        assert!(RelationOracle::new(0, 0.0, BTreeMap::new(), bad, vec![]).is_err());
        let dup = vec![
            ComplementEdge { from: 0, to: 1, label: Fbl9::B1 },
            ComplementEdge { from: 1, to: 0, label: Fbl9::B2 },
        ];
        assert!(RelationOracle::new(0, 0.0, BTreeMap::new(), dup, vec![]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let o = oracle(0.2);
        let text = serde_json::to_string(&o).unwrap();
        let back: RelationOracle = serde_json::from_str(&text).unwrap();
        assert_eq!(back, o);
        assert_eq!(back.rule_label("ink", "p1").unwrap(), Fbl9::B2);
    }
}
