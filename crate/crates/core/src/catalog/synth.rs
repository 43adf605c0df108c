//! Synthetic catalogs with a known relation structure.
//!
//! Every item carries a hidden function tag. Tags live inside one fine
//! category and play one of three roles (main product, supply, accessory);
//! complement edges connect role-compatible tags of different fine categories
//! within a broad category. Item text is drawn from per-tag, per-fine,
//! per-broad and per-role vocabularies, so hashed text features carry the
//! relation signal. Fine categories are split into a "seen" part (source of
//! the in-distribution labeled set) and an "unseen" part (source of the
//! out-of-distribution labeled set).

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{CatalogError, ComplementEdge, Item, ItemCatalog, RelationOracle};
use crate::annotation::{HumanLabeledSet, LabelSource};
use crate::labels::{map_to_rel3, Fbl9, Rel3};
use crate::pair::PairKey;
use crate::seed::{rng_from, stream_seed, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub broad_categories: usize,
    pub fine_per_broad: usize,
    pub items_per_fine: usize,
    pub tags_per_fine: usize,
    pub vocab_per_tag: usize,
    pub vocab_per_fine: usize,
    pub vocab_per_broad: usize,
    pub vocab_per_role: usize,
    pub shared_vocab: usize,
    pub title_words: usize,
    pub description_words: usize,
    /// Probability that a role-compatible tag pair is joined by a complement edge.
    pub complement_density: f64,
    /// Probability that any other cross-category tag pair is labeled E.
    pub vague_density: f64,
    pub noise_rate: f64,
    /// Fraction of fine categories (per broad category) marked as seen.
    pub seen_fraction: f64,
    pub id_pairs: usize,
    pub ood_pairs: usize,
    /// Target class shares (complementary, substitute, unrelated).
    pub id_mix: [f64; 3],
    pub ood_mix: [f64; 3],
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            broad_categories: 4,
            fine_per_broad: 10,
            items_per_fine: 15,
            tags_per_fine: 2,
            vocab_per_tag: 6,
            vocab_per_fine: 4,
            vocab_per_broad: 6,
            vocab_per_role: 3,
            shared_vocab: 80,
            title_words: 4,
            description_words: 12,
            complement_density: 0.3,
            vague_density: 0.03,
            noise_rate: 0.1,
            seen_fraction: 0.6,
            id_pairs: 600,
            ood_pairs: 400,
            id_mix: [0.25, 0.15, 0.60],
            ood_mix: [0.2, 0.6, 0.2],
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<(), CatalogError> {
        let counts = [
            ("broad_categories", self.broad_categories),
            ("fine_per_broad", self.fine_per_broad),
            ("items_per_fine", self.items_per_fine),
            ("tags_per_fine", self.tags_per_fine),
            ("vocab_per_tag", self.vocab_per_tag),
            ("title_words", self.title_words),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(CatalogError::InvalidConfig(format!("{name} must be positive")));
        }
        for (name, p) in [
            ("noise_rate", self.noise_rate),
            ("complement_density", self.complement_density),
            ("vague_density", self.vague_density),
            ("seen_fraction", self.seen_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(CatalogError::InvalidConfig(format!("{name} = {p} outside [0, 1]")));
            }
        }
        for (name, mix) in [("id_mix", self.id_mix), ("ood_mix", self.ood_mix)] {
            if mix.iter().any(|m| !(m.is_finite() && *m >= 0.0)) || mix.iter().sum::<f64>() <= 0.0 {
                return Err(CatalogError::InvalidConfig(format!("{name} must be non-negative with positive sum")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Main,
    Supply,
    Accessory,
}

const ROLES: [Role; 3] = [Role::Main, Role::Supply, Role::Accessory];

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldMeta {
    seed: u64,
    config: WorldConfig,
    seen_fine: Vec<String>,
    unseen_fine: Vec<String>,
}

/// A generated catalog together with its oracle and the two labeled sets.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub seed: u64,
    pub config: WorldConfig,
    pub catalog: ItemCatalog,
    pub oracle: RelationOracle,
    pub seen_fine: Vec<String>,
    pub unseen_fine: Vec<String>,
    pub id_set: HumanLabeledSet,
    pub ood_set: HumanLabeledSet,
}

pub const ITEMS_FILE: &str = "items.jsonl";
pub const ORACLE_FILE: &str = "oracle.json";
pub const ID_LABELS_FILE: &str = "id_labels.csv";
pub const OOD_LABELS_FILE: &str = "ood_labels.csv";
pub const WORLD_FILE: &str = "world.json";

impl SyntheticWorld {
    /// Serialized world as (file name, contents), in a fixed order.
    pub fn to_files(&self) -> Vec<(&'static str, Vec<u8>)> {
        let meta = WorldMeta {
            seed: self.seed,
            config: self.config.clone(),
            seen_fine: self.seen_fine.clone(),
            unseen_fine: self.unseen_fine.clone(),
        };
        let mut id_csv = Vec::new();
        self.id_set.write_csv(&mut id_csv).expect("in-memory write");
        let mut ood_csv = Vec::new();
        self.ood_set.write_csv(&mut ood_csv).expect("in-memory write");
        vec![
            (WORLD_FILE, serde_json::to_vec_pretty(&meta).expect("serializable")),
            (ITEMS_FILE, self.catalog.to_jsonl_string().into_bytes()),
            (ORACLE_FILE, serde_json::to_vec(&self.oracle).expect("serializable")),
            (ID_LABELS_FILE, id_csv),
            (OOD_LABELS_FILE, ood_csv),
        ]
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), CatalogError> {
        let io = |source| CatalogError::Io {
            path: dir.to_owned(),
            source,
        };
        fs::create_dir_all(dir).map_err(io)?;
        for (name, bytes) in self.to_files() {
            fs::write(dir.join(name), bytes).map_err(io)?;
        }
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<SyntheticWorld, crate::Error> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read(&path).map_err(|source| CatalogError::Io { path, source })
        };
        let meta: WorldMeta = serde_json::from_slice(&read(WORLD_FILE)?).map_err(|e| CatalogError::Parse {
            line: e.line(),
            message: format!("{WORLD_FILE}: {e}"),
        })?;
        let catalog = ItemCatalog::from_reader(read(ITEMS_FILE)?.as_slice())?;
        let oracle: RelationOracle =
            serde_json::from_slice(&read(ORACLE_FILE)?).map_err(|e| CatalogError::Parse {
                line: e.line(),
                message: format!("{ORACLE_FILE}: {e}"),
            })?;
        let id_set = HumanLabeledSet::from_csv(read(ID_LABELS_FILE)?.as_slice(), Some(&catalog), LabelSource::IdDataset)?;
        let ood_set =
            HumanLabeledSet::from_csv(read(OOD_LABELS_FILE)?.as_slice(), Some(&catalog), LabelSource::OodDataset)?;
        Ok(SyntheticWorld {
            seed: meta.seed,
            config: meta.config,
            catalog,
            oracle,
            seen_fine: meta.seen_fine,
            unseen_fine: meta.unseen_fine,
            id_set,
            ood_set,
        })
    }
}

struct WordSource {
    used: HashSet<String>,
}

impl WordSource {
    fn word(&mut self, rng: &mut ChaCha8Rng) -> String {
        const CONSONANTS: &[u8] = b"bcdfghjklmnprstvz";
        const VOWELS: &[u8] = b"aeiou";
        loop {
            let syllables = rng.random_range(2..=3);
            let mut w = String::with_capacity(syllables * 2);
            for _ in 0..syllables {
                w.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char);
                w.push(VOWELS[rng.random_range(0..VOWELS.len())] as char);
            }
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn words(&mut self, rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
        (0..n).map(|_| self.word(rng)).collect()
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &'a [String]) -> Option<&'a str> {
    if pool.is_empty() {
        None
    } else {
        Some(&pool[rng.random_range(0..pool.len())])
    }
}

struct TagInfo {
    fine: usize,
    broad: usize,
    role: Role,
    words: Vec<String>,
    weight_mu: f64,
}

/// Generates a world. Same (config, seed) always yields the same world.
pub fn generate_synthetic_world(config: &WorldConfig, seed: u64) -> Result<SyntheticWorld, crate::Error> {
    config.validate()?;
    let mut rng = rng_from(stream_seed(seed, Stream::World, &[]));
    let mut words = WordSource { used: HashSet::new() };

    let shared = words.words(&mut rng, config.shared_vocab);
    let mut broad_names = Vec::new();
    let mut broad_words = Vec::new();
    let mut role_words = Vec::new();
    for _ in 0..config.broad_categories {
        let name = words.word(&mut rng);
        broad_names.push(format!("{}{}", name[..1].to_uppercase(), &name[1..]));
        broad_words.push(words.words(&mut rng, config.vocab_per_broad));
        role_words.push(
            ROLES
                .iter()
                .map(|_| words.words(&mut rng, config.vocab_per_role))
                .collect::<Vec<_>>(),
        );
    }

    let mut fine_names = Vec::new();
    let mut fine_words = Vec::new();
    let mut fine_broad = Vec::new();
    let mut fine_price_mu = Vec::new();
    let mut tags: Vec<TagInfo> = Vec::new();
    for b in 0..config.broad_categories {
        for _ in 0..config.fine_per_broad {
            let f = fine_names.len();
            fine_names.push(format!("{} {}", words.word(&mut rng), words.word(&mut rng)));
            fine_words.push(words.words(&mut rng, config.vocab_per_fine));
            fine_broad.push(b);
            fine_price_mu.push(rng.random_range(1.0..6.0));
            // Rotate roles so every fine category holds a mix.
            let offset = rng.random_range(0..ROLES.len());
            for t in 0..config.tags_per_fine {
                tags.push(TagInfo {
                    fine: f,
                    broad: b,
                    role: ROLES[(t + offset) % ROLES.len()],
                    words: words.words(&mut rng, config.vocab_per_tag),
                    weight_mu: rng.random_range(-1.0..3.0),
                });
            }
        }
    }

    // Seen / unseen split, per broad category so every broad keeps both kinds.
    let mut seen = vec![false; fine_names.len()];
    for b in 0..config.broad_categories {
        let mut fines: Vec<usize> = (0..fine_names.len()).filter(|&f| fine_broad[f] == b).collect();
        fines.shuffle(&mut rng);
        let n_seen = ((fines.len() as f64) * config.seen_fraction).round() as usize;
        for &f in &fines[..n_seen.min(fines.len())] {
            seen[f] = true;
        }
    }

    // Relation edges between tags of different fine categories in one broad.
    let mut edges = Vec::new();
    let mut vague = Vec::new();
    for t1 in 0..tags.len() {
        for t2 in (t1 + 1)..tags.len() {
            let (a, b) = (&tags[t1], &tags[t2]);
            if a.broad != b.broad || a.fine == b.fine {
                continue;
            }
            let label = match (a.role, b.role) {
                (Role::Main, Role::Supply) => Some(Fbl9::B1),
                (Role::Supply, Role::Main) => Some(Fbl9::B2),
                (Role::Main, Role::Accessory) => Some(Fbl9::C2),
                (Role::Accessory, Role::Main) => Some(Fbl9::C3),
                (Role::Main, Role::Main) => Some(if rng.random_bool(0.3) { Fbl9::C1 } else { Fbl9::C4 }),
                _ => None,
            };
            match label {
                Some(label) if rng.random_bool(config.complement_density) => edges.push(ComplementEdge {
                    from: t1 as u32,
                    to: t2 as u32,
                    label,
                }),
                _ => {
                    if rng.random_bool(config.vague_density) {
                        vague.push((t1 as u32, t2 as u32));
                    }
                }
            }
        }
    }

    // Items.
    let mut items = Vec::new();
    let mut function_tags = BTreeMap::new();
    for f in 0..fine_names.len() {
        let b = fine_broad[f];
        let fine_tags: Vec<usize> = (0..tags.len()).filter(|&t| tags[t].fine == f).collect();
        for i in 0..config.items_per_fine {
            let tag_idx = fine_tags[i % fine_tags.len()];
            let tag = &tags[tag_idx];
            let role = ROLES.iter().position(|&r| r == tag.role).expect("known role");
            let id = format!("it{:05}", items.len());

            let mut title = Vec::new();
            title.extend(pick(&mut rng, &role_words[b][role]).map(str::to_owned));
            title.extend(pick(&mut rng, &fine_words[f]).map(str::to_owned));
            while title.len() < config.title_words {
                title.push(pick(&mut rng, &tag.words).expect("non-empty tag vocabulary").to_owned());
            }
            title.shuffle(&mut rng);

            let mut desc = Vec::new();
            for _ in 0..config.description_words {
                let u: f64 = rng.random();
                let w = if u < 0.35 {
                    pick(&mut rng, &tag.words)
                } else if u < 0.5 {
                    pick(&mut rng, &fine_words[f])
                } else if u < 0.6 {
                    pick(&mut rng, &broad_words[b])
                } else if u < 0.7 {
                    pick(&mut rng, &role_words[b][role])
                } else {
                    pick(&mut rng, &shared)
                };
                desc.extend(w.map(str::to_owned));
            }

            let price = Normal::<f64>::new(fine_price_mu[f], 0.4).expect("valid sd").sample(&mut rng).exp();
            let weight = Normal::<f64>::new(tag.weight_mu, 0.3).expect("valid sd").sample(&mut rng).exp();
            let mut numeric_attrs = BTreeMap::new();
            numeric_attrs.insert("price".to_string(), (price * 100.0).round() / 100.0);
            numeric_attrs.insert("weight".to_string(), (weight * 1000.0).round() / 1000.0);

            function_tags.insert(id.clone(), tag_idx as u32);
            items.push(Item {
                id,
                title: title.join(" "),
                description: desc.join(" "),
                fine_category: fine_names[f].clone(),
                broad_category: broad_names[b].clone(),
                numeric_attrs,
            });
        }
    }

    let catalog = ItemCatalog::from_items(items)?;
    let oracle = RelationOracle::new(
        stream_seed(seed, Stream::Oracle, &[]),
        config.noise_rate,
        function_tags,
        edges,
        vague,
    )?;

    let seen_names: BTreeSet<&str> = (0..fine_names.len())
        .filter(|&f| seen[f])
        .map(|f| fine_names[f].as_str())
        .collect();
    let is_seen = |idx: usize| seen_names.contains(catalog.item(idx).fine_category.as_str());

    // In-distribution pool: both items seen. Out-of-distribution pool: the
    // query item comes from an unseen fine category.
    let mut id_pool = Vec::new();
    let mut ood_pool = Vec::new();
    for (qi, q) in catalog.items().iter().enumerate() {
        for &ci in catalog.items_in_broad(&q.broad_category) {
            if ci == qi {
                continue;
            }
            match (is_seen(qi), is_seen(ci)) {
                (true, true) => id_pool.push((qi, ci)),
                (false, _) => ood_pool.push((qi, ci)),
                _ => {}
            }
        }
    }
    let id_set = draw_labeled_set(&catalog, &oracle, id_pool, config.id_pairs, config.id_mix, LabelSource::IdDataset, &mut rng)?;
    let ood_set =
        draw_labeled_set(&catalog, &oracle, ood_pool, config.ood_pairs, config.ood_mix, LabelSource::OodDataset, &mut rng)?;

    let names_where = |want: bool| {
        catalog
            .fine_categories()
            .iter()
            .filter(|f| seen_names.contains(f.as_str()) == want)
            .cloned()
            .collect::<Vec<_>>()
    };
    Ok(SyntheticWorld {
        seed,
        config: config.clone(),
        seen_fine: names_where(true),
        unseen_fine: names_where(false),
        catalog,
        oracle,
        id_set,
        ood_set,
    })
}

/// Stratified draw with noise-free labels (human sets keep only agreed labels).
fn draw_labeled_set(
    catalog: &ItemCatalog,
    oracle: &RelationOracle,
    pool: Vec<(usize, usize)>,
    total: usize,
    mix: [f64; 3],
    source: LabelSource,
    rng: &mut ChaCha8Rng,
) -> Result<HumanLabeledSet, crate::Error> {
    let mut buckets: [Vec<(usize, usize)>; 3] = Default::default();
    for (q, c) in pool {
        let label = map_to_rel3(oracle.rule_label(&catalog.item(q).id, &catalog.item(c).id)?);
        buckets[label.index()].push((q, c));
    }
    let mix_sum: f64 = mix.iter().sum();
    let mut set = HumanLabeledSet::new(source);
    let mut taken = HashSet::new();
    for class in Rel3::ALL {
        let target = (total as f64 * mix[class.index()] / mix_sum).round() as usize;
        let bucket = &mut buckets[class.index()];
        bucket.shuffle(rng);
        let mut count = 0;
        for &(q, c) in bucket.iter() {
            if count == target {
                break;
            }
            let (x, y) = (&catalog.item(q).id, &catalog.item(c).id);
            if taken.insert(PairKey::new(x, y)) {
                set.push(x, y, class)?;
                count += 1;
            }
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> WorldConfig {
        WorldConfig {
            broad_categories: 2,
            fine_per_broad: 3,
            items_per_fine: 10,
            id_pairs: 60,
            ood_pairs: 40,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn counts_follow_config() {
        let w = generate_synthetic_world(&small(), 7).unwrap();
        assert_eq!(w.catalog.len(), 60);
        assert_eq!(w.catalog.fine_categories().len(), 6);
        assert_eq!(w.seen_fine.len() + w.unseen_fine.len(), 6);
        assert!(!w.seen_fine.is_empty() && !w.unseen_fine.is_empty());
        assert!(w.id_set.len() <= 60 && !w.id_set.is_empty());
    }

    #[test]
    fn same_seed_same_bytes_different_seed_differs() {
        let a = generate_synthetic_world(&small(), 7).unwrap().to_files();
        let b = generate_synthetic_world(&small(), 7).unwrap().to_files();
        assert_eq!(a, b);
        let c = generate_synthetic_world(&small(), 8).unwrap().to_files();
        assert_ne!(a, c);
    }

    #[test]
    fn same_tag_pair_is_a_at_zero_noise() {
        let w = generate_synthetic_world(&WorldConfig { noise_rate: 0.0, ..small() }, 7).unwrap();
        let items = w.catalog.items();
        let tag0 = w.oracle.tag_of(&items[0].id).unwrap();
        let mate = items[1..].iter().find(|it| w.oracle.tag_of(&it.id).unwrap() == tag0).unwrap();
        for seed in 0..10 {
            assert_eq!(w.oracle.annotate(&items[0].id, &mate.id, seed).unwrap(), Fbl9::A);
        }
    }

    #[test]
    fn labels_symmetric_under_swap() {
        let w = generate_synthetic_world(&small(), 3).unwrap();
        let items = w.catalog.items();
        for x in items {
            for y in items {
                let xy = w.oracle.rule_label(&x.id, &y.id).unwrap();
                let yx = w.oracle.rule_label(&y.id, &x.id).unwrap();
                assert_eq!(yx, xy.swapped());
            }
        }
    }

    #[test]
    fn id_and_ood_sets_respect_split() {
        let w = generate_synthetic_world(&small(), 11).unwrap();
        let seen: HashSet<&str> = w.seen_fine.iter().map(String::as_str).collect();
        for r in w.id_set.records() {
            assert!(seen.contains(w.catalog.get(&r.x).unwrap().fine_category.as_str()));
            assert!(seen.contains(w.catalog.get(&r.y).unwrap().fine_category.as_str()));
            assert_eq!(map_to_rel3(w.oracle.rule_label(&r.x, &r.y).unwrap()), r.label);
        }
        for r in w.ood_set.records() {
            assert!(!seen.contains(w.catalog.get(&r.x).unwrap().fine_category.as_str()));
            assert!(!w.id_set.contains(&PairKey::new(&r.x, &r.y)));
        }
    }

    #[test]
    fn dir_round_trip() {
        let w = generate_synthetic_world(&small(), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        w.write_dir(dir.path()).unwrap();
        let back = SyntheticWorld::load_dir(dir.path()).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(generate_synthetic_world(&WorldConfig { items_per_fine: 0, ..small() }, 1).is_err());
        assert!(generate_synthetic_world(&WorldConfig { noise_rate: 1.2, ..small() }, 1).is_err());
    }
}
