//! Pair featurization.
//!
//! A pair vector is `block(x) ++ block(y) ++ interactions(x, y)` where each
//! item block holds signed hashed token counts of title and description,
//! hashed one-hot fine and broad categories, and standardized numeric
//! attributes. Interactions are the cosine of the two text blocks and the
//! same-fine / same-broad flags, zero padded.
//!
//! The default 424 dimensions split as 2 × (128 + 64 + 8) + 24. Only the
//! total is fixed by the classifier setup this engine mirrors; the split is a
//! local choice.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::catalog::{Item, ItemCatalog};

/// Identifies a featurizer configuration (config plus numeric scaling).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SchemaId(pub u64);

impl fmt::Display for SchemaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturizerConfig {
    pub text_hash_dims_per_item: usize,
    pub category_hash_dims_per_item: usize,
    pub numeric_dims_per_item: usize,
    pub interaction_dims: usize,
    pub hash_seed: u64,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            text_hash_dims_per_item: 128,
            category_hash_dims_per_item: 64,
            numeric_dims_per_item: 8,
            interaction_dims: 24,
            hash_seed: 0,
        }
    }
}

/// Number of interaction entries actually populated.
pub const USED_INTERACTIONS: usize = 3;

impl FeaturizerConfig {
    pub fn item_dims(&self) -> usize {
        self.text_hash_dims_per_item + self.category_hash_dims_per_item + self.numeric_dims_per_item
    }

    pub fn dim(&self) -> usize {
        2 * self.item_dims() + self.interaction_dims
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.text_hash_dims_per_item == 0 || self.category_hash_dims_per_item == 0 {
            return Err("hash block dimensions must be positive".into());
        }
        if self.interaction_dims < USED_INTERACTIONS {
            return Err(format!("interaction_dims must be at least {USED_INTERACTIONS}"));
        }
        Ok(())
    }
}

/// Dense pair feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub schema: SchemaId,
}

/// Row-major matrix of pair feature vectors sharing one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    dim: usize,
    schema: SchemaId,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn empty(dim: usize, schema: SchemaId) -> Self {
        FeatureMatrix {
            dim,
            schema,
            data: Vec::new(),
        }
    }

    /// Builds a matrix from raw rows (used by tests and tools).
    pub fn from_rows(dim: usize, schema: SchemaId, rows: &[Vec<f64>]) -> Self {
        let mut m = FeatureMatrix::empty(dim, schema);
        for r in rows {
            m.push_row(r);
        }
        m
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.dim, "row dimension mismatch");
        self.data.extend_from_slice(row);
    }

    pub fn push(&mut self, fv: &FeatureVector) {
        assert_eq!(fv.schema, self.schema, "schema mismatch");
        self.push_row(&fv.values);
    }

    pub fn extend(&mut self, other: &FeatureMatrix) {
        assert_eq!(other.dim, self.dim, "dimension mismatch");
        assert_eq!(other.schema, self.schema, "schema mismatch");
        self.data.extend_from_slice(&other.data);
    }

    pub fn truncate(&mut self, rows: usize) {
        self.data.truncate(rows * self.dim);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn schema(&self) -> SchemaId {
        self.schema
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    /// New matrix holding the given rows in order.
    pub fn select(&self, indexes: &[usize]) -> FeatureMatrix {
        let mut out = FeatureMatrix::empty(self.dim, self.schema);
        out.data.reserve(indexes.len() * self.dim);
        for &i in indexes {
            out.data.extend_from_slice(self.row(i));
        }
        out
    }

    pub fn to_vector(&self, i: usize) -> FeatureVector {
        FeatureVector {
            values: self.row(i).to_vec(),
            schema: self.schema,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct NumericSlot {
    name: String,
    mean: f64,
    scale: f64,
}

fn signed_log1p(v: f64) -> f64 {
    v.signum() * v.abs().ln_1p()
}

/// Lowercased alphanumeric tokens.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Per-item part of a pair vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemBlock {
    values: Vec<f64>,
    text_norm_sq: f64,
}

/// Pure pair featurizer. Numeric scaling statistics are computed once from
/// the catalog at construction and frozen for the whole run.
#[derive(Debug, Clone)]
pub struct Featurizer {
    config: FeaturizerConfig,
    numeric: Vec<NumericSlot>,
    schema: SchemaId,
    blocks: HashMap<String, (Item, ItemBlock)>,
}

impl Featurizer {
    pub fn new(config: FeaturizerConfig, catalog: &ItemCatalog) -> Result<Self, String> {
        config.validate()?;
        let mut stats: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for item in catalog.items() {
            for (k, v) in &item.numeric_attrs {
                stats.entry(k.as_str()).or_default().push(signed_log1p(*v));
            }
        }
        let numeric: Vec<NumericSlot> = stats
            .into_iter()
            .take(config.numeric_dims_per_item)
            .map(|(name, vals)| {
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
                NumericSlot {
                    name: name.to_owned(),
                    mean,
                    scale,
                }
            })
            .collect();
        let schema_src = serde_json::to_vec(&(&config, &numeric)).expect("serializable");
        let schema = SchemaId(xxh3_64_with_seed(&schema_src, 0x5eed));
        let mut f = Featurizer {
            config,
            numeric,
            schema,
            blocks: HashMap::new(),
        };
        f.blocks = catalog
            .items()
            .iter()
            .map(|it| (it.id.clone(), (it.clone(), f.item_block(it))))
            .collect();
        Ok(f)
    }

    pub fn config(&self) -> &FeaturizerConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim()
    }

    pub fn schema(&self) -> SchemaId {
        self.schema
    }

    fn hash(&self, token: &str, salt: u64) -> u64 {
        xxh3_64_with_seed(token.as_bytes(), self.config.hash_seed ^ salt)
    }

    pub fn item_block(&self, item: &Item) -> ItemBlock {
        let c = &self.config;
        let mut values = vec![0.0; c.item_dims()];
        let text = &mut values[..c.text_hash_dims_per_item];
        for tok in tokenize(&item.title).chain(tokenize(&item.description)) {
            let idx = (self.hash(&tok, 0x7e47) % c.text_hash_dims_per_item as u64) as usize;
            let sign = if self.hash(&tok, 0x5169) & 1 == 0 { 1.0 } else { -1.0 };
            text[idx] += sign;
        }
        let text_norm_sq = text.iter().map(|v| v * v).sum();
        let cat = &mut values[c.text_hash_dims_per_item..c.text_hash_dims_per_item + c.category_hash_dims_per_item];
        for key in [format!("fine:{}", item.fine_category), format!("broad:{}", item.broad_category)] {
            let idx = (self.hash(&key, 0xca7) % c.category_hash_dims_per_item as u64) as usize;
            cat[idx] += 1.0;
        }
        let num = &mut values[c.text_hash_dims_per_item + c.category_hash_dims_per_item..];
        for (slot, out) in self.numeric.iter().zip(num.iter_mut()) {
            if let Some(v) = item.numeric_attrs.get(&slot.name) {
                *out = (signed_log1p(*v) - slot.mean) / slot.scale;
            }
        }
        ItemBlock { values, text_norm_sq }
    }

    fn assemble(&self, x: &Item, bx: &ItemBlock, y: &Item, by: &ItemBlock, out: &mut Vec<f64>) {
        let c = &self.config;
        out.extend_from_slice(&bx.values);
        out.extend_from_slice(&by.values);
        let t = c.text_hash_dims_per_item;
        let dot: f64 = bx.values[..t].iter().zip(&by.values[..t]).map(|(a, b)| a * b).sum();
        let denom = (bx.text_norm_sq * by.text_norm_sq).sqrt();
        let cosine = if denom > 0.0 { (dot / denom).clamp(-1.0, 1.0) } else { 0.0 };
        out.push(cosine);
        out.push(f64::from(u8::from(x.fine_category == y.fine_category)));
        out.push(f64::from(u8::from(x.broad_category == y.broad_category)));
        out.extend(std::iter::repeat_n(0.0, c.interaction_dims - USED_INTERACTIONS));
    }

    // Catalog items hit the precomputed blocks; any other item (or an edited
    // copy of a catalog item) is computed on the spot.
    fn block_for<'a>(&'a self, item: &Item, scratch: &'a mut Option<ItemBlock>) -> &'a ItemBlock {
        match self.blocks.get(&item.id) {
            Some((cached, b)) if cached == item => b,
            _ => scratch.insert(self.item_block(item)),
        }
    }

    pub fn featurize_pair(&self, x: &Item, y: &Item) -> FeatureVector {
        let (mut sx, mut sy) = (None, None);
        let bx = self.block_for(x, &mut sx);
        let by = self.block_for(y, &mut sy);
        let mut values = Vec::with_capacity(self.dim());
        self.assemble(x, bx, y, by, &mut values);
        FeatureVector {
            values,
            schema: self.schema,
        }
    }

    pub fn featurize_batch(&self, pairs: &[(&Item, &Item)]) -> FeatureMatrix {
        let mut m = FeatureMatrix::empty(self.dim(), self.schema);
        m.data.reserve(pairs.len() * self.dim());
        let mut row = Vec::with_capacity(self.dim());
        for (x, y) in pairs {
            row.clear();
            let (mut sx, mut sy) = (None, None);
            let bx = self.block_for(x, &mut sx);
            let by = self.block_for(y, &mut sy);
            self.assemble(x, bx, y, by, &mut row);
            m.data.extend_from_slice(&row);
        }
        m
    }
}
