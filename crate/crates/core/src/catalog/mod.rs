//! Item data model, catalog ingestion and the two-level category hierarchy.

mod oracle;
mod synth;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use oracle::{ComplementEdge, RelationOracle};
pub use synth::{generate_synthetic_world, SyntheticWorld, WorldConfig};

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate item id {id:?} (first seen on line {first_line})")]
    DuplicateId {
        id: String,
        line: usize,
        first_line: usize,
    },
    #[error("line {line}: fine category {fine:?} appears under broad categories {existing:?} and {conflicting:?}")]
    Hierarchy {
        line: usize,
        fine: String,
        existing: String,
        conflicting: String,
    },
    #[error("unknown item id {0:?}")]
    UnknownItem(String),
    #[error("invalid world config: {0}")]
    InvalidConfig(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One catalog item. Field names are the item file's keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Item {
    pub id: String,
    pub title: String,
    pub description: String,
    pub fine_category: String,
    pub broad_category: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub numeric_attrs: BTreeMap<String, f64>,
}

/// Immutable item collection with category indexes.
///
/// Items keep their file order; fine categories are listed in order of first
/// appearance. Both orders drive every deterministic iteration downstream.
#[derive(Debug, Clone)]
pub struct ItemCatalog {
    items: Vec<Item>,
    by_id: HashMap<String, usize>,
    fine_order: Vec<String>,
    fine_to_broad: HashMap<String, String>,
    by_fine: HashMap<String, Vec<usize>>,
    by_broad: HashMap<String, Vec<usize>>,
}

impl PartialEq for ItemCatalog {
    fn eq(&self, other: &Self) -> bool {
        self.items == other.items
    }
}

impl ItemCatalog {
    /// Builds a catalog, checking id uniqueness and the fine → broad function.
    /// Error line numbers are 1-based positions in `items`.
    pub fn from_items(items: Vec<Item>) -> Result<Self, CatalogError> {
        let mut by_id = HashMap::with_capacity(items.len());
        let mut fine_order = Vec::new();
        let mut fine_to_broad: HashMap<String, String> = HashMap::new();
        let mut by_fine: HashMap<String, Vec<usize>> = HashMap::new();
        let mut by_broad: HashMap<String, Vec<usize>> = HashMap::new();

        for (idx, item) in items.iter().enumerate() {
            let line = idx + 1;
            for (field, value) in [
                ("id", &item.id),
                ("title", &item.title),
                ("fine_category", &item.fine_category),
                ("broad_category", &item.broad_category),
            ] {
                if value.trim().is_empty() {
                    return Err(CatalogError::Parse {
                        line,
                        message: format!("field {field} must be non-empty"),
                    });
                }
            }
            if let Some(v) = item.numeric_attrs.values().find(|v| !v.is_finite()) {
                return Err(CatalogError::Parse {
                    line,
                    message: format!("non-finite numeric attribute {v}"),
                });
            }
            if let Some(&first) = by_id.get(&item.id) {
                return Err(CatalogError::DuplicateId {
                    id: item.id.clone(),
                    line,
                    first_line: first + 1,
                });
            }
            match fine_to_broad.get(&item.fine_category) {
                Some(broad) if broad != &item.broad_category => {
                    return Err(CatalogError::Hierarchy {
                        line,
                        fine: item.fine_category.clone(),
                        existing: broad.clone(),
                        conflicting: item.broad_category.clone(),
                    });
                }
                Some(_) => {}
                None => {
                    fine_to_broad.insert(item.fine_category.clone(), item.broad_category.clone());
                    fine_order.push(item.fine_category.clone());
                }
            }
            by_id.insert(item.id.clone(), idx);
            by_fine.entry(item.fine_category.clone()).or_default().push(idx);
            by_broad.entry(item.broad_category.clone()).or_default().push(idx);
        }

        Ok(ItemCatalog {
            items,
            by_id,
            fine_order,
            fine_to_broad,
            by_fine,
            by_broad,
        })
    }

    /// Parses the JSON-lines item format. Blank lines are skipped but still
    /// counted for error positions.
    pub fn from_reader(reader: impl Read) -> Result<Self, CatalogError> {
        let mut items = Vec::new();
        let mut lines = Vec::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = i + 1;
            let line = line.map_err(|e| CatalogError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let item: Item = serde_json::from_str(&line).map_err(|e| CatalogError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            items.push(item);
            lines.push(line_no);
        }
        // Re-map positional errors onto physical file lines.
        ItemCatalog::from_items(items).map_err(|e| match e {
            CatalogError::Parse { line, message } => CatalogError::Parse {
                line: lines[line - 1],
                message,
            },
            CatalogError::DuplicateId {
                id,
                line,
                first_line,
            } => CatalogError::DuplicateId {
                id,
                line: lines[line - 1],
                first_line: lines[first_line - 1],
            },
            CatalogError::Hierarchy {
                line,
                fine,
                existing,
                conflicting,
            } => CatalogError::Hierarchy {
                line: lines[line - 1],
                fine,
                existing,
                conflicting,
            },
            other => other,
        })
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for item in &self.items {
            serde_json::to_writer(&mut out, item)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn item(&self, idx: usize) -> &Item {
        &self.items[idx]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&Item> {
        self.index_of(id).map(|i| &self.items[i])
    }

    pub fn require(&self, id: &str) -> Result<&Item, CatalogError> {
        self.get(id).ok_or_else(|| CatalogError::UnknownItem(id.to_owned()))
    }

    /// Fine categories in order of first appearance.
    pub fn fine_categories(&self) -> &[String] {
        &self.fine_order
    }

    pub fn broad_of(&self, fine: &str) -> Option<&str> {
        self.fine_to_broad.get(fine).map(String::as_str)
    }

    /// Item indexes of a fine category, in file order.
    pub fn items_in_fine(&self, fine: &str) -> &[usize] {
        self.by_fine.get(fine).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Item indexes of a broad category, in file order.
    pub fn items_in_broad(&self, broad: &str) -> &[usize] {
        self.by_broad.get(broad).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Reads an item file from disk.
pub fn load_catalog(path: impl AsRef<Path>) -> Result<ItemCatalog, CatalogError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| CatalogError::Io {
        path: path.to_owned(),
        source,
    })?;
    ItemCatalog::from_reader(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, fine: &str, broad: &str) -> String {
        format!(
            r#"{{"id":"{id}","title":"t {id}","description":"","fine_category":"{fine}","broad_category":"{broad}"}}"#
        )
    }

    #[test]
    fn three_rows() {
        let text = [row("a", "pens", "Office"), row("b", "pens", "Office"), row("c", "cups", "Kitchen")].join("\n");
        let cat = ItemCatalog::from_reader(text.as_bytes()).unwrap();
        assert_eq!(cat.len(), 3);
        assert_eq!(cat.fine_categories(), &["pens".to_string(), "cups".to_string()]);
        assert_eq!(cat.items_in_fine("pens"), &[0, 1]);
        assert_eq!(cat.broad_of("cups"), Some("Kitchen"));
    }

    #[test]
    fn duplicate_id_names_second_line() {
        let text = [
            row("A1", "pens", "Office"),
            row("A2", "pens", "Office"),
            row("A3", "pens", "Office"),
            row("A4", "pens", "Office"),
            row("A1", "pens", "Office"),
        ]
        .join("\n");
        match ItemCatalog::from_reader(text.as_bytes()) {
            Err(CatalogError::DuplicateId { id, line, first_line }) => {
                assert_eq!(id, "A1");
                assert_eq!(line, 5);
                assert_eq!(first_line, 1);
            }
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn fine_in_two_broads_rejected() {
        let text = [row("a", "pens", "Office"), row("b", "pens", "Kitchen")].join("\n");
        assert!(matches!(
            ItemCatalog::from_reader(text.as_bytes()),
            Err(CatalogError::Hierarchy { line: 2, .. })
        ));
    }

    #[test]
    fn unknown_keys_and_bad_json_rejected() {
        let text = r#"{"id":"a","title":"t","description":"","fine_category":"f","broad_category":"b","color":"red"}"#;
        assert!(matches!(ItemCatalog::from_reader(text.as_bytes()), Err(CatalogError::Parse { line: 1, .. })));
        let text = format!("{}\n\n{{not json", row("a", "f", "b"));
        assert!(matches!(ItemCatalog::from_reader(text.as_bytes()), Err(CatalogError::Parse { line: 3, .. })));
    }

    #[test]
    fn empty_fields_rejected() {
        let text = row("a", "", "b");
        assert!(matches!(ItemCatalog::from_reader(text.as_bytes()), Err(CatalogError::Parse { .. })));
    }

    #[test]
    fn serialize_then_parse_is_identity() {
        let mut items = Vec::new();
        for i in 0..4 {
            let mut attrs = BTreeMap::new();
            if i % 2 == 0 {
                attrs.insert("price".to_string(), 10.5 * i as f64);
            }
            items.push(Item {
                id: format!("i{i}"),
                title: format!("title {i}"),
                description: "desc, \"quoted\"".into(),
                fine_category: format!("f{}", i % 2),
                broad_category: "b".into(),
                numeric_attrs: attrs,
            });
        }
        let cat = ItemCatalog::from_items(items).unwrap();
        let back = ItemCatalog::from_reader(cat.to_jsonl_string().as_bytes()).unwrap();
        assert_eq!(back, cat);
    }
}
