use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::AnnotationError;
use crate::labels::Fbl9;
use crate::pair::PairKey;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub pair: PairKey,
    pub prompt_hash: String,
    pub annotator: String,
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    #[serde(flatten)]
    key: CacheKey,
    draws: Vec<Fbl9>,
}

/// Stored annotator draws keyed by (pair, prompt digest, annotator id).
///
/// Reads are concurrent; inserts are serialized and appended to the backing
/// JSON-lines file when one is attached.
#[derive(Debug, Default)]
pub struct AnnotationCache {
    entries: RwLock<HashMap<CacheKey, Vec<Fbl9>>>,
    writer: Option<Mutex<BufWriter<File>>>,
    path: Option<PathBuf>,
}

impl AnnotationCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a cache file and loads its entries. A torn final
    /// line, as left by a crash mid-write, is ignored.
    pub fn open(path: &Path) -> Result<Self, AnnotationError> {
        let io = |source| AnnotationError::Io {
            path: path.to_owned(),
            source,
        };
        let mut entries = HashMap::new();
        let mut needs_newline = false;
        let mut keep_bytes = None;
        if path.exists() {
            let raw = fs::read_to_string(path).map_err(io)?;
            let lines: Vec<&str> = raw.split_inclusive('\n').collect();
            let last = lines.len().saturating_sub(1);
            let mut offset = 0;
            for (i, line) in lines.iter().enumerate() {
                let start = offset;
                offset += line.len();
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheLine>(line) {
                    Ok(entry) => {
                        entries.insert(entry.key, entry.draws);
                        needs_newline = i == last && !line.ends_with('\n');
                    }
                    Err(_) if i == last => {
                        log::warn!("dropping torn last line of {}", path.display());
                        keep_bytes = Some(start as u64);
                    }
                    Err(e) => {
                        return Err(AnnotationError::LabelFile {
                            line: i + 1,
                            message: format!("{}: {e}", path.display()),
                        })
                    }
                }
            }
        } else if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io)?;
        }
        if let Some(len) = keep_bytes {
            OpenOptions::new().write(true).open(path).and_then(|f| f.set_len(len)).map_err(io)?;
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        if needs_newline {
            file.write_all(b"\n").map_err(io)?;
        }
        Ok(AnnotationCache {
            entries: RwLock::new(entries),
            writer: Some(Mutex::new(BufWriter::new(file))),
            path: Some(path.to_owned()),
        })
    }

    pub fn get(&self, key: &CacheKey) -> Option<Vec<Fbl9>> {
        self.entries.read().expect("cache lock poisoned").get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn put(&self, key: CacheKey, draws: Vec<Fbl9>) -> Result<(), AnnotationError> {
        let mut entries = self.entries.write().expect("cache lock poisoned");
        if entries.get(&key) == Some(&draws) {
            return Ok(());
        }
        if let Some(writer) = &self.writer {
            let line = serde_json::to_string(&CacheLine {
                key: key.clone(),
                draws: draws.clone(),
            })
            .expect("serializable");
            let mut w = writer.lock().expect("cache writer poisoned");
            writeln!(w, "{line}").and_then(|_| w.flush()).map_err(|source| AnnotationError::Io {
                path: self.path.clone().unwrap_or_default(),
                source,
            })?;
        }
        entries.insert(key, draws);
        Ok(())
    }
}
