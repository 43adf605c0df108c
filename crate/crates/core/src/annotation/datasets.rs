use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AnnotationError;
use crate::catalog::ItemCatalog;
use crate::labels::{map_to_rel3, Fbl9, Rel3};
use crate::pair::PairKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelSource {
    IdDataset,
    OodDataset,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanRecord {
    pub x: String,
    pub y: String,
    pub label: Rel3,
}

impl HumanRecord {
    pub fn key(&self) -> PairKey {
        PairKey::new(&self.x, &self.y)
    }
}

/// Human-labeled pairs in file order. Never mutated once a run starts.
#[derive(Debug, Clone)]
pub struct HumanLabeledSet {
    source: LabelSource,
    records: Vec<HumanRecord>,
    index: HashMap<PairKey, usize>,
}

impl PartialEq for HumanLabeledSet {
    fn eq(&self, other: &Self) -> bool {
        self.source == other.source && self.records == other.records
    }
}

#[derive(Deserialize)]
struct LabelRow {
    item_x_id: String,
    item_y_id: String,
    label: String,
}

impl HumanLabeledSet {
    pub fn new(source: LabelSource) -> Self {
        HumanLabeledSet {
            source,
            records: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn push(&mut self, x: &str, y: &str, label: Rel3) -> Result<(), AnnotationError> {
        let key = PairKey::new(x, y);
        if self.index.contains_key(&key) {
            return Err(AnnotationError::DuplicatePair {
                line: self.records.len() + 1,
                pair: key.to_string(),
            });
        }
        self.index.insert(key, self.records.len());
        self.records.push(HumanRecord {
            x: x.to_owned(),
            y: y.to_owned(),
            label,
        });
        Ok(())
    }

    /// Parses the label CSV (`item_x_id,item_y_id,label`). Extra columns, as
    /// in LLM-labeled exports, are ignored. Line numbers count the header.
    pub fn from_csv(
        reader: impl Read,
        catalog: Option<&ItemCatalog>,
        source: LabelSource,
    ) -> Result<Self, AnnotationError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut set = HumanLabeledSet::new(source);
        for (i, row) in rdr.deserialize::<LabelRow>().enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| AnnotationError::LabelFile {
                line,
                message: e.to_string(),
            })?;
            let label: Rel3 = row.label.parse().map_err(|e: crate::labels::UnknownLabel| AnnotationError::LabelFile {
                line,
                message: e.to_string(),
            })?;
            if let Some(cat) = catalog {
                for id in [&row.item_x_id, &row.item_y_id] {
                    if cat.get(id).is_none() {
                        return Err(AnnotationError::LabelFile {
                            line,
                            message: format!("unknown item id {id:?}"),
                        });
                    }
                }
            }
            set.push(&row.item_x_id, &row.item_y_id, label).map_err(|e| match e {
                AnnotationError::DuplicatePair { pair, .. } => AnnotationError::DuplicatePair { line, pair },
                other => other,
            })?;
        }
        Ok(set)
    }

    pub fn write_csv(&self, out: impl Write) -> Result<(), AnnotationError> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| AnnotationError::LabelFile {
            line: 0,
            message: e.to_string(),
        };
        w.write_record(["item_x_id", "item_y_id", "label"]).map_err(csv_err)?;
        for r in &self.records {
            w.write_record([r.x.as_str(), r.y.as_str(), r.label.name()]).map_err(csv_err)?;
        }
        w.flush().map_err(|e| AnnotationError::LabelFile {
            line: 0,
            message: e.to_string(),
        })
    }

    pub fn source(&self) -> LabelSource {
        self.source
    }

    pub fn records(&self) -> &[HumanRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, key: &PairKey) -> bool {
        self.index.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = PairKey> + '_ {
        self.records.iter().map(HumanRecord::key)
    }

    pub fn labels(&self) -> Vec<Rel3> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Counts in [`Rel3`] index order.
    pub fn class_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for r in &self.records {
            counts[r.label.index()] += 1;
        }
        counts
    }

    /// Subset at the given record indexes, in that order.
    pub fn subset(&self, indexes: &[usize]) -> HumanLabeledSet {
        let mut out = HumanLabeledSet::new(self.source);
        for &i in indexes {
            let r = &self.records[i];
            out.push(&r.x, &r.y, r.label).expect("subset of a duplicate-free set");
        }
        out
    }
}

/// Reads a human label CSV, checking item ids against the catalog.
pub fn load_human_labels(
    path: impl AsRef<Path>,
    catalog: &ItemCatalog,
    source: LabelSource,
) -> Result<HumanLabeledSet, AnnotationError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| AnnotationError::Io {
        path: path.to_owned(),
        source,
    })?;
    let set = HumanLabeledSet::from_csv(file, Some(catalog), source)?;
    let [c, s, u] = set.class_counts();
    log::info!(
        "{}: {} pairs ({c} complementary, {s} substitute, {u} unrelated)",
        path.display(),
        set.len()
    );
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRecord {
    pub x: String,
    pub y: String,
    pub fbl9: Fbl9,
    pub rel3: Rel3,
    pub round: u32,
    pub annotator: String,
}

/// Annotator-labeled pairs accumulated over rounds; append-only and ordered
/// by pair key.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<LlmRecord>", into = "Vec<LlmRecord>")]
pub struct LlmLabeledSet {
    records: BTreeMap<PairKey, LlmRecord>,
}

impl TryFrom<Vec<LlmRecord>> for LlmLabeledSet {
    type Error = AnnotationError;

    fn try_from(records: Vec<LlmRecord>) -> Result<Self, Self::Error> {
        let mut set = LlmLabeledSet::default();
        for r in records {
            set.insert(r)?;
        }
        Ok(set)
    }
}

impl From<LlmLabeledSet> for Vec<LlmRecord> {
    fn from(set: LlmLabeledSet) -> Self {
        set.records.into_values().collect()
    }
}

impl LlmLabeledSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a record; rejects repeated pairs and inconsistent three-way labels.
    pub fn insert(&mut self, record: LlmRecord) -> Result<(), AnnotationError> {
        let key = PairKey::new(&record.x, &record.y);
        let expected = map_to_rel3(record.fbl9);
        if record.rel3 != expected {
            return Err(AnnotationError::MappingMismatch {
                pair: key.to_string(),
                found: record.rel3,
                expected,
            });
        }
        if self.records.contains_key(&key) {
            return Err(AnnotationError::AlreadyLabeled(key.to_string()));
        }
        self.records.insert(key, record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, key: &PairKey) -> bool {
        self.records.contains_key(key)
    }

    pub fn get(&self, key: &PairKey) -> Option<&LlmRecord> {
        self.records.get(key)
    }

    /// Records in pair-key order.
    pub fn iter(&self) -> impl Iterator<Item = (&PairKey, &LlmRecord)> {
        self.records.iter()
    }

    pub fn class_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for r in self.records.values() {
            counts[r.rel3.index()] += 1;
        }
        counts
    }

    /// Export with the extra columns `fbl9,round,annotator`.
    pub fn write_csv(&self, out: impl Write) -> Result<(), AnnotationError> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| AnnotationError::LabelFile {
            line: 0,
            message: e.to_string(),
        };
        w.write_record(["item_x_id", "item_y_id", "label", "fbl9", "round", "annotator"])
            .map_err(err)?;
        for r in self.records.values() {
            w.write_record([
                r.x.as_str(),
                r.y.as_str(),
                r.rel3.name(),
                r.fbl9.code(),
                &r.round.to_string(),
                r.annotator.as_str(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| AnnotationError::LabelFile {
            line: 0,
            message: e.to_string(),
        })
    }

    pub fn from_csv(reader: impl Read) -> Result<Self, AnnotationError> {
        #[derive(Deserialize)]
        struct Row {
            item_x_id: String,
            item_y_id: String,
            label: String,
            fbl9: String,
            round: u32,
            annotator: String,
        }
        let mut set = LlmLabeledSet::new();
        let mut rdr = csv::Reader::from_reader(reader);
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let line = i + 2;
            let bad = |message: String| AnnotationError::LabelFile { line, message };
            let row = row.map_err(|e| bad(e.to_string()))?;
            let rel3: Rel3 = row.label.parse().map_err(|e: crate::labels::UnknownLabel| bad(e.to_string()))?;
            let fbl9: Fbl9 = row.fbl9.parse().map_err(|e: crate::labels::UnknownLabel| bad(e.to_string()))?;
            set.insert(LlmRecord {
                x: row.item_x_id,
                y: row.item_y_id,
                fbl9,
                rel3,
                round: row.round,
                annotator: row.annotator,
            })?;
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_rows() {
        let text = "item_x_id,item_y_id,label\ni1,i2,complementary\ni3,i4,substitute\n";
        let set = HumanLabeledSet::from_csv(text.as_bytes(), None, LabelSource::Custom).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.class_counts(), [1, 1, 0]);
    }

    #[test]
    fn duplicate_pair_rejected_in_either_order() {
        let text = "item_x_id,item_y_id,label\ni1,i2,complementary\ni2,i1,unrelated\n";
        match HumanLabeledSet::from_csv(text.as_bytes(), None, LabelSource::Custom) {
            Err(AnnotationError::DuplicatePair { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_label_rejected() {
        let text = "item_x_id,item_y_id,label\ni1,i2,friends\n";
        assert!(matches!(
            HumanLabeledSet::from_csv(text.as_bytes(), None, LabelSource::Custom),
            Err(AnnotationError::LabelFile { line: 2, .. })
        ));
    }

    #[test]
    fn llm_set_invariants() {
        let mut set = LlmLabeledSet::new();
        let rec = |x: &str, y: &str, l: Fbl9| LlmRecord {
            x: x.into(),
            y: y.into(),
            fbl9: l,
            rel3: map_to_rel3(l),
            round: 1,
            annotator: "oracle".into(),
        };
        set.insert(rec("b", "a", Fbl9::C2)).unwrap();
        assert!(matches!(set.insert(rec("a", "b", Fbl9::D)), Err(AnnotationError::AlreadyLabeled(_))));
        let mut bad = rec("c", "d", Fbl9::A);
        bad.rel3 = Rel3::Unrelated;
        assert!(matches!(set.insert(bad), Err(AnnotationError::MappingMismatch { .. })));

        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("item_x_id,item_y_id,label,fbl9,round,annotator\n"));
        assert_eq!(LlmLabeledSet::from_csv(buf.as_slice()).unwrap(), set);
        // The export is also readable as a plain label file.
        let plain = HumanLabeledSet::from_csv(buf.as_slice(), None, LabelSource::Custom).unwrap();
        assert_eq!(plain.class_counts(), [1, 0, 0]);
    }
}
