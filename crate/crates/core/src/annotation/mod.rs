//! Annotation: labeled-set containers, the annotator abstraction, prompt and
//! response handling, the chat-completion client, consistency voting, and the
//! persistent annotation cache.

mod cache;
mod consistency;
mod datasets;
mod llm;
mod parse;
mod prompt;

use std::path::PathBuf;

pub use cache::{AnnotationCache, CacheKey};
pub use consistency::{annotate_consistent, Annotator, ConsistencyResult, OracleAnnotator, Unanimity};
pub use datasets::{load_human_labels, HumanLabeledSet, HumanRecord, LabelSource, LlmLabeledSet, LlmRecord};
pub use llm::{AnnotationLog, LlmAnnotator, LlmClient, LlmConfig};
pub use parse::parse_label;
pub use prompt::{build_prompt, prompt_hash, SYSTEM_MESSAGE};

pub use crate::labels::{map_to_rel3, Fbl9};

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("unparseable annotator response: {0}")]
    Unparseable(String),
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("line {line}: {message}")]
    LabelFile { line: usize, message: String },
    #[error("line {line}: duplicate pair {pair}")]
    DuplicatePair { line: usize, pair: String },
    #[error("pair {0} is already in the LLM-labeled set")]
    AlreadyLabeled(String),
    #[error("record {pair}: three-way label {found} does not match mapped label {expected}")]
    MappingMismatch {
        pair: String,
        found: crate::Rel3,
        expected: crate::Rel3,
    },
    #[error(transparent)]
    Catalog(#[from] crate::catalog::CatalogError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl AnnotationError {
    /// Errors after which the pair is skipped for the round instead of
    /// aborting the run.
    pub fn is_skippable(&self) -> bool {
        matches!(self, AnnotationError::Unparseable(_) | AnnotationError::Transport { .. })
    }
}
