//! Active learning of item-pair relation labels.
//!
//! The engine grows a small human-labeled set of pair relations by repeatedly
//! (1) drawing candidate pairs per fine-grained category, (2) scoring them by
//! the current ensemble's uncertainty, (3) annotating the most uncertain pair
//! per category through a pluggable annotator under a unanimity protocol, and
//! (4) retraining a bagged logistic-regression ensemble on the grown set.
//!
//! Module map:
//! - [`catalog`]: items, category hierarchy, synthetic worlds and their
//!   ground-truth relation oracle.
//! - [`features`]: hashed pair feature vectors.
//! - [`classifier`]: multinomial logistic regression and the undersampled
//!   bagging ensemble.
//! - [`sampling`]: candidate generation, uncertainty scorers, per-category
//!   selection.
//! - [`annotation`]: the nine-way label vocabulary, prompt and response
//!   handling, the chat-completion client, consistency voting and caching.
//! - [`engine`]: the resumable round loop and its run directory.
//! - [`eval`]: macro-F1, Pearson diversity, fold plans and gain analysis.

pub mod annotation;
pub mod catalog;
pub mod classifier;
pub mod config;
pub mod engine;
pub mod eval;
pub mod features;
pub mod labels;
pub mod pair;
pub mod sampling;
pub mod seed;

mod error;
pub(crate) mod fsutil;

pub use error::{Error, Result};
pub use labels::{map_to_rel3, Fbl9, Rel3};
pub use pair::PairKey;
