//! Clinical-note code prediction pipeline.
//!
//! End-to-end machinery for multi-label ICD-9 diagnosis/procedure code
//! prediction from free-text clinical notes:
//!
//! - [`ingest`]: streaming CSV loaders for MIMIC-shaped note/code tables and
//!   a deterministic synthetic fixture generator.
//! - [`labels`]: top-K label vocabulary construction, one-hot encoding,
//!   note/label joining, train/test splitting, and dataset statistics.
//! - [`tokenizer`]: text normalization, greedy WordPiece subword
//!   tokenization, and fixed-length input encoding.
//! - [`model`]: a configurable bidirectional transformer encoder with a
//!   multi-label sigmoid head, trained by binary cross-entropy on logits,
//!   with exact gradients for every parameter.
//! - [`trainer`]: Adam fine-tuning with deterministic, resumable
//!   checkpointing.
//! - [`eval`]: per-label and aggregate accuracy/precision/recall/F1/AUC,
//!   ROC curves, and report emission.
//! - [`pipeline`]: orchestration used by the CLI (prepare, tokenize, train,
//!   eval, eda) plus the run configuration format.

pub mod eval;
pub mod ingest;
pub mod labels;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod tokenizer;
pub mod trainer;
