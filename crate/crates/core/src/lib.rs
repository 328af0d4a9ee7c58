//! Hierarchical offensive-language detection on OLID-format tweets.
//!
//! The pipeline runs end to end on a CPU:
//!
//! ```text
//! TSV ─► corpus ─► preprocess ─► tokenizer ─► encoder ─► objectives ─► training
//!                                                                  └─► evaluation
//! ```
//!
//! * [`corpus`] parses the three-level label schema (A: NOT/OFF, B: UNT/TIN,
//!   C: IND/GRP/OTH), splits datasets and rebalances classes.
//! * [`preprocess`] cleans tweets (mentions, URLs, emoji, hashtags, case, punctuation).
//! * [`tokenizer`] maps clean text onto fixed-length id sequences.
//! * [`encoder`] is a small transformer encoder with hand-written backpropagation,
//!   supporting absolute (BERT-style) or relative (XLNet-style) positions.
//! * [`objectives`] provides classification heads, masked-LM and permutation-LM
//!   losses, and the A→B→C prediction cascade.
//! * [`training`] holds gradients, AdamW, the fit loop and checkpoints.
//! * [`evaluation`] computes confusion matrices, per-class P/R/F1 and macro-F1.
//!
//! Data-parallel work (per-example gradients, batch prediction) goes through
//! [`parallel`], which uses rayon when the `parallel` feature is enabled and a
//! sequential loop otherwise. Both paths reduce in the same fixed order, so
//! results are bit-identical.

pub mod commands;
pub mod config;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod objectives;
pub mod parallel;
pub mod preprocess;
pub mod seed;
pub mod tensor;
pub mod tokenizer;
pub mod training;

pub use error::{Error, Result};
