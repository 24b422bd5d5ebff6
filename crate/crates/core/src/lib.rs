//! Parallel pointer network for key information extraction.
//!
//! The crate covers the whole pipeline on form-like documents:
//!
//! - [`corpus`]: a synthetic complex-layout form generator, JSONL persistence
//!   and zero-/few-shot/full splits.
//! - [`serialize`]: reading-order serialization, vocabulary and assembly of
//!   `<s> Q1 [T] Q2 ... </s> C` input windows.
//! - [`linking`]: the eleven token-linking channels, isolation masks,
//!   thresholding and word-graph decoding.
//! - [`model`]: embeddings, transformer encoder, rotary bilinear scorer,
//!   circle loss, analytic gradients and checkpoints.
//! - [`train`] and [`eval`]: optimization loop, entity-level metrics,
//!   evaluation protocols, ablations and the parallel-vs-sequential benchmark.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod linking;
pub mod model;
pub mod serialize;
pub mod train;

pub use error::{Error, Result};
