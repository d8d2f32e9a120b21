//! Dual-encoder contrastive embeddings for molecules written in two string
//! languages (SMILES and IUPAC names).
//!
//! Each language has its own Transformer encoder; both are trained with a
//! symmetric InfoNCE objective so that the two renderings of one molecule land
//! close together in a shared fingerprint space. The crate also covers
//! tokenization, exact cosine retrieval, downstream heads and metrics, and
//! representation-similarity diagnostics.

pub mod contrastive;
pub mod downstream;
pub mod encoder;
pub mod error;
pub mod index;
pub mod io;
pub mod seed;
pub mod numerics;
pub mod pipeline;
pub mod repr;
pub mod tokenizers;

pub use error::{Error, Result};
