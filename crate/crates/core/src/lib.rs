//! Subword-level re-tokenization of labeled NER corpora toward a target
//! domain via entropic optimal transport.

pub mod config;
pub mod corpus;
pub mod diagnostics;
pub mod error;
pub mod estimate;
pub mod lexicon;
pub mod pipeline;
pub mod policy;
pub mod segment;
pub mod sinkhorn;
pub mod sparse;

pub use error::{Error, ErrorClass, Result};
