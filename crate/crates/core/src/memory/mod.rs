//! Per-agent concept memory: storage, multi-modal retrieval and forgetting.

mod decay;
mod embed;
mod node;
mod scoring;
mod store;

pub use decay::{assign_lifespan, DecayPolicy, LifespanParams};
pub use embed::{extract_keywords, tokenize, Embedder, HashEmbedder};
pub use node::{ConceptKind, ConceptNode, Interval, TimeScope};
pub use scoring::{
    overlap_sets, overlap_time, recency, recency_days, score_keyword, score_semantic, score_spatiotemporal,
};
pub use store::{combined_score, rank_order, MemoryStore, NewConcept, RetrievalQuery, RetrievalWeights};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MemoryError {
    #[error("embedding dimension mismatch: query {query}, node {node}")]
    DimensionMismatch { query: usize, node: usize },
    #[error("importance {0} outside [0, 1]")]
    ImportanceOutOfRange(f64),
    #[error("invalid decay policy: {0}")]
    InvalidPolicy(String),
    #[error("invalid retrieval weights: {0}")]
    InvalidWeights(String),
    #[error("memory store does not parse: {0}")]
    Parse(String),
}
