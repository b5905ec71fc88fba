//! Reasoning pipeline for first-order-logic queries over knowledge graphs.
//!
//! The pipeline turns a triplet file and a set of typed FOL queries into
//! ranked answer lists:
//!
//! 1. [`kg`] — load and abstract the graph (labels become opaque `e<i>`/`r<j>`
//!    IDs), build forward/backward adjacency indexes.
//! 2. [`query`] — parse and validate the 14 fixed query shapes.
//! 3. [`retrieval`] — extract the k-level neighborhood of a query under a
//!    token budget and serialize it as prompt context.
//! 4. [`plan`] — lower a query into single-operation steps wired by
//!    placeholders, scheduled into dependency phases.
//! 5. [`prompts`] — render full-query and per-step prompts from fixed
//!    templates, substituting cached answers for placeholders.
//! 6. [`executor`] — drive the phases against a pluggable answer backend
//!    (exact symbolic, recorded replay, or a remote chat-completions API).
//! 7. [`ground_truth`] — exact brute-force evaluation over the full graph,
//!    used for gold sets and as the oracle in equivalence tests.
//! 8. [`metrics`] — MRR / HITS@K per query type and token-distribution
//!    statistics.

pub mod error;
pub mod executor;
pub mod ground_truth;
pub mod ids;
pub mod kg;
pub mod metrics;
pub mod plan;
pub mod prompts;
pub mod query;
pub mod retrieval;

pub use error::Error;
pub use ids::{EntityId, RelationId};
pub use kg::{IdMap, KnowledgeGraph, Triplet};
pub use plan::{DecompositionPlan, ElementaryStep, StepOp};
pub use query::{QueryDag, QueryType};
pub use retrieval::{Neighborhood, RetrievalConfig, Tokenizer};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
