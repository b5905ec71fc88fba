//! Error type shared across the pipeline.

use thiserror::Error;

/// Errors produced by graph loading, query validation, planning, execution,
/// and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// A triplet line did not split into exactly three tab-separated fields.
    #[error("malformed triplet line {0}: expected 3 tab-separated fields")]
    MalformedLine(usize),

    /// The input produced zero triplets.
    #[error("empty graph: no triplets loaded")]
    EmptyGraph,

    /// An entity or relation ID is not present in the graph.
    #[error("unknown id: {0}")]
    UnknownId(String),

    /// A query record carried a type tag outside the 14 known shapes.
    #[error("unknown query type: {0}")]
    UnknownType(String),

    /// Anchor or relation slot count does not match the query type.
    #[error("slot mismatch for {qtype}: expected {expected} {slot}s, got {got}")]
    SlotMismatch {
        qtype: String,
        slot: &'static str,
        expected: usize,
        got: usize,
    },

    /// A step prompt referenced a placeholder that no earlier phase wrote.
    #[error("missing placeholder: {0}")]
    MissingPlaceholder(String),

    /// An answer-cache slot was written twice.
    #[error("answer cache slot written twice: {0}")]
    SlotRewrite(String),

    /// A plan's dependencies do not admit a phase assignment.
    #[error("cyclic dependency in plan for {0}")]
    CyclicDependency(String),

    /// A backend call failed after exhausting its retry budget.
    #[error("backend failure at step {step}: {cause}")]
    BackendFailure { step: usize, cause: String },

    /// A replay backend had no trace entry for a prompt.
    #[error("replay trace has no entry for prompt hash {0}")]
    MissingTrace(String),

    /// Evaluation found a prediction with no matching gold record.
    #[error("missing gold answers for query ids: {}", .0.join(", "))]
    MissingGold(Vec<String>),

    /// Token statistics were requested for a type with zero records.
    #[error("no records for query type {0}")]
    EmptyBucket(String),

    /// Configuration failed validation.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("malformed record: {0}")]
    Record(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
