//! Allocation-only core of the re-ranking engine.
//!
//! Everything here is pure: exact cosine top-K over an in-memory embedding
//! store, the three prompting stages (deconstruction, per-candidate
//! evaluation, listwise ranking) expressed against the [`chat::ChatBackend`]
//! and [`pipeline::ImageSource`] traits, reply parsers, permutation repair and
//! the retrieval metrics. File formats, HTTP, caching and the CLI live in the
//! `cotrr` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod chat;
pub mod harness;
pub mod metrics;
pub mod pipeline;
pub mod store;

pub use chat::{
    cache_key, BackendError, ChatBackend, ChatRequest, ChatResponse, ContentPart, ImagePart, Message, RequestContext,
    Role, Stage,
};
pub use harness::{chat_query_for_round, splice_ranking, ManifestRecord, TaskKind, TaskProfile};
pub use metrics::{HitsVariant, MetricKind, MetricSpec};
pub use pipeline::{
    repair_permutation, CandidateEvaluation, Judgment, Mode, Pipeline, PipelineConfig, Provenance, Query, RankedList,
    SemanticDecomposition, Verdict,
};
pub use store::{Candidate, CandidateList, EmbeddingStore, StoreError};
