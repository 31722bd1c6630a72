//! Attributed A-vs-B comparison summaries built from a document corpus.
//!
//! A run loads a corpus, tiles each entity's sentences to fit the model
//! window, extracts attribute/value/evidence triples, merges attributes and
//! values across entities, rates contrast and usefulness, and refines the
//! intermediate results with a critique and revision loop. The finished
//! [`ComparisonSummary`] cites every value back to a source sentence.

pub mod critique;
pub mod eval;
pub mod export;
pub mod gateway;
pub mod ingest;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod rules;
pub mod scalar;
pub mod text;
pub mod tile;

pub use export::{export_training_mix, TaskMix, TaskTag, TrainingCandidate, TrainingExample};
pub use gateway::{CompletionBackend, DeterministicBackend, Gateway, GatewayConfig, RemoteBackend, StageTag};
pub use ingest::{load_corpus, Corpus};
pub use model::ComparisonSummary;
pub use pipeline::{run_pipeline, PipelineConfig, PipelineError, RunOutput};
pub use scalar::Scalar;

/// Scalar used for reported metrics.
pub type Score = f64;
/// Scalar for exact metric checks.
pub type ExactScore = num_rational::Ratio<u64>;
