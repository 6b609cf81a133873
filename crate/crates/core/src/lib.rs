//! Joint turn-level and dialogue-level user satisfaction estimation.
//!
//! The crate is organized bottom-up:
//!
//! - [`corpus`]: dialogue data model, line-delimited JSON I/O, splitting and
//!   a synthetic corpus generator with planted ground truth.
//! - [`embedding`]: sentence-embedding providers and vector similarity.
//! - [`features`]: per-turn feature extraction and model input assembly.
//! - [`tensor`]: dense tensors, a reverse-mode tape, optimizers and checkpoints.
//! - [`models`]: the causal LSTM turn model, BiLSTM dialogue models and the
//!   joint model with attention over predicted turn ratings.
//! - [`training`]: batching, training with early stopping, grid search.
//! - [`metrics`]: Pearson r, F-score on the dissatisfactory class, skewness
//!   and bootstrap intervals.
//! - [`analysis`]: PMI tables, slot-value coverage, attention reports.
//! - [`pipeline`]: run configuration and the orchestration used by the CLI.
//!
//! Data-parallel loops (per-dialogue gradients, feature extraction, bootstrap
//! resamples, grid-search trials) run on rayon when the `parallel` feature is
//! enabled and sequentially otherwise. Results are identical either way.

pub mod analysis;
pub mod corpus;
pub mod embedding;
pub mod features;
pub mod metrics;
pub mod models;
pub mod par;
pub mod pipeline;
pub mod seed;
pub mod tensor;
pub mod training;

pub use corpus::{Corpus, Dialogue, Turn};
pub use embedding::{EmbeddingProvider, EmbeddingVector};
pub use features::TurnFeatures;
pub use models::{ModelConfig, ModelParameters, Prediction, Variant};
pub use tensor::{Tape, Tensor, Var};

/// A similarity-style value together with a flag marking a defined-by-convention
/// degenerate case (zero norm, empty sets, 0/0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scored {
    pub value: f64,
    pub degenerate: bool,
}

impl Scored {
    pub fn new(value: f64) -> Self {
        Self { value, degenerate: false }
    }

    pub fn degenerate(value: f64) -> Self {
        Self { value, degenerate: true }
    }
}
