//! Pointer-generator networks: bidirectional LSTM encoder, coattention
//! conditioning, and attention decoders with a copy mechanism.
//!
//! Two extraction variants share the encoder. `Qa` runs one coattention
//! module and one decoder per templated question; `Md` conditions on the bare
//! medication token and owns a coattention module and decoder per field.
//! `Summarizer` is the question-free network used for encoder pretraining.

mod checkpoint;
mod config;
mod extended;
mod forward;
mod model;

pub use checkpoint::{CheckpointHeader, TensorEntry, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{parameter_count, Architecture, ModelConfig, ParamCount};
pub use extended::ExtendedVocab;
pub use forward::{
    condition_key, embedding_sequences, nll, Decoded, Objective, StepRecord, Task, UNREACHABLE_EPS,
};
pub use model::{Dropout, Encoded, Memory, PgNet, StepVars};

#[cfg(test)]
mod tests;
