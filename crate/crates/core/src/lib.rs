//! Medication regimen extraction from conversation transcripts with
//! question-answering pointer-generator networks.

pub mod autodiff;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod evaluation;
pub mod pgnet;
pub mod pipeline;
pub mod training;
pub mod preprocess;

pub use error::{Error, Result};
