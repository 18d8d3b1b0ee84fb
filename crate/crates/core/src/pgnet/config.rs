use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingKind;
use crate::error::{Error, Result};
use crate::preprocess::{Field, Mode};

/// Which network is built on top of the shared encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    /// One coattention module and one decoder shared by both questions.
    Qa,
    /// One coattention module and one decoder per field, conditioned on the
    /// bare medication token.
    Md,
    /// Plain pointer-generator over the input, used for pretraining.
    Summarizer,
}

impl Architecture {
    pub fn name(self) -> &'static str {
        match self {
            Architecture::Qa => "qa",
            Architecture::Md => "md",
            Architecture::Summarizer => "summarizer",
        }
    }

    /// Number of coattention + decoder heads.
    pub fn heads(self) -> usize {
        match self {
            Architecture::Md => 2,
            Architecture::Qa | Architecture::Summarizer => 1,
        }
    }

    pub fn has_coattention(self) -> bool {
        !matches!(self, Architecture::Summarizer)
    }

    /// Conditioning mode of the examples this network consumes.
    pub fn mode(self) -> Mode {
        match self {
            Architecture::Md => Mode::Entity,
            _ => Mode::Qa,
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qa" => Ok(Architecture::Qa),
            "md" => Ok(Architecture::Md),
            "summarizer" => Ok(Architecture::Summarizer),
            other => Err(Error::config(format!("unknown model `{other}` (expected qa or md)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    /// Per-direction encoder size and decoder state size.
    pub hidden: usize,
    pub embed_dim: usize,
    pub embedding: EmbeddingKind,
    /// Layers per record in the vector store (store embeddings only).
    pub store_layers: usize,
    pub pseudo_seed: u64,
    pub max_encoder_steps: usize,
    pub dosage_steps: usize,
    pub frequency_steps: usize,
    pub summary_steps: usize,
    /// Uniform range of recurrent, attention and output weights.
    pub init_range: f64,
    /// Uniform range of embedding tables.
    #[serde(default = "default_embedding_init_range")]
    pub embedding_init_range: f64,
    /// Beams kept while decoding; 1 is greedy.
    #[serde(default = "default_beam_width")]
    pub beam_width: usize,
}

fn default_embedding_init_range() -> f64 {
    1.0
}

fn default_beam_width() -> usize {
    1
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            architecture: Architecture::Qa,
            hidden: 128,
            embed_dim: 128,
            embedding: EmbeddingKind::Lookup,
            store_layers: 4,
            pseudo_seed: 0,
            max_encoder_steps: 100,
            dosage_steps: 1,
            frequency_steps: 3,
            summary_steps: 12,
            init_range: 0.1,
            embedding_init_range: 1.0,
            beam_width: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden", self.hidden),
            ("embed_dim", self.embed_dim),
            ("max_encoder_steps", self.max_encoder_steps),
            ("dosage_steps", self.dosage_steps),
            ("frequency_steps", self.frequency_steps),
            ("summary_steps", self.summary_steps),
            ("beam_width", self.beam_width),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.embedding == EmbeddingKind::Store && self.store_layers == 0 {
            return Err(Error::config("store_layers must be positive"));
        }
        if !(self.init_range > 0.0 && self.init_range.is_finite()) {
            return Err(Error::config("init_range must be positive"));
        }
        if !(self.embedding_init_range > 0.0 && self.embedding_init_range.is_finite()) {
            return Err(Error::config("embedding_init_range must be positive"));
        }
        Ok(())
    }

    pub fn budget(&self, field: Field) -> usize {
        match field {
            Field::Dosage => self.dosage_steps,
            Field::Frequency => self.frequency_steps,
        }
    }

    /// Width of the matrix the decoder attends over.
    pub fn memory_width(&self) -> usize {
        if self.architecture.has_coattention() {
            3 * self.hidden
        } else {
            2 * self.hidden
        }
    }

    /// Layers mixed by the embedding mixer, if any.
    pub fn mixer_layers(&self) -> Option<usize> {
        match self.embedding {
            EmbeddingKind::Lookup => None,
            EmbeddingKind::Store => Some(self.store_layers),
            EmbeddingKind::Pseudo => Some(1),
        }
    }
}

/// Analytic parameter counts by component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamCount {
    pub embedding: usize,
    pub encoder: usize,
    pub coattention_per_head: usize,
    pub decoder_per_head: usize,
    pub heads: usize,
    pub total: usize,
}

/// Scalar parameter count of a model with `config` over `vocab_size` ids.
pub fn parameter_count(config: &ModelConfig, vocab_size: usize) -> ParamCount {
    let (h, d, v) = (config.hidden, config.embed_dim, vocab_size);
    let m = config.memory_width();
    let lstm = |input: usize| input * 4 * h + h * 4 * h + 4 * h;
    let embedding = match config.mixer_layers() {
        None => v * d,
        Some(l) => l + 1 + v * d,
    };
    let encoder = 2 * lstm(d);
    let coattention_per_head = if config.architecture.has_coattention() {
        (2 * h) * (2 * h) + (4 * h) * h + h
    } else {
        0
    };
    let decoder_per_head = 2 * (2 * h * h + h)
        + (m * h + h * h + h + h)
        + lstm(d + m)
        + ((h + m) * h + h)
        + (h * v + v)
        + (m + h + d + 1);
    let heads = config.architecture.heads();
    ParamCount {
        embedding,
        encoder,
        coattention_per_head,
        decoder_per_head,
        heads,
        total: embedding + encoder + heads * (coattention_per_head + decoder_per_head),
    }
}
