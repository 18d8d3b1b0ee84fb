//! Token embedding providers: a trainable lookup table, precomputed
//! contextual vectors combined by a learned layer mixer, and a
//! deterministic pseudo-contextual embedder.

mod pseudo;
mod store;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use pseudo::{pseudo_contextual_embed, PSEUDO_WINDOW};
pub use store::{average_subwords, index_path, VectorStore, STORE_MAGIC, STORE_VERSION};

use crate::autodiff::{Mat, ParamId, ParamStore, Tape, Var};
use crate::error::{Error, Result};
use crate::preprocess::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Lookup,
    Store,
    Pseudo,
}

impl EmbeddingKind {
    pub fn name(self) -> &'static str {
        match self {
            EmbeddingKind::Lookup => "lookup",
            EmbeddingKind::Store => "store",
            EmbeddingKind::Pseudo => "pseudo",
        }
    }
}

impl fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmbeddingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lookup" => Ok(EmbeddingKind::Lookup),
            "store" => Ok(EmbeddingKind::Store),
            "pseudo" => Ok(EmbeddingKind::Pseudo),
            other => Err(Error::config(format!("unknown embedding kind `{other}`"))),
        }
    }
}

/// Tokens to embed plus the key under which precomputed vectors are stored.
#[derive(Debug, Clone, Copy)]
pub struct EmbeddingRequest<'a> {
    pub tokens: &'a [String],
    pub example_id: &'a str,
}

impl<'a> EmbeddingRequest<'a> {
    pub fn new(tokens: &'a [String], example_id: &'a str) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::data(format!("empty embedding request for `{example_id}`")));
        }
        Ok(EmbeddingRequest { tokens, example_id })
    }
}

/// Vocabulary ids of `tokens`, with `UNK` for unknown words.
pub fn token_ids(tokens: &[String], vocab: &Vocabulary) -> Vec<usize> {
    tokens.iter().map(|t| vocab.id_or_unk(t)).collect()
}

/// Rows of the lookup `table` for each token.
pub fn lookup_embed(t: &mut Tape, table: ParamId, request: EmbeddingRequest, vocab: &Vocabulary) -> Var {
    let ids = token_ids(request.tokens, vocab);
    let table = t.param(table);
    t.gather_rows(table, &ids)
}

/// Softmax-normalized mixing weights plus a scalar scale over `L` layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerMixer {
    pub mix: ParamId,
    pub scale: ParamId,
    pub layers: usize,
}

impl LayerMixer {
    /// Registers `<prefix>.mix` (zeros, i.e. a uniform mixture) and
    /// `<prefix>.scale` (one).
    pub fn register(params: &mut ParamStore, prefix: &str, layers: usize) -> Self {
        LayerMixer {
            mix: params.add_zeros(format!("{prefix}.mix"), 1, layers),
            scale: params.add(format!("{prefix}.scale"), Mat::scalar(1.0)),
            layers,
        }
    }

    /// Mixture weights after the softmax.
    pub fn weights(&self, params: &ParamStore) -> Vec<f64> {
        let mut w = params.get(self.mix).data.clone();
        crate::autodiff::softmax_in_place(&mut w);
        w
    }
}

/// `scale · Σ_l softmax(mix)_l · layers[l]` on the tape.
pub fn mix_layers(t: &mut Tape, layers: &[Mat], mixer: &LayerMixer) -> Result<Var> {
    if layers.len() != mixer.layers {
        return Err(Error::Shape(format!(
            "mixer expects {} layers, got {}",
            mixer.layers,
            layers.len()
        )));
    }
    let mix = t.param(mixer.mix);
    let w = t.softmax_rows(mix);
    let mut acc = None;
    for (l, layer) in layers.iter().enumerate() {
        let c = t.constant(layer.clone());
        let wl = t.pick(w, 0, l);
        let term = t.mul_scalar(c, wl);
        acc = Some(match acc {
            None => term,
            Some(a) => t.add(a, term),
        });
    }
    let scale = t.param(mixer.scale);
    Ok(t.mul_scalar(acc.expect("at least one layer"), scale))
}

/// Mixed contextual embedding of a request whose vectors live in `store`.
pub fn mixed_contextual_embed(
    t: &mut Tape,
    request: EmbeddingRequest,
    store: &VectorStore,
    mixer: &LayerMixer,
) -> Result<Var> {
    let layers = store.sequence(request.example_id, request.tokens.len())?;
    mix_layers(t, &layers, mixer)
}

/// Source of per-layer vectors for building a [`VectorStore`] outside the
/// training process.
pub trait ContextualEmbedder {
    fn dim(&self) -> usize;
    fn layers(&self) -> usize;
    /// `layers()` matrices of `tokens.len() × dim()`.
    fn embed(&self, tokens: &[String]) -> Vec<Mat>;
}

/// Multi-layer pseudo-contextual embedder; layer `l` uses seed `seed + l`.
#[derive(Debug, Clone, Copy)]
pub struct PseudoEmbedder {
    pub d: usize,
    pub layers: usize,
    pub seed: u64,
}

impl ContextualEmbedder for PseudoEmbedder {
    fn dim(&self) -> usize {
        self.d
    }

    fn layers(&self) -> usize {
        self.layers
    }

    fn embed(&self, tokens: &[String]) -> Vec<Mat> {
        (0..self.layers)
            .map(|l| pseudo_contextual_embed(tokens, self.d, self.seed.wrapping_add(l as u64)))
            .collect()
    }
}

/// Runs `embedder` over keyed token sequences and collects the vectors.
pub fn build_store<'a, E, I>(embedder: &E, sequences: I) -> Result<VectorStore>
where
    E: ContextualEmbedder + ?Sized,
    I: IntoIterator<Item = (&'a str, &'a [String])>,
{
    let mut store = VectorStore::new(embedder.dim(), embedder.layers())?;
    for (id, tokens) in sequences {
        store.insert_sequence(id, &embedder.embed(tokens))?;
    }
    Ok(store)
}
