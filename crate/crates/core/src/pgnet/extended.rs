use crate::preprocess::{Vocabulary, STOP};

/// Vocabulary plus the distinct out-of-vocabulary input tokens of one
/// example; OOV ids follow the vocabulary in order of first occurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtendedVocab {
    base: usize,
    /// Extended id of each input position.
    pub input_ids: Vec<usize>,
    pub oov: Vec<String>,
}

impl ExtendedVocab {
    pub fn new<S: AsRef<str>>(input: &[S], vocab: &Vocabulary) -> Self {
        let base = vocab.len();
        let mut oov: Vec<String> = Vec::new();
        let input_ids = input
            .iter()
            .map(|tok| {
                let tok = tok.as_ref();
                match vocab.id(tok) {
                    Some(id) => id,
                    None => match oov.iter().position(|w| w == tok) {
                        Some(k) => base + k,
                        None => {
                            oov.push(tok.to_string());
                            base + oov.len() - 1
                        }
                    },
                }
            })
            .collect();
        ExtendedVocab { base, input_ids, oov }
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn len(&self) -> usize {
        self.base + self.oov.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Extended id of `word`, or `None` if it is neither in the vocabulary
    /// nor in the input.
    pub fn id(&self, word: &str, vocab: &Vocabulary) -> Option<usize> {
        vocab
            .id(word)
            .or_else(|| self.oov.iter().position(|w| w == word).map(|k| self.base + k))
    }

    /// Surface form of `id`; reserved ids render as the empty string.
    pub fn render<'a>(&'a self, id: usize, vocab: &'a Vocabulary) -> &'a str {
        if id >= self.base {
            &self.oov[id - self.base]
        } else if Vocabulary::is_reserved(id) {
            ""
        } else {
            vocab.word(id)
        }
    }

    /// Vocabulary id to feed back into the decoder for `id`.
    pub fn feed_id(&self, id: usize) -> usize {
        if id >= self.base {
            crate::preprocess::UNK
        } else {
            id
        }
    }

    /// Target ids for `tokens` under a step `budget`: truncated to the
    /// budget, with `STOP` appended when shorter. `None` marks a target that
    /// cannot be produced.
    pub fn targets<S: AsRef<str>>(&self, tokens: &[S], budget: usize, vocab: &Vocabulary) -> Vec<Option<usize>> {
        let mut out: Vec<Option<usize>> = tokens
            .iter()
            .take(budget)
            .map(|t| self.id(t.as_ref(), vocab))
            .collect();
        if out.len() < budget {
            out.push(Some(STOP));
        }
        out
    }
}
