use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const START: usize = 2;
pub const STOP: usize = 3;

const RESERVED: [&str; 4] = ["<pad>", "<unk>", "<start>", "<stop>"];

/// Word ↔ id map with four reserved ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
    threshold: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    threshold: usize,
    words: Vec<String>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Vocabulary::from_words(r.words, r.threshold)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            threshold: v.threshold,
            words: v.words[RESERVED.len()..].to_vec(),
        }
    }
}

impl Vocabulary {
    /// Builds from non-reserved words in id order.
    pub fn from_words(words: Vec<String>, threshold: usize) -> Self {
        let mut all: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        for w in words {
            if !all.contains(&w) {
                all.push(w);
            }
        }
        let index = all.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocabulary {
            words: all,
            index,
            threshold,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.len() == RESERVED.len()
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Id of `word`, `UNK` when absent.
    pub fn id_or_unk(&self, word: &str) -> usize {
        self.id(word).unwrap_or(UNK)
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn is_reserved(id: usize) -> bool {
        id < RESERVED.len()
    }

    /// Non-reserved words in id order.
    pub fn words(&self) -> &[String] {
        &self.words[RESERVED.len()..]
    }
}

/// Keeps words seen at least `threshold` times; ordered by count descending
/// then lexicographically.
pub fn build_vocabulary<I, S>(tokens: I, threshold: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if threshold == 0 {
        return Err(Error::config("vocabulary threshold must be at least 1"));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut any = false;
    for t in tokens {
        any = true;
        *counts.entry(t.as_ref().to_string()).or_default() += 1;
    }
    if !any {
        return Err(Error::data("cannot build a vocabulary from an empty training set"));
    }
    let mut kept: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(w, c)| *c >= threshold && !RESERVED.contains(&w.as_str()))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(Vocabulary::from_words(
        kept.into_iter().map(|(w, _)| w).collect(),
        threshold,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_fixture() {
        let v = build_vocabulary("a a b".split(' '), 1).unwrap();
        assert_eq!(v.words(), &["a".to_string(), "b".to_string()]);
        assert_eq!(v.len(), 6);
        assert_eq!(v.id("a"), Some(4));
        assert_eq!(v.id_or_unk("zzz"), UNK);
    }

    #[test]
    fn threshold_filters() {
        let v = build_vocabulary("a a b c c c".split(' '), 2).unwrap();
        assert_eq!(v.words(), &["c".to_string(), "a".to_string()]);
    }

    #[test]
    fn reserved_ids_distinct() {
        let ids = [PAD, UNK, START, STOP];
        for (i, a) in ids.iter().enumerate() {
            assert!(*a < 4);
            for b in &ids[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn empty_rejected() {
        assert!(build_vocabulary(Vec::<String>::new(), 1).is_err());
        assert!(build_vocabulary(["a"], 0).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let v = build_vocabulary("x y y z".split(' '), 1).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&s).unwrap();
        assert_eq!(v, back);
    }
}
