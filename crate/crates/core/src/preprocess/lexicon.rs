use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::preprocess::tokenize;

/// Prefix marking a medication mention.
pub const RX_PREFIX: &str = "rx-";

/// Reads a one-entry-per-line list; `#` starts a comment.
pub fn parse_list(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect()
}

pub fn read_list(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_list(&text))
}

/// Medication names as normalized token sequences, matched longest-first.
#[derive(Debug, Clone, Default)]
pub struct MedicationLexicon {
    entries: HashSet<Vec<String>>,
    max_len: usize,
}

impl MedicationLexicon {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut lex = MedicationLexicon::default();
        for name in names {
            lex.insert(name.as_ref());
        }
        lex
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(Self::new(read_list(path)?))
    }

    /// The lexicon shipped with the repository (`data/medications.txt`).
    pub fn builtin() -> Self {
        Self::new(parse_list(include_str!("../../../../data/medications.txt")))
    }

    pub fn insert(&mut self, name: &str) {
        let tokens = tokenize(name);
        if tokens.is_empty() {
            return;
        }
        self.max_len = self.max_len.max(tokens.len());
        self.entries.insert(tokens);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Length of the longest entry matching at `tokens[start..]`.
    pub fn longest_match(&self, tokens: &[String], start: usize) -> Option<usize> {
        let avail = tokens.len() - start;
        (1..=self.max_len.min(avail))
            .rev()
            .find(|&n| self.entries.contains(&tokens[start..start + n]))
    }

    /// Left-to-right longest-match scan: `(start, len)` of every hit.
    pub fn find_all(&self, tokens: &[String]) -> Vec<(usize, usize)> {
        let mut hits = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            match self.longest_match(tokens, i) {
                Some(n) => {
                    hits.push((i, n));
                    i += n;
                }
                None => i += 1,
            }
        }
        hits
    }
}

/// Collapses a medication mention to its single `rx-` token.
pub fn rx_token(parts: &[String]) -> String {
    format!("{RX_PREFIX}{}", parts.join("-"))
}

/// Normalized `rx-` token for a medication name as written in a tag.
pub fn medication_token(name: &str) -> String {
    rx_token(&tokenize(name))
}

pub fn is_rx_token(token: &str) -> bool {
    token.len() > RX_PREFIX.len() && token.starts_with(RX_PREFIX)
}

/// Replaces every maximal lexicon match with one `rx-` token.
pub fn tag_medications(tokens: &[String], lexicon: &MedicationLexicon) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        match lexicon.longest_match(tokens, i) {
            Some(n) => {
                out.push(rx_token(&tokens[i..i + n]));
                i += n;
            }
            None => {
                out.push(tokens[i].clone());
                i += 1;
            }
        }
    }
    out
}

/// Dosage unit words removed from dosage targets.
#[derive(Debug, Clone)]
pub struct UnitLexicon {
    units: HashSet<String>,
}

impl UnitLexicon {
    pub fn new<I, S>(units: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        UnitLexicon {
            units: units.into_iter().map(|u| u.as_ref().to_lowercase()).collect(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(Self::new(read_list(path)?))
    }

    /// The unit list shipped with the repository (`data/units.txt`).
    pub fn builtin() -> Self {
        Self::new(parse_list(include_str!("../../../../data/units.txt")))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.units.contains(token)
    }
}
