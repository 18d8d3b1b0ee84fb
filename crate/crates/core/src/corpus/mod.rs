//! Conversations, medication-regimen tags and summaries.

mod generate;
mod io;
mod split;

use std::ops::Range;

use serde::{Deserialize, Serialize};

pub use generate::{generate_synthetic_corpus, DosageSlot, FrequencySlot, GenerationProfile};
pub use io::{load_corpus, parse_corpus, save_corpus, write_corpus};
pub use split::{split_corpus, CorpusSplit, SplitFractions};

/// Literal used for an absent dosage or frequency.
pub const NONE: &str = "none";

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub start_s: f64,
    pub end_s: f64,
    #[serde(default)]
    pub speaker: Option<String>,
}

/// Closed time interval in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub start_s: f64,
    pub end_s: f64,
}

impl Interval {
    pub fn new(start_s: f64, end_s: f64) -> Self {
        Interval { start_s, end_s }
    }

    pub fn contains(&self, s: &Sentence) -> bool {
        s.start_s >= self.start_s - TIME_EPS && s.end_s <= self.end_s + TIME_EPS
    }

    pub fn overlaps(&self, s: &Sentence) -> bool {
        s.start_s <= self.end_s + TIME_EPS && s.end_s >= self.start_s - TIME_EPS
    }
}

mod none_literal {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<String>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(v.as_deref().unwrap_or(super::NONE))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
        let s = String::deserialize(d)?;
        Ok(if s.trim().eq_ignore_ascii_case(super::NONE) {
            None
        } else {
            Some(s)
        })
    }
}

/// `{Medication, Dosage, Frequency}` grounded to a sentence range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MrTag {
    pub medication: String,
    #[serde(with = "none_literal")]
    pub dosage: Option<String>,
    #[serde(with = "none_literal")]
    pub frequency: Option<String>,
    pub start_s: f64,
    pub end_s: f64,
}

impl MrTag {
    pub fn grounding(&self) -> Interval {
        Interval::new(self.start_s, self.end_s)
    }

    /// At least one of dosage and frequency is present.
    pub fn is_informative(&self) -> bool {
        self.dosage.is_some() || self.frequency.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTag {
    pub text: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl SummaryTag {
    pub fn grounding(&self) -> Interval {
        Interval::new(self.start_s, self.end_s)
    }
}

/// One conversation with its annotations; the unit of a corpus file line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub id: String,
    pub sentences: Vec<Sentence>,
    #[serde(default)]
    pub mr_tags: Vec<MrTag>,
    #[serde(default)]
    pub summaries: Vec<SummaryTag>,
}

impl Transcript {
    /// Contiguous sentences fully inside `interval`, if any.
    pub fn grounded_range(&self, interval: Interval) -> Option<Range<usize>> {
        let first = self.sentences.iter().position(|s| interval.contains(s))?;
        let len = self.sentences[first..]
            .iter()
            .take_while(|s| interval.contains(s))
            .count();
        Some(first..first + len)
    }

    /// Text of the sentences in `range` joined by spaces.
    pub fn text_of(&self, range: Range<usize>) -> String {
        self.sentences[range]
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn tag_id(&self, index: usize) -> String {
        format!("{}#t{}", self.id, index)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub transcripts: Vec<Transcript>,
}

impl Corpus {
    pub fn new(transcripts: Vec<Transcript>) -> Self {
        Corpus { transcripts }
    }

    pub fn len(&self) -> usize {
        self.transcripts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transcripts.is_empty()
    }

    pub fn tag_count(&self) -> usize {
        self.transcripts.iter().map(|t| t.mr_tags.len()).sum()
    }

    pub fn get(&self, id: &str) -> Option<&Transcript> {
        self.transcripts.iter().find(|t| t.id == id)
    }

    /// Transcripts whose ids are in `ids`, in the order of `ids`.
    pub fn subset(&self, ids: &[String]) -> Corpus {
        let index: std::collections::HashMap<&str, &Transcript> =
            self.transcripts.iter().map(|t| (t.id.as_str(), t)).collect();
        Corpus::new(
            ids.iter()
                .filter_map(|id| index.get(id.as_str()).map(|t| (*t).clone()))
                .collect(),
        )
    }

    pub fn ids(&self) -> Vec<String> {
        self.transcripts.iter().map(|t| t.id.clone()).collect()
    }
}
