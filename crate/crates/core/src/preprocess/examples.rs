use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::lexicon::{medication_token, tag_medications, MedicationLexicon, UnitLexicon};
use super::numbers::is_number_token;
use super::{tokenize, SENTINEL};
use crate::corpus::{Corpus, NONE};
use crate::evaluation::{categorize, Category};

/// How the model is conditioned on the medication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Templated question per field, one shared decoder.
    Qa,
    /// Bare medication token, one decoder per field.
    Entity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Dosage,
    Frequency,
}

impl Field {
    pub const ALL: [Field; 2] = [Field::Dosage, Field::Frequency];

    pub fn name(self) -> &'static str {
        match self {
            Field::Dosage => "dosage",
            Field::Frequency => "frequency",
        }
    }
}

/// `what is the <field> for <rx-medication>`
pub fn question_tokens(field: Field, medication: &str) -> Vec<String> {
    ["what", "is", "the", field.name(), "for", medication]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// One training / evaluation instance built from an MR tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub source_tag_id: String,
    /// Segment tokens; always starts with the `none` sentinel.
    pub input_tokens: Vec<String>,
    /// Queried medication as its `rx-` token.
    pub medication: String,
    pub dosage_target: Vec<String>,
    pub frequency_target: Vec<String>,
    pub categories: BTreeSet<Category>,
}

impl Example {
    pub fn condition_tokens(&self, mode: Mode, field: Field) -> Vec<String> {
        match mode {
            Mode::Qa => question_tokens(field, &self.medication),
            Mode::Entity => vec![self.medication.clone()],
        }
    }

    pub fn target(&self, field: Field) -> &[String] {
        match field {
            Field::Dosage => &self.dosage_target,
            Field::Frequency => &self.frequency_target,
        }
    }

    /// Tokens counted when building a vocabulary.
    pub fn vocabulary_tokens(&self) -> impl Iterator<Item = String> + '_ {
        let questions = Field::ALL
            .into_iter()
            .flat_map(move |f| question_tokens(f, &self.medication));
        self.input_tokens
            .iter()
            .cloned()
            .chain(self.dosage_target.iter().cloned())
            .chain(self.frequency_target.iter().cloned())
            .chain(questions)
    }

    pub fn refresh_categories(&mut self) {
        self.categories = categorize(self);
    }
}

/// Grounded segment paired with its summary, for encoder pretraining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryExample {
    pub id: String,
    pub input_tokens: Vec<String>,
    pub target: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Segments with more raw words than this are dropped as outliers.
    pub max_segment_words: usize,
    /// Encoder step budget, sentinel included.
    pub max_input_tokens: usize,
    pub dosage_steps: usize,
    pub frequency_steps: usize,
    pub summary_steps: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            max_segment_words: 150,
            max_input_tokens: 100,
            dosage_steps: 1,
            frequency_steps: 3,
            summary_steps: 12,
        }
    }
}

/// Counters for everything filtered or repaired while building examples.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub tags_seen: usize,
    pub uninformative_tags: usize,
    pub long_segments_dropped: usize,
    pub missing_medication: usize,
    pub ungrounded_tags: usize,
    pub multi_token_dosage: usize,
    /// Dosage strings left without any number after unit stripping.
    pub dosage_without_number: usize,
    pub truncated_inputs: usize,
    pub truncated_frequencies: usize,
    pub examples: usize,
}

/// Removes unit words from a number-normalized dosage string. A dosage with
/// no number left becomes `none` and bumps `stats.dosage_without_number`.
pub fn strip_dosage_units(dosage: &str, units: &UnitLexicon, stats: &mut PreprocessStats) -> String {
    let tokens: Vec<String> = tokenize(dosage);
    if tokens.len() == 1 && tokens[0] == NONE {
        return NONE.to_string();
    }
    let kept: Vec<String> = tokens.into_iter().filter(|t| !units.contains(t)).collect();
    if !kept.iter().any(|t| is_number_token(t)) {
        stats.dosage_without_number += 1;
        return NONE.to_string();
    }
    kept.join(" ")
}

/// Lexicons plus numeric limits; turns corpora into examples.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    pub lexicon: MedicationLexicon,
    pub units: UnitLexicon,
    pub config: PreprocessConfig,
}

impl Default for Preprocessor {
    fn default() -> Self {
        Preprocessor {
            lexicon: MedicationLexicon::builtin(),
            units: UnitLexicon::builtin(),
            config: PreprocessConfig::default(),
        }
    }
}

impl Preprocessor {
    /// Adds every tagged medication name of `corpus` to the lexicon.
    pub fn with_corpus_medications(mut self, corpus: &Corpus) -> Self {
        for t in &corpus.transcripts {
            for tag in &t.mr_tags {
                self.lexicon.insert(&tag.medication);
            }
        }
        self
    }

    /// Normalized, lowercased, `rx-`-tagged tokens.
    pub fn segment_tokens(&self, text: &str) -> Vec<String> {
        tag_medications(&tokenize(text), &self.lexicon)
    }

    /// Prepends the sentinel and truncates to the encoder budget, keeping a
    /// window centred on the first mention of `focus`.
    pub fn input_tokens(&self, segment: &[String], focus: &str) -> (Vec<String>, bool) {
        let budget = self.config.max_input_tokens.saturating_sub(1).max(1);
        let mut out = Vec::with_capacity(segment.len().min(budget) + 1);
        out.push(SENTINEL.to_string());
        if segment.len() <= budget {
            out.extend_from_slice(segment);
            return (out, false);
        }
        let anchor = segment.iter().position(|t| t == focus).unwrap_or(0);
        let start = anchor.saturating_sub(budget / 2).min(segment.len() - budget);
        out.extend_from_slice(&segment[start..start + budget]);
        (out, true)
    }

    /// One example per informative MR tag.
    pub fn build_examples(&self, corpus: &Corpus, stats: &mut PreprocessStats) -> Vec<Example> {
        let mut out = Vec::new();
        for t in &corpus.transcripts {
            for (i, tag) in t.mr_tags.iter().enumerate() {
                stats.tags_seen += 1;
                let Some(range) = t.grounded_range(tag.grounding()) else {
                    stats.ungrounded_tags += 1;
                    continue;
                };
                let dosage = match &tag.dosage {
                    Some(d) => strip_dosage_units(d, &self.units, stats),
                    None => NONE.to_string(),
                };
                let frequency = tag.frequency.as_deref().unwrap_or(NONE);
                if dosage == NONE && frequency == NONE {
                    stats.uninformative_tags += 1;
                    continue;
                }
                let text = t.text_of(range);
                if text.split_whitespace().count() > self.config.max_segment_words {
                    stats.long_segments_dropped += 1;
                    continue;
                }
                let dosage_target: Vec<String> = dosage.split_whitespace().map(String::from).collect();
                if dosage_target.len() > self.config.dosage_steps {
                    stats.multi_token_dosage += 1;
                    continue;
                }
                let medication = medication_token(&tag.medication);
                let segment = self.segment_tokens(&text);
                if !segment.contains(&medication) {
                    stats.missing_medication += 1;
                    continue;
                }
                let mut frequency_target = tokenize(frequency);
                if frequency_target.len() > self.config.frequency_steps {
                    frequency_target.truncate(self.config.frequency_steps);
                    stats.truncated_frequencies += 1;
                }
                let (input_tokens, truncated) = self.input_tokens(&segment, &medication);
                if truncated {
                    stats.truncated_inputs += 1;
                }
                let mut ex = Example {
                    id: t.tag_id(i),
                    source_tag_id: t.tag_id(i),
                    input_tokens,
                    medication,
                    dosage_target,
                    frequency_target,
                    categories: BTreeSet::new(),
                };
                ex.refresh_categories();
                out.push(ex);
                stats.examples += 1;
            }
        }
        out
    }

    /// Grounded segment / summary pairs for summarization pretraining.
    pub fn build_summary_examples(&self, corpus: &Corpus) -> Vec<SummaryExample> {
        let mut out = Vec::new();
        for t in &corpus.transcripts {
            for (i, s) in t.summaries.iter().enumerate() {
                let Some(range) = t.grounded_range(s.grounding()) else {
                    continue;
                };
                let text = t.text_of(range);
                if text.split_whitespace().count() > self.config.max_segment_words {
                    continue;
                }
                let segment = self.segment_tokens(&text);
                let focus = segment.first().cloned().unwrap_or_default();
                let (input_tokens, _) = self.input_tokens(&segment, &focus);
                let mut target = self.segment_tokens(&s.text);
                target.truncate(self.config.summary_steps);
                if target.is_empty() {
                    continue;
                }
                out.push(SummaryExample {
                    id: format!("{}#s{}", t.id, i),
                    input_tokens,
                    target,
                });
            }
        }
        out
    }
}
