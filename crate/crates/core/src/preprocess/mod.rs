//! Text normalization and conversion of annotated conversations into
//! model-ready examples.
//!
//! Processing order for any piece of text: numbers are canonicalized, text is
//! lowercased and split into tokens, then medication mentions are collapsed
//! into single `rx-` tokens. Inputs get a leading `none` sentinel so the
//! model can point at it when the answer is absent.

mod augment;
mod examples;
mod lexicon;
pub mod numbers;
mod vocab;

pub use augment::{augment_by_shuffle, is_augmentation_eligible};
pub use examples::{
    question_tokens, strip_dosage_units, Example, Field, Mode, PreprocessConfig, PreprocessStats,
    Preprocessor, SummaryExample,
};
pub use lexicon::{
    is_rx_token, medication_token, parse_list, read_list, rx_token, tag_medications,
    MedicationLexicon, UnitLexicon, RX_PREFIX,
};
pub use numbers::{is_number_token, normalize_numbers};
pub use vocab::{build_vocabulary, Vocabulary, PAD, START, STOP, UNK};

/// Sentinel prepended to every input.
pub const SENTINEL: &str = "none";

const DEIDENTIFIED: &str = "[de-identified]";

/// Normalizes numbers, lowercases and splits on whitespace, trimming
/// punctuation from token edges.
pub fn tokenize(text: &str) -> Vec<String> {
    let normalized = normalize_numbers(text).to_lowercase();
    normalized
        .split_whitespace()
        .filter_map(|raw| {
            if raw.contains(DEIDENTIFIED) {
                return Some(DEIDENTIFIED.to_string());
            }
            let core = raw.trim_matches(|c: char| !c.is_alphanumeric());
            (!core.is_empty()).then(|| core.to_string())
        })
        .collect()
}
