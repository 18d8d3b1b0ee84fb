use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::corpus::Transcript;
use crate::preprocess::{is_number_token, rx_token, tag_medications, tokenize, MedicationLexicon};

/// Smallest and largest window, in sentences.
pub const MIN_WINDOW: usize = 2;
pub const MAX_WINDOW: usize = 5;

/// One lexicon match inside a transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MedicationHit {
    pub sentence: usize,
    /// Token offset of the match within the sentence's normalized tokens.
    pub position: usize,
    /// Matched tokens joined by spaces.
    pub surface: String,
    /// The `rx-` token the match collapses to.
    pub token: String,
}

/// Longest-match lexicon hits over every sentence, in reading order.
pub fn detect_medications(transcript: &Transcript, lexicon: &MedicationLexicon) -> Vec<MedicationHit> {
    let mut hits = Vec::new();
    for (i, s) in transcript.sentences.iter().enumerate() {
        let tokens = tokenize(&s.text);
        for (start, len) in lexicon.find_all(&tokens) {
            let parts = &tokens[start..start + len];
            hits.push(MedicationHit {
                sentence: i,
                position: start,
                surface: parts.join(" "),
                token: rx_token(parts),
            });
        }
    }
    hits
}

/// Positions of canonical number tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Quantities {
    pub found: bool,
    pub positions: Vec<usize>,
}

pub fn detect_quantity(tokens: &[String]) -> Quantities {
    let positions: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| is_number_token(t))
        .map(|(i, _)| i)
        .collect();
    Quantities {
        found: !positions.is_empty(),
        positions,
    }
}

/// Sentence window around one medication hit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub transcript_id: String,
    pub sentences: Range<usize>,
    /// Normalized, `rx-`-tagged tokens of the window.
    pub tokens: Vec<String>,
    pub medication: String,
    pub medication_token: String,
    /// Window size that was chosen. The range holds fewer sentences only
    /// when the transcript itself is shorter.
    pub window: usize,
}

/// Sentence offsets in growth order: after, before, two after, two before...
fn growth_order(hit: usize, len: usize) -> impl Iterator<Item = usize> {
    (1..len).flat_map(move |d| [hit.checked_add(d), hit.checked_sub(d)]).flatten().filter(move |&i| i < len)
}

/// The `x`-sentence window containing `hit`, grown in [`growth_order`].
pub fn window(hit: usize, len: usize, x: usize) -> Range<usize> {
    let (mut lo, mut hi) = (hit, hit + 1);
    for i in growth_order(hit, len).take(x.saturating_sub(1)) {
        lo = lo.min(i);
        hi = hi.max(i + 1);
    }
    lo..hi
}

/// One segment per hit: the smallest window of 2 to 5 sentences that holds
/// a quantity, or the 2-sentence window when none does.
pub fn segment_transcript(transcript: &Transcript, hits: &[MedicationHit], lexicon: &MedicationLexicon) -> Vec<Segment> {
    let n = transcript.sentences.len();
    let sentence_tokens: Vec<Vec<String>> = transcript
        .sentences
        .iter()
        .map(|s| tag_medications(&tokenize(&s.text), lexicon))
        .collect();
    let tokens_of = |r: &Range<usize>| -> Vec<String> { sentence_tokens[r.clone()].concat() };
    hits.iter()
        .filter(|h| h.sentence < n)
        .map(|hit| {
            let chosen = (MIN_WINDOW..=MAX_WINDOW)
                .find(|&x| detect_quantity(&tokens_of(&window(hit.sentence, n, x))).found)
                .unwrap_or(MIN_WINDOW);
            let sentences = window(hit.sentence, n, chosen);
            Segment {
                transcript_id: transcript.id.clone(),
                tokens: tokens_of(&sentences),
                sentences,
                medication: hit.surface.clone(),
                medication_token: hit.token.clone(),
                window: chosen,
            }
        })
        .collect()
}
