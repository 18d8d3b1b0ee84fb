use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Interval, MrTag, Transcript};
use crate::error::{Error, Result};
use crate::preprocess::tokenize;

/// Word-level error rates of the simulated recognizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsrNoise {
    pub substitution_rate: f64,
    pub deletion_rate: f64,
}

impl AsrNoise {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("substitution_rate", self.substitution_rate), ("deletion_rate", self.deletion_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::config(format!("{name} must be in [0, 1], got {r}")));
            }
        }
        Ok(())
    }
}

/// Homophones and near-homophones a recognizer commonly swaps.
const CONFUSIONS: &[(&str, &[&str])] = &[
    ("two", &["to", "too"]),
    ("to", &["two", "too"]),
    ("four", &["for", "or"]),
    ("for", &["four", "far"]),
    ("ten", &["then", "tin"]),
    ("eight", &["ate", "hate"]),
    ("one", &["won", "on"]),
    ("five", &["fine", "hive"]),
    ("six", &["sex", "sticks"]),
    ("nine", &["nein", "mine"]),
    ("daily", &["daly", "dairy"]),
    ("twice", &["tries", "price"]),
    ("night", &["knight", "light"]),
    ("day", &["they", "dane"]),
    ("mg", &["am", "and"]),
    ("milligrams", &["milligram", "milligraves"]),
    ("take", &["make", "tick"]),
    ("week", &["weak", "wick"]),
];

const VOWELS: [char; 5] = ['a', 'e', 'i', 'o', 'u'];

/// A replacement for `word` that differs from it; punctuation around the
/// word is kept.
fn confuse(word: &str, rng: &mut ChaCha8Rng) -> String {
    let start = word.find(|c: char| c.is_alphanumeric()).unwrap_or(0);
    let end = word.rfind(|c: char| c.is_alphanumeric()).map_or(word.len(), |i| i + word[i..].chars().next().map_or(1, char::len_utf8));
    let (pre, core, post) = (&word[..start], &word[start..end], &word[end..]);
    let lower = core.to_lowercase();
    let replaced = if let Some((_, alts)) = CONFUSIONS.iter().find(|(w, _)| *w == lower) {
        alts[rng.random_range(0..alts.len())].to_string()
    } else {
        let chars: Vec<char> = core.chars().collect();
        let vowels: Vec<usize> = (0..chars.len()).filter(|&i| VOWELS.contains(&chars[i].to_ascii_lowercase())).collect();
        if vowels.is_empty() {
            format!("{core}s")
        } else {
            let i = vowels[rng.random_range(0..vowels.len())];
            let cur = chars[i].to_ascii_lowercase();
            let others: Vec<char> = VOWELS.iter().copied().filter(|&v| v != cur).collect();
            let mut out = chars.clone();
            out[i] = others[rng.random_range(0..others.len())];
            out.into_iter().collect()
        }
    };
    format!("{pre}{replaced}{post}")
}

/// Seeded word substitutions and deletions. Sentence timestamps are kept;
/// sentences left without words are dropped, and annotations are removed
/// since a recognizer does not produce them.
pub fn simulate_asr(transcript: &Transcript, noise: AsrNoise, seed: u64) -> Result<Transcript> {
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sentences = Vec::with_capacity(transcript.sentences.len());
    for s in &transcript.sentences {
        let mut words = Vec::new();
        for w in s.text.split_whitespace() {
            if rng.random::<f64>() < noise.deletion_rate {
                continue;
            }
            if rng.random::<f64>() < noise.substitution_rate {
                words.push(confuse(w, &mut rng));
            } else {
                words.push(w.to_string());
            }
        }
        if !words.is_empty() {
            let mut out = s.clone();
            out.text = words.join(" ");
            sentences.push(out);
        }
    }
    Ok(Transcript {
        id: transcript.id.clone(),
        sentences,
        mr_tags: Vec::new(),
        summaries: Vec::new(),
    })
}

/// Number of words that differ between two transcripts with the same
/// sentence times: deletions plus substitutions, by position-wise alignment
/// of each surviving sentence against its original.
pub fn count_edits(original: &Transcript, noised: &Transcript) -> usize {
    let mut edits = 0;
    let mut j = 0;
    for s in &original.sentences {
        let orig: Vec<&str> = s.text.split_whitespace().collect();
        match noised.sentences.get(j) {
            Some(n) if n.start_s == s.start_s && n.end_s == s.end_s => {
                j += 1;
                edits += word_edit_distance(&orig, &n.text.split_whitespace().collect::<Vec<_>>());
            }
            _ => edits += orig.len(),
        }
    }
    edits
}

/// Levenshtein distance over words where insertions never occur, so every
/// operation is a deletion or substitution.
fn word_edit_distance(a: &[&str], b: &[&str]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut cur = vec![i + 1; b.len() + 1];
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedTag {
    /// Id of the tag in the human transcript (`{transcript}#t{index}`).
    pub tag_id: String,
    /// ASR sentences overlapping the tag's grounding.
    pub sentences: Range<usize>,
    pub tag: MrTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// The ASR transcript carrying the surviving tags, regrounded to the
    /// span of their ASR sentences.
    pub transcript: Transcript,
    pub kept: Vec<AlignedTag>,
    pub dropped: Vec<String>,
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Maps each human tag onto the ASR sentences overlapping its grounding,
/// dropping tags whose medication name is not in that ASR text.
pub fn align_tags(human: &Transcript, asr: &Transcript) -> Alignment {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (i, tag) in human.mr_tags.iter().enumerate() {
        let tag_id = human.tag_id(i);
        let interval = tag.grounding();
        let hits: Vec<usize> = (0..asr.sentences.len())
            .filter(|&j| interval.overlaps(&asr.sentences[j]))
            .collect();
        let (Some(&first), Some(&last)) = (hits.first(), hits.last()) else {
            dropped.push(tag_id);
            continue;
        };
        let range = first..last + 1;
        let text = asr.text_of(range.clone());
        if !contains_run(&tokenize(&text), &tokenize(&tag.medication)) {
            dropped.push(tag_id);
            continue;
        }
        let span = Interval::new(asr.sentences[first].start_s, asr.sentences[last].end_s);
        let mut regrounded = tag.clone();
        regrounded.start_s = span.start_s.min(tag.start_s);
        regrounded.end_s = span.end_s.max(tag.end_s);
        kept.push(AlignedTag {
            tag_id,
            sentences: range,
            tag: regrounded,
        });
    }
    let mut transcript = asr.clone();
    transcript.mr_tags = kept.iter().map(|k| k.tag.clone()).collect();
    Alignment {
        transcript,
        kept,
        dropped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sentence;

    fn sentence(text: &str, start_s: f64, end_s: f64) -> Sentence {
        Sentence {
            text: text.into(),
            start_s,
            end_s,
            speaker: None,
        }
    }

    fn tag(med: &str, start_s: f64, end_s: f64) -> MrTag {
        MrTag {
            medication: med.into(),
            dosage: Some("5 mg".into()),
            frequency: Some("daily".into()),
            start_s,
            end_s,
        }
    }

    fn human() -> Transcript {
        Transcript {
            id: "h".into(),
            sentences: vec![
                sentence("Take the Coumadin.", 0.0, 1.0),
                sentence("Five milligrams daily.", 1.2, 2.0),
                sentence("And Lasix twice a day.", 2.2, 3.0),
            ],
            mr_tags: vec![tag("Coumadin", 0.0, 2.0), tag("Lasix", 2.2, 3.0)],
            summaries: vec![],
        }
    }

    fn words(n: usize) -> Transcript {
        let text: Vec<String> = (0..n).map(|i| format!("word{}x", i % 50)).collect();
        Transcript {
            id: "w".into(),
            sentences: text
                .chunks(10)
                .enumerate()
                .map(|(i, c)| sentence(&c.join(" "), i as f64, i as f64 + 0.5))
                .collect(),
            mr_tags: vec![],
            summaries: vec![],
        }
    }

    #[test]
    fn zero_rates_are_identity() {
        let t = human();
        let out = simulate_asr(&t, AsrNoise { substitution_rate: 0.0, deletion_rate: 0.0 }, 3).unwrap();
        assert_eq!(out.sentences, t.sentences);
        assert!(out.mr_tags.is_empty());
    }

    #[test]
    fn full_deletion_leaves_no_sentences() {
        let out = simulate_asr(&human(), AsrNoise { substitution_rate: 0.0, deletion_rate: 1.0 }, 3).unwrap();
        assert!(out.sentences.is_empty());
    }

    #[test]
    fn edit_count_binomial() {
        let t = words(1000);
        for seed in 0..5 {
            let out = simulate_asr(&t, AsrNoise { substitution_rate: 0.1, deletion_rate: 0.0 }, seed).unwrap();
            let edits = count_edits(&t, &out);
            assert!((70..=130).contains(&edits), "seed {seed}: {edits}");
        }
        let out = simulate_asr(&t, AsrNoise { substitution_rate: 0.05, deletion_rate: 0.05 }, 9).unwrap();
        assert!((70..=130).contains(&count_edits(&t, &out)));
    }

    #[test]
    fn substitution_always_changes_the_word() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for w in ["two", "Coumadin,", "xyz", "81", "a", "Lasix."] {
            let c = confuse(w, &mut rng);
            assert_ne!(c, w);
        }
        assert!(confuse("Coumadin,", &mut rng).ends_with(','));
    }

    #[test]
    fn substitution_keeps_word_count() {
        for (w, alts) in CONFUSIONS {
            for a in *alts {
                assert_eq!(a.split_whitespace().count(), 1, "{w} -> {a}");
            }
        }
        let noise = AsrNoise {
            substitution_rate: 1.0,
            deletion_rate: 0.0,
        };
        let h = human();
        let asr = simulate_asr(&h, noise, 4).unwrap();
        for (a, b) in h.sentences.iter().zip(&asr.sentences) {
            assert_eq!(a.text.split_whitespace().count(), b.text.split_whitespace().count());
        }
    }

    #[test]
    fn deterministic() {
        let noise = AsrNoise { substitution_rate: 0.3, deletion_rate: 0.1 };
        assert_eq!(simulate_asr(&human(), noise, 5).unwrap(), simulate_asr(&human(), noise, 5).unwrap());
        assert!(noise.validate().is_ok());
        assert!(AsrNoise { substitution_rate: 1.5, deletion_rate: 0.0 }.validate().is_err());
    }

    #[test]
    fn identity_alignment_keeps_everything() {
        let h = human();
        let asr = simulate_asr(&h, AsrNoise { substitution_rate: 0.0, deletion_rate: 0.0 }, 0).unwrap();
        let a = align_tags(&h, &asr);
        assert_eq!(a.kept.len(), 2);
        assert!(a.dropped.is_empty());
        assert_eq!(a.kept[0].sentences, 0..2, "interval spanning two sentences covers both");
        assert_eq!(a.transcript.mr_tags.len(), 2);
    }

    #[test]
    fn corrupted_medication_drops_tag() {
        let h = human();
        let mut asr = h.clone();
        asr.mr_tags.clear();
        asr.sentences[2].text = "And Lacks is twice a day.".into();
        let a = align_tags(&h, &asr);
        assert_eq!(a.dropped, vec!["h#t1".to_string()]);
        assert_eq!(a.kept.len(), 1);
    }

    #[test]
    fn overlap_spans_shifted_sentences() {
        let h = human();
        let mut asr = h.clone();
        asr.mr_tags.clear();
        // Recognizer merges the first two sentences and shifts times.
        asr.sentences = vec![
            sentence("Take the Coumadin five milligrams", 0.1, 1.5),
            sentence("daily and Lasix twice a day", 1.6, 3.0),
        ];
        let a = align_tags(&h, &asr);
        assert_eq!(a.kept.len(), 2);
        assert_eq!(a.kept[0].sentences, 0..2);
        assert_eq!(a.kept[1].sentences, 1..2);
    }
}
