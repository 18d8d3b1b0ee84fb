use std::collections::BTreeSet;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::asr::{align_tags, simulate_asr, AsrNoise};
use super::segment::{detect_medications, segment_transcript};
use crate::corpus::{Corpus, Interval, Transcript, NONE};
use crate::error::Result;
use crate::evaluation::{rouge1, Predictor};
use crate::preprocess::{medication_token, strip_dosage_units, tokenize, Example, PreprocessStats, Preprocessor};

/// One medication answer with the window it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub transcript_id: String,
    pub medication: String,
    pub medication_surface: String,
    pub dosage: Vec<String>,
    pub frequency: Vec<String>,
    pub sentences: Range<usize>,
    pub start_s: f64,
    pub end_s: f64,
    pub window: usize,
}

fn or_none(tokens: Vec<String>) -> Vec<String> {
    if tokens.is_empty() {
        vec![NONE.to_string()]
    } else {
        tokens
    }
}

/// Detect, segment, preprocess and query the model once per medication hit.
pub fn extract_document<P: Predictor + ?Sized>(
    transcript: &Transcript,
    model: &P,
    preprocessor: &Preprocessor,
) -> Result<Vec<ExtractionResult>> {
    let hits = detect_medications(transcript, &preprocessor.lexicon);
    let segments = segment_transcript(transcript, &hits, &preprocessor.lexicon);
    segments
        .into_iter()
        .enumerate()
        .map(|(i, seg)| {
            let (input_tokens, _) = preprocessor.input_tokens(&seg.tokens, &seg.medication_token);
            let query = Example {
                id: format!("{}#seg{i}", transcript.id),
                source_tag_id: String::new(),
                input_tokens,
                medication: seg.medication_token.clone(),
                dosage_target: Vec::new(),
                frequency_target: Vec::new(),
                categories: BTreeSet::new(),
            };
            let p = model.predict(&query)?;
            let first = &transcript.sentences[seg.sentences.start];
            let last = &transcript.sentences[seg.sentences.end - 1];
            Ok(ExtractionResult {
                transcript_id: transcript.id.clone(),
                medication: seg.medication_token,
                medication_surface: seg.medication,
                dosage: or_none(p.dosage),
                frequency: or_none(p.frequency),
                start_s: first.start_s,
                end_s: last.end_s,
                sentences: seg.sentences,
                window: seg.window,
            })
        })
        .collect()
}

/// Totals of a pipeline run; F1 values are means over reference tags, with
/// unmatched tags scoring zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PipelineScore {
    pub tags: usize,
    pub matched: usize,
    pub dosage_f1_sum: f64,
    pub frequency_f1_sum: f64,
}

impl PipelineScore {
    pub fn dosage_f1(&self) -> f64 {
        self.dosage_f1_sum / self.tags.max(1) as f64
    }

    pub fn frequency_f1(&self) -> f64 {
        self.frequency_f1_sum / self.tags.max(1) as f64
    }

    pub fn mean_f1(&self) -> f64 {
        (self.dosage_f1() + self.frequency_f1()) / 2.0
    }

    pub fn add(&mut self, other: &PipelineScore) {
        self.tags += other.tags;
        self.matched += other.matched;
        self.dosage_f1_sum += other.dosage_f1_sum;
        self.frequency_f1_sum += other.frequency_f1_sum;
    }
}

/// Scores results against the informative tags of `reference`. A tag is
/// matched by results for the same medication whose window overlaps its
/// grounding; the best-scoring match counts.
pub fn score_extractions(reference: &Transcript, results: &[ExtractionResult], preprocessor: &Preprocessor) -> PipelineScore {
    let mut score = PipelineScore::default();
    let mut stats = PreprocessStats::default();
    for tag in &reference.mr_tags {
        if !tag.is_informative() {
            continue;
        }
        let dosage = match &tag.dosage {
            Some(d) => strip_dosage_units(d, &preprocessor.units, &mut stats),
            None => NONE.to_string(),
        };
        let dosage = tokenize(&dosage);
        let mut frequency = tokenize(tag.frequency.as_deref().unwrap_or(NONE));
        frequency.truncate(preprocessor.config.frequency_steps);
        let med = medication_token(&tag.medication);
        let g = tag.grounding();
        score.tags += 1;
        let best = results
            .iter()
            .filter(|r| r.medication == med && overlaps(g, r.start_s, r.end_s))
            .map(|r| (rouge1(&r.dosage, &dosage).f1, rouge1(&r.frequency, &frequency).f1))
            .max_by(|a, b| (a.0 + a.1).total_cmp(&(b.0 + b.1)));
        if let Some((d, f)) = best {
            score.matched += 1;
            score.dosage_f1_sum += d;
            score.frequency_f1_sum += f;
        }
    }
    score
}

fn overlaps(g: Interval, start_s: f64, end_s: f64) -> bool {
    start_s <= g.end_s && end_s >= g.start_s
}

/// End-to-end extraction over human transcripts.
pub fn evaluate_pipeline<P: Predictor + ?Sized>(corpus: &Corpus, model: &P, preprocessor: &Preprocessor) -> Result<PipelineScore> {
    let parts: Vec<PipelineScore> = corpus
        .transcripts
        .par_iter()
        .map(|t| Ok(score_extractions(t, &extract_document(t, model, preprocessor)?, preprocessor)))
        .collect::<Result<_>>()?;
    let mut total = PipelineScore::default();
    for p in &parts {
        total.add(p);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsrEvaluation {
    pub score: PipelineScore,
    pub dropped_tags: usize,
    pub kept_tags: usize,
}

/// Seed of the noise stream for one transcript.
pub fn transcript_seed(seed: u64, id: &str) -> u64 {
    id.bytes().fold(seed ^ 0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// Noises every transcript, aligns its tags onto the noised text and runs
/// the pipeline against the surviving tags.
pub fn evaluate_asr<P: Predictor + ?Sized>(
    corpus: &Corpus,
    model: &P,
    preprocessor: &Preprocessor,
    noise: AsrNoise,
    seed: u64,
) -> Result<AsrEvaluation> {
    let parts: Vec<(PipelineScore, usize, usize)> = corpus
        .transcripts
        .par_iter()
        .map(|t| {
            let asr = simulate_asr(t, noise, transcript_seed(seed, &t.id))?;
            let aligned = align_tags(t, &asr);
            let results = extract_document(&aligned.transcript, model, preprocessor)?;
            Ok((
                score_extractions(&aligned.transcript, &results, preprocessor),
                aligned.dropped.len(),
                aligned.kept.len(),
            ))
        })
        .collect::<Result<_>>()?;
    let mut out = AsrEvaluation {
        score: PipelineScore::default(),
        dropped_tags: 0,
        kept_tags: 0,
    };
    for (s, d, k) in &parts {
        out.score.add(s);
        out.dropped_tags += d;
        out.kept_tags += k;
    }
    Ok(out)
}
