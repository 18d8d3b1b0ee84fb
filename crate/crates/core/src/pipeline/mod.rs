//! Extraction from raw transcripts without annotations: lexicon medication
//! detection, quantity-driven sentence windows, per-medication model
//! queries, plus a seeded recognizer-noise simulator and timestamp-based tag
//! alignment for scoring noised transcripts.

mod asr;
mod extract;
mod segment;

pub use asr::{align_tags, count_edits, simulate_asr, AlignedTag, Alignment, AsrNoise};
pub use extract::{
    evaluate_asr, evaluate_pipeline, extract_document, score_extractions, transcript_seed, AsrEvaluation,
    ExtractionResult, PipelineScore,
};
pub use segment::{
    detect_medications, detect_quantity, segment_transcript, window, MedicationHit, Quantities, Segment, MAX_WINDOW,
    MIN_WINDOW,
};
