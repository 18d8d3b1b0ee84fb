use std::collections::HashSet;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Corpus, Transcript};
use crate::error::{Error, Result};
use crate::preprocess::{is_number_token, tokenize};

fn validate(t: &Transcript, line: usize) -> Result<()> {
    let err = |msg: String| Error::Record { line, msg };
    if t.id.trim().is_empty() {
        return Err(err("empty transcript id".into()));
    }
    let mut prev_start = f64::NEG_INFINITY;
    for (i, s) in t.sentences.iter().enumerate() {
        if !(s.start_s.is_finite() && s.end_s.is_finite()) || s.start_s < 0.0 {
            return Err(err(format!("sentence {i}: invalid timestamps")));
        }
        if s.start_s > s.end_s {
            return Err(err(format!(
                "sentence {i}: start_s {} > end_s {}",
                s.start_s, s.end_s
            )));
        }
        if s.start_s < prev_start {
            return Err(err(format!("sentence {i}: sentences out of time order")));
        }
        if s.text.trim().is_empty() {
            return Err(err(format!("sentence {i}: empty text")));
        }
        prev_start = s.start_s;
    }
    for (i, tag) in t.mr_tags.iter().enumerate() {
        if tag.medication.trim().is_empty() {
            return Err(err(format!("mr_tag {i}: empty medication")));
        }
        if tag.start_s > tag.end_s {
            return Err(err(format!(
                "mr_tag {i}: start_s {} > end_s {}",
                tag.start_s, tag.end_s
            )));
        }
        if t.grounded_range(tag.grounding()).is_none() {
            return Err(err(format!("mr_tag {i}: grounding covers no sentence")));
        }
        if let Some(d) = &tag.dosage {
            if !tokenize(d).iter().any(|tok| is_number_token(tok)) {
                return Err(err(format!("mr_tag {i}: dosage `{d}` has no number")));
            }
        }
    }
    for (i, s) in t.summaries.iter().enumerate() {
        if s.text.trim().is_empty() {
            return Err(err(format!("summary {i}: empty text")));
        }
        if s.start_s > s.end_s {
            return Err(err(format!("summary {i}: start_s {} > end_s {}", s.start_s, s.end_s)));
        }
        if t.grounded_range(s.grounding()).is_none() {
            return Err(err(format!("summary {i}: grounding covers no sentence")));
        }
    }
    Ok(())
}

/// Parses line-delimited transcript records; blank lines are skipped.
pub fn parse_corpus(text: &str) -> Result<Corpus> {
    let mut transcripts = Vec::new();
    let mut ids = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let t: Transcript = serde_json::from_str(raw).map_err(|e| Error::Record {
            line,
            msg: e.to_string(),
        })?;
        validate(&t, line)?;
        if !ids.insert(t.id.clone()) {
            return Err(Error::Record {
                line,
                msg: format!("duplicate transcript id `{}`", t.id),
            });
        }
        transcripts.push(t);
    }
    Ok(Corpus::new(transcripts))
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&text)
}

pub fn write_corpus<W: Write>(corpus: &Corpus, mut w: W) -> std::io::Result<()> {
    for t in &corpus.transcripts {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_corpus(corpus, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}
