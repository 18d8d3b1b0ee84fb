use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

impl RougeScore {
    pub const PERFECT: RougeScore = RougeScore {
        f1: 1.0,
        precision: 1.0,
        recall: 1.0,
    };
    pub const ZERO: RougeScore = RougeScore {
        f1: 0.0,
        precision: 0.0,
        recall: 0.0,
    };

    pub fn from_pr(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        RougeScore {
            f1,
            precision,
            recall,
        }
    }

    /// Component-wise mean; zero for an empty slice.
    pub fn mean(scores: &[RougeScore]) -> RougeScore {
        if scores.is_empty() {
            return RougeScore::ZERO;
        }
        let n = scores.len() as f64;
        RougeScore {
            f1: scores.iter().map(|s| s.f1).sum::<f64>() / n,
            precision: scores.iter().map(|s| s.precision).sum::<f64>() / n,
            recall: scores.iter().map(|s| s.recall).sum::<f64>() / n,
        }
    }
}

/// ROUGE-1 with clipped unigram counts.
pub fn rouge1<S: AsRef<str>>(hypothesis: &[S], reference: &[S]) -> RougeScore {
    match (hypothesis.is_empty(), reference.is_empty()) {
        (true, true) => return RougeScore::PERFECT,
        (true, false) | (false, true) => return RougeScore::ZERO,
        _ => {}
    }
    let mut ref_counts: HashMap<&str, usize> = HashMap::new();
    for r in reference {
        *ref_counts.entry(r.as_ref()).or_default() += 1;
    }
    let mut overlap = 0usize;
    for h in hypothesis {
        if let Some(c) = ref_counts.get_mut(h.as_ref()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    RougeScore::from_pr(
        overlap as f64 / hypothesis.len() as f64,
        overlap as f64 / reference.len() as f64,
    )
}
