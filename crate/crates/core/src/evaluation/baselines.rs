use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{Prediction, Predictor};
use crate::corpus::NONE;
use crate::error::Result;
use crate::preprocess::{is_number_token, Example};

/// The three most frequent frequency tags.
pub const TOP3_FREQUENCIES: [&str; 3] = ["none", "daily", "twice a day"];

/// Number token closest to the queried medication; ties go left. `none`
/// when the medication or any number is missing.
pub fn nearest_number_baseline(ex: &Example) -> String {
    let tokens = &ex.input_tokens;
    let meds: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| **t == ex.medication)
        .map(|(i, _)| i)
        .collect();
    let best = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| is_number_token(t))
        .filter_map(|(i, _)| meds.iter().map(|&m| (m.abs_diff(i), i)).min())
        .min();
    match best {
        Some((_, i)) => tokens[i].clone(),
        None => NONE.to_string(),
    }
}

/// Uniform draw from [`TOP3_FREQUENCIES`], tokenized.
pub fn random_top3_baseline<R: Rng>(rng: &mut R) -> Vec<String> {
    TOP3_FREQUENCIES
        .choose(rng)
        .expect("non-empty")
        .split(' ')
        .map(String::from)
        .collect()
}

/// Nearest Number for dosage, Random Top-3 for frequency. The random draw
/// for an example is seeded by `(seed, example id)`, so results do not
/// depend on evaluation order.
#[derive(Debug, Clone, Copy)]
pub struct NaiveBaselines {
    pub seed: u64,
}

impl Predictor for NaiveBaselines {
    fn predict(&self, ex: &Example) -> Result<Prediction> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(ex.id.as_bytes());
        let digest: [u8; 32] = h.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(digest);
        Ok(Prediction {
            dosage: vec![nearest_number_baseline(ex)],
            frequency: random_top3_baseline(&mut rng),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn ex(input: &str, med: &str) -> Example {
        Example {
            id: "x".into(),
            source_tag_id: "x".into(),
            input_tokens: input.split(' ').map(String::from).collect(),
            medication: med.into(),
            dosage_target: vec!["none".into()],
            frequency_target: vec!["none".into()],
            categories: BTreeSet::new(),
        }
    }

    #[test]
    fn nearest_number() {
        assert_eq!(
            nearest_number_baseline(&ex("none take rx-aspirin eighty-one daily", "rx-aspirin")),
            "eighty-one"
        );
        assert_eq!(nearest_number_baseline(&ex("none take rx-aspirin daily", "rx-aspirin")), "none");
        assert_eq!(nearest_number_baseline(&ex("none take five daily", "rx-aspirin")), "none");
        assert_eq!(
            nearest_number_baseline(&ex("none ten rx-a twenty", "rx-a")),
            "ten",
            "ties go left"
        );
    }

    #[test]
    fn top3_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = [0usize; 3];
        for _ in 0..3000 {
            let draw = random_top3_baseline(&mut rng).join(" ");
            let i = TOP3_FREQUENCIES.iter().position(|f| *f == draw).unwrap();
            counts[i] += 1;
        }
        for c in counts {
            assert!((c as f64 / 3000.0 - 1.0 / 3.0).abs() <= 0.03, "{counts:?}");
        }
    }

    #[test]
    fn top3_seeded() {
        let a = random_top3_baseline(&mut ChaCha8Rng::seed_from_u64(9));
        let b = random_top3_baseline(&mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        let e = ex("none", "rx-a");
        assert_eq!(
            NaiveBaselines { seed: 1 }.predict(&e).unwrap(),
            NaiveBaselines { seed: 1 }.predict(&e).unwrap()
        );
    }
}
