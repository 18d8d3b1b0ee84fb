use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::lexicon::is_rx_token;
use super::numbers::is_number_token;
use super::Example;

fn distinct_in_order<'a>(tokens: &'a [String], pred: impl Fn(&str) -> bool) -> Vec<&'a String> {
    let mut seen = Vec::new();
    for t in tokens {
        if pred(t) && !seen.contains(&t) {
            seen.push(t);
        }
    }
    seen
}

fn mentions(tokens: &[String], pred: impl Fn(&str) -> bool) -> usize {
    tokens.iter().filter(|t| pred(t)).count()
}

/// At least two medication mentions or two number mentions in the input.
pub fn is_augmentation_eligible(ex: &Example) -> bool {
    mentions(&ex.input_tokens, is_rx_token) >= 2 || mentions(&ex.input_tokens, is_number_token) >= 2
}

/// A seeded permutation of `values`, avoiding the identity when possible.
fn permutation(values: &[&String], rng: &mut ChaCha8Rng) -> HashMap<String, String> {
    let mut shuffled: Vec<&String> = values.to_vec();
    if values.len() >= 2 {
        for _ in 0..8 {
            shuffled.shuffle(rng);
            if shuffled != values {
                break;
            }
        }
    }
    values
        .iter()
        .zip(shuffled)
        .map(|(a, b)| ((*a).clone(), b.clone()))
        .collect()
}

/// Adds one shuffled copy of every eligible example.
///
/// Distinct medications are permuted among themselves, and so are distinct
/// numbers; the substitution is applied to the input, the queried
/// medication and the targets alike, so each medication keeps the dosage
/// that sits in its position.
pub fn augment_by_shuffle(examples: &[Example], seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(examples.len() * 2);
    for ex in examples {
        out.push(ex.clone());
        if !is_augmentation_eligible(ex) {
            continue;
        }
        let meds = distinct_in_order(&ex.input_tokens, is_rx_token);
        let nums = distinct_in_order(&ex.input_tokens, is_number_token);
        let mut map = permutation(&meds, &mut rng);
        map.extend(permutation(&nums, &mut rng));
        let sub = |t: &String| map.get(t).cloned().unwrap_or_else(|| t.clone());

        let mut shuffled = Example {
            id: format!("{}+shuf", ex.id),
            source_tag_id: ex.source_tag_id.clone(),
            input_tokens: ex.input_tokens.iter().map(sub).collect(),
            medication: sub(&ex.medication),
            dosage_target: ex.dosage_target.iter().map(sub).collect(),
            frequency_target: ex.frequency_target.iter().map(sub).collect(),
            categories: ex.categories.clone(),
        };
        shuffled.refresh_categories();
        out.push(shuffled);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn ex(input: &str, med: &str, dosage: &str) -> Example {
        let mut e = Example {
            id: "e".into(),
            source_tag_id: "e".into(),
            input_tokens: input.split(' ').map(String::from).collect(),
            medication: med.into(),
            dosage_target: vec![dosage.into()],
            frequency_target: vec!["daily".into()],
            categories: BTreeSet::new(),
        };
        e.refresh_categories();
        e
    }

    #[test]
    fn single_mention_passes_through() {
        let e = ex("none take rx-aspirin eighty-one daily", "rx-aspirin", "eighty-one");
        assert!(!is_augmentation_eligible(&e));
        assert_eq!(augment_by_shuffle(&[e.clone()], 1), vec![e]);
    }

    #[test]
    fn shuffle_keeps_positional_relation() {
        let e = ex("none rx-a ten mg and rx-b twenty mg", "rx-a", "ten");
        let out = augment_by_shuffle(&[e.clone()], 4);
        assert_eq!(out.len(), 2);
        let s = &out[1];
        // the queried medication stays in slot 1 and its dosage in slot 2
        assert_eq!(s.input_tokens[1], s.medication);
        assert_eq!(s.input_tokens[2], s.dosage_target[0]);
        assert_ne!(s.input_tokens, e.input_tokens);
    }

    #[test]
    fn reproducible() {
        let e = ex("none rx-a ten rx-b twenty rx-c five", "rx-b", "twenty");
        assert_eq!(augment_by_shuffle(&[e.clone()], 11), augment_by_shuffle(&[e], 11));
    }
}
