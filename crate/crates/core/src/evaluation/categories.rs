use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::NONE;
use crate::preprocess::{is_number_token, is_rx_token, Example};

/// Difficulty buckets. Dosage labels overlap; frequency labels partition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    /// Dosage target is `none`.
    #[serde(rename = "NONE_D")]
    NoneDosage,
    /// More than one distinct medication in the input.
    #[serde(rename = "MM")]
    MultipleMedications,
    /// More than one number in the input.
    #[serde(rename = "MN")]
    MultipleNumbers,
    /// Another number lies between the medication and its dosage.
    #[serde(rename = "NBM")]
    NumberBetween,
    #[serde(rename = "NONE_F")]
    NoneFrequency,
    #[serde(rename = "NN")]
    NotNoneFrequency,
}

impl Category {
    pub const DOSAGE: [Category; 4] = [
        Category::NoneDosage,
        Category::MultipleMedications,
        Category::MultipleNumbers,
        Category::NumberBetween,
    ];
    pub const FREQUENCY: [Category; 2] = [Category::NoneFrequency, Category::NotNoneFrequency];

    pub fn label(self) -> &'static str {
        match self {
            Category::NoneDosage => "NONE_D",
            Category::MultipleMedications => "MM",
            Category::MultipleNumbers => "MN",
            Category::NumberBetween => "NBM",
            Category::NoneFrequency => "NONE_F",
            Category::NotNoneFrequency => "NN",
        }
    }
}

fn is_none(target: &[String]) -> bool {
    target.is_empty() || (target.len() == 1 && target[0] == NONE)
}

/// True when some number token sits strictly between the closest
/// (medication mention, dosage mention) pair; `None` when either is absent.
pub fn number_between(tokens: &[String], medication: &str, dosage: &str) -> Option<bool> {
    let meds: Vec<usize> = positions(tokens, medication);
    let doses: Vec<usize> = positions(tokens, dosage);
    let (m, d) = meds
        .iter()
        .flat_map(|&m| doses.iter().map(move |&d| (m, d)))
        .min_by_key(|&(m, d)| (m.abs_diff(d), d))?;
    let (lo, hi) = if m < d { (m, d) } else { (d, m) };
    Some(tokens[lo + 1..hi].iter().any(|t| is_number_token(t)))
}

fn positions(tokens: &[String], word: &str) -> Vec<usize> {
    tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| *t == word)
        .map(|(i, _)| i)
        .collect()
}

pub fn categorize(ex: &Example) -> BTreeSet<Category> {
    let mut labels = BTreeSet::new();
    let input = &ex.input_tokens;
    if is_none(&ex.dosage_target) {
        labels.insert(Category::NoneDosage);
    }
    let mut meds: Vec<&String> = input.iter().filter(|t| is_rx_token(t)).collect();
    meds.sort();
    meds.dedup();
    if meds.len() >= 2 {
        labels.insert(Category::MultipleMedications);
    }
    if input.iter().filter(|t| is_number_token(t)).count() >= 2 {
        labels.insert(Category::MultipleNumbers);
    }
    if !is_none(&ex.dosage_target)
        && number_between(input, &ex.medication, &ex.dosage_target[0]) == Some(true)
    {
        labels.insert(Category::NumberBetween);
    }
    labels.insert(if is_none(&ex.frequency_target) {
        Category::NoneFrequency
    } else {
        Category::NotNoneFrequency
    });
    labels
}
