//! ROUGE-1 scoring, naive baselines, category breakdown and the
//! training-size ablation harness.

mod ablation;
mod baselines;
mod categories;
mod rouge;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ablation::{ablate_training_size, ablation_table, mean_by_size, AblationConfig, AblationRow, Variant};
pub use baselines::{nearest_number_baseline, random_top3_baseline, NaiveBaselines, TOP3_FREQUENCIES};
pub use categories::{categorize, number_between, Category};
pub use rouge::{rouge1, RougeScore};

use crate::error::{Error, Result};
use crate::preprocess::{Example, Field};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub dosage: Vec<String>,
    pub frequency: Vec<String>,
}

impl Prediction {
    pub fn field(&self, field: Field) -> &[String] {
        match field {
            Field::Dosage => &self.dosage,
            Field::Frequency => &self.frequency,
        }
    }
}

/// Anything that answers dosage and frequency for an example.
pub trait Predictor: Sync {
    fn predict(&self, ex: &Example) -> Result<Prediction>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub medication: String,
    pub dosage_reference: Vec<String>,
    pub dosage_prediction: Vec<String>,
    pub frequency_reference: Vec<String>,
    pub frequency_prediction: Vec<String>,
    pub dosage: RougeScore,
    pub frequency: RougeScore,
    pub categories: BTreeSet<Category>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRow {
    pub category: Category,
    pub field: Field,
    pub count: usize,
    pub score: RougeScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub examples: usize,
    pub dosage: RougeScore,
    pub frequency: RougeScore,
    /// Fraction of examples whose dosage prediction equals the reference.
    pub dosage_exact_match: f64,
    pub categories: Vec<CategoryRow>,
    pub records: Vec<ExampleRecord>,
}

impl EvaluationReport {
    /// Mean of dosage and frequency ROUGE-1 F1.
    pub fn mean_f1(&self) -> f64 {
        (self.dosage.f1 + self.frequency.f1) / 2.0
    }

    pub fn category(&self, c: Category) -> Option<&CategoryRow> {
        self.categories.iter().find(|r| r.category == c)
    }

    /// Flat tab-separated table: one overall row per field, one per category.
    pub fn to_table(&self) -> String {
        let mut s = String::from("field\tcategory\tcount\tf1\tprecision\trecall\n");
        for (field, score) in [("dosage", self.dosage), ("frequency", self.frequency)] {
            let _ = writeln!(
                s,
                "{field}\tALL\t{}\t{:.6}\t{:.6}\t{:.6}",
                self.examples, score.f1, score.precision, score.recall
            );
        }
        for row in &self.categories {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
                row.field.name(),
                row.category.label(),
                row.count,
                row.score.f1,
                row.score.precision,
                row.score.recall
            );
        }
        s
    }
}

/// Scores `predictor` on `examples`. Fails if any dosage score breaks the
/// single-token property F1 = P = R.
pub fn evaluate<P: Predictor + ?Sized>(predictor: &P, examples: &[Example]) -> Result<EvaluationReport> {
    let records: Vec<ExampleRecord> = examples
        .par_iter()
        .map(|ex| -> Result<ExampleRecord> {
            let p = predictor.predict(ex)?;
            Ok(ExampleRecord {
                id: ex.id.clone(),
                medication: ex.medication.clone(),
                dosage: rouge1(&p.dosage, &ex.dosage_target),
                frequency: rouge1(&p.frequency, &ex.frequency_target),
                dosage_reference: ex.dosage_target.clone(),
                dosage_prediction: p.dosage,
                frequency_reference: ex.frequency_target.clone(),
                frequency_prediction: p.frequency,
                categories: ex.categories.clone(),
            })
        })
        .collect::<Result<_>>()?;

    for r in &records {
        let d = r.dosage;
        if d.f1 != d.precision || d.f1 != d.recall {
            return Err(Error::data(format!(
                "dosage score for `{}` breaks F1 = P = R: {d:?} (prediction {:?})",
                r.id, r.dosage_prediction
            )));
        }
    }

    let dosage_scores: Vec<RougeScore> = records.iter().map(|r| r.dosage).collect();
    let frequency_scores: Vec<RougeScore> = records.iter().map(|r| r.frequency).collect();
    let exact = records
        .iter()
        .filter(|r| r.dosage_prediction == r.dosage_reference)
        .count();

    let mut categories = Vec::new();
    for (field, cats) in [
        (Field::Dosage, &Category::DOSAGE[..]),
        (Field::Frequency, &Category::FREQUENCY[..]),
    ] {
        for &c in cats {
            let scores: Vec<RougeScore> = records
                .iter()
                .filter(|r| r.categories.contains(&c))
                .map(|r| match field {
                    Field::Dosage => r.dosage,
                    Field::Frequency => r.frequency,
                })
                .collect();
            categories.push(CategoryRow {
                category: c,
                field,
                count: scores.len(),
                score: RougeScore::mean(&scores),
            });
        }
    }

    Ok(EvaluationReport {
        examples: records.len(),
        dosage: RougeScore::mean(&dosage_scores),
        frequency: RougeScore::mean(&frequency_scores),
        dosage_exact_match: if records.is_empty() {
            0.0
        } else {
            exact as f64 / records.len() as f64
        },
        categories,
        records,
    })
}

/// Number of examples carrying each category.
pub fn category_census(examples: &[Example]) -> Vec<(Category, usize)> {
    Category::DOSAGE
        .iter()
        .chain(Category::FREQUENCY.iter())
        .map(|&c| (c, examples.iter().filter(|e| e.categories.contains(&c)).count()))
        .collect()
}
