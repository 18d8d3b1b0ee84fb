use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::evaluate;
use crate::corpus::{Corpus, CorpusSplit};
use crate::error::{Error, Result};
use crate::pgnet::{Architecture, ModelConfig, PgNet};
use crate::preprocess::{augment_by_shuffle, PreprocessStats, Preprocessor};
use crate::training::{pretrain_summarization, qa_vocabulary, summary_vocabulary, train_qa, transfer_encoder, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    ColdStart,
    Pretrained,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::ColdStart => "cold_start",
            Variant::Pretrained => "pretrained",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    /// Training transcript counts.
    pub sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub pretrain: TrainConfig,
    pub vocab_threshold: usize,
    pub pretrain_vocab_threshold: usize,
    pub augment: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub size: usize,
    pub variant: Variant,
    pub seed: u64,
    pub train_examples: usize,
    pub dosage_f1: f64,
    pub frequency_f1: f64,
    pub mean_f1: f64,
    pub dosage_exact_match: f64,
    pub best_iteration: usize,
}

/// Tab-separated table, one row per (size, variant, seed).
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut s = String::from("size\tvariant\tseed\ttrain_examples\tdosage_f1\tfrequency_f1\tmean_f1\tdosage_em\tbest_iteration\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}",
            r.size,
            r.variant.name(),
            r.seed,
            r.train_examples,
            r.dosage_f1,
            r.frequency_f1,
            r.mean_f1,
            r.dosage_exact_match,
            r.best_iteration
        );
    }
    s
}

/// Mean F1 over seeds for each (size, variant).
pub fn mean_by_size(rows: &[AblationRow]) -> BTreeMap<(usize, Variant), f64> {
    let mut acc: BTreeMap<(usize, Variant), (f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = acc.entry((r.size, r.variant)).or_default();
        e.0 += r.mean_f1;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

/// Trains one model per (size, seed, variant) on a seeded subset of the
/// training transcripts and scores it on the fixed test split.
///
/// Every run shares the vocabulary of the full training split. Subsets of one
/// seed are nested. The pretrained variant transfers from one summarizer per
/// seed, trained on the summaries of the full training split.
pub fn ablate_training_size(
    corpus: &Corpus,
    split: &CorpusSplit,
    preprocessor: &Preprocessor,
    config: &AblationConfig,
) -> Result<Vec<AblationRow>> {
    if config.model.architecture == Architecture::Summarizer {
        return Err(Error::config("ablation trains qa or md models"));
    }
    for &size in &config.sizes {
        if size == 0 || size > split.train.len() {
            return Err(Error::config(format!(
                "training size {size} is outside 1..={} available transcripts",
                split.train.len()
            )));
        }
    }
    let mut stats = PreprocessStats::default();
    let full_train = preprocessor.build_examples(&corpus.subset(&split.train), &mut stats);
    let validation = preprocessor.build_examples(&corpus.subset(&split.validation), &mut stats);
    let test = preprocessor.build_examples(&corpus.subset(&split.test), &mut stats);
    if test.is_empty() || validation.is_empty() {
        return Err(Error::data("validation and test splits need examples"));
    }
    let vocab = qa_vocabulary(&full_train, config.vocab_threshold)?;

    let mut rows = Vec::new();
    for &seed in &config.seeds {
        let summarizer = if config.variants.contains(&Variant::Pretrained) {
            Some(pretrain_for_ablation(corpus, split, preprocessor, config, seed)?)
        } else {
            None
        };
        let mut order = split.train.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        for &size in &config.sizes {
            let subset = corpus.subset(&order[..size]);
            let mut examples = preprocessor.build_examples(&subset, &mut PreprocessStats::default());
            if config.augment {
                examples = augment_by_shuffle(&examples, seed);
            }
            if examples.is_empty() {
                return Err(Error::data(format!("no training examples in a {size}-transcript subset")));
            }
            for &variant in &config.variants {
                let mut model = PgNet::new(config.model.clone(), vocab.clone(), seed)?;
                if variant == Variant::Pretrained {
                    transfer_encoder(summarizer.as_ref().expect("pretrained above"), &mut model)?;
                }
                let train = TrainConfig {
                    seed,
                    ..config.train.clone()
                };
                let (model, report) = train_qa(model, &examples, &validation, &train)?;
                let r = evaluate(&model, &test)?;
                log::info!("ablation size {size} {} seed {seed}: mean F1 {:.4}", variant.name(), r.mean_f1());
                rows.push(AblationRow {
                    size,
                    variant,
                    seed,
                    train_examples: examples.len(),
                    dosage_f1: r.dosage.f1,
                    frequency_f1: r.frequency.f1,
                    mean_f1: r.mean_f1(),
                    dosage_exact_match: r.dosage_exact_match,
                    best_iteration: report.best_iteration,
                });
            }
        }
    }
    Ok(rows)
}

fn pretrain_for_ablation(
    corpus: &Corpus,
    split: &CorpusSplit,
    preprocessor: &Preprocessor,
    config: &AblationConfig,
    seed: u64,
) -> Result<PgNet> {
    let train = preprocessor.build_summary_examples(&corpus.subset(&split.train));
    let validation = preprocessor.build_summary_examples(&corpus.subset(&split.validation));
    let vocab = summary_vocabulary(&train, config.pretrain_vocab_threshold)?;
    let model_config = ModelConfig {
        architecture: Architecture::Summarizer,
        ..config.model.clone()
    };
    let model = PgNet::new(model_config, vocab, seed)?;
    let pretrain = TrainConfig {
        seed,
        ..config.pretrain.clone()
    };
    Ok(pretrain_summarization(model, &train, &validation, &pretrain)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, split_corpus, GenerationProfile, SplitFractions};

    fn row(size: usize, variant: Variant, seed: u64, mean_f1: f64) -> AblationRow {
        AblationRow {
            size,
            variant,
            seed,
            train_examples: 0,
            dosage_f1: mean_f1,
            frequency_f1: mean_f1,
            mean_f1,
            dosage_exact_match: 0.0,
            best_iteration: 0,
        }
    }

    fn tiny() -> (Corpus, CorpusSplit, Preprocessor, AblationConfig) {
        let corpus = generate_synthetic_corpus(3, 30, &GenerationProfile::default()).unwrap();
        let split = split_corpus(&corpus.ids(), 3, SplitFractions::default()).unwrap();
        let pre = Preprocessor::default().with_corpus_medications(&corpus);
        let model = ModelConfig {
            hidden: 8,
            embed_dim: 8,
            ..ModelConfig::default()
        };
        let train = TrainConfig {
            max_iterations: 10,
            eval_every: 5,
            eval_limit: 10,
            ..TrainConfig::desk_qa()
        };
        let config = AblationConfig {
            sizes: vec![split.train.len()],
            seeds: vec![1],
            variants: vec![Variant::ColdStart, Variant::Pretrained],
            model,
            pretrain: TrainConfig {
                max_iterations: 10,
                eval_every: 5,
                ..TrainConfig::desk_pretrain()
            },
            train,
            vocab_threshold: 1,
            pretrain_vocab_threshold: 1,
            augment: false,
        };
        (corpus, split, pre, config)
    }

    #[test]
    fn means_group_by_size_and_variant() {
        let rows = [
            row(10, Variant::ColdStart, 1, 0.2),
            row(10, Variant::ColdStart, 2, 0.4),
            row(10, Variant::Pretrained, 1, 0.5),
        ];
        let m = mean_by_size(&rows);
        assert_eq!(m.len(), 2);
        assert!((m[&(10, Variant::ColdStart)] - 0.3).abs() < 1e-12);
        assert_eq!(m[&(10, Variant::Pretrained)], 0.5);
        let table = ablation_table(&rows);
        assert_eq!(table.lines().count(), 4);
        assert!(table.lines().nth(3).unwrap().starts_with("10\tpretrained\t1\t"));
    }

    #[test]
    fn sizes_are_validated() {
        let (corpus, split, pre, mut config) = tiny();
        config.sizes = vec![split.train.len() + 1];
        assert!(ablate_training_size(&corpus, &split, &pre, &config).is_err());
        config.sizes = vec![0];
        assert!(ablate_training_size(&corpus, &split, &pre, &config).is_err());
    }

    #[test]
    fn full_size_is_one_run_per_variant() {
        let (corpus, split, pre, config) = tiny();
        let rows = ablate_training_size(&corpus, &split, &pre, &config).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].train_examples, rows[1].train_examples);
        assert_eq!(
            rows.iter().map(|r| r.variant).collect::<Vec<_>>(),
            [Variant::ColdStart, Variant::Pretrained]
        );
        for r in &rows {
            assert!((0.0..=1.0).contains(&r.mean_f1));
        }
    }
}
