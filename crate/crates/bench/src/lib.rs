//! Shared fixtures for the criterion benchmarks.

use medreg::corpus::{generate_synthetic_corpus, Corpus, GenerationProfile};
use medreg::pgnet::{Architecture, ModelConfig, PgNet};
use medreg::preprocess::{Example, PreprocessStats, Preprocessor};
use medreg::training::qa_vocabulary;

/// A seeded corpus with the default generation profile.
pub fn corpus(n: usize) -> Corpus {
    generate_synthetic_corpus(1, n, &GenerationProfile::default()).expect("default profile is valid")
}

/// Examples of a seeded corpus and the preprocessor that built them.
pub fn examples(n: usize) -> (Preprocessor, Vec<Example>) {
    let c = corpus(n);
    let pre = Preprocessor::default().with_corpus_medications(&c);
    let ex = pre.build_examples(&c, &mut PreprocessStats::default());
    (pre, ex)
}

/// An untrained model with hidden and embedding width `h`.
pub fn model(arch: Architecture, h: usize, examples: &[Example]) -> PgNet {
    let config = ModelConfig {
        architecture: arch,
        hidden: h,
        embed_dim: h,
        ..ModelConfig::default()
    };
    PgNet::new(config, qa_vocabulary(examples, 1).expect("non-empty"), 1).expect("valid config")
}

/// The example with the longest input.
pub fn longest(examples: &[Example]) -> &Example {
    examples.iter().max_by_key(|e| e.input_tokens.len()).expect("non-empty")
}
