use medreg::corpus::{
    generate_synthetic_corpus, load_corpus, save_corpus, split_corpus, GenerationProfile, SplitFractions,
};
use medreg::evaluation::{evaluate, NaiveBaselines};
use medreg::pgnet::{Architecture, ModelConfig, PgNet};
use medreg::pipeline::evaluate_pipeline;
use medreg::preprocess::{augment_by_shuffle, PreprocessStats, Preprocessor};
use medreg::training::{qa_vocabulary, train_qa, TrainConfig};

fn tiny(arch: Architecture) -> ModelConfig {
    ModelConfig {
        architecture: arch,
        hidden: 8,
        embed_dim: 8,
        ..ModelConfig::default()
    }
}

#[test]
fn corpus_to_pipeline() {
    let corpus = generate_synthetic_corpus(3, 40, &GenerationProfile::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    save_corpus(&corpus, &path).unwrap();
    assert_eq!(load_corpus(&path).unwrap(), corpus);

    let split = split_corpus(&corpus.ids(), 3, SplitFractions::default()).unwrap();
    let pre = Preprocessor::default().with_corpus_medications(&corpus);
    let mut stats = PreprocessStats::default();
    let train = augment_by_shuffle(&pre.build_examples(&corpus.subset(&split.train), &mut stats), 3);
    let validation = pre.build_examples(&corpus.subset(&split.validation), &mut stats);
    assert!(!train.is_empty() && !validation.is_empty());

    let config = TrainConfig {
        max_iterations: 30,
        eval_every: 10,
        seed: 3,
        ..TrainConfig::desk_qa()
    };
    for arch in [Architecture::Qa, Architecture::Md] {
        let model = PgNet::new(tiny(arch), qa_vocabulary(&train, 1).unwrap(), 3).unwrap();
        let (mut model, report) = train_qa(model, &train, &validation, &config).unwrap();
        assert_eq!(report.loss_curve.len(), 30);
        assert!(report.loss_curve.iter().all(|l| l.is_finite()));

        let path = dir.path().join("model.ckpt");
        model.save(&path).unwrap();
        model.round_to_f32();
        let loaded = PgNet::load(&path).unwrap();
        let a = evaluate(&model, &validation).unwrap();
        assert_eq!(a, evaluate(&loaded, &validation).unwrap());
        assert_eq!(a.examples, validation.len());

        let score = evaluate_pipeline(&corpus.subset(&split.validation), &loaded, &pre).unwrap();
        assert!(score.matched <= score.tags);
        assert!((0.0..=1.0).contains(&score.dosage_f1()));
    }

    let baseline = evaluate(&NaiveBaselines { seed: 3 }, &validation).unwrap();
    assert_eq!(baseline, evaluate(&NaiveBaselines { seed: 3 }, &validation).unwrap());
}
