use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use medreg::corpus::{generate_synthetic_corpus, load_corpus, save_corpus, split_corpus, Corpus, CorpusSplit};
use medreg::embeddings::{build_store, EmbeddingKind, PseudoEmbedder, VectorStore};
use medreg::evaluation::{
    ablate_training_size, ablation_table, evaluate, mean_by_size, AblationConfig, EvaluationReport, NaiveBaselines,
    Prediction, Predictor,
};
use medreg::pgnet::{embedding_sequences, Architecture, ModelConfig, PgNet};
use medreg::pipeline::{evaluate_asr, evaluate_pipeline, extract_document, AsrEvaluation, AsrNoise, PipelineScore};
use medreg::preprocess::{
    augment_by_shuffle, is_rx_token, read_list, Example, PreprocessStats, Preprocessor, SummaryExample, Vocabulary,
    RX_PREFIX,
};
use medreg::training::{
    pretrain_summarization, qa_vocabulary, summary_vocabulary, train_qa, transfer_encoder, TrainReport,
};
use medreg::{Error, Result};
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::manifest::{manifest_path, sibling, RunManifest};
use crate::settings::Settings;
use crate::{resolve_settings, Command};

/// Runs `command` and writes its manifest, on failure as well as success.
pub fn execute(command: &Command, env: &[(String, String)]) -> CliResult<()> {
    let settings = resolve_settings(command, env);
    let mut manifest = RunManifest::new(command.name(), settings.as_ref().ok());
    let result = settings
        .map_err(CliError::from)
        .and_then(|s| dispatch(command, &s, &mut manifest));
    if let Err(e) = &result {
        manifest.fail(e.to_string());
    }
    let written = manifest.write(&manifest_path(command.out()));
    result?;
    written?;
    Ok(())
}

fn dispatch(command: &Command, s: &Settings, m: &mut RunManifest) -> CliResult<()> {
    let start = Instant::now();
    match command {
        Command::Generate { out, .. } => generate(s, out, m)?,
        Command::Split { input, out, .. } => split(s, input, out, m)?,
        Command::Preprocess { input, out, .. } => preprocess(s, input, out, m)?,
        Command::Pretrain {
            input, split, store, out, ..
        } => pretrain(s, input, split.as_deref(), store.as_deref(), out, m)?,
        Command::Train {
            input,
            split,
            pretrained_encoder,
            store,
            out,
            ..
        } => train(s, input, split.as_deref(), pretrained_encoder.as_deref(), store.as_deref(), out, m)?,
        Command::Evaluate {
            input,
            split,
            model_path,
            store,
            out,
            ..
        } => evaluate_cmd(s, input, split.as_deref(), model_path, store.as_deref(), out, m)?,
        Command::Ablate { input, split, out, .. } => ablate(s, input, split.as_deref(), out, m)?,
        Command::Extract {
            input, model_path, out, ..
        } => extract(s, input, model_path, out, m)?,
    }
    log::info!("{} finished in {:.1}s", command.name(), start.elapsed().as_secs_f64());
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::data(e.to_string()))?;
    s.push('\n');
    write_file(path, s.as_bytes())
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| Error::data(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn load_input(path: &Path, m: &mut RunManifest) -> Result<Corpus> {
    let corpus = load_corpus(path)?;
    m.input("corpus", path)?;
    Ok(corpus)
}

fn load_split(corpus: &Corpus, path: Option<&Path>, s: &Settings, m: &mut RunManifest) -> Result<CorpusSplit> {
    let Some(path) = path else {
        m.seed("split", s.seed);
        return split_corpus(&corpus.ids(), s.seed, s.data.split);
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let split: CorpusSplit =
        serde_json::from_str(&text).map_err(|e| Error::data(format!("split file {}: {e}", path.display())))?;
    let all = split.train.iter().chain(&split.validation).chain(&split.test).chain(&split.holdout);
    for id in all {
        if corpus.get(id).is_none() {
            return Err(Error::data(format!("split names transcript `{id}` absent from the corpus")));
        }
    }
    m.input("split", path)?;
    Ok(split)
}

/// Lexicons for a model: built-ins, the optional lexicon file, the corpus'
/// tagged names and every medication the vocabulary knows.
fn preprocessor(
    s: &Settings,
    model: &ModelConfig,
    corpus: Option<&Corpus>,
    vocab: Option<&Vocabulary>,
    m: &mut RunManifest,
) -> Result<Preprocessor> {
    let mut pre = Preprocessor::default();
    if let Some(c) = corpus {
        pre = pre.with_corpus_medications(c);
    }
    if let Some(path) = &s.data.lexicon {
        for name in read_list(path)? {
            pre.lexicon.insert(&name);
        }
        m.input("lexicon", path)?;
    }
    if let Some(v) = vocab {
        for w in v.words().iter().filter(|w| is_rx_token(w)) {
            pre.lexicon.insert(&w[RX_PREFIX.len()..].replace('-', " "));
        }
    }
    pre.config.max_input_tokens = model.max_encoder_steps;
    pre.config.dosage_steps = model.dosage_steps;
    pre.config.frequency_steps = model.frequency_steps;
    pre.config.summary_steps = model.summary_steps;
    Ok(pre)
}

fn embedder(model: &ModelConfig) -> PseudoEmbedder {
    PseudoEmbedder {
        d: model.embed_dim,
        layers: model.store_layers,
        seed: model.pseudo_seed,
    }
}

/// Attaches vectors for store embeddings: from `path` when given, otherwise
/// built by the pseudo-contextual embedder over `sequences`.
fn attach_store(
    model: &mut PgNet,
    sequences: &[(String, Vec<String>)],
    path: Option<&Path>,
    m: &mut RunManifest,
) -> Result<()> {
    if model.config().embedding != EmbeddingKind::Store {
        return Ok(());
    }
    let store = match path {
        Some(p) => {
            m.input("store", p)?;
            VectorStore::load(p)?
        }
        None => build_store(
            &embedder(model.config()),
            sequences.iter().map(|(k, t)| (k.as_str(), t.as_slice())),
        )?,
    };
    model.attach_store(Arc::new(store))
}

fn example_sequences(examples: &[&[Example]], architecture: Architecture) -> Vec<(String, Vec<String>)> {
    examples
        .iter()
        .flat_map(|set| set.iter())
        .flat_map(|e| embedding_sequences(e, architecture))
        .collect()
}

fn summary_sequences(examples: &[&[SummaryExample]]) -> Vec<(String, Vec<String>)> {
    examples
        .iter()
        .flat_map(|set| set.iter())
        .map(|e| (e.id.clone(), e.input_tokens.clone()))
        .collect()
}

/// A model whose store vectors are computed per query, for inputs no
/// precomputed store can know about.
enum Runner {
    Plain(PgNet),
    OnTheFly { model: Mutex<PgNet>, embedder: PseudoEmbedder },
}

impl Runner {
    fn new(model: PgNet) -> Self {
        if model.config().embedding == EmbeddingKind::Store {
            let embedder = embedder(model.config());
            Runner::OnTheFly {
                model: Mutex::new(model),
                embedder,
            }
        } else {
            Runner::Plain(model)
        }
    }
}

impl Predictor for Runner {
    fn predict(&self, ex: &Example) -> Result<Prediction> {
        match self {
            Runner::Plain(model) => model.predict(ex),
            Runner::OnTheFly { model, embedder } => {
                let mut model = model.lock().unwrap_or_else(|p| p.into_inner());
                let seqs = embedding_sequences(ex, model.architecture());
                let store = build_store(embedder, seqs.iter().map(|(k, t)| (k.as_str(), t.as_slice())))?;
                model.attach_store(Arc::new(store))?;
                model.predict(ex)
            }
        }
    }
}

fn write_report(out: &Path, report: &TrainReport, m: &mut RunManifest) -> Result<()> {
    let report_path = sibling(out, "report.json");
    let log_path = sibling(out, "log");
    write_json(&report_path, report)?;
    write_file(&log_path, report.to_log().as_bytes())?;
    m.output("report", &report_path)?;
    m.output("log", &log_path)?;
    log::info!(
        "stopped at iteration {} ({:?}); best {} {:.4} at {}; {:.1}s",
        report.stopped_iteration,
        report.stop_reason,
        report.metric_name,
        report.best_metric,
        report.best_iteration,
        report.wall_clock.as_secs_f64()
    );
    Ok(())
}

fn generate(s: &Settings, out: &Path, m: &mut RunManifest) -> Result<()> {
    let corpus = generate_synthetic_corpus(s.seed, s.data.n_transcripts, &s.data.profile())?;
    save_corpus(&corpus, out)?;
    m.seed("generate", s.seed);
    m.output("corpus", out)?;
    println!("generated {} transcripts with {} tags", corpus.len(), corpus.tag_count());
    Ok(())
}

fn split(s: &Settings, input: &Path, out: &Path, m: &mut RunManifest) -> Result<()> {
    let corpus = load_input(input, m)?;
    let split = split_corpus(&corpus.ids(), s.seed, s.data.split)?;
    m.seed("split", s.seed);
    write_json(out, &split)?;
    m.output("split", out)?;
    let (a, b, c, d) = split.sizes();
    println!("train {a} validation {b} test {c} holdout {d}");
    Ok(())
}

fn preprocess(s: &Settings, input: &Path, out: &Path, m: &mut RunManifest) -> Result<()> {
    let corpus = load_input(input, m)?;
    let pre = preprocessor(s, &s.model, Some(&corpus), None, m)?;
    let mut stats = PreprocessStats::default();
    let mut examples = pre.build_examples(&corpus, &mut stats);
    let original = examples.len();
    if s.data.augment {
        examples = augment_by_shuffle(&examples, s.seed);
        m.seed("augment", s.seed);
    }
    write_lines(out, &examples)?;
    m.output("examples", out)?;

    #[derive(Serialize)]
    struct Stats<'a> {
        examples: usize,
        augmented: usize,
        preprocess: &'a PreprocessStats,
    }
    let stats_path = sibling(out, "stats.json");
    write_json(
        &stats_path,
        &Stats {
            examples: original,
            augmented: examples.len() - original,
            preprocess: &stats,
        },
    )?;
    m.output("stats", &stats_path)?;

    if s.model.embedding == EmbeddingKind::Store {
        let store_path = sibling(out, "store");
        let seqs = example_sequences(&[&examples], s.model.architecture);
        build_store(&embedder(&s.model), seqs.iter().map(|(k, t)| (k.as_str(), t.as_slice())))?.save(&store_path)?;
        m.output("store", &store_path)?;
    }
    println!("{} examples ({original} before augmentation)", examples.len());
    Ok(())
}

fn pretrain(
    s: &Settings,
    input: &Path,
    split_path: Option<&Path>,
    store: Option<&Path>,
    out: &Path,
    m: &mut RunManifest,
) -> Result<()> {
    let corpus = load_input(input, m)?;
    let split = load_split(&corpus, split_path, s, m)?;
    let model_config = ModelConfig {
        architecture: Architecture::Summarizer,
        ..s.model.clone()
    };
    let pre = preprocessor(s, &model_config, Some(&corpus), None, m)?;
    let train = pre.build_summary_examples(&corpus.subset(&split.train));
    let validation = pre.build_summary_examples(&corpus.subset(&split.validation));
    if train.is_empty() {
        return Err(Error::data("no summaries in the training split"));
    }
    let vocab = summary_vocabulary(&train, s.data.pretrain_vocab_threshold)?;
    let mut model = PgNet::new(model_config, vocab, s.seed)?;
    m.seed("init", s.seed);
    attach_store(&mut model, &summary_sequences(&[&train, &validation]), store, m)?;
    let config = s.pretrain_config();
    m.seed("train", config.seed);
    let (model, report) = pretrain_summarization(model, &train, &validation, &config)?;
    model.save(out)?;
    m.output("checkpoint", out)?;
    write_report(out, &report, m)?;
    println!("pretrained on {} summaries; best {} {:.4}", train.len(), report.metric_name, report.best_metric);
    Ok(())
}

fn train(
    s: &Settings,
    input: &Path,
    split_path: Option<&Path>,
    pretrained: Option<&Path>,
    store: Option<&Path>,
    out: &Path,
    m: &mut RunManifest,
) -> Result<()> {
    if s.model.architecture == Architecture::Summarizer {
        return Err(Error::config("train builds qa or md models; use pretrain for summarizers"));
    }
    let corpus = load_input(input, m)?;
    let split = load_split(&corpus, split_path, s, m)?;
    let pre = preprocessor(s, &s.model, Some(&corpus), None, m)?;
    let mut stats = PreprocessStats::default();
    let mut train = pre.build_examples(&corpus.subset(&split.train), &mut stats);
    let validation = pre.build_examples(&corpus.subset(&split.validation), &mut stats);
    if train.is_empty() {
        return Err(Error::data("no examples in the training split"));
    }
    if s.data.augment {
        train = augment_by_shuffle(&train, s.seed);
        m.seed("augment", s.seed);
    }
    let vocab = qa_vocabulary(&train, s.data.vocab_threshold)?;
    let mut model = PgNet::new(s.model.clone(), vocab, s.seed)?;
    m.seed("init", s.seed);
    if let Some(p) = pretrained {
        let summarizer = PgNet::load(p)?;
        m.input("pretrained_encoder", p)?;
        let t = transfer_encoder(&summarizer, &mut model)?;
        log::info!(
            "transferred {} tensors; {} of {} embedding rows",
            t.copied.len(),
            t.table_rows_copied,
            t.table_rows
        );
    }
    attach_store(&mut model, &example_sequences(&[&train, &validation], s.model.architecture), store, m)?;
    let config = s.train_config();
    m.seed("train", config.seed);
    let (model, report) = train_qa(model, &train, &validation, &config)?;
    model.save(out)?;
    m.output("checkpoint", out)?;
    write_report(out, &report, m)?;
    println!(
        "trained {} on {} examples; best {} {:.4} at iteration {}",
        s.model.architecture,
        train.len(),
        report.metric_name,
        report.best_metric,
        report.best_iteration
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct PipelineSummary {
    dosage_f1: f64,
    frequency_f1: f64,
    mean_f1: f64,
    score: PipelineScore,
}

impl From<PipelineScore> for PipelineSummary {
    fn from(score: PipelineScore) -> Self {
        PipelineSummary {
            dosage_f1: score.dosage_f1(),
            frequency_f1: score.frequency_f1(),
            mean_f1: score.mean_f1(),
            score,
        }
    }
}

#[derive(Debug, Serialize)]
struct AsrRun {
    seed: u64,
    noise: AsrNoise,
    summary: PipelineSummary,
    kept_tags: usize,
    dropped_tags: usize,
}

#[derive(Debug, Serialize)]
struct PipelineReport {
    clean: PipelineSummary,
    asr: Vec<AsrRun>,
}

#[derive(Debug, Serialize)]
struct EvaluateOutput {
    split: String,
    model: EvaluationReport,
    baselines: Option<EvaluationReport>,
    pipeline: Option<PipelineReport>,
}

fn evaluate_cmd(
    s: &Settings,
    input: &Path,
    split_path: Option<&Path>,
    model_path: &Path,
    store: Option<&Path>,
    out: &Path,
    m: &mut RunManifest,
) -> Result<()> {
    let mut model = PgNet::load(model_path)?;
    m.input("model", model_path)?;
    if model.architecture() == Architecture::Summarizer {
        return Err(Error::config("evaluate scores qa or md checkpoints"));
    }
    let corpus = load_input(input, m)?;
    let split = load_split(&corpus, split_path, s, m)?;
    let ids = if s.data.eval_split == "validation" {
        &split.validation
    } else {
        &split.test
    };
    let subset = corpus.subset(ids);
    let model_config = model.config().clone();
    let pre = preprocessor(s, &model_config, Some(&corpus), Some(model.vocab()), m)?;
    let examples = pre.build_examples(&subset, &mut PreprocessStats::default());
    if examples.is_empty() {
        return Err(Error::data(format!("no examples in the {} split", s.data.eval_split)));
    }
    let seqs = example_sequences(&[&examples], model.architecture());
    attach_store(&mut model, &seqs, store, m)?;
    let report = evaluate(&model, &examples)?;
    let baselines = if s.data.baselines {
        m.seed("baselines", s.seed);
        Some(evaluate(&NaiveBaselines { seed: s.seed }, &examples)?)
    } else {
        None
    };
    let pipeline = if s.data.pipeline {
        let runner = Runner::new(model);
        let clean = evaluate_pipeline(&subset, &runner, &pre)?;
        let mut asr = Vec::new();
        for seed in s.seeds(s.data.asr_runs) {
            let AsrEvaluation {
                score,
                dropped_tags,
                kept_tags,
            } = evaluate_asr(&subset, &runner, &pre, s.data.asr_noise(), seed)?;
            m.seed(&format!("asr_{}", asr.len()), seed);
            asr.push(AsrRun {
                seed,
                noise: s.data.asr_noise(),
                summary: score.into(),
                kept_tags,
                dropped_tags,
            });
        }
        Some(PipelineReport {
            clean: clean.into(),
            asr,
        })
    } else {
        None
    };

    let table_path = sibling(out, "tsv");
    write_file(&table_path, report.to_table().as_bytes())?;
    println!(
        "model: dosage F1 {:.4} exact {:.4}, frequency F1 {:.4}",
        report.dosage.f1, report.dosage_exact_match, report.frequency.f1
    );
    if let Some(b) = &baselines {
        println!(
            "baselines: dosage F1 {:.4} exact {:.4}, frequency F1 {:.4}",
            b.dosage.f1, b.dosage_exact_match, b.frequency.f1
        );
    }
    if let Some(p) = &pipeline {
        println!("pipeline clean mean F1 {:.4}", p.clean.mean_f1);
        for r in &p.asr {
            println!("pipeline asr seed {} mean F1 {:.4}", r.seed, r.summary.mean_f1);
        }
    }
    write_json(
        out,
        &EvaluateOutput {
            split: s.data.eval_split.clone(),
            model: report,
            baselines,
            pipeline,
        },
    )?;
    m.output("report", out)?;
    m.output("table", &table_path)?;
    Ok(())
}

fn ablate(s: &Settings, input: &Path, split_path: Option<&Path>, out: &Path, m: &mut RunManifest) -> Result<()> {
    if s.model.embedding == EmbeddingKind::Store {
        return Err(Error::config("ablate supports lookup and pseudo embeddings"));
    }
    if s.model.architecture == Architecture::Summarizer {
        return Err(Error::config("ablate trains qa or md models"));
    }
    let corpus = load_input(input, m)?;
    let split = load_split(&corpus, split_path, s, m)?;
    let pre = preprocessor(s, &s.model, Some(&corpus), None, m)?;
    let config = AblationConfig {
        sizes: s.data.ablation_sizes.clone(),
        seeds: s.seeds(s.data.ablation_runs),
        variants: s.data.ablation_variants.clone(),
        model: s.model.clone(),
        train: s.train_config(),
        pretrain: s.pretrain_config(),
        vocab_threshold: s.data.vocab_threshold,
        pretrain_vocab_threshold: s.data.pretrain_vocab_threshold,
        augment: s.data.augment,
    };
    for (i, seed) in config.seeds.iter().enumerate() {
        m.seed(&format!("ablation_{i}"), *seed);
    }
    let rows = ablate_training_size(&corpus, &split, &pre, &config)?;
    write_file(out, ablation_table(&rows).as_bytes())?;
    let rows_path = sibling(out, "json");
    write_json(&rows_path, &rows)?;
    m.output("table", out)?;
    m.output("rows", &rows_path)?;
    for ((size, variant), f1) in mean_by_size(&rows) {
        println!("size {size} {}: mean F1 {f1:.4}", variant.name());
    }
    Ok(())
}

fn extract(s: &Settings, input: &Path, model_path: &Path, out: &Path, m: &mut RunManifest) -> Result<()> {
    let model = PgNet::load(model_path)?;
    m.input("model", model_path)?;
    if model.architecture() == Architecture::Summarizer {
        return Err(Error::config("extract runs qa or md checkpoints"));
    }
    let corpus = load_corpus(input)?;
    m.input("transcripts", input)?;
    let model_config = model.config().clone();
    let pre = preprocessor(s, &model_config, None, Some(model.vocab()), m)?;
    let runner = Runner::new(model);
    let mut results = Vec::new();
    for t in &corpus.transcripts {
        results.extend(extract_document(t, &runner, &pre)?);
    }
    write_lines(out, &results)?;
    m.output("results", out)?;
    println!("{} results from {} transcripts", results.len(), corpus.len());
    Ok(())
}
