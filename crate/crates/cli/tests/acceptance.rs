//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Run with `cargo test -p medreg-cli --test acceptance`.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use medreg::corpus::{generate_synthetic_corpus, split_corpus, Corpus, CorpusSplit, GenerationProfile, SplitFractions, Transcript};
use medreg::evaluation::{
    ablate_training_size, evaluate, mean_by_size, rouge1, AblationConfig, EvaluationReport, NaiveBaselines, Variant,
};
use medreg::pgnet::{Architecture, ExtendedVocab, ModelConfig, PgNet, Task};
use medreg::pipeline::{
    align_tags, detect_medications, detect_quantity, evaluate_asr, evaluate_pipeline, segment_transcript, simulate_asr,
    transcript_seed, window, AsrNoise,
};
use medreg::preprocess::{
    augment_by_shuffle, build_vocabulary, is_augmentation_eligible, tokenize, Example, Field, MedicationLexicon,
    PreprocessStats, Preprocessor, SummaryExample,
};
use medreg::training::{pretrain_summarization, qa_vocabulary, summary_vocabulary, train_qa, transfer_encoder, TrainConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Tolerances and thresholds.
const DIST_TRIALS: usize = 1_000;
const DIST_TOL: f64 = 1e-6;
const DIST_BUDGET: Duration = Duration::from_secs(60);
const GRAD_EPS: f64 = 1e-5;
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_PARAMS: usize = 20;
const GRAD_BUDGET: Duration = Duration::from_secs(120);
const COPY_TOL: f64 = 1e-9;
const ROUGE_PAIRS: usize = 10_000;
const E2E_TRANSCRIPTS: usize = 500;
const E2E_DOSAGE_EM: f64 = 0.95;
const E2E_FREQUENCY_F1: f64 = 0.90;
const E2E_BUDGET: Duration = Duration::from_secs(15 * 60);
const MIN_DISTRACTOR_RATE: f64 = 0.3;
const ABLATION_SIZE: usize = 100;
const ABLATION_SEEDS: [u64; 3] = [1, 2, 3];
const ABLATION_MAX_ITERATIONS: usize = 8_000;
const FIXTURE_ORIGINAL: usize = 8_654;
const FIXTURE_AUGMENTED: usize = 11_521;
const FIXTURE_ELIGIBLE: usize = 2_867;
const SEGMENT_TRANSCRIPTS: usize = 1_000;
const ASR_SUBSTITUTION: f64 = 0.1;
const ASR_SEEDS: [u64; 3] = [1, 2, 3];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn example(input: &[String], med: &str, dosage: &str, freq: &str) -> Example {
    let mut e = Example {
        id: format!("acc-{med}"),
        source_tag_id: "acc#t0".into(),
        input_tokens: input.to_vec(),
        medication: med.into(),
        dosage_target: toks(dosage),
        frequency_target: toks(freq),
        categories: BTreeSet::new(),
    };
    e.refresh_categories();
    e
}

fn toy_vocab() -> medreg::preprocess::Vocabulary {
    let words = "none what is the dosage frequency for rx-a rx-b take ten twenty daily twice a day";
    build_vocabulary(words.split(' '), 1).unwrap()
}

fn toy_model(arch: Architecture, h: usize, seed: u64, spread: f64) -> PgNet {
    let cfg = ModelConfig {
        architecture: arch,
        hidden: h,
        embed_dim: h,
        ..ModelConfig::default()
    };
    let mut m = PgNet::new(cfg, toy_vocab(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let ids: Vec<_> = m.params().ids().collect();
    for id in ids {
        for v in &mut m.params_mut().get_mut(id).data {
            *v = rng.random_range(-spread..spread);
        }
    }
    m
}

// 1
fn distribution_soundness() -> Verdict {
    const WORDS: [&str; 10] = ["none", "take", "rx-a", "rx-b", "ten", "daily", "qq", "zzz", "rx-new", "twenty"];
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut steps, mut worst_sum, mut min_p) = (0usize, 0f64, f64::INFINITY);
    for trial in 0..DIST_TRIALS {
        let arch = [Architecture::Qa, Architecture::Md, Architecture::Summarizer][trial % 3];
        let h = rng.random_range(2..=8);
        let spread = rng.random_range(0.05..2.0);
        let m = toy_model(arch, h, trial as u64, spread);
        let len = rng.random_range(1..=12);
        let input: Vec<String> = (0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())].to_string()).collect();
        let decoded = match arch {
            Architecture::Qa => vec![
                m.forward_qa(&example(&input, "rx-a", "ten", "daily"), Field::Dosage).unwrap(),
                m.forward_qa(&example(&input, "rx-a", "ten", "daily"), Field::Frequency).unwrap(),
            ],
            Architecture::Md => m.forward_md(&example(&input, "rx-b", "ten", "daily")).unwrap().to_vec(),
            Architecture::Summarizer => vec![m
                .summarize(&SummaryExample {
                    id: "s".into(),
                    input_tokens: input.clone(),
                    target: toks("take ten"),
                })
                .unwrap()],
        };
        let ext_len = ExtendedVocab::new(&input, m.vocab()).len();
        for d in decoded {
            for s in d.steps {
                if s.distribution.len() != ext_len {
                    return verdict(false, format!("trial {trial}: support {} != extended vocab {ext_len}", s.distribution.len()));
                }
                steps += 1;
                worst_sum = worst_sum.max((s.distribution.iter().sum::<f64>() - 1.0).abs());
                min_p = s.distribution.iter().copied().fold(min_p, f64::min);
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst_sum <= DIST_TOL && min_p >= 0.0 && elapsed < DIST_BUDGET,
        format!(
            "{DIST_TRIALS} trials, {steps} steps: max |sum-1| {worst_sum:.2e} (tol {DIST_TOL:.0e}), min p {min_p:.2e}, {:.1}s (< {}s)",
            elapsed.as_secs_f64(),
            DIST_BUDGET.as_secs()
        ),
    )
}

/// Worst relative error between backprop and central differences over
/// `count` random parameter entries with a measurable gradient.
fn max_gradient_error(mut m: PgNet, ex: &Example, count: usize, seed: u64) -> (f64, usize) {
    let obj = m.objective(Task::Extract(ex), None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates: Vec<_> = m
        .params()
        .iter()
        .filter(|(id, _, _)| obj.grads.get(*id).is_some())
        .flat_map(|(id, _, t)| (0..t.len()).map(move |k| (id, k)))
        .collect();
    candidates.shuffle(&mut rng);
    let (mut worst, mut checked) = (0f64, 0usize);
    for (id, k) in candidates {
        let bp = obj.grads.get(id).unwrap().data[k];
        let orig = m.params().get(id).data[k];
        m.params_mut().get_mut(id).data[k] = orig + GRAD_EPS;
        let up = m.loss(Task::Extract(ex)).unwrap();
        m.params_mut().get_mut(id).data[k] = orig - GRAD_EPS;
        let down = m.loss(Task::Extract(ex)).unwrap();
        m.params_mut().get_mut(id).data[k] = orig;
        let fd = (up - down) / (2.0 * GRAD_EPS);
        let scale = fd.abs().max(bp.abs());
        if scale < 1e-7 {
            continue;
        }
        worst = worst.max((fd - bp).abs() / scale);
        checked += 1;
        if checked == count {
            break;
        }
    }
    (worst, checked)
}

// 2
fn gradient_fidelity() -> Verdict {
    let start = Instant::now();
    let qa = example(&toks("none take rx-a ten zz daily"), "rx-a", "ten", "twice a day");
    let md = example(&toks("none rx-b twenty rx-a ten daily"), "rx-a", "ten", "daily");
    let (qa_err, qa_n) = max_gradient_error(toy_model(Architecture::Qa, 8, 15, 0.5), &qa, GRAD_PARAMS, 1);
    let (md_err, md_n) = max_gradient_error(toy_model(Architecture::Md, 8, 16, 0.5), &md, GRAD_PARAMS, 2);
    let elapsed = start.elapsed();
    verdict(
        qa_err <= GRAD_REL_TOL && md_err <= GRAD_REL_TOL && qa_n == GRAD_PARAMS && md_n == GRAD_PARAMS && elapsed < GRAD_BUDGET,
        format!(
            "QA {qa_n} params max rel err {qa_err:.2e}, MD {md_n} params max rel err {md_err:.2e} (tol {GRAD_REL_TOL:.0e}), {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

// 3
fn copy_mechanism() -> Verdict {
    let mut m = toy_model(Architecture::Qa, 8, 9, 0.5);
    let id = m.params().id("decoder0.pgen_b").unwrap();
    m.params_mut().get_mut(id).data[0] = -1e4;
    let input = toks("none rx-zzz");
    let d = m.forward_qa(&example(&input, "rx-a", "ten", "daily"), Field::Dosage).unwrap();
    let s = &d.steps[0];
    let ext = ExtendedVocab::new(&input, m.vocab());
    let oov = ext.id("rx-zzz", m.vocab()).unwrap();
    let none = m.vocab().id("none").unwrap();
    let err = (s.distribution[oov] - s.attention[1]).abs().max((s.distribution[none] - s.attention[0]).abs());
    let rest: f64 = (0..s.distribution.len()).filter(|&i| i != oov && i != none).map(|i| s.distribution[i]).sum();
    verdict(
        s.p_gen == 0.0 && oov >= ext.base() && err <= COPY_TOL && rest == 0.0,
        format!(
            "p_gen {}, P(oov) {:.12} vs attention {:.12}, max err {err:.1e} (tol {COPY_TOL:.0e}), other mass {rest}",
            s.p_gen, s.distribution[oov], s.attention[1]
        ),
    )
}

/// Clipped unigram overlap by exhaustive matching over distinct words.
fn brute_rouge(hyp: &[String], reference: &[String]) -> (f64, f64, f64) {
    if hyp.is_empty() && reference.is_empty() {
        return (1.0, 1.0, 1.0);
    }
    if hyp.is_empty() || reference.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let mut seen: Vec<&String> = Vec::new();
    let mut overlap = 0usize;
    for w in hyp {
        if seen.contains(&w) {
            continue;
        }
        seen.push(w);
        let in_h = hyp.iter().filter(|x| *x == w).count();
        let in_r = reference.iter().filter(|x| *x == w).count();
        overlap += in_h.min(in_r);
    }
    let p = overlap as f64 / hyp.len() as f64;
    let r = overlap as f64 / reference.len() as f64;
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (f, p, r)
}

// 4 (first half; the F1 = P = R half is checked on every evaluation below)
fn rouge_oracle() -> Verdict {
    const WORDS: [&str; 6] = ["one", "two", "daily", "a", "day", "none"];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    for _ in 0..ROUGE_PAIRS {
        let draw = |rng: &mut ChaCha8Rng| -> Vec<String> {
            let n = rng.random_range(0..=7);
            (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())].to_string()).collect()
        };
        let (h, r) = (draw(&mut rng), draw(&mut rng));
        let s = rouge1(&h, &r);
        if (s.f1, s.precision, s.recall) != brute_rouge(&h, &r) {
            mismatches += 1;
        }
    }
    verdict(mismatches == 0, format!("{ROUGE_PAIRS} pairs, {mismatches} differ from brute force (exact equality)"))
}

/// Dosage records with single-token prediction and reference, and whether
/// all of them have F1 = P = R.
fn single_token_property(r: &EvaluationReport) -> (usize, bool) {
    let single: Vec<_> = r
        .records
        .iter()
        .filter(|x| x.dosage_prediction.len() == 1 && x.dosage_reference.len() == 1)
        .collect();
    let all_records = r.records.iter().all(|x| x.dosage.f1 == x.dosage.precision && x.dosage.f1 == x.dosage.recall);
    (single.len(), all_records)
}

struct Data {
    corpus: Corpus,
    split: CorpusSplit,
    pre: Preprocessor,
    train: Vec<Example>,
    validation: Vec<Example>,
    test: Vec<Example>,
}

fn e2e_data() -> Data {
    let profile = GenerationProfile::default();
    let corpus = generate_synthetic_corpus(1, E2E_TRANSCRIPTS, &profile).unwrap();
    let split = split_corpus(&corpus.ids(), 1, SplitFractions::default()).unwrap();
    let pre = Preprocessor::default().with_corpus_medications(&corpus);
    let mut st = PreprocessStats::default();
    let train = pre.build_examples(&corpus.subset(&split.train), &mut st);
    let validation = pre.build_examples(&corpus.subset(&split.validation), &mut st);
    let test = pre.build_examples(&corpus.subset(&split.test), &mut st);
    Data {
        train: augment_by_shuffle(&train, 1),
        corpus,
        split,
        pre,
        validation,
        test,
    }
}

fn desk_model(arch: Architecture, h: usize) -> ModelConfig {
    ModelConfig {
        architecture: arch,
        hidden: h,
        embed_dim: h,
        ..ModelConfig::default()
    }
}

struct Trained {
    arch: Architecture,
    model: PgNet,
    report: EvaluationReport,
    elapsed: Duration,
}

fn train_variant(data: &Data, arch: Architecture) -> Trained {
    let start = Instant::now();
    let vocab = qa_vocabulary(&data.train, 1).unwrap();
    let model = PgNet::new(desk_model(arch, 32), vocab, 1).unwrap();
    let tc = TrainConfig {
        seed: 1,
        ..TrainConfig::desk_qa()
    };
    let (model, _) = train_qa(model, &data.train, &data.validation, &tc).unwrap();
    let report = evaluate(&model, &data.test).unwrap();
    Trained {
        arch,
        model,
        report,
        elapsed: start.elapsed(),
    }
}

// 5
fn end_to_end(data: &Data, trained: &[Trained], baselines: &EvaluationReport) -> Verdict {
    let p = GenerationProfile::default();
    let rates_ok = p.mm_rate >= MIN_DISTRACTOR_RATE && p.nbm_rate >= MIN_DISTRACTOR_RATE;
    let mut pass = rates_ok;
    let mut parts = vec![format!(
        "{} transcripts, {} test examples, mm/nbm rates {}/{}; baselines dosage F1 {:.3} EM {:.3}, frequency F1 {:.3}",
        data.corpus.len(),
        data.test.len(),
        p.mm_rate,
        p.nbm_rate,
        baselines.dosage.f1,
        baselines.dosage_exact_match,
        baselines.frequency.f1
    )];
    for t in trained {
        let r = &t.report;
        let ok = r.dosage_exact_match >= E2E_DOSAGE_EM
            && r.frequency.f1 >= E2E_FREQUENCY_F1
            && t.elapsed <= E2E_BUDGET
            && r.dosage.f1 > baselines.dosage.f1
            && r.dosage_exact_match > baselines.dosage_exact_match
            && r.frequency.f1 > baselines.frequency.f1;
        pass &= ok;
        parts.push(format!(
            "{}: dosage EM {:.3} (>= {E2E_DOSAGE_EM}), frequency F1 {:.3} (>= {E2E_FREQUENCY_F1}), {:.0}s (<= {}s)",
            t.arch,
            r.dosage_exact_match,
            r.frequency.f1,
            t.elapsed.as_secs_f64(),
            E2E_BUDGET.as_secs()
        ));
    }
    verdict(pass, parts.join("; "))
}

// 4 (second half)
fn dosage_property(trained: &[Trained], baselines: &EvaluationReport) -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, r) in trained.iter().map(|t| (t.arch.name(), &t.report)).chain([("baselines", baselines)]) {
        let (n, ok) = single_token_property(r);
        pass &= ok;
        parts.push(format!("{name}: {} records ({n} single-token) F1 = P = R {ok}", r.records.len()));
    }
    verdict(pass, parts.join("; "))
}

// 6
fn transfer(data: &Data) -> Verdict {
    let summaries = data.pre.build_summary_examples(&data.corpus.subset(&data.split.train));
    let val_summaries = data.pre.build_summary_examples(&data.corpus.subset(&data.split.validation));
    let svocab = summary_vocabulary(&summaries, 1).unwrap();
    let summarizer = PgNet::new(desk_model(Architecture::Summarizer, 16), svocab, 5).unwrap();
    let pc = TrainConfig {
        max_iterations: 50,
        eval_every: 25,
        seed: 5,
        ..TrainConfig::desk_pretrain()
    };
    let (summarizer, _) = pretrain_summarization(summarizer, &summaries, &val_summaries, &pc).unwrap();
    let vocab = qa_vocabulary(&data.train, 1).unwrap();
    let mut target = PgNet::new(desk_model(Architecture::Md, 16), vocab, 6).unwrap();
    let report = transfer_encoder(&summarizer, &mut target).unwrap();

    let mut identical = !report.copied.is_empty();
    for name in &report.copied {
        let a = summarizer.params().get(summarizer.params().id(name).unwrap());
        let b = target.params().get(target.params().id(name).unwrap());
        identical &= a == b;
    }
    let table = "embedding.table";
    let (st, tt) = (
        summarizer.params().get(summarizer.params().id(table).unwrap()),
        target.params().get(target.params().id(table).unwrap()),
    );
    let mut shared = 0;
    for i in 0..tt.rows {
        if let Some(j) = summarizer.vocab().id(target.vocab().word(i)) {
            shared += 1;
            identical &= st.row(j) == tt.row(i);
        }
    }
    identical &= shared == report.table_rows_copied;

    let cfg = AblationConfig {
        sizes: vec![ABLATION_SIZE],
        seeds: ABLATION_SEEDS.to_vec(),
        variants: vec![Variant::ColdStart, Variant::Pretrained],
        model: desk_model(Architecture::Qa, 16),
        train: TrainConfig {
            max_iterations: ABLATION_MAX_ITERATIONS,
            patience: 10,
            ..TrainConfig::desk_qa()
        },
        pretrain: TrainConfig::desk_pretrain(),
        vocab_threshold: 1,
        pretrain_vocab_threshold: 1,
        augment: true,
    };
    let rows = ablate_training_size(&data.corpus, &data.split, &data.pre, &cfg).unwrap();
    let means = mean_by_size(&rows);
    let cold = means[&(ABLATION_SIZE, Variant::ColdStart)];
    let warm = means[&(ABLATION_SIZE, Variant::Pretrained)];
    let per_seed: Vec<String> = rows
        .iter()
        .map(|r| format!("{}/{} {:.3}", r.variant.name(), r.seed, r.mean_f1))
        .collect();
    verdict(
        identical && warm >= cold,
        format!(
            "(a) {} tensors + {shared} table rows identical: {identical}; (b) size {ABLATION_SIZE}, seeds {ABLATION_SEEDS:?}: pretrained mean F1 {warm:.4} >= cold-start {cold:.4} [{}]",
            report.copied.len(),
            per_seed.join(", ")
        ),
    )
}

// 7
fn augmentation_count(data: &Data) -> Verdict {
    let mut st = PreprocessStats::default();
    let original = data.pre.build_examples(&data.corpus, &mut st);
    let eligible = original.iter().filter(|e| is_augmentation_eligible(e)).count();
    let augmented = augment_by_shuffle(&original, 7).len();
    let corpus_ok = augmented == original.len() + eligible;

    let plain = example(&toks("take rx-a ten daily"), "rx-a", "ten", "daily");
    let two_numbers = example(&toks("take rx-a ten or twenty daily"), "rx-a", "ten", "daily");
    let fixture: Vec<Example> = (0..FIXTURE_ORIGINAL)
        .map(|i| if i < FIXTURE_ELIGIBLE { two_numbers.clone() } else { plain.clone() })
        .collect();
    let fixture_eligible = fixture.iter().filter(|e| is_augmentation_eligible(e)).count();
    let fixture_out = augment_by_shuffle(&fixture, 7).len();
    let fixture_ok = fixture_eligible == FIXTURE_ELIGIBLE
        && fixture_out == FIXTURE_AUGMENTED
        && FIXTURE_ORIGINAL + FIXTURE_ELIGIBLE == FIXTURE_AUGMENTED;
    verdict(
        corpus_ok && fixture_ok,
        format!(
            "corpus {} + {eligible} eligible = {augmented}; fixture {FIXTURE_ORIGINAL} + {fixture_eligible} eligible = {fixture_out} (expected {FIXTURE_AUGMENTED})",
            original.len()
        ),
    )
}

// 8
fn segmentation_contract() -> Verdict {
    let corpus = generate_synthetic_corpus(8, SEGMENT_TRANSCRIPTS, &GenerationProfile::default()).unwrap();
    let mut lexicon = MedicationLexicon::builtin();
    for t in &corpus.transcripts {
        for tag in &t.mr_tags {
            lexicon.insert(&tag.medication);
        }
    }
    let (mut segments, mut fallbacks, mut violations) = (0usize, 0usize, Vec::new());
    for t in &corpus.transcripts {
        let n = t.sentences.len();
        let hits = detect_medications(t, &lexicon);
        for (hit, seg) in hits.iter().zip(segment_transcript(t, &hits, &lexicon)) {
            segments += 1;
            let x = seg.window;
            let sizes_ok = (2..=5).contains(&x) && seg.sentences.len() == x.min(n) && seg.sentences.contains(&hit.sentence);
            let has_med = seg.tokens.contains(&seg.medication_token);
            let seg_tokens = |x: usize| seg_for(t, &window(hit.sentence, n, x).collect::<Vec<_>>(), &lexicon);
            let first_quantity = (2..=5).find(|&x| detect_quantity(&seg_tokens(x)).found);
            let choice_ok = match first_quantity {
                Some(q) => x == q,
                None => {
                    fallbacks += 1;
                    x == 2
                }
            };
            if !(sizes_ok && has_med && choice_ok) && violations.len() < 3 {
                violations.push(format!("{} hit {} -> {:?} x={x}", t.id, hit.sentence, seg.sentences));
            }
        }
    }
    // A transcript with no quantity anywhere must fall back to two sentences.
    let bare = bare_transcript();
    let bare_hits = detect_medications(&bare, &lexicon);
    let bare_segments = segment_transcript(&bare, &bare_hits, &lexicon);
    let bare_ok = !bare_segments.is_empty() && bare_segments.iter().all(|s| s.window == 2 && s.sentences.len() == 2);
    verdict(
        violations.is_empty() && bare_ok && segments > 0,
        format!(
            "{SEGMENT_TRANSCRIPTS} transcripts, {segments} segments, {fallbacks} fallbacks, no-quantity fixture x=2: {bare_ok}; violations {violations:?}"
        ),
    )
}

/// Tagged tokens of the given sentences, computed independently of the
/// segmenter's own window assembly.
fn seg_for(t: &Transcript, ids: &[usize], lexicon: &MedicationLexicon) -> Vec<String> {
    ids.iter()
        .flat_map(|&i| medreg::preprocess::tag_medications(&tokenize(&t.sentences[i].text), lexicon))
        .collect()
}

fn bare_transcript() -> Transcript {
    let texts = ["How are you feeling.", "I still take my Coumadin.", "Good, keep going.", "See you soon."];
    Transcript {
        id: "bare".into(),
        sentences: texts
            .iter()
            .enumerate()
            .map(|(i, s)| medreg::corpus::Sentence {
                text: s.to_string(),
                start_s: i as f64,
                end_s: i as f64 + 0.9,
                speaker: None,
            })
            .collect(),
        mr_tags: Vec::new(),
        summaries: Vec::new(),
    }
}

/// Whether some mention of `medication` in the grounded sentences survives
/// the substitution-only noise untouched, by word-by-word comparison.
fn medication_survives(human: &Transcript, asr: &Transcript, tag: &medreg::corpus::MrTag) -> bool {
    let name = tokenize(&tag.medication);
    let g = tag.grounding();
    let mut tokens: Vec<(String, bool)> = Vec::new();
    for (h, a) in human.sentences.iter().zip(&asr.sentences) {
        if !g.overlaps(h) {
            continue;
        }
        for (hw, aw) in h.text.split_whitespace().zip(a.text.split_whitespace()) {
            for tok in tokenize(hw) {
                tokens.push((tok, hw == aw));
            }
        }
    }
    tokens
        .windows(name.len())
        .any(|w| w.iter().zip(&name).all(|((t, intact), n)| t == n && *intact))
}

// 9
fn asr_robustness(data: &Data, trained: &[Trained]) -> Verdict {
    let test = data.corpus.subset(&data.split.test);
    let noise = AsrNoise {
        substitution_rate: ASR_SUBSTITUTION,
        deletion_rate: 0.0,
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for t in trained {
        let clean = evaluate_pipeline(&test, &t.model, &data.pre).unwrap().mean_f1();
        let noised: Vec<f64> = ASR_SEEDS
            .iter()
            .map(|&s| evaluate_asr(&test, &t.model, &data.pre, noise, s).unwrap().score.mean_f1())
            .collect();
        pass &= noised.iter().all(|&n| clean >= n);
        parts.push(format!("{}: clean {clean:.4} >= noised {:?}", t.arch, noised.iter().map(|n| format!("{n:.4}")).collect::<Vec<_>>()));
    }

    let (mut tags, mut dropped, mut wrong) = (0usize, 0usize, 0usize);
    for &seed in &ASR_SEEDS {
        for human in &data.corpus.transcripts {
            let asr = simulate_asr(human, noise, transcript_seed(seed, &human.id)).unwrap();
            let aligned = align_tags(human, &asr);
            let ids: BTreeMap<String, usize> = (0..human.mr_tags.len()).map(|i| (human.tag_id(i), i)).collect();
            let invented = aligned.kept.len() + aligned.dropped.len() != human.mr_tags.len()
                || aligned.kept.iter().any(|k| {
                    ids.get(&k.tag_id).is_none_or(|&i| {
                        let h = &human.mr_tags[i];
                        (&h.medication, &h.dosage, &h.frequency) != (&k.tag.medication, &k.tag.dosage, &k.tag.frequency)
                    })
                });
            let dropped_set: BTreeSet<&String> = aligned.dropped.iter().collect();
            for (i, tag) in human.mr_tags.iter().enumerate() {
                let expect_drop = !medication_survives(human, &asr, tag);
                if expect_drop != dropped_set.contains(&human.tag_id(i)) {
                    wrong += 1;
                }
            }
            wrong += usize::from(invented);
            tags += human.mr_tags.len();
            dropped += aligned.dropped.len();
        }
    }
    pass &= wrong == 0 && dropped > 0;
    parts.push(format!("alignment over {tags} tags x {} seeds: {dropped} dropped, {wrong} disagree with the corruption oracle", ASR_SEEDS.len()));
    verdict(pass, parts.join("; "))
}

fn cli(dir: &Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_medreg"))
        .current_dir(dir)
        .args(args)
        .env("RUST_LOG", "error")
        .env_remove("MEDREG_CONFIG")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn cli_run(dir: &Path) -> bool {
    let small = ["--set", "hidden=8", "--set", "embed_dim=8", "--set", "max_iterations=40", "--set", "eval_every=20"];
    let mut train = vec!["train", "--seed", "3", "--model", "md", "--in", "c.jsonl", "--out", "m.ckpt"];
    train.extend(small);
    cli(dir, &["generate", "--seed", "3", "--set", "n_transcripts=40", "--out", "c.jsonl"])
        && cli(dir, &train)
        && cli(dir, &["evaluate", "--seed", "3", "--in", "c.jsonl", "--model-path", "m.ckpt", "--set", "pipeline=true", "--out", "e.json"])
        && cli(dir, &["extract", "--in", "c.jsonl", "--model-path", "m.ckpt", "--out", "x.jsonl"])
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

// 10
fn cli_determinism() -> Verdict {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    if !(cli_run(a.path()) && cli_run(b.path())) {
        return verdict(false, "a CLI command failed");
    }
    let (fa, fb) = (dir_contents(a.path()), dir_contents(b.path()));
    let differing: Vec<&String> = fa.keys().filter(|k| fa.get(*k) != fb.get(*k)).collect();
    verdict(
        fa.len() >= 10 && fa.keys().eq(fb.keys()) && differing.is_empty(),
        format!("generate/train/evaluate/extract: {} files compared, differing {differing:?}", fa.len()),
    )
}

fn guarded(f: impl FnOnce() -> Verdict) -> Verdict {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(v) => v,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        }
    }
}

fn report(results: &mut Vec<(usize, &'static str, Verdict)>, n: usize, name: &'static str, v: Verdict) {
    println!("{} [{n:>2}] {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    results.push((n, name, v));
}

fn main() {
    let mut results = Vec::new();
    report(&mut results, 1, "distribution soundness", guarded(distribution_soundness));
    report(&mut results, 2, "gradient fidelity", guarded(gradient_fidelity));
    report(&mut results, 3, "copy mechanism", guarded(copy_mechanism));
    report(&mut results, 4, "rouge oracle equivalence", guarded(rouge_oracle));

    let data = e2e_data();
    let baselines = evaluate(&NaiveBaselines { seed: 1 }, &data.test).unwrap();
    let trained: Vec<Trained> = [Architecture::Qa, Architecture::Md]
        .into_iter()
        .filter_map(|arch| catch_unwind(AssertUnwindSafe(|| train_variant(&data, arch))).ok())
        .collect();
    let complete = trained.len() == 2;
    report(&mut results, 4, "single-token dosage F1 = P = R", guarded(|| dosage_property(&trained, &baselines)));
    report(
        &mut results,
        5,
        "end-to-end learning",
        guarded(|| {
            let mut v = end_to_end(&data, &trained, &baselines);
            v.pass &= complete;
            v
        }),
    );
    report(&mut results, 6, "pretraining transfer", guarded(|| transfer(&data)));
    report(&mut results, 7, "augmentation count", guarded(|| augmentation_count(&data)));
    report(&mut results, 8, "segmentation contract", guarded(segmentation_contract));
    report(
        &mut results,
        9,
        "ASR robustness ordering",
        guarded(|| {
            let mut v = asr_robustness(&data, &trained);
            v.pass &= complete;
            v
        }),
    );
    report(&mut results, 10, "determinism", guarded(cli_determinism));

    let failed: Vec<String> = results.iter().filter(|r| !r.2.pass).map(|r| format!("{} ({})", r.0, r.1)).collect();
    println!(
        "acceptance: {}/{} passed{}",
        results.len() - failed.len(),
        results.len(),
        if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
