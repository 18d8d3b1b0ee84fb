use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::{Mat, ParamId, Tape};
use crate::embeddings::EmbeddingKind;
use crate::preprocess::{build_vocabulary, Example, Field, Vocabulary, STOP};

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn toy_vocab() -> Vocabulary {
    let words = "none what is the dosage frequency for rx-a rx-b take ten twenty daily twice a day";
    build_vocabulary(words.split(' '), 1).unwrap()
}

fn toy_config(arch: Architecture, h: usize) -> ModelConfig {
    ModelConfig {
        architecture: arch,
        hidden: h,
        embed_dim: h,
        ..ModelConfig::default()
    }
}

fn toy_model(arch: Architecture, seed: u64) -> PgNet {
    let mut m = PgNet::new(toy_config(arch, 8), toy_vocab(), seed).unwrap();
    // Larger weights than the default init so gradients are not vanishingly small.
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    let ids: Vec<_> = m.params().ids().collect();
    for id in ids {
        for v in &mut m.params_mut().get_mut(id).data {
            *v = rng.random_range(-0.5..0.5);
        }
    }
    m
}

fn example(input: &str, med: &str, dosage: &str, freq: &str) -> Example {
    let mut e = Example {
        id: format!("ex-{med}"),
        source_tag_id: "t#0".into(),
        input_tokens: toks(input),
        medication: med.into(),
        dosage_target: toks(dosage),
        frequency_target: toks(freq),
        categories: BTreeSet::new(),
    };
    e.refresh_categories();
    e
}

fn toy_example() -> Example {
    example("none take rx-a ten daily", "rx-a", "ten", "daily")
}

fn set_param(m: &mut PgNet, name: &str, f: impl Fn(&mut Mat)) {
    let id = m.params().id(name).unwrap_or_else(|| panic!("no param {name}"));
    f(m.params_mut().get_mut(id));
}

#[test]
fn encode_single_token_shape() {
    let m = toy_model(Architecture::Qa, 1);
    let mut t = Tape::new(m.params());
    let x = m.embed(&mut t, &toks("none"), "k", None).unwrap();
    let enc = m.encode(&mut t, x).unwrap();
    assert_eq!(t.shape(enc.h), (1, 16));
    let empty = t.constant(Mat::zeros(0, 8));
    assert!(m.encode(&mut t, empty).is_err());
}

#[test]
fn reversed_input_swaps_directions() {
    let a = toy_model(Architecture::Qa, 2);
    let mut b = a.clone();
    for part in ["wx", "wh", "b"] {
        let fwd = a.params().get(a.params().id(&format!("encoder.fwd.{part}")).unwrap()).clone();
        let bwd = a.params().get(a.params().id(&format!("encoder.bwd.{part}")).unwrap()).clone();
        set_param(&mut b, &format!("encoder.fwd.{part}"), |m| *m = bwd.clone());
        set_param(&mut b, &format!("encoder.bwd.{part}"), |m| *m = fwd.clone());
    }
    let input = toks("take rx-a ten");
    let mut rev = input.clone();
    rev.reverse();

    let mut ta = Tape::new(a.params());
    let xa = ta.constant(Mat::from_vec(3, 8, (0..24).map(|i| (i as f64 * 0.37).sin()).collect()));
    let ha = a.encode(&mut ta, xa).unwrap();
    let xr_data: Vec<f64> = (0..3).rev().flat_map(|r| ta.value(xa).row(r).to_vec()).collect();

    let mut tb = Tape::new(b.params());
    let xb = tb.constant(Mat::from_vec(3, 8, xr_data));
    let hb = b.encode(&mut tb, xb).unwrap();
    let (ma, mb) = (ta.value(ha.h), tb.value(hb.h));
    for p in 0..3 {
        let ra = ma.row(2 - p);
        let rb = mb.row(p);
        for k in 0..8 {
            assert!((rb[k] - ra[8 + k]).abs() < 1e-12);
            assert!((rb[8 + k] - ra[k]).abs() < 1e-12);
        }
    }
}

#[test]
fn encoder_gradient_wrt_embedding() {
    let mut m = toy_model(Architecture::Qa, 3);
    let input = toks("none take rx-a");
    let table = m.params().id("embedding.table").unwrap();
    let row = m.vocab().id("take").unwrap();
    let f = |m: &PgNet| {
        let mut t = Tape::new(m.params());
        let x = m.embed(&mut t, &input, "k", None).unwrap();
        let enc = m.encode(&mut t, x).unwrap();
        let s = t.sum(enc.h);
        (t.value(s).item(), t.backward(s))
    };
    let (_, grads) = f(&m);
    let eps = 1e-5;
    for col in 0..8 {
        let k = row * 8 + col;
        let orig = m.params().get(table).data[k];
        m.params_mut().get_mut(table).data[k] = orig + eps;
        let up = f(&m).0;
        m.params_mut().get_mut(table).data[k] = orig - eps;
        let down = f(&m).0;
        m.params_mut().get_mut(table).data[k] = orig;
        let fd = (up - down) / (2.0 * eps);
        let bp = grads.get(table).unwrap().data[k];
        assert!((fd - bp).abs() <= 1e-4 * fd.abs().max(bp.abs()).max(1e-6), "fd {fd} bp {bp}");
    }
}

fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect())
}

#[test]
fn single_question_token_gives_scaled_copies() {
    let mut m = toy_model(Architecture::Md, 4);
    set_param(&mut m, "coatt0.proj_b", |b| b.data.fill(0.0));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut t = Tape::new(m.params());
    let hi = t.constant(random_mat(&mut rng, 5, 16));
    let hq = t.constant(random_mat(&mut rng, 1, 16));
    let cd = m.coattend(&mut t, 0, hi, hq).unwrap();
    let c = t.value(cd);
    let base = c.row(0);
    for r in 1..5 {
        let ratio = c.row(r)[0] / base[0];
        for k in 0..8 {
            assert!((c.row(r)[k] - ratio * base[k]).abs() < 1e-12);
        }
    }
}

#[test]
fn coattention_invariant_to_question_order() {
    let m = toy_model(Architecture::Qa, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let hi_m = random_mat(&mut rng, 4, 16);
    let hq_m = random_mat(&mut rng, 3, 16);
    let perm = [2, 0, 1];
    let hq_p = Mat::from_vec(3, 16, perm.iter().flat_map(|&r| hq_m.row(r).to_vec()).collect());
    let mut t = Tape::new(m.params());
    let hi = t.constant(hi_m);
    let hq = t.constant(hq_m);
    let hqp = t.constant(hq_p);
    let a = m.coattend(&mut t, 0, hi, hq).unwrap();
    let b = m.coattend(&mut t, 0, hi, hqp).unwrap();
    for (x, y) in t.value(a).data.iter().zip(&t.value(b).data) {
        assert!((x - y).abs() < 1e-12);
    }
    let bad = t.constant(random_mat(&mut rng, 3, 5));
    assert!(m.coattend(&mut t, 0, hi, bad).is_err());
}

/// One decoder step of head 0 over an arbitrary input, returning the step
/// vars, extended vocab and tape values.
fn one_step(m: &PgNet, input: &[String]) -> (Vec<f64>, Vec<f64>, f64, ExtendedVocab) {
    let ex = Example {
        input_tokens: input.to_vec(),
        ..toy_example()
    };
    let decoded = match m.architecture() {
        Architecture::Qa => m.forward_qa(&ex, Field::Dosage).unwrap(),
        _ => m.forward_md(&ex).unwrap()[0].clone(),
    };
    let s = &decoded.steps[0];
    (
        s.distribution.clone(),
        s.attention.clone(),
        s.p_gen,
        ExtendedVocab::new(input, m.vocab()),
    )
}

#[test]
fn distribution_is_normalized() {
    for seed in 0..20 {
        let m = toy_model(if seed % 2 == 0 { Architecture::Qa } else { Architecture::Md }, seed);
        let (d, a, p, ext) = one_step(&m, &toks("none take rx-a zzz ten qq zzz"));
        assert_eq!(d.len(), ext.len());
        assert!(d.iter().all(|&x| x >= 0.0));
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!((0.0..=1.0).contains(&p));
    }
}

#[test]
fn p_gen_one_is_pure_generation() {
    let mut m = toy_model(Architecture::Qa, 8);
    set_param(&mut m, "decoder0.pgen_b", |b| b.data[0] = 1e4);
    let input = toks("none rx-zzz take");
    let (d, _, p, ext) = one_step(&m, &input);
    assert_eq!(p, 1.0);
    assert_eq!(d[ext.base()], 0.0, "OOV token gets no mass");

    let vocab_mass: f64 = d[..ext.base()].iter().sum();
    assert!((vocab_mass - 1.0).abs() < 1e-12);
}

#[test]
fn p_gen_zero_copies_attention() {
    let mut m = toy_model(Architecture::Qa, 9);
    set_param(&mut m, "decoder0.pgen_b", |b| b.data[0] = -1e4);
    let input = toks("none rx-zzz");
    let (d, a, p, ext) = one_step(&m, &input);
    assert_eq!(p, 0.0);
    let oov = ext.id("rx-zzz", m.vocab()).unwrap();
    assert!(oov >= ext.base());
    assert!((d[oov] - a[1]).abs() <= 1e-9);
    assert!((d[m.vocab().id("none").unwrap()] - a[0]).abs() <= 1e-9);
}

#[test]
fn budgets_respected() {
    let qa = toy_model(Architecture::Qa, 10);
    let ex = toy_example();
    assert_eq!(qa.forward_qa(&ex, Field::Dosage).unwrap().steps.len(), 1);
    let f = qa.forward_qa(&ex, Field::Frequency).unwrap();
    assert!((1..=3).contains(&f.steps.len()));
    if f.steps.len() < 3 {
        assert_eq!(f.steps.last().unwrap().token, STOP);
    }
    let md = toy_model(Architecture::Md, 11);
    let [d, f] = md.forward_md(&ex).unwrap();
    assert_eq!(d.steps.len(), 1);
    assert!(f.steps.len() <= 3);
    let p = md.greedy_decode(&ex).unwrap();
    assert!(p.dosage.len() <= 1 && p.frequency.len() <= 3);
}

#[test]
fn heads_are_independent() {
    let m = toy_model(Architecture::Md, 12);
    let mut z = m.clone();
    let ids: Vec<ParamId> = z
        .params()
        .iter()
        .filter(|(_, n, _)| n.starts_with("coatt1.") || n.starts_with("decoder1."))
        .map(|(id, _, _)| id)
        .collect();
    assert!(!ids.is_empty());
    for id in ids {
        z.params_mut().get_mut(id).data.fill(0.0);
    }
    let ex = toy_example();
    assert_eq!(m.forward_md(&ex).unwrap()[0], z.forward_md(&ex).unwrap()[0]);
}

#[test]
fn parameter_counts() {
    let vocab = toy_vocab();
    for arch in [Architecture::Qa, Architecture::Md, Architecture::Summarizer] {
        for kind in [EmbeddingKind::Lookup, EmbeddingKind::Pseudo, EmbeddingKind::Store] {
            let cfg = ModelConfig {
                embedding: kind,
                store_layers: 3,
                ..toy_config(arch, 6)
            };
            let m = PgNet::new(cfg.clone(), vocab.clone(), 0).unwrap();
            assert_eq!(m.params().scalar_count(), parameter_count(&cfg, vocab.len()).total, "{arch} {kind}");
        }
    }
    let qa = parameter_count(&toy_config(Architecture::Qa, 8), vocab.len());
    let md = parameter_count(&toy_config(Architecture::Md, 8), vocab.len());
    assert_eq!(md.total, qa.total + qa.coattention_per_head + qa.decoder_per_head);
}

#[test]
fn encoder_weights_are_shared() {
    let m = toy_model(Architecture::Qa, 13);
    let ids = m.encoder_param_ids();
    assert_eq!(ids[0], m.params().id("encoder.fwd.wx").unwrap());
    // Both the input and the question go through `encode`, which reads only these tensors.
    assert_eq!(m.params().iter().filter(|(_, n, _)| n.starts_with("encoder.")).count(), 6);
}

#[test]
fn nll_reference_values() {
    let one_hot = vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]];
    assert_eq!(nll(&one_hot, &[Some(1), Some(0)]), (0.0, 0));
    let uniform = vec![vec![0.25; 4]];
    let (l, _) = nll(&uniform, &[Some(2)]);
    assert!((l - 4f64.ln()).abs() < 1e-12);
    let (l, u) = nll(&uniform, &[None]);
    assert_eq!(u, 1);
    assert!((l + UNREACHABLE_EPS.ln()).abs() < 1e-9);
}

#[test]
fn tape_loss_matches_explicit_distributions() {
    let m = toy_model(Architecture::Md, 14);
    let ex = example("none take rx-a ten daily", "rx-a", "ten", "daily");
    let loss = m.loss(Task::Extract(&ex)).unwrap();
    assert!(loss > 0.0 && loss.is_finite());

    let ghost = example("none take rx-a ten daily", "rx-a", "ghost", "daily");
    let obj = m.objective(Task::Extract(&ghost), None).unwrap();
    assert_eq!(obj.unreachable, 1);
    assert!(obj.loss > -UNREACHABLE_EPS.ln());
}

/// Central finite differences on `count` random parameter entries.
fn gradient_check(mut m: PgNet, ex: &Example, count: usize, seed: u64) {
    let obj = m.objective(Task::Extract(ex), None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates: Vec<(ParamId, usize)> = m
        .params()
        .iter()
        .filter(|(id, _, _)| obj.grads.get(*id).is_some())
        .flat_map(|(id, _, t)| (0..t.len()).map(move |k| (id, k)))
        .collect();
    candidates.shuffle(&mut rng);
    let eps = 1e-5;
    let mut checked = 0;
    for (id, k) in candidates {
        let bp = obj.grads.get(id).unwrap().data[k];
        let orig = m.params().get(id).data[k];
        m.params_mut().get_mut(id).data[k] = orig + eps;
        let up = m.loss(Task::Extract(ex)).unwrap();
        m.params_mut().get_mut(id).data[k] = orig - eps;
        let down = m.loss(Task::Extract(ex)).unwrap();
        m.params_mut().get_mut(id).data[k] = orig;
        let fd = (up - down) / (2.0 * eps);
        let scale = fd.abs().max(bp.abs());
        if scale < 1e-7 {
            continue;
        }
        assert!((fd - bp).abs() / scale <= 1e-4, "{}[{k}] fd {fd} bp {bp}", m.params().name(id));
        checked += 1;
        if checked == count {
            return;
        }
    }
    panic!("only {checked} parameters had measurable gradients");
}

#[test]
fn full_model_gradients_qa() {
    let ex = example("none take rx-a ten zz daily", "rx-a", "ten", "twice a day");
    gradient_check(toy_model(Architecture::Qa, 15), &ex, 20, 1);
}

#[test]
fn full_model_gradients_md() {
    let ex = example("none rx-b twenty rx-a ten", "rx-a", "ten", "daily");
    gradient_check(toy_model(Architecture::Md, 16), &ex, 20, 2);
}

#[test]
fn deterministic_losses() {
    let ex = toy_example();
    let a = toy_model(Architecture::Qa, 17).objective(Task::Extract(&ex), None).unwrap();
    let b = toy_model(Architecture::Qa, 17).objective(Task::Extract(&ex), None).unwrap();
    assert_eq!(a.loss.to_bits(), b.loss.to_bits());
    assert_eq!(a.grads, b.grads);
}

#[test]
fn dropout_changes_training_loss_only() {
    let m = toy_model(Architecture::Qa, 18);
    let ex = toy_example();
    let clean = m.loss(Task::Extract(&ex)).unwrap();
    assert_eq!(clean, m.loss(Task::Extract(&ex)).unwrap());
    let noisy = m
        .objective(Task::Extract(&ex), Some(&mut Dropout::new(0.5, 1)))
        .unwrap()
        .loss;
    assert_ne!(clean, noisy);
}

#[test]
fn checkpoint_round_trip() {
    let mut m = toy_model(Architecture::Md, 19);
    m.round_to_f32();
    let bytes = m.to_checkpoint_bytes();
    let back = PgNet::from_checkpoint_bytes(&bytes).unwrap();
    assert_eq!(back.params(), m.params());
    assert_eq!(back.config(), m.config());
    assert_eq!(back.vocab(), m.vocab());
    assert!(PgNet::from_checkpoint_bytes(&bytes[..bytes.len() - 2]).is_err());

    // Header claims a different hidden size than the tensors carry.
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let mut header: CheckpointHeader = serde_json::from_slice(&bytes[16..16 + hlen]).unwrap();
    header.config.hidden = 4;
    header.config.embed_dim = 4;
    let json = serde_json::to_vec(&header).unwrap();
    let mut forged = bytes[..8].to_vec();
    forged.extend_from_slice(&(json.len() as u64).to_le_bytes());
    forged.extend_from_slice(&json);
    forged.extend_from_slice(&bytes[16 + hlen..]);
    let err = PgNet::from_checkpoint_bytes(&forged).unwrap_err().to_string();
    assert!(err.contains("embedding.table"), "{err}");
}

#[test]
fn greedy_tie_breaks_to_lowest_id() {
    let mut m = toy_model(Architecture::Qa, 20);
    // Constant logits and p_gen = 1 make every vocabulary id equally likely.
    set_param(&mut m, "decoder0.out2", |w| w.data.fill(0.0));
    set_param(&mut m, "decoder0.out2_b", |b| b.data.fill(0.0));
    set_param(&mut m, "decoder0.pgen_b", |b| b.data[0] = 1e4);
    let d = m.forward_qa(&toy_example(), Field::Dosage).unwrap();
    assert_eq!(d.steps[0].token, 0);
    assert!(d.tokens.is_empty(), "reserved ids render as nothing");
}

fn sequence_log_prob(d: &Decoded) -> f64 {
    d.steps.iter().map(|s| s.distribution[s.token].ln()).sum()
}

#[test]
fn beam_search_never_worse_than_greedy() {
    let ex = example("none take rx-a ten zz daily twice", "rx-a", "ten", "daily");
    for seed in 0..10 {
        let greedy = toy_model(Architecture::Qa, 40 + seed);
        let mut one = greedy.clone();
        one.set_beam_width(1).unwrap();
        let mut wide = greedy.clone();
        wide.set_beam_width(4).unwrap();
        let g = greedy.forward_qa(&ex, Field::Frequency).unwrap();
        let w = wide.forward_qa(&ex, Field::Frequency).unwrap();
        assert_eq!(one.forward_qa(&ex, Field::Frequency).unwrap(), g);
        assert!(w.steps.len() <= 3);
        assert!(sequence_log_prob(&w) >= sequence_log_prob(&g) - 1e-12);
    }
}

mod properties {
    use proptest::prelude::*;

    use super::*;

    const WORDS: [&str; 8] = ["none", "take", "rx-a", "ten", "daily", "qq", "zzz", "rx-new"];

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn every_step_is_a_distribution(
            seed in any::<u64>(),
            md in any::<bool>(),
            input in proptest::collection::vec(0usize..WORDS.len(), 1..8),
        ) {
            let arch = if md { Architecture::Md } else { Architecture::Qa };
            let m = PgNet::new(ModelConfig { init_range: 1.0, ..toy_config(arch, 4) }, toy_vocab(), seed).unwrap();
            let tokens: Vec<String> = input.iter().map(|&i| WORDS[i].to_string()).collect();
            let ex = Example { input_tokens: tokens, ..toy_example() };
            let decoded = match arch {
                Architecture::Md => m.forward_md(&ex).unwrap().to_vec(),
                _ => vec![m.forward_qa(&ex, Field::Dosage).unwrap(), m.forward_qa(&ex, Field::Frequency).unwrap()],
            };
            for d in decoded {
                for s in d.steps {
                    prop_assert!(s.distribution.iter().all(|&x| x >= 0.0));
                    prop_assert!((s.distribution.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                    prop_assert!((s.attention.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                    prop_assert!((0.0..=1.0).contains(&s.p_gen));
                }
            }
        }
    }
}
