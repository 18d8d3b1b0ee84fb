use super::config::Architecture;
use super::extended::ExtendedVocab;
use super::model::{Dropout, Encoded, Memory, PgNet, StepVars};
use crate::autodiff::{Gradients, Mat, Tape, Var};
use crate::error::{Error, Result};
use crate::evaluation::{Prediction, Predictor};
use crate::preprocess::{Example, Field, Mode, SummaryExample, START, STOP};

/// Probability charged to a target the decoder cannot produce.
pub const UNREACHABLE_EPS: f64 = 1e-12;

/// One training or evaluation unit.
#[derive(Debug, Clone, Copy)]
pub enum Task<'a> {
    Extract(&'a Example),
    Summarize(&'a SummaryExample),
}

impl Task<'_> {
    pub fn id(&self) -> &str {
        match self {
            Task::Extract(e) => &e.id,
            Task::Summarize(s) => &s.id,
        }
    }
}

/// Loss value and parameter gradients for one task.
#[derive(Debug, Clone)]
pub struct Objective {
    pub loss: f64,
    pub grads: Gradients,
    /// Target tokens that were neither in the vocabulary nor in the input.
    pub unreachable: usize,
}

/// Values recorded at one decoding step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub distribution: Vec<f64>,
    pub attention: Vec<f64>,
    pub p_gen: f64,
    /// Extended id chosen at this step.
    pub token: usize,
}

/// Greedy output of one decoder head.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub steps: Vec<StepRecord>,
    /// Rendered tokens, excluding `STOP` and other reserved ids.
    pub tokens: Vec<String>,
}

/// Key under which the condition tokens of an example are embedded.
pub fn condition_key(example_id: &str, mode: Mode, field: Field) -> String {
    match mode {
        Mode::Qa => format!("{example_id}#q-{}", field.name()),
        Mode::Entity => format!("{example_id}#entity"),
    }
}

/// Every keyed token sequence a model of `architecture` embeds for `ex`:
/// the input under the example id plus each condition.
pub fn embedding_sequences(ex: &Example, architecture: Architecture) -> Vec<(String, Vec<String>)> {
    let mode = architecture.mode();
    let mut out = vec![(ex.id.clone(), ex.input_tokens.clone())];
    match mode {
        Mode::Qa => {
            for f in Field::ALL {
                out.push((condition_key(&ex.id, mode, f), ex.condition_tokens(mode, f)));
            }
        }
        Mode::Entity => out.push((
            condition_key(&ex.id, mode, Field::Dosage),
            ex.condition_tokens(mode, Field::Dosage),
        )),
    }
    out
}

/// `Σ_t −log P_t(target_t)` over explicit distributions. Unreachable
/// targets cost `−ln ε` each and are counted.
pub fn nll(distributions: &[Vec<f64>], targets: &[Option<usize>]) -> (f64, usize) {
    let mut loss = 0.0;
    let mut unreachable = 0;
    for (d, t) in distributions.iter().zip(targets) {
        match t {
            Some(id) => loss -= d[*id].ln(),
            None => {
                loss -= UNREACHABLE_EPS.ln();
                unreachable += 1;
            }
        }
    }
    (loss, unreachable)
}

struct Head {
    k: usize,
    field: Option<Field>,
    state: Var,
    memory: Memory,
}

impl PgNet {
    fn check_input(&self, tokens: &[String], id: &str) -> Result<()> {
        if tokens.len() > self.config().max_encoder_steps {
            return Err(Error::data(format!(
                "input `{id}` has {} tokens, more than the {} encoder steps",
                tokens.len(),
                self.config().max_encoder_steps
            )));
        }
        Ok(())
    }

    fn encode_tokens(
        &self,
        t: &mut Tape,
        tokens: &[String],
        key: &str,
        dropout: Option<&mut Dropout>,
    ) -> Result<Encoded> {
        let x = self.embed(t, tokens, key, dropout)?;
        self.encode(t, x)
    }

    /// Encodes the input and prepares every decoder head a task needs.
    fn heads(
        &self,
        t: &mut Tape,
        task: Task,
        mut dropout: Option<&mut Dropout>,
    ) -> Result<(Vec<Head>, ExtendedVocab)> {
        let (id, input) = match task {
            Task::Extract(e) => (&e.id, &e.input_tokens),
            Task::Summarize(s) => (&s.id, &s.input_tokens),
        };
        self.check_input(input, id)?;
        let ext = ExtendedVocab::new(input, self.vocab());
        let enc = self.encode_tokens(t, input, id, dropout.as_deref_mut())?;
        let arch = self.architecture();
        let mut heads = Vec::new();
        match (arch, task) {
            (Architecture::Summarizer, Task::Summarize(_)) => {
                let memory = self.memory(t, 0, enc.h)?;
                let state = self.initial_state(t, 0, &enc);
                heads.push(Head {
                    k: 0,
                    field: None,
                    state,
                    memory,
                });
            }
            (Architecture::Qa, Task::Extract(ex)) => {
                for field in Field::ALL {
                    let q = ex.condition_tokens(Mode::Qa, field);
                    let key = condition_key(&ex.id, Mode::Qa, field);
                    let hq = self.encode_tokens(t, &q, &key, dropout.as_deref_mut())?;
                    let c_d = self.coattend(t, 0, enc.h, hq.h)?;
                    let m = t.concat_cols(&[enc.h, c_d]);
                    let memory = self.memory(t, 0, m)?;
                    let state = self.initial_state(t, 0, &enc);
                    heads.push(Head {
                        k: 0,
                        field: Some(field),
                        state,
                        memory,
                    });
                }
            }
            (Architecture::Md, Task::Extract(ex)) => {
                let e = ex.condition_tokens(Mode::Entity, Field::Dosage);
                let key = condition_key(&ex.id, Mode::Entity, Field::Dosage);
                let he = self.encode_tokens(t, &e, &key, dropout.as_deref_mut())?;
                for (k, field) in Field::ALL.into_iter().enumerate() {
                    let c_d = self.coattend(t, k, enc.h, he.h)?;
                    let m = t.concat_cols(&[enc.h, c_d]);
                    let memory = self.memory(t, k, m)?;
                    let state = self.initial_state(t, k, &enc);
                    heads.push(Head {
                        k,
                        field: Some(field),
                        state,
                        memory,
                    });
                }
            }
            (arch, _) => {
                return Err(Error::config(format!("a {arch} model cannot run this task")));
            }
        }
        Ok((heads, ext))
    }

    fn budget(&self, field: Option<Field>) -> usize {
        match field {
            Some(f) => self.config().budget(f),
            None => self.config().summary_steps,
        }
    }

    fn head_targets(&self, task: Task, field: Option<Field>, ext: &ExtendedVocab) -> Vec<Option<usize>> {
        let tokens: &[String] = match (task, field) {
            (Task::Extract(ex), Some(f)) => ex.target(f),
            (Task::Summarize(s), _) => &s.target,
            (Task::Extract(_), None) => &[],
        };
        ext.targets(tokens, self.budget(field), self.vocab())
    }

    /// Teacher-forced summed NLL of a task on `t`; returns the loss node and
    /// the number of unreachable targets.
    pub fn loss_on_tape(&self, t: &mut Tape, task: Task, mut dropout: Option<&mut Dropout>) -> Result<(Var, usize)> {
        let (heads, ext) = self.heads(t, task, dropout.as_deref_mut())?;
        let mut terms = Vec::new();
        let mut unreachable = 0;
        for head in &heads {
            let targets = self.head_targets(task, head.field, &ext);
            let steps = self.run_decoder(
                t,
                head.k,
                head.state,
                &head.memory,
                &ext,
                Some(&targets),
                targets.len(),
                dropout.as_deref_mut(),
            )?;
            for ((vars, _), target) in steps.iter().zip(&targets) {
                match target {
                    Some(id) => {
                        let p = t.pick(vars.distribution, 0, *id);
                        terms.push(t.log(p));
                    }
                    None => unreachable += 1,
                }
            }
        }
        let penalty = -(unreachable as f64) * UNREACHABLE_EPS.ln();
        let loss = if terms.is_empty() {
            t.constant(Mat::scalar(penalty))
        } else {
            let ll = t.add_all(&terms);
            let nll = t.scale(ll, -1.0);
            let c = t.constant(Mat::scalar(penalty));
            t.add(nll, c)
        };
        if !t.value(loss).item().is_finite() {
            return Err(Error::NonFinite(format!("loss for `{}`", task.id())));
        }
        Ok((loss, unreachable))
    }

    /// Loss and gradients of one task.
    pub fn objective(&self, task: Task, dropout: Option<&mut Dropout>) -> Result<Objective> {
        let mut t = Tape::new(self.params());
        let (loss, unreachable) = self.loss_on_tape(&mut t, task, dropout)?;
        let grads = t.backward(loss);
        Ok(Objective {
            loss: t.value(loss).item(),
            grads,
            unreachable,
        })
    }

    /// Teacher-forced loss without gradients or dropout.
    pub fn loss(&self, task: Task) -> Result<f64> {
        let mut t = Tape::new(self.params());
        let (loss, _) = self.loss_on_tape(&mut t, task, None)?;
        Ok(t.value(loss).item())
    }

    fn record(&self, t: &Tape, steps: &[(StepVars, usize)], ext: &ExtendedVocab) -> Decoded {
        let steps: Vec<StepRecord> = steps
            .iter()
            .map(|(v, tok)| StepRecord {
                distribution: t.value(v.distribution).data.clone(),
                attention: t.value(v.attention).data.clone(),
                p_gen: t.value(v.p_gen).item(),
                token: *tok,
            })
            .collect();
        let tokens = steps
            .iter()
            .map(|s| ext.render(s.token, self.vocab()))
            .filter(|w| !w.is_empty())
            .map(String::from)
            .collect();
        Decoded { steps, tokens }
    }

    fn decode_heads(&self, task: Task) -> Result<Vec<(Option<Field>, Decoded)>> {
        let mut t = Tape::new(self.params());
        let (heads, ext) = self.heads(&mut t, task, None)?;
        let mut out = Vec::new();
        for head in &heads {
            let budget = self.budget(head.field);
            let steps = if self.config().beam_width > 1 {
                self.beam_search(&mut t, head, &ext, budget)?
            } else {
                self.run_decoder(&mut t, head.k, head.state, &head.memory, &ext, None, budget, None)?
            };
            out.push((head.field, self.record(&t, &steps, &ext)));
        }
        Ok(out)
    }

    /// Keeps the `beam_width` best partial outputs by summed log-probability.
    /// Ties keep the earlier beam, then the lower id.
    fn beam_search(&self, t: &mut Tape, head: &Head, ext: &ExtendedVocab, budget: usize) -> Result<Vec<(StepVars, usize)>> {
        struct Beam {
            score: f64,
            state: Var,
            steps: Vec<(StepVars, usize)>,
            done: bool,
        }
        let width = self.config().beam_width;
        let mut beams = vec![Beam {
            score: 0.0,
            state: head.state,
            steps: Vec::new(),
            done: false,
        }];
        for _ in 0..budget {
            if beams.iter().all(|b| b.done) {
                break;
            }
            let mut candidates: Vec<(f64, usize, Option<(StepVars, usize)>)> = Vec::new();
            for (bi, beam) in beams.iter().enumerate() {
                if beam.done {
                    candidates.push((beam.score, bi, None));
                    continue;
                }
                let prev = beam.steps.last().map_or(START, |(_, id)| ext.feed_id(*id));
                let emb = self.embed_decoder_input(t, prev, None);
                let vars = self.decode_step(t, head.k, emb, beam.state, &head.memory, ext)?;
                let dist = &t.value(vars.distribution).data;
                let mut order: Vec<usize> = (0..dist.len()).collect();
                order.sort_by(|&a, &b| dist[b].total_cmp(&dist[a]).then(a.cmp(&b)));
                for &id in order.iter().take(width) {
                    candidates.push((beam.score + dist[id].ln(), bi, Some((vars, id))));
                }
            }
            candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
            candidates.truncate(width);
            beams = candidates
                .into_iter()
                .map(|(score, bi, step)| {
                    let parent = &beams[bi];
                    match step {
                        None => Beam {
                            score,
                            state: parent.state,
                            steps: parent.steps.clone(),
                            done: true,
                        },
                        Some((vars, id)) => {
                            let mut steps = parent.steps.clone();
                            steps.push((vars, id));
                            Beam {
                                score,
                                state: vars.state,
                                steps,
                                done: id == STOP,
                            }
                        }
                    }
                })
                .collect();
        }
        Ok(beams.swap_remove(0).steps)
    }

    /// Greedy distributions for one question of a QA model.
    pub fn forward_qa(&self, ex: &Example, field: Field) -> Result<Decoded> {
        if self.architecture() != Architecture::Qa {
            return Err(Error::config("forward_qa needs a qa model"));
        }
        self.decode_heads(Task::Extract(ex))?
            .into_iter()
            .find(|(f, _)| *f == Some(field))
            .map(|(_, d)| d)
            .ok_or_else(|| Error::data("missing head"))
    }

    /// Greedy distributions of both heads of an MD model.
    pub fn forward_md(&self, ex: &Example) -> Result<[Decoded; 2]> {
        if self.architecture() != Architecture::Md {
            return Err(Error::config("forward_md needs an md model"));
        }
        let mut heads = self.decode_heads(Task::Extract(ex))?.into_iter().map(|(_, d)| d);
        Ok([heads.next().expect("dosage head"), heads.next().expect("frequency head")])
    }

    /// Dosage and frequency by greedy or beam decoding.
    pub fn greedy_decode(&self, ex: &Example) -> Result<Prediction> {
        let mut prediction = Prediction {
            dosage: Vec::new(),
            frequency: Vec::new(),
        };
        for (field, decoded) in self.decode_heads(Task::Extract(ex))? {
            match field {
                Some(Field::Dosage) => prediction.dosage = decoded.tokens,
                Some(Field::Frequency) => prediction.frequency = decoded.tokens,
                None => {}
            }
        }
        Ok(prediction)
    }

    /// Greedy summary of a summarizer model.
    pub fn summarize(&self, ex: &SummaryExample) -> Result<Decoded> {
        let mut heads = self.decode_heads(Task::Summarize(ex))?;
        Ok(heads.remove(0).1)
    }
}

impl Predictor for PgNet {
    fn predict(&self, ex: &Example) -> Result<Prediction> {
        self.greedy_decode(ex)
    }
}
