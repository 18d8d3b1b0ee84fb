//! Optimization loops for extraction and summarization pretraining, early
//! stopping, and encoder transfer.

mod config;
mod optim;
mod transfer;

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{parse_kv, TrainConfig};
pub use optim::Adagrad;
pub use transfer::{transfer_encoder, TransferReport};

use crate::autodiff::Gradients;
use crate::error::{Error, Result};
use crate::evaluation::evaluate;
use crate::pgnet::{Dropout, Objective, PgNet, Task};
use crate::preprocess::{build_vocabulary, Example, SummaryExample, Vocabulary};

/// Vocabulary over inputs, targets and questions of `examples`.
pub fn qa_vocabulary(examples: &[Example], threshold: usize) -> Result<Vocabulary> {
    build_vocabulary(examples.iter().flat_map(Example::vocabulary_tokens), threshold)
}

/// Vocabulary over inputs and summaries.
pub fn summary_vocabulary(examples: &[SummaryExample], threshold: usize) -> Result<Vocabulary> {
    build_vocabulary(
        examples
            .iter()
            .flat_map(|e| e.input_tokens.iter().chain(&e.target)),
        threshold,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub iteration: usize,
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-example loss of each iteration's batch.
    pub loss_curve: Vec<f64>,
    pub evaluations: Vec<EvalPoint>,
    pub metric_name: String,
    pub best_metric: f64,
    pub best_iteration: usize,
    pub stopped_iteration: usize,
    pub stop_reason: StopReason,
    /// Target tokens outside both vocabulary and input, summed over training.
    pub unreachable_targets: usize,
    /// Excluded from serialized output so reports are reproducible.
    #[serde(skip)]
    pub wall_clock: Duration,
}

impl TrainReport {
    /// Human-readable log: one line per validation pass plus a summary.
    pub fn to_log(&self) -> String {
        let mut s = String::new();
        for e in &self.evaluations {
            let lo = e.iteration.saturating_sub(1).min(self.loss_curve.len().saturating_sub(1));
            let loss = self.loss_curve.get(lo).copied().unwrap_or(f64::NAN);
            let _ = writeln!(s, "iter {:>6}  loss {:>10.5}  {} {:.5}", e.iteration, loss, self.metric_name, e.metric);
        }
        let _ = writeln!(
            s,
            "stopped at {} ({:?}); best {} {:.5} at iter {}; unreachable targets {}",
            self.stopped_iteration,
            self.stop_reason,
            self.metric_name,
            self.best_metric,
            self.best_iteration,
            self.unreachable_targets,
        );
        s
    }
}

/// Seed of the dropout stream for one example of one batch.
fn dropout_seed(seed: u64, iteration: usize, slot: usize) -> u64 {
    let mut x = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [iteration as u64, slot as u64] {
        x = x.wrapping_add(v).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x ^= x >> 31;
    }
    x
}

/// Mean objective over `batch`; gradients are reduced in batch order.
fn batch_objective(model: &PgNet, batch: &[Task], config: &TrainConfig, iteration: usize) -> Result<Objective> {
    let parts: Vec<Objective> = batch
        .par_iter()
        .enumerate()
        .map(|(slot, task)| {
            let mut dropout = Dropout::new(config.dropout, dropout_seed(config.seed, iteration, slot));
            model.objective(*task, Some(&mut dropout))
        })
        .collect::<Result<_>>()
        .map_err(|e| with_batch(e, iteration, batch))?;
    let mut grads = Gradients::new(model.params().len());
    let mut loss = 0.0;
    let mut unreachable = 0;
    for p in parts {
        loss += p.loss;
        unreachable += p.unreachable;
        grads.merge(p.grads);
    }
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    Ok(Objective {
        loss: loss / n,
        grads,
        unreachable,
    })
}

fn batch_ids(batch: &[Task]) -> String {
    batch.iter().map(|t| t.id()).collect::<Vec<_>>().join(",")
}

fn with_batch(e: Error, iteration: usize, batch: &[Task]) -> Error {
    match e {
        Error::NonFinite(m) => Error::NonFinite(format!("iteration {iteration}, batch [{}]: {m}", batch_ids(batch))),
        other => other,
    }
}

/// Minibatch Adagrad with early stopping on `metric` (higher is better).
/// The model is left holding the parameters of the best validation pass.
pub fn fit<M>(model: &mut PgNet, tasks: &[Task], config: &TrainConfig, metric_name: &str, mut metric: M) -> Result<TrainReport>
where
    M: FnMut(&PgNet) -> Result<f64>,
{
    config.validate()?;
    if tasks.is_empty() {
        return Err(Error::data("no training examples"));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut optimizer = Adagrad::new(model.params(), config.learning_rate, config.initial_accumulator);
    let mut order: Vec<usize> = (0..tasks.len()).collect();
    let mut cursor = order.len();

    let mut loss_curve = Vec::with_capacity(config.max_iterations);
    let mut evaluations = Vec::new();
    let mut best: Option<(f64, usize, crate::autodiff::ParamStore)> = None;
    let mut stale = 0;
    let mut unreachable = 0;
    let mut stop_reason = StopReason::MaxIterations;
    let mut iteration = 0;

    while iteration < config.max_iterations {
        iteration += 1;
        let mut batch = Vec::with_capacity(config.batch_size);
        while batch.len() < config.batch_size.min(tasks.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(tasks[order[cursor]]);
            cursor += 1;
        }
        let mut obj = batch_objective(model, &batch, config, iteration)?;
        if !obj.loss.is_finite() || !obj.grads.is_finite() {
            return Err(Error::NonFinite(format!(
                "iteration {iteration}, batch [{}]: loss {}",
                batch_ids(&batch),
                obj.loss
            )));
        }
        obj.grads.clip_global_norm(config.clip_norm);
        optimizer.step(model.params_mut(), &obj.grads);
        loss_curve.push(obj.loss);
        unreachable += obj.unreachable;

        if iteration % config.eval_every == 0 || iteration == config.max_iterations {
            let m = metric(model)?;
            log::info!("iteration {iteration}: loss {:.5} {metric_name} {m:.5}", obj.loss);
            evaluations.push(EvalPoint { iteration, metric: m });
            if best.as_ref().is_none_or(|(b, _, _)| m > *b) {
                best = Some((m, iteration, model.params().clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    stop_reason = StopReason::Patience;
                    break;
                }
            }
        }
    }

    let (best_metric, best_iteration, params) = best.expect("at least one validation pass");
    *model.params_mut() = params;
    Ok(TrainReport {
        loss_curve,
        evaluations,
        metric_name: metric_name.to_string(),
        best_metric,
        best_iteration,
        stopped_iteration: iteration,
        stop_reason,
        unreachable_targets: unreachable,
        wall_clock: start.elapsed(),
    })
}

fn limited<T>(items: &[T], limit: usize) -> &[T] {
    if limit == 0 {
        items
    } else {
        &items[..limit.min(items.len())]
    }
}

/// Trains a QA or MD model, stopping on validation mean ROUGE-1 F1 over
/// dosage and frequency.
pub fn train_qa(mut model: PgNet, train: &[Example], validation: &[Example], config: &TrainConfig) -> Result<(PgNet, TrainReport)> {
    if validation.is_empty() {
        return Err(Error::data("no validation examples"));
    }
    let tasks: Vec<Task> = train.iter().map(Task::Extract).collect();
    let val = limited(validation, config.eval_limit);
    let report = fit(&mut model, &tasks, config, "val_rouge1_f1", |m| Ok(evaluate(m, val)?.mean_f1()))?;
    Ok((model, report))
}

/// Mean teacher-forced loss over `examples`.
pub fn mean_summary_loss(model: &PgNet, examples: &[SummaryExample]) -> Result<f64> {
    let losses: Vec<f64> = examples
        .par_iter()
        .map(|e| model.loss(Task::Summarize(e)))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Trains a summarizer, stopping on validation loss. The reported metric is
/// the negated mean validation loss.
pub fn pretrain_summarization(
    mut model: PgNet,
    train: &[SummaryExample],
    validation: &[SummaryExample],
    config: &TrainConfig,
) -> Result<(PgNet, TrainReport)> {
    if validation.is_empty() {
        return Err(Error::data("no validation summaries"));
    }
    let tasks: Vec<Task> = train.iter().map(Task::Summarize).collect();
    let val = limited(validation, config.eval_limit);
    let report = fit(&mut model, &tasks, config, "neg_val_loss", |m| Ok(-mean_summary_loss(m, val)?))?;
    Ok((model, report))
}
