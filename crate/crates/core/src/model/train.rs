//! Training pairs, mini-batch Adam training and evaluation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{Adam, Masks, Mode, Model};
use crate::error::{Error, Result};
use crate::normalize::{TokenId, TokenStream};

/// Batches are split into at most this many contiguous chunks whose
/// gradients are computed in parallel and summed in chunk order, so the
/// result does not depend on the thread count.
const GRAD_CHUNKS: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub context: Vec<TokenId>,
    pub target: TokenId,
    /// The target is the first token of a command line.
    pub line_start: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairSet {
    pub examples: Vec<Example>,
    /// Streams too short to yield a single pair.
    pub skipped_streams: usize,
}

/// Sliding windows of length `context_len` with stride 1, never crossing
/// from one user's stream into the next.
pub fn make_training_pairs(streams: &[TokenStream], context_len: usize) -> PairSet {
    let mut out = PairSet::default();
    for stream in streams {
        if stream.ids.len() <= context_len {
            out.skipped_streams += 1;
            continue;
        }
        let mut starts = stream.line_starts.iter().peekable();
        for t in context_len..stream.ids.len() {
            while starts.next_if(|&&s| s < t).is_some() {}
            out.examples.push(Example {
                context: stream.ids[t - context_len..t].to_vec(),
                target: stream.ids[t],
                line_start: starts.peek() == Some(&&t),
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub val_command_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn val_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.val_loss).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EvalScores {
    pub loss: f64,
    pub correct: usize,
    pub scored: usize,
    pub command_correct: usize,
    pub command_scored: usize,
}

impl EvalScores {
    /// Top-1 accuracy over every target token.
    pub fn accuracy(&self) -> f64 {
        ratio(self.correct, self.scored)
    }

    /// Top-1 accuracy over targets that start a command line.
    pub fn command_accuracy(&self) -> f64 {
        ratio(self.command_correct, self.command_scored)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in p.iter().enumerate() {
        if x > p[best] {
            best = i;
        }
    }
    best
}

/// Dropout-free loss and accuracy over `examples`.
pub fn evaluate(model: &Model, examples: &[Example]) -> Result<EvalScores> {
    let results: Vec<(f64, bool, bool)> = examples
        .par_iter()
        .map(|ex| {
            let probs = model.forward(&ex.context, Mode::Infer)?;
            let hit = argmax(&probs) == ex.target as usize;
            Ok((-probs[ex.target as usize].ln(), hit, ex.line_start))
        })
        .collect::<Result<_>>()?;
    let mut s = EvalScores::default();
    let mut loss_sum = 0.0;
    for (loss, hit, line_start) in results {
        loss_sum += loss;
        s.scored += 1;
        s.correct += hit as usize;
        if line_start {
            s.command_scored += 1;
            s.command_correct += hit as usize;
        }
    }
    s.loss = if s.scored == 0 {
        0.0
    } else {
        loss_sum / s.scored as f64
    };
    Ok(s)
}

fn example_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_d50f_0000_0001);
    rng.set_stream(index);
    rng
}

/// Mean loss and mean gradient over one batch.
pub(crate) fn batch_gradient(
    model: &Model,
    batch: &[&Example],
    first_index: u64,
    grad: &mut [f64],
) -> f64 {
    let chunk = batch.len().div_ceil(GRAD_CHUNKS).max(1);
    let partials: Vec<(f64, Vec<f64>)> = batch
        .par_chunks(chunk)
        .enumerate()
        .map(|(c, examples)| {
            let mut g = vec![0.0; model.params.len()];
            let mut loss = 0.0;
            for (k, ex) in examples.iter().enumerate() {
                let index = first_index + (c * chunk + k) as u64;
                let mut rng = example_rng(model.config.seed, index);
                let masks = Masks::draw(&model.layout, model.config.dropout, &mut rng);
                loss += model.accumulate_gradient(&ex.context, ex.target, masks.as_ref(), &mut g);
            }
            (loss, g)
        })
        .collect();
    grad.fill(0.0);
    let mut loss = 0.0;
    for (l, g) in partials {
        loss += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    let scale = 1.0 / batch.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    loss * scale
}

/// Trains for `model.config.max_epochs` epochs. When `val` is empty the
/// validation columns are computed on the training examples.
pub fn train(model: Model, train: &[Example], val: &[Example]) -> Result<(Model, TrainHistory)> {
    train_with(model, train, val, |_| {})
}

pub fn train_with(
    mut model: Model,
    train: &[Example],
    val: &[Example],
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(Model, TrainHistory)> {
    if train.is_empty() {
        return Err(Error::InvalidInput("no training examples".into()));
    }
    let cfg = model.config.clone();
    cfg.validate()?;
    let val = if val.is_empty() { train } else { val };
    let frozen =
        (!cfg.embedding_trainable).then_some(model.layout.embedding..model.layout.layer1.w_x);
    let mut adam = Adam::new(model.params.len(), cfg.learning_rate);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5348_5546_464c_4521);
    let mut order: Vec<&Example> = train.iter().collect();
    let mut grad = vec![0.0; model.params.len()];
    let mut history = TrainHistory::default();
    let mut seen = 0u64;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let loss = batch_gradient(&model, batch, seen, &mut grad);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    stage: "lstm training",
                    step: adam.steps() as usize,
                    detail: format!("epoch {epoch}, batch {b}, loss {loss}"),
                });
            }
            seen += batch.len() as u64;
            loss_sum += loss * batch.len() as f64;
            adam.step(&mut model.params, &grad, frozen.clone());
        }
        let scores = evaluate(&model, val)?;
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_loss: scores.loss,
            val_accuracy: scores.accuracy(),
            val_command_accuracy: scores.command_accuracy(),
        };
        if !stats.val_loss.is_finite() {
            return Err(Error::NonFinite {
                stage: "lstm validation",
                step: adam.steps() as usize,
                detail: format!("epoch {epoch}, validation loss {}", stats.val_loss),
            });
        }
        on_epoch(&stats);
        history.epochs.push(stats);
    }
    Ok((model, history))
}
