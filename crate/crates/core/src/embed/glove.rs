//! GloVe and joint (GloVe + knowledge base) training.
//!
//! Objective over the nonzero co-occurrences:
//!
//! ```text
//! J = sum f(X_ij) (w_i . w~_j + b_i + b~_j - ln X_ij)^2,   f(x) = min(1, (x / x_max)^alpha)
//! ```
//!
//! The joint variant adds `lambda * sum_(p,q) in KB |w_p - w_q|^2` on the
//! center vectors. Both are optimised with AdaGrad over shuffled entries;
//! in joint mode each epoch runs a pass over the co-occurrences followed by
//! a pass over the KB pairs, sharing the AdaGrad accumulators.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::cooc::CoocMatrix;
use super::{EmbeddingMatrix, Method, DEFAULT_DIM};
use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::normalize::{TokenId, Vocab};

#[derive(Debug, Clone, PartialEq)]
pub struct GloveConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub x_max: f64,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for GloveConfig {
    fn default() -> Self {
        GloveConfig {
            dim: DEFAULT_DIM,
            epochs: 50,
            learning_rate: 0.05,
            x_max: 100.0,
            alpha: 0.75,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KbEdge {
    pub a: TokenId,
    pub b: TokenId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointConfig {
    pub lambda: f64,
    /// Scale each pair's attraction by its similarity score.
    pub weight_by_score: bool,
    pub edges: Vec<KbEdge>,
}

impl JointConfig {
    pub fn new(lambda: f64, edges: Vec<KbEdge>) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "lambda must be >= 0, got {lambda}"
            )));
        }
        Ok(JointConfig {
            lambda,
            weight_by_score: false,
            edges,
        })
    }

    fn edge_weight(&self, edge: &KbEdge) -> f64 {
        if self.weight_by_score {
            self.lambda * edge.score
        } else {
            self.lambda
        }
    }
}

/// Maps KB pairs to vocabulary ids. Returns the edges and the number of
/// pairs dropped because a command is not in the vocabulary.
pub fn resolve_kb(kb: &KnowledgeBase, vocab: &Vocab) -> (Vec<KbEdge>, usize) {
    let mut edges = Vec::new();
    let mut dropped = 0;
    for pair in &kb.pairs {
        match (vocab.id(pair.a.as_str()), vocab.id(pair.b.as_str())) {
            (Some(a), Some(b)) if a != b => edges.push(KbEdge {
                a,
                b,
                score: pair.score,
            }),
            _ => dropped += 1,
        }
    }
    (edges, dropped)
}

/// Parameters and AdaGrad accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct GloveTrainState {
    pub dim: usize,
    pub w: Vec<f64>,
    pub w_ctx: Vec<f64>,
    pub b: Vec<f64>,
    pub b_ctx: Vec<f64>,
    pub gsq_w: Vec<f64>,
    pub gsq_w_ctx: Vec<f64>,
    pub gsq_b: Vec<f64>,
    pub gsq_b_ctx: Vec<f64>,
    /// Objective value accumulated during each epoch's passes.
    pub epoch_losses: Vec<f64>,
}

impl GloveTrainState {
    pub fn init(vocab_size: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let scale = 1.0 / dim as f64;
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| (rng.random::<f64>() - 0.5) * scale)
                .collect()
        };
        let w = draw(vocab_size * dim);
        let w_ctx = draw(vocab_size * dim);
        let b = draw(vocab_size);
        let b_ctx = draw(vocab_size);
        GloveTrainState {
            dim,
            w,
            w_ctx,
            b,
            b_ctx,
            gsq_w: vec![1.0; vocab_size * dim],
            gsq_w_ctx: vec![1.0; vocab_size * dim],
            gsq_b: vec![1.0; vocab_size],
            gsq_b_ctx: vec![1.0; vocab_size],
            epoch_losses: Vec::new(),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.b.len()
    }

    /// `w_i . w~_j + b_i + b~_j`.
    pub fn prediction(&self, i: TokenId, j: TokenId) -> f64 {
        let (ri, rj) = (i as usize * self.dim, j as usize * self.dim);
        let dot: f64 = self.w[ri..ri + self.dim]
            .iter()
            .zip(&self.w_ctx[rj..rj + self.dim])
            .map(|(a, b)| a * b)
            .sum();
        dot + self.b[i as usize] + self.b_ctx[j as usize]
    }

    /// Final vectors `w + w~`.
    pub fn embedding(&self, method: Method) -> Result<EmbeddingMatrix> {
        let data = self.w.iter().zip(&self.w_ctx).map(|(a, b)| a + b).collect();
        EmbeddingMatrix::new(method, self.dim, data)
    }
}

pub fn weighting(x: f64, x_max: f64, alpha: f64) -> f64 {
    if x < x_max {
        (x / x_max).powf(alpha)
    } else {
        1.0
    }
}

/// Residual of one entry and `dJ/dprediction = 2 f(x) diff`.
fn entry_terms(
    state: &GloveTrainState,
    e: &super::CoocEntry,
    cfg: &GloveConfig,
) -> (f64, f64, f64) {
    let diff = state.prediction(e.row, e.col) - e.weight.ln();
    let fx = weighting(e.weight, cfg.x_max, cfg.alpha);
    (fx * diff * diff, 2.0 * fx * diff, diff)
}

/// Full GloVe objective.
pub fn glove_objective(state: &GloveTrainState, cooc: &CoocMatrix, cfg: &GloveConfig) -> f64 {
    cooc.entries
        .iter()
        .map(|e| entry_terms(state, e, cfg).0)
        .sum()
}

/// Gradient of a set of parameters, laid out like [`GloveTrainState`].
#[derive(Debug, Clone, PartialEq)]
pub struct GloveGradient {
    pub w: Vec<f64>,
    pub w_ctx: Vec<f64>,
    pub b: Vec<f64>,
    pub b_ctx: Vec<f64>,
}

impl GloveGradient {
    fn zeros(state: &GloveTrainState) -> Self {
        GloveGradient {
            w: vec![0.0; state.w.len()],
            w_ctx: vec![0.0; state.w_ctx.len()],
            b: vec![0.0; state.b.len()],
            b_ctx: vec![0.0; state.b_ctx.len()],
        }
    }
}

/// Analytic gradient of [`glove_objective`].
pub fn glove_gradient(
    state: &GloveTrainState,
    cooc: &CoocMatrix,
    cfg: &GloveConfig,
) -> GloveGradient {
    let mut grad = GloveGradient::zeros(state);
    let d = state.dim;
    for e in &cooc.entries {
        let (_, g, _) = entry_terms(state, e, cfg);
        let (ri, rj) = (e.row as usize * d, e.col as usize * d);
        for k in 0..d {
            grad.w[ri + k] += g * state.w_ctx[rj + k];
            grad.w_ctx[rj + k] += g * state.w[ri + k];
        }
        grad.b[e.row as usize] += g;
        grad.b_ctx[e.col as usize] += g;
    }
    grad
}

/// `lambda * sum |w_p - w_q|^2` over the KB edges.
pub fn kb_objective(state: &GloveTrainState, joint: &JointConfig) -> f64 {
    joint
        .edges
        .iter()
        .map(|edge| {
            let (ra, rb) = (edge.a as usize * state.dim, edge.b as usize * state.dim);
            let sq: f64 = (0..state.dim)
                .map(|k| (state.w[ra + k] - state.w[rb + k]).powi(2))
                .sum();
            joint.edge_weight(edge) * sq
        })
        .sum()
}

/// Gradient of [`kb_objective`] w.r.t. the center vectors:
/// `2 lambda (w_p - w_q)` on `w_p` and its negation on `w_q`.
pub fn kb_gradient(state: &GloveTrainState, joint: &JointConfig) -> Vec<f64> {
    let mut grad = vec![0.0; state.w.len()];
    for edge in &joint.edges {
        let (ra, rb) = (edge.a as usize * state.dim, edge.b as usize * state.dim);
        let lam = joint.edge_weight(edge);
        for k in 0..state.dim {
            let g = 2.0 * lam * (state.w[ra + k] - state.w[rb + k]);
            grad[ra + k] += g;
            grad[rb + k] -= g;
        }
    }
    grad
}

#[inline]
fn adagrad(param: &mut f64, gsq: &mut f64, grad: f64, lr: f64) {
    *param -= lr * grad / gsq.sqrt();
    *gsq += grad * grad;
}

/// One stochastic pass over the co-occurrence entries in `order`.
fn cooc_pass(
    state: &mut GloveTrainState,
    cooc: &CoocMatrix,
    order: &[usize],
    cfg: &GloveConfig,
    epoch: usize,
) -> Result<f64> {
    let d = state.dim;
    let lr = cfg.learning_rate;
    let mut loss = 0.0;
    for (step, &idx) in order.iter().enumerate() {
        let e = &cooc.entries[idx];
        let (l, g, diff) = entry_terms(state, e, cfg);
        if !l.is_finite() {
            return Err(Error::NonFinite {
                stage: "glove",
                step: epoch * order.len() + step,
                detail: format!(
                    "entry ({}, {}) weight {} residual {diff}",
                    e.row, e.col, e.weight
                ),
            });
        }
        loss += l;
        let (ri, rj) = (e.row as usize * d, e.col as usize * d);
        for k in 0..d {
            let gw = g * state.w_ctx[rj + k];
            let gc = g * state.w[ri + k];
            adagrad(&mut state.w[ri + k], &mut state.gsq_w[ri + k], gw, lr);
            adagrad(
                &mut state.w_ctx[rj + k],
                &mut state.gsq_w_ctx[rj + k],
                gc,
                lr,
            );
        }
        adagrad(
            &mut state.b[e.row as usize],
            &mut state.gsq_b[e.row as usize],
            g,
            lr,
        );
        adagrad(
            &mut state.b_ctx[e.col as usize],
            &mut state.gsq_b_ctx[e.col as usize],
            g,
            lr,
        );
    }
    Ok(loss)
}

fn kb_pass(
    state: &mut GloveTrainState,
    joint: &JointConfig,
    order: &[usize],
    lr: f64,
    epoch: usize,
) -> Result<f64> {
    let d = state.dim;
    let mut loss = 0.0;
    for (step, &idx) in order.iter().enumerate() {
        let edge = &joint.edges[idx];
        let lam = joint.edge_weight(edge);
        let (ra, rb) = (edge.a as usize * d, edge.b as usize * d);
        let mut sq = 0.0;
        for k in 0..d {
            let diff = state.w[ra + k] - state.w[rb + k];
            sq += diff * diff;
            let g = 2.0 * lam * diff;
            adagrad(&mut state.w[ra + k], &mut state.gsq_w[ra + k], g, lr);
            adagrad(&mut state.w[rb + k], &mut state.gsq_w[rb + k], -g, lr);
        }
        let l = lam * sq;
        if !l.is_finite() {
            return Err(Error::NonFinite {
                stage: "joint",
                step: epoch * order.len() + step,
                detail: format!("kb pair ({}, {})", edge.a, edge.b),
            });
        }
        loss += l;
    }
    Ok(loss)
}

/// Runs training and returns the final state, which includes the
/// per-epoch losses.
pub fn fit(
    cooc: &CoocMatrix,
    cfg: &GloveConfig,
    joint: Option<&JointConfig>,
) -> Result<GloveTrainState> {
    if cooc.is_empty() {
        return Err(Error::InvalidInput("co-occurrence matrix is empty".into()));
    }
    if cfg.dim == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    if let Some(joint) = joint {
        if let Some(edge) = joint
            .edges
            .iter()
            .find(|e| e.a as usize >= cooc.vocab_size || e.b as usize >= cooc.vocab_size)
        {
            return Err(Error::InvalidInput(format!(
                "kb edge ({}, {}) outside vocabulary",
                edge.a, edge.b
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // KB ordering has its own stream so the corpus trajectory does not
    // depend on whether a KB is present.
    let mut kb_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6b62_5f6f_7264_6572);
    let mut state = GloveTrainState::init(cooc.vocab_size, cfg.dim, &mut rng);
    let mut order: Vec<usize> = (0..cooc.len()).collect();
    let mut kb_order: Vec<usize> = joint
        .map(|j| (0..j.edges.len()).collect())
        .unwrap_or_default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss = cooc_pass(&mut state, cooc, &order, cfg, epoch)?;
        if let Some(joint) = joint.filter(|j| j.lambda > 0.0 && !j.edges.is_empty()) {
            kb_order.shuffle(&mut kb_rng);
            loss += kb_pass(&mut state, joint, &kb_order, cfg.learning_rate, epoch)?;
        }
        state.epoch_losses.push(loss);
    }
    Ok(state)
}

pub fn train_glove(cooc: &CoocMatrix, cfg: &GloveConfig) -> Result<EmbeddingMatrix> {
    fit(cooc, cfg, None)?.embedding(Method::Glove)
}

pub fn train_joint(
    cooc: &CoocMatrix,
    joint: &JointConfig,
    cfg: &GloveConfig,
) -> Result<EmbeddingMatrix> {
    fit(cooc, cfg, Some(joint))?.embedding(Method::Joint)
}
