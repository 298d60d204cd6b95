//! Skip-gram with negative sampling.
//!
//! For each (center, context) pair inside the window the loss is
//! `-ln s(w_c . u_o) - sum_n ln s(-w_c . u_n)` with `s` the logistic
//! function and negatives `n` drawn from the unigram distribution raised to
//! the 3/4 power. Plain SGD with a linearly decaying learning rate.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EmbeddingMatrix, Method, DEFAULT_DIM, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::normalize::TokenId;

#[derive(Debug, Clone, PartialEq)]
pub struct SgnsConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            dim: DEFAULT_DIM,
            window: DEFAULT_WINDOW,
            negatives: 5,
            epochs: 5,
            learning_rate: 0.025,
            seed: 42,
        }
    }
}

/// `ln s(x)`, stable for large |x|.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Loss and gradients of one skip-gram term.
#[derive(Debug, Clone, PartialEq)]
pub struct TermGradient {
    pub loss: f64,
    pub center: Vec<f64>,
    pub context: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

pub fn term_gradient(center: &[f64], context: &[f64], negatives: &[&[f64]]) -> TermGradient {
    let s = dot(center, context);
    let mut loss = -log_sigmoid(s);
    let g_pos = sigmoid(s) - 1.0;
    let mut g_center: Vec<f64> = context.iter().map(|u| g_pos * u).collect();
    let g_context = center.iter().map(|w| g_pos * w).collect();
    let mut g_negs = Vec::with_capacity(negatives.len());
    for neg in negatives {
        let sn = dot(center, neg);
        loss -= log_sigmoid(-sn);
        let g = sigmoid(sn);
        for (gc, u) in g_center.iter_mut().zip(neg.iter()) {
            *gc += g * u;
        }
        g_negs.push(center.iter().map(|w| g * w).collect());
    }
    TermGradient {
        loss,
        center: g_center,
        context: g_context,
        negatives: g_negs,
    }
}

/// Negative-sampling table weights: `count^0.75`.
pub fn noise_weights<S: AsRef<[TokenId]>>(streams: &[S], vocab_size: usize) -> Vec<f64> {
    let mut counts = vec![0u64; vocab_size];
    for s in streams {
        for &id in s.as_ref() {
            counts[id as usize] += 1;
        }
    }
    counts.into_iter().map(|c| (c as f64).powf(0.75)).collect()
}

/// One SGD update for a center word against `(target, label)` pairs,
/// label 1 for the true context and 0 for noise. Context rows are updated
/// in place; the center row is updated once at the end. Returns the
/// offending score if a dot product is not finite.
pub fn sgd_step(
    w: &mut [f64],
    u: &mut [f64],
    d: usize,
    center: TokenId,
    targets: &[(TokenId, f64)],
    lr: f64,
    g_center: &mut [f64],
) -> std::result::Result<(), f64> {
    let wc = center as usize * d;
    g_center.iter_mut().for_each(|g| *g = 0.0);
    for &(target, label) in targets {
        let ut = target as usize * d;
        let s = dot(&w[wc..wc + d], &u[ut..ut + d]);
        if !s.is_finite() {
            return Err(s);
        }
        let g = sigmoid(s) - label;
        for k in 0..d {
            g_center[k] += g * u[ut + k];
            u[ut + k] -= lr * g * w[wc + k];
        }
    }
    for k in 0..d {
        w[wc + k] -= lr * g_center[k];
    }
    Ok(())
}

pub fn train_sgns<S: AsRef<[TokenId]>>(
    streams: &[S],
    vocab_size: usize,
    cfg: &SgnsConfig,
) -> Result<EmbeddingMatrix> {
    let total: usize = streams.iter().map(|s| s.as_ref().len()).sum();
    if total == 0 {
        return Err(Error::InvalidInput("token stream is empty".into()));
    }
    if cfg.dim == 0 || cfg.window == 0 {
        return Err(Error::InvalidInput(
            "dimension and window must be positive".into(),
        ));
    }
    if let Some(&bad) = streams
        .iter()
        .flat_map(|s| s.as_ref())
        .find(|&&id| id as usize >= vocab_size)
    {
        return Err(Error::InvalidInput(format!(
            "token id {bad} outside vocabulary"
        )));
    }
    let d = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w: Vec<f64> = (0..vocab_size * d)
        .map(|_| (rng.random::<f64>() - 0.5) / d as f64)
        .collect();
    let mut u = vec![0.0; vocab_size * d];
    let noise = WeightedIndex::new(noise_weights(streams, vocab_size))
        .map_err(|e| Error::InvalidInput(format!("noise distribution: {e}")))?;

    // pairs per epoch, for the learning-rate schedule
    let pairs_per_epoch: usize = streams
        .iter()
        .map(|s| {
            let n = s.as_ref().len();
            (0..n)
                .map(|i| i.min(cfg.window) + (n - 1 - i).min(cfg.window))
                .sum::<usize>()
        })
        .sum();
    let total_steps = (pairs_per_epoch * cfg.epochs).max(1) as f64;
    let min_lr = cfg.learning_rate * 1e-4;

    let mut step = 0usize;
    let mut g_center = vec![0.0; d];
    let mut targets = Vec::with_capacity(cfg.negatives + 1);
    for epoch in 0..cfg.epochs {
        for stream in streams {
            let ids = stream.as_ref();
            for (i, &c) in ids.iter().enumerate() {
                let lo = i.saturating_sub(cfg.window);
                let hi = (i + cfg.window).min(ids.len() - 1);
                for (j, &o) in ids.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    let lr = (cfg.learning_rate * (1.0 - step as f64 / total_steps)).max(min_lr);
                    step += 1;
                    targets.clear();
                    targets.push((o, 1.0));
                    for _ in 0..cfg.negatives {
                        let t = noise.sample(&mut rng) as TokenId;
                        // a negative equal to the true context is skipped
                        if t != o {
                            targets.push((t, 0.0));
                        }
                    }
                    sgd_step(&mut w, &mut u, d, c, &targets, lr, &mut g_center).map_err(|s| {
                        Error::NonFinite {
                            stage: "sgns",
                            step,
                            detail: format!("epoch {epoch}, pair ({c}, {o}), score {s}"),
                        }
                    })?;
                }
            }
        }
    }
    EmbeddingMatrix::new(Method::Sgns, d, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_logistic() {
        assert!((log_sigmoid(0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert!(log_sigmoid(-800.0).is_finite());
        assert_eq!(log_sigmoid(800.0), -0.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_empty_and_out_of_range() {
        let empty: Vec<Vec<u32>> = vec![vec![]];
        assert!(train_sgns(&empty, 3, &SgnsConfig::default()).is_err());
        assert!(train_sgns(&[vec![0u32, 9]], 3, &SgnsConfig::default()).is_err());
    }

    #[test]
    fn seed_determinism() {
        let stream: Vec<u32> = (0..300).map(|i| (i * 5 % 11) as u32).collect();
        let cfg = SgnsConfig {
            dim: 8,
            epochs: 2,
            ..SgnsConfig::default()
        };
        let a = train_sgns(std::slice::from_ref(&stream), 11, &cfg).unwrap();
        let b = train_sgns(std::slice::from_ref(&stream), 11, &cfg).unwrap();
        assert_eq!(a, b);
        let c = train_sgns(&[stream], 11, &SgnsConfig { seed: 7, ..cfg }).unwrap();
        assert_ne!(a, c);
    }
}
