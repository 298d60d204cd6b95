//! Next-token classifier: embedding lookup, two stacked LSTM layers that
//! return their full hidden sequences, flatten, dense projection to the
//! vocabulary and softmax.
//!
//! All parameters live in one flat vector; [`Layout`] records where each
//! block starts. Gradients use the same layout.

mod adam;
pub mod io;
mod lstm;
pub mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::normalize::{TokenId, Vocab};

pub use adam::Adam;
pub use lstm::LayerShape;
pub use train::{
    evaluate, make_training_pairs, train, EpochStats, EvalScores, Example, PairSet, TrainHistory,
};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub context_len: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub dropout: f64,
    /// Adam step size. Defaults to 0.1; 1e-3 is the usual stable choice
    /// for Adam and is what the test-suite uses.
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub embedding_trainable: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            context_len: 5,
            hidden1: 100,
            hidden2: 100,
            dropout: 0.1,
            learning_rate: 0.1,
            batch_size: 1000,
            max_epochs: 20,
            seed: 42,
            embedding_trainable: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if self.context_len == 0 {
            return bad("context length must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1");
        }
        if self.hidden1 == 0 || self.hidden2 == 0 {
            return bad("hidden sizes must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

/// Offsets of every parameter block in the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub vocab_size: usize,
    pub dim: usize,
    pub context_len: usize,
    pub layer1: LayerShape,
    pub layer2: LayerShape,
    pub embedding: usize,
    pub out_w: usize,
    pub out_b: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(vocab_size: usize, dim: usize, context_len: usize, h1: usize, h2: usize) -> Self {
        let embedding = 0;
        let layer1 = LayerShape::new(dim, h1, embedding + vocab_size * dim);
        let layer2 = LayerShape::new(h1, h2, layer1.end());
        let out_w = layer2.end();
        let out_b = out_w + vocab_size * context_len * h2;
        Layout {
            vocab_size,
            dim,
            context_len,
            layer1,
            layer2,
            embedding,
            out_w,
            out_b,
            total: out_b + vocab_size,
        }
    }

    pub fn flat_len(&self) -> usize {
        self.context_len * self.layer2.hidden
    }

    /// Named blocks in storage order.
    pub fn blocks(&self) -> Vec<(&'static str, std::ops::Range<usize>)> {
        vec![
            ("embedding", self.embedding..self.layer1.w_x),
            ("lstm1.w_x", self.layer1.w_x..self.layer1.w_h),
            ("lstm1.w_h", self.layer1.w_h..self.layer1.b),
            ("lstm1.b", self.layer1.b..self.layer1.end()),
            ("lstm2.w_x", self.layer2.w_x..self.layer2.w_h),
            ("lstm2.w_h", self.layer2.w_h..self.layer2.b),
            ("lstm2.b", self.layer2.b..self.layer2.end()),
            ("dense.w", self.out_w..self.out_b),
            ("dense.b", self.out_b..self.total),
        ]
    }
}

/// Inverted-dropout masks for one example: each entry is 0 or `1/(1-p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Masks {
    pub layer1: Vec<f64>,
    pub layer2: Vec<f64>,
}

impl Masks {
    pub fn draw<R: Rng + ?Sized>(layout: &Layout, rate: f64, rng: &mut R) -> Option<Self> {
        if rate == 0.0 {
            return None;
        }
        let keep = 1.0 / (1.0 - rate);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    if rng.random::<f64>() < rate {
                        0.0
                    } else {
                        keep
                    }
                })
                .collect()
        };
        let layer1 = draw(layout.context_len * layout.layer1.hidden);
        let layer2 = draw(layout.context_len * layout.layer2.hidden);
        Some(Masks { layer1, layer2 })
    }
}

pub enum Mode<'a> {
    Infer,
    Train(&'a mut dyn rand::RngCore),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub layout: Layout,
    pub params: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for backprop.
struct Cache {
    inputs: Vec<f64>,
    l1: lstm::SeqCache,
    y1: Vec<f64>,
    l2: lstm::SeqCache,
    flat: Vec<f64>,
    probs: Vec<f64>,
}

impl Model {
    /// Random initialisation. With `embedding`, the embedding block is
    /// copied from it and its width fixes the input dimension.
    pub fn new(
        vocab_size: usize,
        dim: usize,
        config: ModelConfig,
        embedding: Option<&EmbeddingMatrix>,
    ) -> Result<Self> {
        config.validate()?;
        if vocab_size == 0 || dim == 0 {
            return Err(Error::InvalidInput(
                "vocabulary and dimension must be non-empty".into(),
            ));
        }
        if let Some(e) = embedding {
            if e.rows() != vocab_size || e.dim() != dim {
                return Err(Error::DimensionMismatch {
                    what: "embedding matrix vs model",
                    expected: vocab_size * dim,
                    actual: e.rows() * e.dim(),
                });
            }
        }
        let layout = Layout::new(
            vocab_size,
            dim,
            config.context_len,
            config.hidden1,
            config.hidden2,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = vec![0.0; layout.total];
        let mut uniform = |slice: &mut [f64], a: f64| {
            for p in slice.iter_mut() {
                *p = (rng.random::<f64>() * 2.0 - 1.0) * a;
            }
        };
        match embedding {
            Some(e) => params[..vocab_size * dim].copy_from_slice(e.as_slice()),
            None => uniform(&mut params[..vocab_size * dim], 0.05),
        }
        for shape in [layout.layer1, layout.layer2] {
            let a = (6.0 / (shape.input + 4 * shape.hidden) as f64).sqrt();
            uniform(&mut params[shape.w_x..shape.w_h], a);
            let a = (1.0 / shape.hidden as f64).sqrt();
            uniform(&mut params[shape.w_h..shape.b], a);
            // forget gate bias starts at 1
            params[shape.b + shape.hidden..shape.b + 2 * shape.hidden].fill(1.0);
        }
        let a = (6.0 / (layout.flat_len() + vocab_size) as f64).sqrt();
        uniform(&mut params[layout.out_w..layout.out_b], a);
        Ok(Model {
            config,
            layout,
            params,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.layout.vocab_size
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn context_len(&self) -> usize {
        self.layout.context_len
    }

    fn check_context(&self, context: &[TokenId]) -> Result<()> {
        if context.len() != self.layout.context_len {
            return Err(Error::DimensionMismatch {
                what: "context length",
                expected: self.layout.context_len,
                actual: context.len(),
            });
        }
        if let Some(&bad) = context
            .iter()
            .find(|&&id| id as usize >= self.layout.vocab_size)
        {
            return Err(Error::InvalidInput(format!(
                "token id {bad} outside vocabulary"
            )));
        }
        Ok(())
    }

    fn forward_cached(&self, context: &[TokenId], masks: Option<&Masks>) -> Cache {
        let lay = &self.layout;
        let (d, l) = (lay.dim, lay.context_len);
        let mut inputs = Vec::with_capacity(l * d);
        for &id in context {
            let s = lay.embedding + id as usize * d;
            inputs.extend_from_slice(&self.params[s..s + d]);
        }
        let l1 = lstm::forward(&lay.layer1, &self.params, &inputs, l);
        let mut y1 = l1.h.clone();
        if let Some(m) = masks {
            y1.iter_mut().zip(&m.layer1).for_each(|(y, k)| *y *= k);
        }
        let l2 = lstm::forward(&lay.layer2, &self.params, &y1, l);
        let mut flat = l2.h.clone();
        if let Some(m) = masks {
            flat.iter_mut().zip(&m.layer2).for_each(|(y, k)| *y *= k);
        }
        let n = flat.len();
        let w = &self.params[lay.out_w..lay.out_b];
        let b = &self.params[lay.out_b..lay.total];
        let mut logits: Vec<f64> = (0..lay.vocab_size)
            .map(|v| {
                let row = &w[v * n..(v + 1) * n];
                b[v] + row.iter().zip(&flat).map(|(a, x)| a * x).sum::<f64>()
            })
            .collect();
        softmax_in_place(&mut logits);
        Cache {
            inputs,
            l1,
            y1,
            l2,
            flat,
            probs: logits,
        }
    }

    /// Probability vector over the vocabulary. Dropout is applied only in
    /// train mode.
    pub fn forward(&self, context: &[TokenId], mode: Mode<'_>) -> Result<Vec<f64>> {
        self.check_context(context)?;
        let masks = match mode {
            Mode::Infer => None,
            Mode::Train(rng) => Masks::draw(&self.layout, self.config.dropout, rng),
        };
        Ok(self.forward_cached(context, masks.as_ref()).probs)
    }

    /// Cross-entropy `-ln p[target]` for one example.
    pub fn loss(&self, context: &[TokenId], target: TokenId, masks: Option<&Masks>) -> f64 {
        let probs = self.forward_cached(context, masks).probs;
        -probs[target as usize].ln()
    }

    /// Adds the gradient of `-ln p[target]` into `grad` and returns the loss.
    pub fn accumulate_gradient(
        &self,
        context: &[TokenId],
        target: TokenId,
        masks: Option<&Masks>,
        grad: &mut [f64],
    ) -> f64 {
        let lay = &self.layout;
        let cache = self.forward_cached(context, masks);
        let loss = -cache.probs[target as usize].ln();

        let n = cache.flat.len();
        let mut dlogits = cache.probs;
        dlogits[target as usize] -= 1.0;
        let mut dflat = vec![0.0; n];
        {
            let w = &self.params[lay.out_w..lay.out_b];
            let (gw, gb) = grad[lay.out_w..lay.total].split_at_mut(n * lay.vocab_size);
            for (v, &dz) in dlogits.iter().enumerate() {
                gb[v] += dz;
                let row = &w[v * n..(v + 1) * n];
                let grow = &mut gw[v * n..(v + 1) * n];
                for k in 0..n {
                    grow[k] += dz * cache.flat[k];
                    dflat[k] += dz * row[k];
                }
            }
        }
        if let Some(m) = masks {
            dflat.iter_mut().zip(&m.layer2).for_each(|(g, k)| *g *= k);
        }
        let mut dy1 = lstm::backward(
            &lay.layer2,
            &self.params,
            &cache.y1,
            &cache.l2,
            &dflat,
            grad,
        );
        if let Some(m) = masks {
            dy1.iter_mut().zip(&m.layer1).for_each(|(g, k)| *g *= k);
        }
        let dx = lstm::backward(
            &lay.layer1,
            &self.params,
            &cache.inputs,
            &cache.l1,
            &dy1,
            grad,
        );
        let d = lay.dim;
        for (t, &id) in context.iter().enumerate() {
            let s = lay.embedding + id as usize * d;
            for k in 0..d {
                grad[s + k] += dx[t * d + k];
            }
        }
        loss
    }

    /// Top `k` tokens by probability, ties ordered by token text. With
    /// `restrict_to_commands` only command tokens are ranked and their
    /// probabilities renormalised. A short context is left-padded with the
    /// most frequent token and the result is flagged.
    pub fn predict_top_k(
        &self,
        vocab: &Vocab,
        context: &[TokenId],
        k: usize,
        restrict_to_commands: bool,
    ) -> Result<Prediction> {
        if k == 0 {
            return Err(Error::InvalidInput("k must be >= 1".into()));
        }
        if vocab.len() != self.vocab_size() {
            return Err(Error::DimensionMismatch {
                what: "vocabulary vs model",
                expected: self.vocab_size(),
                actual: vocab.len(),
            });
        }
        let l = self.context_len();
        let padded = context.len() < l;
        let mut window: Vec<TokenId> = vec![vocab.most_frequent(); l.saturating_sub(context.len())];
        window.extend_from_slice(&context[context.len().saturating_sub(l)..]);
        let probs = self.forward(&window, Mode::Infer)?;
        let mut ranked: Vec<(TokenId, f64)> = (0..self.vocab_size() as TokenId)
            .filter(|&id| !restrict_to_commands || vocab.is_command(id))
            .map(|id| (id, probs[id as usize]))
            .collect();
        if restrict_to_commands {
            let mass: f64 = ranked.iter().map(|(_, p)| p).sum();
            if mass > 0.0 {
                ranked.iter_mut().for_each(|(_, p)| *p /= mass);
            }
        }
        ranked.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| vocab.token(a.0).cmp(vocab.token(b.0)))
        });
        ranked.truncate(k);
        Ok(Prediction {
            suggestions: ranked,
            padded,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub suggestions: Vec<(TokenId, f64)>,
    /// The context was shorter than the model's window.
    pub padded: bool,
}

pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in z.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in z.iter_mut() {
        *x /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(v: usize) -> Model {
        let cfg = ModelConfig {
            context_len: 2,
            hidden1: 3,
            hidden2: 3,
            ..ModelConfig::default()
        };
        Model::new(v, 4, cfg, None).unwrap()
    }

    fn uniform_vocab(v: usize) -> Vocab {
        Vocab::from_counts((0..v).map(|i| (format!("t{i:02}"), 1, i % 2 == 0))).unwrap()
    }

    #[test]
    fn layout_is_contiguous() {
        let m = tiny(10);
        let blocks = m.layout.blocks();
        assert_eq!(blocks[0].1.start, 0);
        for pair in blocks.windows(2) {
            assert_eq!(pair[0].1.end, pair[1].1.start);
        }
        assert_eq!(blocks.last().unwrap().1.end, m.params.len());
        // 4*3*(4+3+1) + 4*3*(3+3+1) + 10*4 + 10*2*3 + 10
        assert_eq!(m.params.len(), 96 + 84 + 40 + 60 + 10);
    }

    #[test]
    fn zero_weights_give_uniform_output() {
        let mut m = tiny(10);
        m.params.fill(0.0);
        let p = m.forward(&[1, 2], Mode::Infer).unwrap();
        assert!(p.iter().all(|&x| (x - 0.1).abs() < 1e-15));
    }

    #[test]
    fn context_validation() {
        let m = tiny(10);
        assert!(m.forward(&[1], Mode::Infer).is_err());
        assert!(m.forward(&[1, 10], Mode::Infer).is_err());
    }

    #[test]
    fn uniform_prediction_ties_are_lexicographic() {
        let mut m = tiny(10);
        m.params.fill(0.0);
        let vocab = uniform_vocab(10);
        let p = m.predict_top_k(&vocab, &[1, 2], 3, false).unwrap();
        let names: Vec<_> = p
            .suggestions
            .iter()
            .map(|(id, _)| vocab.token(*id))
            .collect();
        assert_eq!(names, ["t00", "t01", "t02"]);
        assert!(p.suggestions.iter().all(|(_, q)| (q - 0.1).abs() < 1e-15));
        assert!(!p.padded);

        let r = m.predict_top_k(&vocab, &[3], 2, true).unwrap();
        assert!(r.padded);
        assert!(r
            .suggestions
            .iter()
            .all(|(id, q)| vocab.is_command(*id) && (q - 0.2).abs() < 1e-12));
    }

    #[test]
    fn restriction_to_full_vocab_is_identity() {
        let m = tiny(6);
        let vocab = Vocab::from_counts((0..6).map(|i| (format!("c{i}"), 1, true))).unwrap();
        let a = m.predict_top_k(&vocab, &[0, 5], 6, false).unwrap();
        let b = m.predict_top_k(&vocab, &[0, 5], 6, true).unwrap();
        for (x, y) in a.suggestions.iter().zip(&b.suggestions) {
            assert_eq!(x.0, y.0);
            assert!((x.1 - y.1).abs() < 1e-15);
        }
        assert!(a.suggestions.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    #[test]
    fn config_validation() {
        let bad = ModelConfig {
            dropout: 1.0,
            ..ModelConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = ModelConfig {
            context_len: 0,
            ..ModelConfig::default()
        };
        assert!(Model::new(5, 2, bad, None).is_err());
    }
}
