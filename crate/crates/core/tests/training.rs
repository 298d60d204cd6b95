//! Behavioural checks of the trainers.

use std::collections::{BTreeMap, HashSet};

use cmdseer_core::embed::{
    build_cooccurrence, train_glove, train_joint, train_sgns, GloveConfig, JointConfig, KbEdge,
    SgnsConfig,
};
use cmdseer_core::model::{self, evaluate, make_training_pairs, Adam, Example, Model, ModelConfig};
use cmdseer_core::normalize::{self, TokenStream, Vocab};
use cmdseer_core::repl::ReplState;
use cmdseer_core::trace::parse_trace_str;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A 50-token cycle over 12 symbols whose 4-token windows are all distinct,
/// so every next token is determined by its context.
fn cycle() -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    loop {
        let c: Vec<u32> = (0..50).map(|_| rng.random_range(0..12)).collect();
        let windows: HashSet<Vec<u32>> = (0..50)
            .map(|i| (0..4).map(|k| c[(i + k) % 50]).collect())
            .collect();
        if windows.len() == 50 {
            return c;
        }
    }
}

fn stream(ids: Vec<u32>) -> TokenStream {
    TokenStream {
        user_id: "u".into(),
        line_starts: (0..ids.len()).collect(),
        ids,
    }
}

#[test]
fn memorizes_repeating_sequence() {
    let c = cycle();
    let ids: Vec<u32> = c.iter().cycle().take(200).copied().collect();
    let pairs = make_training_pairs(&[stream(ids)], 4).examples;
    let cfg = ModelConfig {
        context_len: 4,
        hidden1: 24,
        hidden2: 24,
        dropout: 0.0,
        learning_rate: 1e-3,
        batch_size: 16,
        max_epochs: 500,
        ..ModelConfig::default()
    };
    let m = Model::new(12, 8, cfg, None).unwrap();
    let (m, history) = model::train(m, &pairs, &pairs).unwrap();
    let first = history
        .epochs
        .iter()
        .find(|e| e.val_accuracy >= 0.99)
        .map(|e| e.epoch);
    assert!(
        first.is_some(),
        "best accuracy {:?}",
        history
            .epochs
            .iter()
            .map(|e| e.val_accuracy)
            .fold(0.0, f64::max)
    );
    let acc = evaluate(&m, &pairs).unwrap().accuracy();
    assert!(acc >= 0.99, "accuracy {acc}");
}

#[test]
fn adam_step_lowers_loss() {
    let mut decreased = 0;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(trial);
        let cfg = ModelConfig {
            context_len: 3,
            hidden1: 5,
            hidden2: 4,
            dropout: 0.0,
            seed: trial,
            ..ModelConfig::default()
        };
        let mut m = Model::new(8, 4, cfg, None).unwrap();
        let ex: Vec<Example> = (0..6)
            .map(|_| Example {
                context: (0..3).map(|_| rng.random_range(0..8)).collect(),
                target: rng.random_range(0..8),
                line_start: false,
            })
            .collect();
        let loss = |m: &Model| evaluate(m, &ex).unwrap().loss;
        let before = loss(&m);
        let mut grad = vec![0.0; m.params.len()];
        for e in &ex {
            m.accumulate_gradient(&e.context, e.target, None, &mut grad);
        }
        grad.iter_mut().for_each(|g| *g /= ex.len() as f64);
        Adam::new(m.params.len(), 1e-4).step(&mut m.params, &grad, None);
        if loss(&m) < before {
            decreased += 1;
        }
    }
    assert!(decreased >= 99, "{decreased}/100");
}

#[test]
fn training_is_deterministic_and_respects_frozen_embeddings() {
    let ids: Vec<u32> = cycle().into_iter().cycle().take(120).collect();
    let pairs = make_training_pairs(&[stream(ids)], 3).examples;
    let cfg = ModelConfig {
        context_len: 3,
        hidden1: 6,
        hidden2: 6,
        batch_size: 7,
        max_epochs: 2,
        learning_rate: 1e-2,
        ..ModelConfig::default()
    };
    let run = |cfg: ModelConfig| {
        model::train(Model::new(12, 4, cfg, None).unwrap(), &pairs, &[]).unwrap()
    };
    let (a, ha) = run(cfg.clone());
    let (b, hb) = run(cfg.clone());
    assert_eq!(a.params, b.params);
    assert_eq!(ha, hb);

    let frozen = ModelConfig {
        embedding_trainable: false,
        ..cfg
    };
    let init = Model::new(12, 4, frozen.clone(), None).unwrap();
    let (c, _) = run(frozen);
    let emb = c.layout.embedding..c.layout.layer1.w_x;
    assert_eq!(c.params[emb.clone()], init.params[emb]);
    assert_ne!(c.params, init.params);
}

fn mean_pair_cosine(e: &cmdseer_core::embed::EmbeddingMatrix, edges: &[KbEdge]) -> f64 {
    edges.iter().map(|p| e.cosine(p.a, p.b)).sum::<f64>() / edges.len() as f64
}

#[test]
fn knowledge_base_pulls_pairs_together() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let streams: Vec<Vec<u32>> = (0..4)
        .map(|_| (0..800).map(|_| rng.random_range(0..30)).collect())
        .collect();
    let cooc = build_cooccurrence(&streams, 30, 15).unwrap();
    let edges: Vec<KbEdge> = (0..10)
        .map(|i| KbEdge {
            a: 2 * i,
            b: 2 * i + 1,
            score: 0.5,
        })
        .collect();
    let cfg = GloveConfig {
        dim: 10,
        epochs: 30,
        ..GloveConfig::default()
    };
    let joint = train_joint(&cooc, &JointConfig::new(1.0, edges.clone()).unwrap(), &cfg).unwrap();
    let zero = train_joint(&cooc, &JointConfig::new(0.0, edges.clone()).unwrap(), &cfg).unwrap();
    let glove = train_glove(&cooc, &cfg).unwrap();
    assert_eq!(zero.as_slice(), glove.as_slice());
    assert!(mean_pair_cosine(&joint, &edges) > mean_pair_cosine(&zero, &edges));
}

#[test]
fn sgns_groups_tokens_with_shared_contexts() {
    // 0 and 1 are always followed by 2..5, while 6 and 7 are followed by 8..11
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut s = Vec::new();
    for _ in 0..1500 {
        let g = rng.random_range(0..2u32);
        s.push(6 * g + rng.random_range(0..2));
        s.push(6 * g + 2 + rng.random_range(0..4));
    }
    let cfg = SgnsConfig {
        dim: 10,
        window: 1,
        epochs: 3,
        ..SgnsConfig::default()
    };
    let e = train_sgns(&[s], 12, &cfg).unwrap();
    assert!(e.cosine(0, 1) > e.cosine(0, 6));
    assert!(e.cosine(6, 7) > e.cosine(1, 7));
}

#[test]
fn repl_and_preprocessing_share_normalization() {
    let text = "A ll=ls -l\nC ll docs\nC cd src\nC vi -R main.c\nC grep -n foo bar.c\n";
    let trace = parse_trace_str(text, "u").unwrap();
    let (norm, _) = normalize::normalize_all(std::slice::from_ref(&trace));
    let vocab = normalize::build_vocab(&norm).unwrap();
    let streams = normalize::encode(&norm, &vocab).unwrap();

    let cfg = ModelConfig {
        context_len: 50,
        hidden1: 2,
        hidden2: 2,
        ..ModelConfig::default()
    };
    let m = Model::new(vocab.len(), 2, cfg, None).unwrap();
    let aliases: BTreeMap<String, String> = trace.aliases.clone();
    let mut state = ReplState::new(m, Vocab::clone(&vocab), aliases, 3).unwrap();
    for cmd in trace.commands() {
        let (_, oov) = state.encode_line(&cmd.payload);
        assert!(oov.is_empty());
        state.step(&cmd.payload).unwrap();
    }
    assert_eq!(state.context(), streams[0].ids);
}
