//! Analytic gradients against central finite differences.

use cmdseer_core::embed::glove::{glove_gradient, glove_objective, kb_gradient, kb_objective};
use cmdseer_core::embed::sgns::{sgd_step, term_gradient};
use cmdseer_core::embed::{build_cooccurrence, GloveConfig, GloveTrainState, JointConfig, KbEdge};
use cmdseer_core::model::{Masks, Model, ModelConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-7)
}

/// Largest relative error over every coordinate of `x`.
fn check(x: &mut [f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    assert_eq!(x.len(), analytic.len());
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + EPS;
        let up = f(x);
        x[i] = orig - EPS;
        let down = f(x);
        x[i] = orig;
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * EPS)));
    }
    worst
}

fn glove_setup() -> (
    GloveTrainState,
    cmdseer_core::embed::CoocMatrix,
    GloveConfig,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let stream: Vec<u32> = (0..120).map(|_| rng.random_range(0..6)).collect();
    let cooc = build_cooccurrence(&[stream], 6, 3).unwrap();
    let cfg = GloveConfig {
        dim: 3,
        // small x_max so both branches of the weighting function are hit
        x_max: 4.0,
        ..GloveConfig::default()
    };
    let mut state = GloveTrainState::init(6, 3, &mut rng);
    for v in [
        &mut state.w,
        &mut state.w_ctx,
        &mut state.b,
        &mut state.b_ctx,
    ] {
        v.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
    }
    (state, cooc, cfg)
}

#[test]
fn glove_objective_gradient() {
    let (state, cooc, cfg) = glove_setup();
    let grad = glove_gradient(&state, &cooc, &cfg);
    type Field = fn(&mut GloveTrainState) -> &mut Vec<f64>;
    let fields: [(Field, &Vec<f64>); 4] = [
        (|s| &mut s.w, &grad.w),
        (|s| &mut s.w_ctx, &grad.w_ctx),
        (|s| &mut s.b, &grad.b),
        (|s| &mut s.b_ctx, &grad.b_ctx),
    ];
    for (field, analytic) in fields {
        let mut probe = state.clone();
        let mut x = field(&mut probe).clone();
        let err = check(&mut x, analytic, |x| {
            let mut s = state.clone();
            field(&mut s).copy_from_slice(x);
            glove_objective(&s, &cooc, &cfg)
        });
        assert!(err < 1e-4, "relative error {err}");
    }
}

#[test]
fn joint_regularizer_gradient() {
    let (state, _, _) = glove_setup();
    let edges = vec![
        KbEdge {
            a: 0,
            b: 1,
            score: 0.9,
        },
        KbEdge {
            a: 1,
            b: 4,
            score: 0.3,
        },
        KbEdge {
            a: 2,
            b: 5,
            score: 0.5,
        },
    ];
    for by_score in [false, true] {
        let mut joint = JointConfig::new(0.7, edges.clone()).unwrap();
        joint.weight_by_score = by_score;
        let analytic = kb_gradient(&state, &joint);
        let mut x = state.w.clone();
        let err = check(&mut x, &analytic, |x| {
            let mut s = state.clone();
            s.w.copy_from_slice(x);
            kb_objective(&s, &joint)
        });
        assert!(
            err < 1e-4,
            "relative error {err} (weight_by_score {by_score})"
        );
    }
}

#[test]
fn sgns_term_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d = 4;
    let mut draw = || -> Vec<f64> { (0..d).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let center = draw();
    let context = draw();
    let negs: Vec<Vec<f64>> = (0..3).map(|_| draw()).collect();
    let loss = |c: &[f64], o: &[f64], n: &[Vec<f64>]| {
        let refs: Vec<&[f64]> = n.iter().map(Vec::as_slice).collect();
        term_gradient(c, o, &refs).loss
    };
    let refs: Vec<&[f64]> = negs.iter().map(Vec::as_slice).collect();
    let g = term_gradient(&center, &context, &refs);

    let err = check(&mut center.clone(), &g.center, |x| loss(x, &context, &negs));
    assert!(err < 1e-4, "center: {err}");
    let err = check(&mut context.clone(), &g.context, |x| {
        loss(&center, x, &negs)
    });
    assert!(err < 1e-4, "context: {err}");
    for i in 0..negs.len() {
        let err = check(&mut negs[i].clone(), &g.negatives[i], |x| {
            let mut n = negs.clone();
            n[i] = x.to_vec();
            loss(&center, &context, &n)
        });
        assert!(err < 1e-4, "negative {i}: {err}");
    }
}

#[test]
fn sgd_step_moves_along_term_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (v, d, lr) = (6, 3, 0.05);
    let w: Vec<f64> = (0..v * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let u: Vec<f64> = (0..v * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let row = |m: &[f64], i: usize| m[i * d..(i + 1) * d].to_vec();
    let (center, ctx, negs) = (1usize, 4usize, [0usize, 5]);
    let g = term_gradient(
        &row(&w, center),
        &row(&u, ctx),
        &[&row(&u, negs[0])[..], &row(&u, negs[1])[..]],
    );
    let (mut w2, mut u2) = (w.clone(), u.clone());
    let targets = [
        (ctx as u32, 1.0),
        (negs[0] as u32, 0.0),
        (negs[1] as u32, 0.0),
    ];
    sgd_step(
        &mut w2,
        &mut u2,
        d,
        center as u32,
        &targets,
        lr,
        &mut vec![0.0; d],
    )
    .unwrap();
    let close = |a: Vec<f64>, b: Vec<f64>, g: &[f64]| {
        a.iter()
            .zip(&b)
            .zip(g)
            .all(|((x, y), g)| (y - (x - lr * g)).abs() < 1e-14)
    };
    assert!(close(row(&w, center), row(&w2, center), &g.center));
    assert!(close(row(&u, ctx), row(&u2, ctx), &g.context));
    assert!(close(row(&u, negs[0]), row(&u2, negs[0]), &g.negatives[0]));
    assert!(close(row(&u, negs[1]), row(&u2, negs[1]), &g.negatives[1]));
}

fn lstm_check(dropout: f64) -> f64 {
    let cfg = ModelConfig {
        context_len: 3,
        hidden1: 3,
        hidden2: 3,
        dropout,
        ..ModelConfig::default()
    };
    let mut model = Model::new(7, 4, cfg, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    model
        .params
        .iter_mut()
        .for_each(|p| *p = rng.random_range(-0.8..0.8));
    let masks = Masks::draw(&model.layout, dropout, &mut rng);
    let (context, target) = ([2u32, 6, 2], 5u32);
    let mut grad = vec![0.0; model.params.len()];
    model.accumulate_gradient(&context, target, masks.as_ref(), &mut grad);
    let mut x = model.params.clone();
    let mut probe = model.clone();
    check(&mut x, &grad, |x| {
        probe.params.copy_from_slice(x);
        probe.loss(&context, target, masks.as_ref())
    })
}

#[test]
fn lstm_loss_gradient() {
    let err = lstm_check(0.0);
    assert!(err < 1e-3, "relative error {err}");
}

#[test]
fn lstm_loss_gradient_with_dropout_masks() {
    let err = lstm_check(0.3);
    assert!(err < 1e-3, "relative error {err}");
}
