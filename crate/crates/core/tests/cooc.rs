//! Co-occurrence counts against a brute-force double loop in exact rationals.

use std::collections::BTreeMap;

use cmdseer_core::embed::build_cooccurrence;
use num_rational::Ratio;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Exact = BTreeMap<(u32, u32), Ratio<u64>>;

fn oracle(streams: &[Vec<u32>], window: usize) -> Exact {
    let mut m = Exact::new();
    for s in streams {
        for i in 0..s.len() {
            for j in 0..s.len() {
                let dist = i.abs_diff(j);
                if dist == 0 || dist > window {
                    continue;
                }
                *m.entry((s[i], s[j]))
                    .or_insert_with(|| Ratio::from_integer(0)) += Ratio::new(1, dist as u64);
            }
        }
    }
    m
}

fn as_f64(r: &Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn assert_matches(streams: &[Vec<u32>], vocab: usize, window: usize) {
    let got = build_cooccurrence(streams, vocab, window).unwrap();
    let want = oracle(streams, window);
    assert_eq!(got.len(), want.len(), "entry count, window {window}");
    for (e, ((r, c), w)) in got.entries.iter().zip(&want) {
        assert_eq!((e.row, e.col), (*r, *c));
        assert_eq!(e.weight, as_f64(w), "({r}, {c}) window {window}");
    }
}

#[test]
fn hundred_random_streams() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let vocab = rng.random_range(1..=20);
        let n_streams = rng.random_range(1..=3);
        let streams: Vec<Vec<u32>> = (0..n_streams)
            .map(|_| {
                let len = rng.random_range(0..=200);
                (0..len)
                    .map(|_| rng.random_range(0..vocab as u32))
                    .collect()
            })
            .collect();
        let window = rng.random_range(1..=15);
        assert_matches(&streams, vocab, window);
    }
}

proptest! {
    #[test]
    fn matches_oracle(
        streams in prop::collection::vec(prop::collection::vec(0u32..8, 0..40), 1..4),
        window in 1usize..=15,
    ) {
        assert_matches(&streams, 8, window);
    }

    #[test]
    fn symmetric(stream in prop::collection::vec(0u32..6, 0..60), window in 1usize..=15) {
        let m = build_cooccurrence(&[stream], 6, window).unwrap();
        for e in &m.entries {
            prop_assert_eq!(e.weight, m.get(e.col, e.row));
        }
    }
}
