use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::normalize::TokenId;

/// Largest supported window: lcm(1..=40) still fits the 53-bit mantissa,
/// so every weight is an exactly representable fraction before the final
/// division.
pub const MAX_WINDOW: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoocEntry {
    pub row: TokenId,
    pub col: TokenId,
    pub weight: f64,
}

/// Sparse symmetric co-occurrence counts, entries sorted by `(row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoocMatrix {
    pub vocab_size: usize,
    pub window: usize,
    pub entries: Vec<CoocEntry>,
}

impl CoocMatrix {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, row: TokenId, col: TokenId) -> f64 {
        self.entries
            .binary_search_by(|e| (e.row, e.col).cmp(&(row, col)))
            .map(|i| self.entries[i].weight)
            .unwrap_or(0.0)
    }
}

fn lcm_upto(n: usize) -> u64 {
    fn gcd(a: u64, b: u64) -> u64 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }
    (1..=n as u64).fold(1, |acc, k| acc / gcd(acc, k) * k)
}

/// Counts every pair of tokens at distance `1..=window` inside the same
/// stream, adding `1/distance` to both `X[a][b]` and `X[b][a]`.
///
/// Weights are accumulated as integer multiples of `1/lcm(1..=window)`, so
/// the result does not depend on summation order or on how streams are
/// sharded across threads.
pub fn build_cooccurrence<S>(streams: &[S], vocab_size: usize, window: usize) -> Result<CoocMatrix>
where
    S: AsRef<[TokenId]> + Sync,
{
    if window == 0 || window > MAX_WINDOW {
        return Err(Error::InvalidInput(format!(
            "window must be in 1..={MAX_WINDOW}, got {window}"
        )));
    }
    let unit = lcm_upto(window);
    let shards: Vec<HashMap<(TokenId, TokenId), u128>> = streams
        .par_iter()
        .map(|stream| {
            let ids = stream.as_ref();
            let mut counts = HashMap::new();
            for (i, &center) in ids.iter().enumerate() {
                for (delta, &context) in ids[i + 1..].iter().take(window).enumerate() {
                    let units = (unit / (delta as u64 + 1)) as u128;
                    *counts.entry((center, context)).or_insert(0) += units;
                    *counts.entry((context, center)).or_insert(0) += units;
                }
            }
            counts
        })
        .collect();
    let mut merged: HashMap<(TokenId, TokenId), u128> = HashMap::new();
    for shard in shards {
        for (key, units) in shard {
            *merged.entry(key).or_insert(0) += units;
        }
    }
    let mut entries: Vec<CoocEntry> = merged
        .into_iter()
        .map(|((row, col), units)| {
            if row as usize >= vocab_size || col as usize >= vocab_size {
                return Err(Error::InvalidInput(format!(
                    "token id {} outside vocabulary of size {vocab_size}",
                    row.max(col)
                )));
            }
            Ok(CoocEntry {
                row,
                col,
                weight: units as f64 / unit as f64,
            })
        })
        .collect::<Result<_>>()?;
    entries.sort_by_key(|e| (e.row, e.col));
    Ok(CoocMatrix {
        vocab_size,
        window,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aba_window_one() {
        let m = build_cooccurrence(&[vec![0u32, 1, 0]], 2, 1).unwrap();
        assert_eq!(m.get(0, 1), 2.0);
        assert_eq!(m.get(1, 0), 2.0);
        assert_eq!(m.get(0, 0), 0.0);
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn distance_weighting() {
        let m = build_cooccurrence(&[vec![0u32, 1, 2]], 3, 2).unwrap();
        assert_eq!(m.get(0, 2), 0.5);
        assert_eq!(m.get(2, 0), 0.5);
        assert_eq!(m.get(0, 1), 1.0);
    }

    #[test]
    fn degenerate_streams() {
        let empty: Vec<Vec<u32>> = vec![vec![]];
        assert!(build_cooccurrence(&empty, 3, 15).unwrap().is_empty());
        assert!(build_cooccurrence(&[vec![2u32]], 3, 15).unwrap().is_empty());
        assert!(build_cooccurrence(&[vec![0u32, 1]], 3, 0).is_err());
    }

    #[test]
    fn streams_do_not_mix() {
        let m = build_cooccurrence(&[vec![0u32], vec![1u32]], 2, 15).unwrap();
        assert!(m.is_empty());
    }

    #[test]
    fn lcm_values() {
        assert_eq!(lcm_upto(1), 1);
        assert_eq!(lcm_upto(15), 360_360);
        assert!(lcm_upto(MAX_WINDOW) < 1 << 53);
    }
}
