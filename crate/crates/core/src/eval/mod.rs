//! Experiment protocol: chronological hold-out, contiguous k-fold cross
//! validation, optimal-epoch selection, batch-size grids and the
//! most-recent / most-frequent command baselines.

mod report;

use std::collections::BTreeMap;
use std::ops::Range;

use rayon::prelude::*;

use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::model::{self, evaluate, EvalScores, Example, Model, ModelConfig, TrainHistory};

pub use report::{EvalReport, EvalRow, MaxLine, Metric};

pub const DEFAULT_HOLDOUT: f64 = 0.9;
pub const DEFAULT_FOLDS: [usize; 2] = [10, 5];
pub const DEFAULT_BATCH_SIZES: [usize; 7] = [300, 500, 1000, 2000, 3000, 4000, 5000];

/// Number of leading items that go to training: `floor(ratio * n)`,
/// clamped so both sides are non-empty.
pub fn holdout_len(n: usize, ratio: f64) -> Result<usize> {
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "hold-out split needs at least 2 examples, got {n}"
        )));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidInput(format!(
            "hold-out ratio {ratio} not in (0, 1)"
        )));
    }
    Ok(((ratio * n as f64).floor() as usize).clamp(1, n - 1))
}

/// Chronological split: the first part trains, the rest tests.
pub fn holdout_split<T>(items: &[T], ratio: f64) -> Result<(&[T], &[T])> {
    Ok(items.split_at(holdout_len(items.len(), ratio)?))
}

/// Contiguous, seedless fold assignment over `n` items. The first `n % k`
/// folds are one item larger.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FoldSpec {
    pub n: usize,
    pub k: usize,
}

impl FoldSpec {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 folds, got {k}"
            )));
        }
        if n < k {
            return Err(Error::InvalidInput(format!(
                "{k}-fold split needs at least {k} examples, got {n}"
            )));
        }
        Ok(FoldSpec { n, k })
    }

    /// Validation ranges in order.
    pub fn folds(&self) -> Vec<Range<usize>> {
        let (base, extra) = (self.n / self.k, self.n % self.k);
        let mut start = 0;
        (0..self.k)
            .map(|i| {
                let len = base + usize::from(i < extra);
                let r = start..start + len;
                start += len;
                r
            })
            .collect()
    }
}

/// `(train, validation)` for every fold; training is everything outside the
/// validation block, order preserved.
pub fn kfold_split<T: Clone>(items: &[T], k: usize) -> Result<Vec<(Vec<T>, Vec<T>)>> {
    let spec = FoldSpec::new(items.len(), k)?;
    Ok(spec
        .folds()
        .into_iter()
        .map(|r| {
            let mut train = items[..r.start].to_vec();
            train.extend_from_slice(&items[r.end..]);
            (train, items[r].to_vec())
        })
        .collect())
}

/// Per-fold results and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct CvResult<S> {
    pub folds: Vec<S>,
}

impl<S> CvResult<S> {
    pub fn mean_by(&self, f: impl Fn(&S) -> f64) -> f64 {
        self.folds.iter().map(f).sum::<f64>() / self.folds.len() as f64
    }
}

/// Runs `job` on every fold (in parallel) and collects results in fold order.
pub fn cross_validate<T, S, F>(items: &[T], k: usize, job: F) -> Result<CvResult<S>>
where
    T: Clone + Sync,
    S: Send,
    F: Fn(&[T], &[T]) -> Result<S> + Sync,
{
    let spec = FoldSpec::new(items.len(), k)?;
    let folds = spec
        .folds()
        .into_par_iter()
        .map(|r| {
            let mut train = items[..r.start].to_vec();
            train.extend_from_slice(&items[r.end..]);
            job(&train, &items[r])
        })
        .collect::<Result<Vec<S>>>()?;
    Ok(CvResult { folds })
}

/// 1-based epoch with the lowest validation loss, earliest on ties.
pub fn select_optimal_epoch(history: &TrainHistory) -> Result<usize> {
    let losses = history.val_losses();
    if losses.is_empty() {
        return Err(Error::InvalidInput("empty training history".into()));
    }
    let mut best = 0;
    for (i, &l) in losses.iter().enumerate() {
        if l < losses[best] {
            best = i;
        }
    }
    Ok(best + 1)
}

/// Hit counts of a baseline predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BaselineScore {
    pub correct: usize,
    pub scored: usize,
}

impl BaselineScore {
    pub fn accuracy(&self) -> f64 {
        if self.scored == 0 {
            0.0
        } else {
            self.correct as f64 / self.scored as f64
        }
    }

    fn add(&mut self, hit: bool) {
        self.scored += 1;
        self.correct += usize::from(hit);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Baseline {
    MostRecent,
    MostFrequent,
}

impl Baseline {
    pub fn tag(self) -> &'static str {
        match self {
            Baseline::MostRecent => "MRC",
            Baseline::MostFrequent => "MFC",
        }
    }

    /// Whether each position from the second on is predicted correctly.
    pub fn hits<T: Ord + Clone>(self, stream: &[T]) -> Vec<bool> {
        match self {
            Baseline::MostRecent => stream.windows(2).map(|w| w[0] == w[1]).collect(),
            Baseline::MostFrequent => {
                let mut counts: BTreeMap<&T, usize> = BTreeMap::new();
                let mut best: Option<(&T, usize)> = None;
                let mut hits = Vec::with_capacity(stream.len().saturating_sub(1));
                for (t, tok) in stream.iter().enumerate() {
                    if t > 0 {
                        hits.push(best.is_some_and(|(b, _)| b == tok));
                    }
                    let c = counts.entry(tok).or_insert(0);
                    *c += 1;
                    let c = *c;
                    // higher count wins; equal count goes to the smaller token
                    best = match best {
                        Some((b, bc)) if bc > c || (bc == c && b <= tok) => Some((b, bc)),
                        _ => Some((tok, c)),
                    };
                }
                hits
            }
        }
    }

    pub fn score<T: Ord + Clone>(self, stream: &[T]) -> Result<BaselineScore> {
        if stream.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "{} baseline needs a stream of at least 2 commands, got {}",
                self.tag(),
                stream.len()
            )));
        }
        let mut s = BaselineScore::default();
        self.hits(stream).into_iter().for_each(|h| s.add(h));
        Ok(s)
    }
}

pub fn baseline_mrc<T: Ord + Clone>(stream: &[T]) -> Result<f64> {
    Ok(Baseline::MostRecent.score(stream)?.accuracy())
}

pub fn baseline_mfc<T: Ord + Clone>(stream: &[T]) -> Result<f64> {
    Ok(Baseline::MostFrequent.score(stream)?.accuracy())
}

/// Baseline report over per-user command-name streams. Each user's stream
/// is predicted online; the scored positions of all users, concatenated in
/// order, are then split exactly like the model's examples: the
/// chronological tail for the test column and contiguous folds for the CV
/// columns.
pub fn baseline_report<T: Ord + Clone>(
    baseline: Baseline,
    streams: &[Vec<T>],
    holdout: f64,
    folds: &[usize],
) -> Result<EvalReport> {
    let hits: Vec<bool> = streams.iter().flat_map(|s| baseline.hits(s)).collect();
    let acc = |h: &[bool]| h.iter().filter(|&&x| x).count() as f64 / h.len() as f64;
    let (_, test) = holdout_split(&hits, holdout)?;
    let mut row = EvalRow::new(None, None, 100.0 * acc(test));
    for &k in folds {
        let spec = FoldSpec::new(hits.len(), k)?;
        let mean = spec.folds().into_iter().map(|r| acc(&hits[r])).sum::<f64>() / k as f64;
        row.cv.push((k, 100.0 * mean));
    }
    Ok(EvalReport::new(baseline.tag(), Metric::Command, vec![row]))
}

/// Data shared by every row of a grid.
#[derive(Debug, Clone, Copy)]
pub struct GridData<'a> {
    /// Training pairs in corpus order.
    pub examples: &'a [Example],
    pub vocab_size: usize,
    pub dim: usize,
    /// Pretrained input embeddings; random initialisation when absent.
    pub embedding: Option<&'a EmbeddingMatrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub batch_sizes: Vec<usize>,
    pub folds: Vec<usize>,
    pub holdout: f64,
    /// Share of the training split used to fit during epoch selection; the
    /// rest is the validation curve.
    pub validation_split: f64,
    /// Model settings; `max_epochs` is the cap for epoch selection.
    pub model: ModelConfig,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            batch_sizes: DEFAULT_BATCH_SIZES.to_vec(),
            folds: DEFAULT_FOLDS.to_vec(),
            holdout: DEFAULT_HOLDOUT,
            validation_split: DEFAULT_HOLDOUT,
            model: ModelConfig::default(),
        }
    }
}

/// Token-level and command-level reports produced by one grid run.
#[derive(Debug, Clone, PartialEq)]
pub struct GridReports {
    pub token: EvalReport,
    pub command: EvalReport,
}

fn fit(
    data: &GridData<'_>,
    cfg: ModelConfig,
    train: &[Example],
    val: &[Example],
) -> Result<(Model, TrainHistory)> {
    let m = Model::new(data.vocab_size, data.dim, cfg, data.embedding)?;
    model::train(m, train, val)
}

/// Scores of one batch size: (optimal epoch, test scores, per-k fold scores).
type RowScores = (usize, EvalScores, Vec<(usize, Vec<EvalScores>)>);

fn run_row(
    data: &GridData<'_>,
    cfg: &GridConfig,
    batch_size: usize,
    log: &(dyn Fn(String) + Sync),
) -> Result<RowScores> {
    let base = ModelConfig {
        batch_size,
        ..cfg.model.clone()
    };
    let (train, test) = holdout_split(data.examples, cfg.holdout)?;
    let (fit_part, val_part) = holdout_split(train, cfg.validation_split)?;
    let (_, history) = fit(data, base.clone(), fit_part, val_part)?;
    let epoch = select_optimal_epoch(&history)?;
    log(format!(
        "batch {batch_size}: optimal epoch {epoch} of {}",
        history.epochs.len()
    ));

    let fixed = ModelConfig {
        max_epochs: epoch,
        ..base
    };
    let (model, _) = fit(data, fixed.clone(), train, &[])?;
    let test_scores = evaluate(&model, test)?;
    log(format!(
        "batch {batch_size}: test accuracy {:.2}%",
        100.0 * test_scores.accuracy()
    ));

    let mut cv = Vec::new();
    for &k in &cfg.folds {
        let folds = cross_validate(data.examples, k, |tr, va| {
            let (model, _) = fit(data, fixed.clone(), tr, &[])?;
            evaluate(&model, va)
        })?;
        log(format!(
            "batch {batch_size}: {k}-fold accuracy {:.2}%",
            100.0 * folds.mean_by(EvalScores::accuracy)
        ));
        cv.push((k, folds.folds));
    }
    Ok((epoch, test_scores, cv))
}

/// For each batch size: pick the optimal epoch on a validation carve-out
/// of the training split, retrain on the whole training split for that many
/// epochs and score the test split, then run k-fold cross validation at the
/// same epoch count. A failing row is reported with its error and the grid
/// continues.
pub fn run_grid(
    method: &str,
    cfg: &GridConfig,
    data: &GridData<'_>,
    log: &(dyn Fn(String) + Sync),
) -> Result<GridReports> {
    if cfg.batch_sizes.is_empty() {
        return Err(Error::InvalidInput("batch-size grid is empty".into()));
    }
    let mut token_rows = Vec::new();
    let mut command_rows = Vec::new();
    for &b in &cfg.batch_sizes {
        match run_row(data, cfg, b, log) {
            Ok((epoch, test, cv)) => {
                let mut tr = EvalRow::new(Some(b), Some(epoch), 100.0 * test.accuracy());
                let mut cr = EvalRow::new(Some(b), Some(epoch), 100.0 * test.command_accuracy());
                for (k, folds) in cv {
                    let n = folds.len() as f64;
                    tr.cv.push((
                        k,
                        100.0 * folds.iter().map(EvalScores::accuracy).sum::<f64>() / n,
                    ));
                    cr.cv.push((
                        k,
                        100.0 * folds.iter().map(EvalScores::command_accuracy).sum::<f64>() / n,
                    ));
                }
                token_rows.push(tr);
                command_rows.push(cr);
            }
            Err(e) => {
                log(format!("batch {b}: failed: {e}"));
                token_rows.push(EvalRow::failed(b, &e));
                command_rows.push(EvalRow::failed(b, &e));
            }
        }
    }
    Ok(GridReports {
        token: EvalReport::new(method, Metric::Token, token_rows),
        command: EvalReport::new(method, Metric::Command, command_rows),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn holdout_sizes() {
        let v: Vec<u32> = (0..10).collect();
        let (a, b) = holdout_split(&v, 0.9).unwrap();
        assert_eq!((a.len(), b.len()), (9, 1));
        let (a, b) = holdout_split(&v[..2], 0.9).unwrap();
        assert_eq!((a, b), (&[0][..], &[1][..]));
        assert!(holdout_split(&v[..1], 0.9).is_err());
    }

    #[test]
    fn folds_of_ten() {
        let f = FoldSpec::new(10, 5).unwrap().folds();
        assert_eq!(f, vec![0..2, 2..4, 4..6, 6..8, 8..10]);
        let f = FoldSpec::new(7, 3).unwrap().folds();
        assert_eq!(f, vec![0..3, 3..5, 5..7]);
        assert!(FoldSpec::new(4, 5).is_err());
        let loo = kfold_split(&[1, 2, 3], 3).unwrap();
        assert_eq!(loo[1], (vec![1, 3], vec![2]));
    }

    #[test]
    fn optimal_epoch() {
        let h = |v: &[f64]| TrainHistory {
            epochs: v
                .iter()
                .enumerate()
                .map(|(i, &l)| model::EpochStats {
                    epoch: i + 1,
                    train_loss: 0.0,
                    val_loss: l,
                    val_accuracy: 0.0,
                    val_command_accuracy: 0.0,
                })
                .collect(),
        };
        assert_eq!(select_optimal_epoch(&h(&[3.0, 2.0, 2.5])).unwrap(), 2);
        assert_eq!(select_optimal_epoch(&h(&[1.0])).unwrap(), 1);
        assert_eq!(select_optimal_epoch(&h(&[2.0, 2.0])).unwrap(), 1);
        assert!(select_optimal_epoch(&h(&[])).is_err());
    }

    #[test]
    fn baselines_by_hand() {
        assert_eq!(baseline_mrc(&["a", "a", "b"]).unwrap(), 0.5);
        assert!((baseline_mfc(&["a", "b", "a", "b"]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(baseline_mrc(&["a", "a", "a"]).unwrap(), 1.0);
        assert_eq!(baseline_mfc(&["a", "a", "a"]).unwrap(), 1.0);
        assert!(baseline_mrc(&["a"]).is_err());
    }
}
