//! Pipeline settings loaded from a `key = value` file.
//!
//! One entry per line; `#` starts a comment; blank lines are ignored.
//! Unknown keys are an error so that typos do not silently fall back to
//! defaults.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::embed::{GloveConfig, Method, SgnsConfig, DEFAULT_DIM, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::eval::GridConfig;
use crate::kb::DEFAULT_NEIGHBORS;
use crate::model::ModelConfig;

pub const CONFIG_ENV: &str = "CMDSEER_CONFIG";

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Raw trace directory, one file per user.
    pub trace_dir: Option<PathBuf>,
    /// Traces are in the Greenberg format rather than the normalized one.
    pub greenberg: bool,
    /// Comma-separated user ids, or a prefix ending in `*`; all users when unset.
    pub users: Option<String>,
    pub man_dir: Option<PathBuf>,
    pub artifact_dir: PathBuf,
    pub alias_file: Option<PathBuf>,
    pub history_file: Option<PathBuf>,

    pub method: Method,
    pub seed: u64,

    pub dim: usize,
    pub window: usize,
    pub lambda: f64,
    pub weight_by_score: bool,
    pub kb_neighbors: usize,
    pub glove_epochs: usize,
    pub glove_learning_rate: f64,
    pub sgns_epochs: usize,
    pub sgns_learning_rate: f64,
    pub negatives: usize,

    pub model: ModelConfig,

    pub batch_sizes: Vec<usize>,
    pub folds: Vec<usize>,
    pub holdout: f64,
    pub validation_split: f64,

    pub suggestions: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let glove = GloveConfig::default();
        let sgns = SgnsConfig::default();
        let grid = GridConfig::default();
        PipelineConfig {
            trace_dir: None,
            greenberg: false,
            users: None,
            man_dir: None,
            artifact_dir: PathBuf::from("artifacts"),
            alias_file: None,
            history_file: None,
            method: Method::Joint,
            seed: 42,
            dim: DEFAULT_DIM,
            window: DEFAULT_WINDOW,
            lambda: 1.0,
            weight_by_score: false,
            kb_neighbors: DEFAULT_NEIGHBORS,
            glove_epochs: glove.epochs,
            glove_learning_rate: glove.learning_rate,
            sgns_epochs: sgns.epochs,
            sgns_learning_rate: sgns.learning_rate,
            negatives: sgns.negatives,
            model: ModelConfig::default(),
            batch_sizes: grid.batch_sizes,
            folds: grid.folds,
            holdout: grid.holdout,
            validation_split: grid.validation_split,
            suggestions: 5,
        }
    }
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::InvalidInput(format!("bad value {raw:?} for `{key}`")))
}

fn list(key: &str, raw: &str) -> Result<Vec<usize>> {
    raw.split(',').map(|s| value(key, s.trim())).collect()
}

fn flag(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::InvalidInput(format!(
            "bad boolean {raw:?} for `{key}`"
        ))),
    }
}

impl PipelineConfig {
    pub const KEYS: &'static [&'static str] = &[
        "trace_dir",
        "greenberg",
        "users",
        "man_dir",
        "artifact_dir",
        "alias_file",
        "history_file",
        "method",
        "seed",
        "dim",
        "window",
        "lambda",
        "weight_by_score",
        "kb_neighbors",
        "glove_epochs",
        "glove_lr",
        "sgns_epochs",
        "sgns_lr",
        "negatives",
        "context_len",
        "hidden1",
        "hidden2",
        "dropout",
        "lr",
        "batch_size",
        "epochs",
        "embedding_trainable",
        "batch_sizes",
        "folds",
        "holdout",
        "validation_split",
        "suggestions",
    ];

    /// Sets one key. Relative paths are kept as given.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let raw = raw.trim();
        let path = || Some(PathBuf::from(raw));
        match key {
            "trace_dir" => self.trace_dir = path(),
            "greenberg" => self.greenberg = flag(key, raw)?,
            "users" => self.users = Some(raw.to_string()),
            "man_dir" => self.man_dir = path(),
            "artifact_dir" => self.artifact_dir = PathBuf::from(raw),
            "alias_file" => self.alias_file = path(),
            "history_file" => self.history_file = path(),
            "method" => self.method = raw.parse()?,
            "seed" => {
                self.seed = value(key, raw)?;
                self.model.seed = self.seed;
            }
            "dim" => self.dim = value(key, raw)?,
            "window" => self.window = value(key, raw)?,
            "lambda" => self.lambda = value(key, raw)?,
            "weight_by_score" => self.weight_by_score = flag(key, raw)?,
            "kb_neighbors" => self.kb_neighbors = value(key, raw)?,
            "glove_epochs" => self.glove_epochs = value(key, raw)?,
            "glove_lr" => self.glove_learning_rate = value(key, raw)?,
            "sgns_epochs" => self.sgns_epochs = value(key, raw)?,
            "sgns_lr" => self.sgns_learning_rate = value(key, raw)?,
            "negatives" => self.negatives = value(key, raw)?,
            "context_len" => self.model.context_len = value(key, raw)?,
            "hidden1" => self.model.hidden1 = value(key, raw)?,
            "hidden2" => self.model.hidden2 = value(key, raw)?,
            "dropout" => self.model.dropout = value(key, raw)?,
            "lr" => self.model.learning_rate = value(key, raw)?,
            "batch_size" => self.model.batch_size = value(key, raw)?,
            "epochs" => self.model.max_epochs = value(key, raw)?,
            "embedding_trainable" => self.model.embedding_trainable = flag(key, raw)?,
            "batch_sizes" => self.batch_sizes = list(key, raw)?,
            "folds" => self.folds = list(key, raw)?,
            "holdout" => self.holdout = value(key, raw)?,
            "validation_split" => self.validation_split = value(key, raw)?,
            "suggestions" => self.suggestions = value(key, raw)?,
            _ => return Err(Error::InvalidInput(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies every entry of a config file on top of `self`.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, raw) = line.split_once('=').ok_or_else(|| Error::Format {
                artifact: "config file",
                line: i + 1,
                reason: format!("expected key = value in {source}"),
            })?;
            self.set(key.trim(), raw).map_err(|e| Error::Format {
                artifact: "config file",
                line: i + 1,
                reason: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        cfg.apply_text(text, "config text")?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let mut cfg = PipelineConfig::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    pub fn glove(&self) -> GloveConfig {
        GloveConfig {
            dim: self.dim,
            epochs: self.glove_epochs,
            learning_rate: self.glove_learning_rate,
            seed: self.seed,
            ..GloveConfig::default()
        }
    }

    pub fn sgns(&self) -> SgnsConfig {
        SgnsConfig {
            dim: self.dim,
            window: self.window,
            negatives: self.negatives,
            epochs: self.sgns_epochs,
            learning_rate: self.sgns_learning_rate,
            seed: self.seed,
        }
    }

    pub fn grid(&self) -> GridConfig {
        GridConfig {
            batch_sizes: self.batch_sizes.clone(),
            folds: self.folds.clone(),
            holdout: self.holdout,
            validation_split: self.validation_split,
            model: self.model.clone(),
        }
    }

    /// Checks numeric settings that individual stages would otherwise reject
    /// only once they start.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.dim == 0 {
            return bad("dim must be >= 1".into());
        }
        if self.window == 0 || self.window > crate::embed::cooc::MAX_WINDOW {
            return bad(format!(
                "window must be in 1..={}",
                crate::embed::cooc::MAX_WINDOW
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be >= 0".into());
        }
        if self.suggestions == 0 {
            return bad("suggestions must be >= 1".into());
        }
        if self.batch_sizes.is_empty() || self.batch_sizes.contains(&0) {
            return bad("batch_sizes must be a non-empty list of positive sizes".into());
        }
        if self.folds.iter().any(|&k| k < 2) {
            return bad("every fold count must be >= 2".into());
        }
        for (name, r) in [
            ("holdout", self.holdout),
            ("validation_split", self.validation_split),
        ] {
            if !(r > 0.0 && r < 1.0) {
                return bad(format!("{name} must be in (0, 1)"));
            }
        }
        Ok(())
    }
}

/// Fails unless `path` is an existing directory.
pub fn require_dir(path: Option<&Path>, what: &str) -> Result<PathBuf> {
    let path = path.ok_or_else(|| Error::InvalidInput(format!("{what} is not set")))?;
    if !path.is_dir() {
        return Err(Error::InvalidInput(format!(
            "{what} {} is not a directory",
            path.display()
        )));
    }
    Ok(path.to_path_buf())
}

/// Fails unless `path` is an existing file.
pub fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(Error::InvalidInput(format!(
            "{what} {} not found",
            path.display()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_entries_and_comments() {
        let cfg = PipelineConfig::parse(
            "# settings\nmethod = sgns\n\ndim=20 # small\nfolds = 5, 10\nseed = 7\n",
        )
        .unwrap();
        assert_eq!(cfg.method, Method::Sgns);
        assert_eq!(cfg.dim, 20);
        assert_eq!(cfg.folds, vec![5, 10]);
        assert_eq!(cfg.model.seed, 7);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let err = PipelineConfig::parse("dimm = 3").unwrap_err();
        assert!(err.to_string().contains("unknown config key"), "{err}");
        assert!(PipelineConfig::parse("dim = many").is_err());
        assert!(PipelineConfig::parse("just words").is_err());
        assert!(PipelineConfig::parse("greenberg = maybe").is_err());
    }

    #[test]
    fn every_key_is_settable() {
        let sample = |k: &str| match k {
            "method" => "glove",
            "greenberg" | "weight_by_score" | "embedding_trainable" => "true",
            "batch_sizes" | "folds" => "5",
            "dropout" | "holdout" | "validation_split" | "lambda" | "lr" | "glove_lr"
            | "sgns_lr" => "0.5",
            "trace_dir" | "man_dir" | "artifact_dir" | "alias_file" | "history_file" | "users" => {
                "x"
            }
            _ => "3",
        };
        for key in PipelineConfig::KEYS {
            PipelineConfig::default().set(key, sample(key)).unwrap();
        }
    }

    #[test]
    fn validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let cfg = PipelineConfig {
            window: 0,
            ..PipelineConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(require_dir(Some(Path::new("/definitely/not/here")), "man_dir").is_err());
        assert!(require_dir(None, "man_dir").is_err());
    }
}
