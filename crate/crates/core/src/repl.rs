//! Interactive suggestion state. Entered lines are normalized with the same
//! code path as the training corpus; nothing is ever executed.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::normalize::{normalize_command_line, TokenId, Vocab};

/// Parses an alias file: one `name=expansion` per line, optionally written
/// as shell `alias name='expansion'`; `#` starts a comment line.
pub fn parse_aliases(text: &str) -> Result<BTreeMap<String, String>> {
    let mut aliases = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let line = line.strip_prefix("alias ").unwrap_or(line).trim_start();
        let (name, expansion) = line
            .split_once('=')
            .filter(|(n, _)| !n.trim().is_empty() && !n.trim().contains(char::is_whitespace))
            .ok_or_else(|| Error::Format {
                artifact: "alias file",
                line: i + 1,
                reason: "expected name=expansion".into(),
            })?;
        let expansion = expansion.trim();
        let expansion = ['\'', '"']
            .iter()
            .find_map(|&q| expansion.strip_prefix(q).and_then(|s| s.strip_suffix(q)))
            .unwrap_or(expansion);
        aliases.insert(name.trim().to_string(), expansion.to_string());
    }
    Ok(aliases)
}

pub fn load_aliases(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse_aliases(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Suggestion {
    pub rank: usize,
    pub token: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepOutput {
    pub suggestions: Vec<Suggestion>,
    /// Entered tokens missing from the vocabulary; they were replaced by
    /// the most frequent token.
    pub oov: Vec<String>,
    /// Fewer than `L` tokens have been entered so far.
    pub padded: bool,
}

impl StepOutput {
    /// `rank. token (probability)` lines, preceded by a banner when
    /// something was substituted.
    pub fn to_text(&self, vocab: &Vocab) -> String {
        let mut out = String::new();
        if !self.oov.is_empty() {
            let _ = writeln!(
                out,
                "[unknown: {} -> treated as `{}`]",
                self.oov.join(", "),
                vocab.token(vocab.most_frequent())
            );
        }
        for s in &self.suggestions {
            let _ = writeln!(out, "{}. {} ({:.4})", s.rank, s.token, s.probability);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("step output serializes")
    }
}

pub struct ReplState {
    pub model: Model,
    pub vocab: Vocab,
    pub aliases: BTreeMap<String, String>,
    pub k: usize,
    context: VecDeque<TokenId>,
}

impl ReplState {
    pub fn new(
        model: Model,
        vocab: Vocab,
        aliases: BTreeMap<String, String>,
        k: usize,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("suggestion count must be >= 1".into()));
        }
        if model.vocab_size() != vocab.len() {
            return Err(Error::DimensionMismatch {
                what: "model vocabulary vs vocab file",
                expected: vocab.len(),
                actual: model.vocab_size(),
            });
        }
        Ok(ReplState {
            context: VecDeque::with_capacity(model.context_len()),
            model,
            vocab,
            aliases,
            k,
        })
    }

    /// The rolling context, oldest first; at most `L` ids.
    pub fn context(&self) -> Vec<TokenId> {
        self.context.iter().copied().collect()
    }

    /// Token ids for one entered line, and the unknown surfaces.
    pub fn encode_line(&self, line: &str) -> (Vec<TokenId>, Vec<String>) {
        let mut oov = Vec::new();
        let ids = normalize_command_line(line, &self.aliases)
            .into_iter()
            .map(|t| {
                self.vocab.id(t.as_str()).unwrap_or_else(|| {
                    oov.push(t.to_string());
                    self.vocab.most_frequent()
                })
            })
            .collect();
        (ids, oov)
    }

    /// Appends the entered line to the context and ranks the next command.
    /// An empty line leaves the context as it is.
    pub fn step(&mut self, line: &str) -> Result<StepOutput> {
        let (ids, oov) = self.encode_line(line);
        let l = self.model.context_len();
        for id in ids {
            if self.context.len() == l {
                self.context.pop_front();
            }
            self.context.push_back(id);
        }
        self.suggest(oov)
    }

    fn suggest(&self, oov: Vec<String>) -> Result<StepOutput> {
        let context = self.context();
        let p = self
            .model
            .predict_top_k(&self.vocab, &context, self.k, true)?;
        let suggestions = p
            .suggestions
            .into_iter()
            .enumerate()
            .map(|(i, (id, probability))| Suggestion {
                rank: i + 1,
                token: self.vocab.token(id).to_string(),
                probability,
            })
            .collect();
        Ok(StepOutput {
            suggestions,
            oov,
            padded: p.padded,
        })
    }
}
