//! Command embeddings: co-occurrence counting and three trainers
//! (skip-gram with negative sampling, GloVe, and GloVe with a knowledge-base
//! attraction term).

pub mod cooc;
pub mod glove;
pub mod sgns;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::normalize::{TokenId, Vocab};

pub use cooc::{build_cooccurrence, CoocEntry, CoocMatrix};
pub use glove::{
    resolve_kb, train_glove, train_joint, GloveConfig, GloveTrainState, JointConfig, KbEdge,
};
pub use sgns::{train_sgns, SgnsConfig};

pub const DEFAULT_DIM: usize = 50;
pub const DEFAULT_WINDOW: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sgns,
    Glove,
    Joint,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Sgns, Method::Glove, Method::Joint];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sgns => "sgns",
            Method::Glove => "glove",
            Method::Joint => "joint",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgns" | "word2vec" | "skipgram" => Ok(Method::Sgns),
            "glove" => Ok(Method::Glove),
            "joint" => Ok(Method::Joint),
            _ => Err(Error::InvalidInput(format!(
                "unknown embedding method {s:?} (expected sgns, glove or joint)"
            ))),
        }
    }
}

/// Row-major `V x d` matrix of command vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub method: Method,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(method: Method, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                what: "embedding data length",
                expected: dim,
                actual: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                stage: "embedding",
                step: pos / dim,
                detail: format!("row {} has a non-finite component", pos / dim),
            });
        }
        Ok(EmbeddingMatrix { method, dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, id: TokenId) -> &[f64] {
        let start = id as usize * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn cosine(&self, a: TokenId, b: TokenId) -> f64 {
        cosine(self.row(a), self.row(b))
    }

    pub fn write_to(&self, vocab: &Vocab, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.rows(), self.dim)?;
        for id in 0..self.rows() {
            write!(w, "{}", vocab.token(id as TokenId))?;
            for x in self.row(id as TokenId) {
                // Display for f64 is the shortest round-trip representation.
                write!(w, " {x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save(&self, vocab: &Vocab, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(vocab, &mut buf).expect("in-memory write");
        fs::write(path, buf).map_err(|e| Error::file(path, e))
    }

    /// Parses the text artifact, placing each row at its vocabulary id.
    pub fn parse(text: &str, vocab: &Vocab, method: Method) -> Result<Self> {
        let bad = |line: usize, reason: String| Error::Format {
            artifact: "embeddings",
            line,
            reason,
        };
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| bad(1, "missing header".into()))?;
        let (v, d) = header
            .split_once(' ')
            .and_then(|(v, d)| Some((v.parse::<usize>().ok()?, d.parse::<usize>().ok()?)))
            .ok_or_else(|| bad(1, "header must be `V d`".into()))?;
        if v != vocab.len() {
            return Err(Error::DimensionMismatch {
                what: "embedding rows vs vocabulary",
                expected: vocab.len(),
                actual: v,
            });
        }
        let mut data = vec![f64::NAN; v * d];
        let mut filled = vec![false; v];
        let mut count = 0;
        for (idx, line) in lines.enumerate() {
            let line_no = idx + 2;
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(' ');
            let token = fields.next().unwrap_or_default();
            let id = vocab
                .id(token)
                .ok_or_else(|| bad(line_no, format!("token {token:?} not in vocabulary")))?
                as usize;
            if std::mem::replace(&mut filled[id], true) {
                return Err(bad(line_no, format!("duplicate row for {token:?}")));
            }
            let values: Vec<f64> = fields
                .map(|f| {
                    f.parse()
                        .map_err(|_| bad(line_no, format!("bad number {f:?}")))
                })
                .collect::<Result<_>>()?;
            if values.len() != d {
                return Err(Error::DimensionMismatch {
                    what: "embedding row width",
                    expected: d,
                    actual: values.len(),
                });
            }
            data[id * d..(id + 1) * d].copy_from_slice(&values);
            count += 1;
        }
        if count != v {
            return Err(Error::DimensionMismatch {
                what: "embedding row count",
                expected: v,
                actual: count,
            });
        }
        EmbeddingMatrix::new(method, d, data)
    }

    pub fn load(path: &Path, vocab: &Vocab, method: Method) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text, vocab, method)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// The `k` tokens closest to `token` by cosine, excluding the query
/// itself. Ties are ordered by token text.
pub fn nearest_neighbors(
    emb: &EmbeddingMatrix,
    vocab: &Vocab,
    token: &str,
    k: usize,
) -> Result<Vec<(String, f64)>> {
    let query = vocab
        .id(token)
        .ok_or_else(|| Error::OutOfVocabulary(token.to_string()))?;
    let mut scored: Vec<(&str, f64)> = (0..emb.rows() as TokenId)
        .filter(|&id| id != query)
        .map(|id| (vocab.token(id), emb.cosine(query, id)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(t, s)| (t.to_string(), s))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(tokens: &[&str]) -> Vocab {
        let n = tokens.len() as u64;
        Vocab::from_counts(
            tokens
                .iter()
                .enumerate()
                .map(|(i, t)| (t.to_string(), n - i as u64, true)),
        )
        .unwrap()
    }

    #[test]
    fn neighbours() {
        let v = vocab(&["a", "b", "c", "d"]);
        let emb = EmbeddingMatrix::new(
            Method::Glove,
            2,
            vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let nn = nearest_neighbors(&emb, &v, "a", 3).unwrap();
        assert_eq!(nn[0], ("c".to_string(), 1.0));
        assert_eq!(nn[1].0, "b");
        assert_eq!(nn[2].0, "d");
        assert!(nearest_neighbors(&emb, &v, "a", 0).unwrap().is_empty());
        assert!(nearest_neighbors(&emb, &v, "zz", 1).is_err());

        let onehot = EmbeddingMatrix::new(
            Method::Sgns,
            4,
            (0..16)
                .map(|i| if i % 5 == 0 { 1.0 } else { 0.0 })
                .collect(),
        )
        .unwrap();
        let nn = nearest_neighbors(&onehot, &v, "c", 3).unwrap();
        let names: Vec<_> = nn.iter().map(|(t, _)| t.as_str()).collect();
        assert_eq!(names, ["a", "b", "d"]);
        assert!(nn.iter().all(|(_, s)| *s == 0.0));
    }

    #[test]
    fn artifact_roundtrip_and_validation() {
        let v = vocab(&["ls", "cd"]);
        let emb = EmbeddingMatrix::new(
            Method::Joint,
            3,
            vec![0.1, -2.5e-7, 1.0 / 3.0, 4.0, 5.5, -0.0],
        )
        .unwrap();
        let mut buf = Vec::new();
        emb.write_to(&v, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("2 3\nls 0.1 "));
        let back = EmbeddingMatrix::parse(&text, &v, Method::Joint).unwrap();
        assert_eq!(back, emb);

        assert!(EmbeddingMatrix::parse("2 3\nls 1 2 3\ncd 1 2\n", &v, Method::Joint).is_err());
        assert!(EmbeddingMatrix::parse("3 3\nls 1 2 3\ncd 1 2 3\n", &v, Method::Joint).is_err());
        assert!(EmbeddingMatrix::parse("2 3\nls 1 2 3\n", &v, Method::Joint).is_err());
        assert!(EmbeddingMatrix::new(Method::Glove, 2, vec![f64::NAN, 0.0]).is_err());
    }
}
