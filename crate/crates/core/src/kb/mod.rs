//! Command synonym knowledge base built from per-command manual text.
//!
//! Each command's text is cleaned (non-alphanumerics dropped, case-folded,
//! words of three characters or fewer removed, Porter-stemmed), weighted by
//! TF-IDF, and compared by cosine similarity. The `k` most similar commands
//! of each command become its synonyms.

pub mod porter;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::normalize::{Token, Vocab};

pub const DEFAULT_NEIGHBORS: usize = 5;
/// Surface words of this many characters or fewer are dropped.
pub const MAX_SHORT_WORD: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManDoc {
    pub command: Token,
    pub body: String,
}

pub type TermBag = BTreeMap<String, u32>;

pub fn clean_doc(doc: &ManDoc) -> TermBag {
    clean_text(&doc.body)
}

pub fn clean_text(body: &str) -> TermBag {
    let folded: String = body
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_lowercase()
            } else {
                ' '
            }
        })
        .collect();
    let mut bag = TermBag::new();
    for word in folded.split_whitespace() {
        if word.len() <= MAX_SHORT_WORD {
            continue;
        }
        *bag.entry(porter::stem(word)).or_default() += 1;
    }
    bag
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocVector {
    pub command: Token,
    /// Only strictly positive weights are stored.
    pub weights: BTreeMap<String, f64>,
    norm: f64,
}

impl DocVector {
    pub fn new(command: Token, weights: BTreeMap<String, f64>) -> Self {
        let weights: BTreeMap<_, _> = weights.into_iter().filter(|(_, w)| *w > 0.0).collect();
        let norm = weights.values().map(|w| w * w).sum::<f64>().sqrt();
        DocVector {
            command,
            weights,
            norm,
        }
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// TF-IDF with `idf = ln(N / df)`; terms present in every document get
/// weight zero and are not stored.
pub fn vectorize(bags: &[(Token, TermBag)]) -> Result<Vec<DocVector>> {
    let n = bags.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 documents to vectorize, got {n}"
        )));
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for (_, bag) in bags {
        for term in bag.keys() {
            *df.entry(term.as_str()).or_default() += 1;
        }
    }
    Ok(bags
        .par_iter()
        .map(|(command, bag)| {
            let weights = bag
                .iter()
                .map(|(term, &tf)| {
                    let idf = (n as f64 / df[term.as_str()] as f64).ln();
                    (term.clone(), tf as f64 * idf)
                })
                .collect();
            DocVector::new(command.clone(), weights)
        })
        .collect())
}

/// Cosine similarity. Terms are visited in sorted order on both sides, so
/// `cosine(a, b)` and `cosine(b, a)` are bit-identical.
pub fn cosine(a: &DocVector, b: &DocVector) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut dot = 0.0;
    let mut ia = a.weights.iter().peekable();
    let mut ib = b.weights.iter().peekable();
    while let (Some((ta, wa)), Some((tb, wb))) = (ia.peek(), ib.peek()) {
        match ta.cmp(tb) {
            std::cmp::Ordering::Less => {
                ia.next();
            }
            std::cmp::Ordering::Greater => {
                ib.next();
            }
            std::cmp::Ordering::Equal => {
                dot += *wa * *wb;
                ia.next();
                ib.next();
            }
        }
    }
    (dot / (a.norm * b.norm)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynonymPair {
    pub a: Token,
    pub b: Token,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct KnowledgeBase {
    /// Unordered pairs stored with `a < b`, sorted.
    pub pairs: Vec<SynonymPair>,
    /// Ranked neighbours of each command.
    pub neighbors: BTreeMap<Token, Vec<(Token, f64)>>,
}

impl KnowledgeBase {
    /// Builds pairs from directed neighbour lists, keeping the max score of
    /// each unordered pair.
    pub fn from_neighbors(neighbors: BTreeMap<Token, Vec<(Token, f64)>>) -> Self {
        let mut best: BTreeMap<(Token, Token), f64> = BTreeMap::new();
        for (a, list) in &neighbors {
            for (b, score) in list {
                let key = if a < b {
                    (a.clone(), b.clone())
                } else {
                    (b.clone(), a.clone())
                };
                let entry = best.entry(key).or_insert(*score);
                *entry = entry.max(*score);
            }
        }
        let pairs = best
            .into_iter()
            .map(|((a, b), score)| SynonymPair { a, b, score })
            .collect();
        KnowledgeBase { pairs, neighbors }
    }

    pub fn commands(&self) -> BTreeSet<&Token> {
        self.pairs.iter().flat_map(|p| [&p.a, &p.b]).collect()
    }

    /// Directed lines `<cmd_a> <cmd_b> <score>`, in neighbour rank order.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        for (a, list) in &self.neighbors {
            for (b, score) in list {
                writeln!(w, "{a} {b} {score}")?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        fs::write(path, buf).map_err(|e| Error::file(path, e))
    }

    /// Parses and validates a KB file. `max_degree` bounds each command's
    /// neighbour count.
    pub fn parse(text: &str, max_degree: usize) -> Result<Self> {
        let mut neighbors: BTreeMap<Token, Vec<(Token, f64)>> = BTreeMap::new();
        let mut seen: BTreeMap<(Token, Token), f64> = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let bad = |reason: String| Error::Format {
                artifact: "kb",
                line: idx + 1,
                reason,
            };
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<_> = line.split_whitespace().collect();
            let [a, b, score] = fields[..] else {
                return Err(bad("expected `<cmd_a> <cmd_b> <score>`".into()));
            };
            let score: f64 = score
                .parse()
                .map_err(|_| bad(format!("bad score {score:?}")))?;
            if !(0.0..=1.0).contains(&score) {
                return Err(bad(format!("score {score} outside [0, 1]")));
            }
            if a == b {
                return Err(bad(format!("self pair {a}")));
            }
            let (a, b) = (Token::new(a)?, Token::new(b)?);
            let key = if a < b {
                (a.clone(), b.clone())
            } else {
                (b.clone(), a.clone())
            };
            if let Some(prev) = seen.insert(key, score) {
                if prev != score {
                    return Err(bad(format!("inconsistent scores for {a} {b}")));
                }
            }
            let list = neighbors.entry(a.clone()).or_default();
            if list.iter().any(|(t, _)| *t == b) {
                return Err(bad(format!("duplicate pair {a} {b}")));
            }
            list.push((b, score));
            if list.len() > max_degree {
                return Err(bad(format!("{a} has more than {max_degree} neighbours")));
            }
        }
        Ok(Self::from_neighbors(neighbors))
    }

    pub fn load(path: &Path, max_degree: usize) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text, max_degree)
    }
}

/// For each command, its `k` most similar commands. Ties go to the
/// lexicographically smaller command; candidates with zero similarity and
/// commands with empty vectors are never linked.
pub fn top_k_synonyms(vectors: &[DocVector], k: usize) -> KnowledgeBase {
    let mut order: Vec<&DocVector> = vectors.iter().collect();
    order.sort_by(|a, b| a.command.cmp(&b.command));
    let neighbors: BTreeMap<Token, Vec<(Token, f64)>> = order
        .par_iter()
        .enumerate()
        .filter(|(_, v)| !v.is_empty())
        .map(|(i, v)| {
            let mut scored: Vec<(usize, f64)> = order
                .iter()
                .enumerate()
                .filter(|(j, u)| *j != i && u.command != v.command && !u.is_empty())
                .map(|(j, u)| (j, cosine(v, u)))
                .filter(|(_, s)| *s > 0.0)
                .collect();
            // index order equals lexicographic command order
            scored.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
            scored.truncate(k);
            let list = scored
                .into_iter()
                .map(|(j, s)| (order[j].command.clone(), s))
                .collect();
            (v.command.clone(), list)
        })
        .filter(|(_, list): &(Token, Vec<_>)| !list.is_empty())
        .collect();
    KnowledgeBase::from_neighbors(neighbors)
}

/// Reads every `<command>.txt` of a directory.
pub fn load_man_dir(dir: &Path) -> Result<Vec<ManDoc>> {
    let mut docs = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::file(dir, e))? {
        let path = entry.map_err(|e| Error::file(dir, e))?.path();
        if !path.is_file() || path.extension().is_none_or(|x| x != "txt") {
            continue;
        }
        let name = crate::trace::user_id_for(&path);
        let Ok(command) = Token::new(&name) else {
            continue;
        };
        let bytes = fs::read(&path).map_err(|e| Error::file(&path, e))?;
        docs.push(ManDoc {
            command,
            body: String::from_utf8_lossy(&bytes).into_owned(),
        });
    }
    docs.sort_by(|a, b| a.command.cmp(&b.command));
    Ok(docs)
}

/// Keeps the documents whose command is a command token of the vocabulary.
pub fn restrict_to_vocab(docs: Vec<ManDoc>, vocab: &Vocab) -> Vec<ManDoc> {
    docs.into_iter()
        .filter(|d| {
            vocab
                .id(d.command.as_str())
                .is_some_and(|id| vocab.is_command(id))
        })
        .collect()
}

/// Cleaning, weighting and neighbour selection in one go.
pub fn build_kb(docs: &[ManDoc], k: usize) -> Result<KnowledgeBase> {
    let bags: Vec<(Token, TermBag)> = docs
        .par_iter()
        .map(|d| (d.command.clone(), clean_doc(d)))
        .collect();
    let vectors = vectorize(&bags)?;
    Ok(top_k_synonyms(&vectors, k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(s: &str) -> Token {
        Token::new(s).unwrap()
    }

    fn bag(pairs: &[(&str, u32)]) -> TermBag {
        pairs.iter().map(|(t, c)| (t.to_string(), *c)).collect()
    }

    #[test]
    fn cleaning() {
        assert!(clean_text("a an the").is_empty());
        assert!(clean_text("").is_empty());
        assert_eq!(clean_text("copying copied copy!!"), bag(&[("copi", 3)]));
        assert_eq!(
            clean_text("Lists DIRECTORY-contents, (recursively)"),
            bag(&[("content", 1), ("directori", 1), ("list", 1), ("recurs", 1)])
        );
    }

    #[test]
    fn tfidf_weights() {
        let shared = vectorize(&[
            (tok("a"), bag(&[("file", 2), ("copi", 1)])),
            (tok("b"), bag(&[("file", 1), ("copi", 4)])),
        ])
        .unwrap();
        assert!(shared.iter().all(DocVector::is_empty));

        let v = vectorize(&[
            (tok("a"), bag(&[("file", 3), ("copi", 1)])),
            (tok("b"), bag(&[("copi", 4)])),
        ])
        .unwrap();
        assert_eq!(v[0].weights["file"], 3.0 * 2f64.ln());
        assert!(!v[0].weights.contains_key("copi"));

        let v = vectorize(&[(tok("a"), TermBag::new()), (tok("b"), bag(&[("x", 1)]))]).unwrap();
        assert!(v[0].is_empty());
        assert!(vectorize(&[(tok("a"), bag(&[("x", 1)]))]).is_err());
    }

    fn vec_of(cmd: &str, w: &[(&str, f64)]) -> DocVector {
        DocVector::new(
            tok(cmd),
            w.iter().map(|(t, x)| (t.to_string(), *x)).collect(),
        )
    }

    #[test]
    fn cosine_cases() {
        let u = vec_of("u", &[("a", 1.0), ("b", 2.0)]);
        let v = vec_of("v", &[("a", 1.0), ("b", 2.0)]);
        let w = vec_of("w", &[("c", 1.0)]);
        assert!((cosine(&u, &v) - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&u, &w), 0.0);
        let kb = top_k_synonyms(&[u, v, w], 5);
        assert_eq!(kb.neighbors[&tok("u")][0].0, tok("v"));
        assert_eq!(kb.neighbors[&tok("v")][0].0, tok("u"));
        assert!(!kb.neighbors.contains_key(&tok("w")));
        assert_eq!(kb.pairs.len(), 1);
    }

    #[test]
    fn ties_break_lexicographically_and_k_bounds_degree() {
        let vs: Vec<_> = ["e", "d", "c", "b", "a", "q", "z"]
            .iter()
            .map(|c| vec_of(c, &[("t", 1.0)]))
            .collect();
        let kb = top_k_synonyms(&vs, DEFAULT_NEIGHBORS);
        let q: Vec<_> = kb.neighbors[&tok("q")]
            .iter()
            .map(|(t, _)| t.as_str())
            .collect();
        assert_eq!(q, ["a", "b", "c", "d", "e"]);
        assert!(kb.neighbors.values().all(|l| l.len() <= 5));
    }

    #[test]
    fn kb_artifact_validation() {
        let kb = KnowledgeBase::parse("ls dir 0.5\ndir ls 0.5\ncp mv 0.25\n", 5).unwrap();
        assert_eq!(kb.pairs.len(), 2);
        let mut out = Vec::new();
        kb.write_to(&mut out).unwrap();
        assert_eq!(
            KnowledgeBase::parse(std::str::from_utf8(&out).unwrap(), 5).unwrap(),
            kb
        );

        assert!(KnowledgeBase::parse("ls ls 0.5\n", 5).is_err());
        assert!(KnowledgeBase::parse("ls cp 1.5\n", 5).is_err());
        assert!(KnowledgeBase::parse("ls cp 0.5\ncp ls 0.4\n", 5).is_err());
        assert!(KnowledgeBase::parse("a b 0.1\na c 0.1\n", 1).is_err());
        assert!(KnowledgeBase::parse("a b\n", 5).is_err());
    }
}
