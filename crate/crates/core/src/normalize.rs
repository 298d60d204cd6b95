//! Turns raw traces into token streams.
//!
//! Per command line: failed commands are dropped, the first word is
//! alias-expanded one level, then every argument is replaced by a
//! placeholder (`parameter` for `-`-prefixed options, `filename` for
//! everything else). The command name itself is kept.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::trace::{RawRecord, RecordTag, UserTrace};

pub const FILENAME: &str = "filename";
pub const PARAMETER: &str = "parameter";

pub type TokenId = u32;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Token(String);

impl Token {
    pub fn new(surface: &str) -> Result<Self> {
        if surface.is_empty() || surface.chars().any(char::is_whitespace) {
            return Err(Error::InvalidInput(format!("bad token {surface:?}")));
        }
        Ok(Token(surface.to_string()))
    }

    fn from_word(word: &str) -> Self {
        debug_assert!(!word.is_empty() && !word.contains(char::is_whitespace));
        Token(word.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_placeholder(&self) -> bool {
        self.0 == FILENAME || self.0 == PARAMETER
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Replaces the first word by its alias expansion. One level only.
pub fn expand_aliases(line: &str, aliases: &BTreeMap<String, String>) -> String {
    let trimmed = line.trim_start();
    let end = trimmed.find(char::is_whitespace).unwrap_or(trimmed.len());
    let (first, rest) = trimmed.split_at(end);
    match aliases.get(first) {
        Some(expansion) if !first.is_empty() => format!("{expansion}{rest}"),
        _ => line.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FilterOutcome {
    pub records: Vec<RawRecord>,
    /// Error marks with no command directly before them.
    pub dangling_marks: usize,
    pub removed_commands: usize,
}

/// Drops every command that is immediately followed by an error mark,
/// together with the mark.
pub fn filter_errors(records: &[RawRecord]) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    let mut i = 0;
    while i < records.len() {
        let record = &records[i];
        match record.tag {
            RecordTag::Command
                if records.get(i + 1).map(|r| r.tag) == Some(RecordTag::ErrorMark) =>
            {
                out.removed_commands += 1;
                i += 2;
                continue;
            }
            RecordTag::ErrorMark => out.dangling_marks += 1,
            _ => out.records.push(record.clone()),
        }
        i += 1;
    }
    out
}

/// Placeholder substitution on an already expanded, non-erroneous line.
pub fn normalize_tokens(line: &str) -> Vec<Token> {
    let mut words = line.split_whitespace();
    let Some(command) = words.next() else {
        return Vec::new();
    };
    let mut tokens = vec![Token::from_word(command)];
    tokens.extend(words.map(|w| {
        Token::from_word(if w.starts_with('-') {
            PARAMETER
        } else {
            FILENAME
        })
    }));
    tokens
}

/// Alias expansion followed by placeholder substitution. Training
/// preprocessing and the REPL both go through here.
pub fn normalize_command_line(line: &str, aliases: &BTreeMap<String, String>) -> Vec<Token> {
    normalize_tokens(&expand_aliases(line, aliases))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedTrace {
    pub user_id: String,
    /// One entry per retained command line, never empty.
    pub lines: Vec<Vec<Token>>,
}

impl NormalizedTrace {
    pub fn token_count(&self) -> usize {
        self.lines.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NormalizeStats {
    pub lines: usize,
    pub tokens: usize,
    pub removed_commands: usize,
    pub dangling_marks: usize,
    pub unrecognized: usize,
}

impl NormalizeStats {
    fn merge(&mut self, other: &NormalizeStats) {
        self.lines += other.lines;
        self.tokens += other.tokens;
        self.removed_commands += other.removed_commands;
        self.dangling_marks += other.dangling_marks;
        self.unrecognized += other.unrecognized;
    }
}

/// Normalizes one user. Alias definitions take effect for the commands
/// after them.
pub fn normalize_trace(trace: &UserTrace) -> (NormalizedTrace, NormalizeStats) {
    let filtered = filter_errors(&trace.records);
    let mut aliases = BTreeMap::new();
    let mut lines = Vec::new();
    for record in &filtered.records {
        match record.tag {
            RecordTag::AliasDef => {
                if let Some((name, expansion)) = record.alias_parts() {
                    aliases.insert(name.to_string(), expansion.to_string());
                }
            }
            RecordTag::Command => {
                let tokens = normalize_command_line(&record.payload, &aliases);
                if !tokens.is_empty() {
                    lines.push(tokens);
                }
            }
            _ => {}
        }
    }
    let normalized = NormalizedTrace {
        user_id: trace.user_id.clone(),
        lines,
    };
    let stats = NormalizeStats {
        lines: normalized.lines.len(),
        tokens: normalized.token_count(),
        removed_commands: filtered.removed_commands,
        dangling_marks: filtered.dangling_marks,
        unrecognized: trace.unrecognized,
    };
    (normalized, stats)
}

pub fn normalize_all(traces: &[UserTrace]) -> (Vec<NormalizedTrace>, NormalizeStats) {
    let results: Vec<_> = traces.par_iter().map(normalize_trace).collect();
    let mut total = NormalizeStats::default();
    let mut out = Vec::with_capacity(results.len());
    for (trace, stats) in results {
        total.merge(&stats);
        out.push(trace);
    }
    (out, total)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    index: HashMap<String, TokenId>,
    tokens: Vec<String>,
    counts: Vec<u64>,
    is_command: Vec<bool>,
}

impl Vocab {
    /// Builds a vocabulary from explicit `(token, count, is_command)` rows.
    /// Ids follow descending count, ties broken by token text.
    pub fn from_counts(rows: impl IntoIterator<Item = (String, u64, bool)>) -> Result<Self> {
        let mut rows: Vec<_> = rows.into_iter().collect();
        if rows.is_empty() {
            return Err(Error::EmptyCorpus("no tokens to build a vocabulary".into()));
        }
        rows.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut vocab = Vocab {
            index: HashMap::with_capacity(rows.len()),
            tokens: Vec::with_capacity(rows.len()),
            counts: Vec::with_capacity(rows.len()),
            is_command: Vec::with_capacity(rows.len()),
        };
        for (token, count, cmd) in rows {
            Token::new(&token)?;
            let id = vocab.tokens.len() as TokenId;
            if vocab.index.insert(token.clone(), id).is_some() {
                return Err(Error::InvalidInput(format!("duplicate token {token}")));
            }
            vocab.tokens.push(token);
            vocab.counts.push(count);
            vocab.is_command.push(cmd);
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn count(&self, id: TokenId) -> u64 {
        self.counts[id as usize]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_command(&self, id: TokenId) -> bool {
        self.is_command[id as usize]
    }

    /// Ids that occur as the first token of some command line.
    pub fn command_ids(&self) -> Vec<TokenId> {
        (0..self.len() as TokenId)
            .filter(|&id| self.is_command(id))
            .collect()
    }

    /// Id 0 by construction.
    pub fn most_frequent(&self) -> TokenId {
        0
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        for (id, token) in self.tokens.iter().enumerate() {
            writeln!(w, "{token} {id} {}", self.counts[id])?;
        }
        Ok(())
    }

    /// Writes `<token> <id> <count>` lines, plus the command token list
    /// next to it.
    pub fn save(&self, vocab_path: &Path, commands_path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        fs::write(vocab_path, buf).map_err(|e| Error::file(vocab_path, e))?;
        let mut cmds = String::new();
        for id in self.command_ids() {
            cmds.push_str(self.token(id));
            cmds.push('\n');
        }
        fs::write(commands_path, cmds).map_err(|e| Error::file(commands_path, e))
    }

    pub fn load(vocab_path: &Path, commands_path: &Path) -> Result<Self> {
        let file = fs::File::open(vocab_path).map_err(|e| Error::file(vocab_path, e))?;
        let mut rows = Vec::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::file(vocab_path, e))?;
            let bad = |reason: &str| Error::Format {
                artifact: "vocab",
                line: idx + 1,
                reason: reason.to_string(),
            };
            let fields: Vec<_> = line.split(' ').collect();
            let [token, id, count] = fields[..] else {
                return Err(bad("expected `<token> <id> <count>`"));
            };
            let id: usize = id.parse().map_err(|_| bad("id is not an integer"))?;
            if id != idx {
                return Err(bad("ids must be dense and in order"));
            }
            let count: u64 = count.parse().map_err(|_| bad("count is not an integer"))?;
            rows.push((token.to_string(), count));
        }
        let commands =
            fs::read_to_string(commands_path).map_err(|e| Error::file(commands_path, e))?;
        let commands: std::collections::HashSet<&str> = commands.lines().collect();
        let vocab = Vocab::from_counts(
            rows.iter()
                .map(|(t, c)| (t.clone(), *c, commands.contains(t.as_str()))),
        )?;
        // Re-sorting must reproduce the stored ids.
        for (idx, (token, _)) in rows.iter().enumerate() {
            if vocab.id(token) != Some(idx as TokenId) {
                return Err(Error::Format {
                    artifact: "vocab",
                    line: idx + 1,
                    reason: "ids not in (count desc, token asc) order".into(),
                });
            }
        }
        Ok(vocab)
    }
}

/// Counts tokens across all users and assigns ids by frequency.
pub fn build_vocab(streams: &[NormalizedTrace]) -> Result<Vocab> {
    let mut counts: HashMap<&str, (u64, bool)> = HashMap::new();
    for stream in streams {
        for line in &stream.lines {
            for (pos, token) in line.iter().enumerate() {
                let entry = counts.entry(token.as_str()).or_default();
                entry.0 += 1;
                entry.1 |= pos == 0;
            }
        }
    }
    if counts.is_empty() {
        return Err(Error::EmptyCorpus("no tokens after normalization".into()));
    }
    Vocab::from_counts(
        counts
            .into_iter()
            .map(|(t, (c, cmd))| (t.to_string(), c, cmd)),
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenStream {
    pub user_id: String,
    pub ids: Vec<TokenId>,
    /// Index into `ids` of the first token of each command line.
    pub line_starts: Vec<usize>,
}

impl TokenStream {
    /// The command-name ids, one per line.
    pub fn command_names(&self) -> Vec<TokenId> {
        self.line_starts.iter().map(|&i| self.ids[i]).collect()
    }
}

pub fn encode(streams: &[NormalizedTrace], vocab: &Vocab) -> Result<Vec<TokenStream>> {
    streams
        .iter()
        .map(|stream| {
            let mut ids = Vec::with_capacity(stream.token_count());
            let mut line_starts = Vec::with_capacity(stream.lines.len());
            for line in &stream.lines {
                if line.is_empty() {
                    continue;
                }
                line_starts.push(ids.len());
                for token in line {
                    let id = vocab
                        .id(token.as_str())
                        .ok_or_else(|| Error::OutOfVocabulary(token.to_string()))?;
                    ids.push(id);
                }
            }
            Ok(TokenStream {
                user_id: stream.user_id.clone(),
                ids,
                line_starts,
            })
        })
        .collect()
}

/// One file per user under `dir`, named `<user_id>.txt`, one normalized
/// command line per line.
pub fn write_corpus(dir: &Path, streams: &[NormalizedTrace]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    for stream in streams {
        let path = dir.join(format!("{}.txt", stream.user_id));
        let mut text = String::new();
        for line in &stream.lines {
            let words: Vec<_> = line.iter().map(Token::as_str).collect();
            text.push_str(&words.join(" "));
            text.push('\n');
        }
        fs::write(&path, text).map_err(|e| Error::file(&path, e))?;
    }
    Ok(())
}

pub fn read_corpus(dir: &Path) -> Result<Vec<NormalizedTrace>> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::file(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyCorpus(format!(
            "no corpus files in {}",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|path| {
            let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
            let lines = text
                .lines()
                .map(|l| {
                    l.split_whitespace()
                        .map(Token::from_word)
                        .collect::<Vec<_>>()
                })
                .filter(|l| !l.is_empty())
                .collect();
            Ok(NormalizedTrace {
                user_id: crate::trace::user_id_for(path),
                lines,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::parse_trace_str;

    fn aliases(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    fn words(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(Token::as_str).collect()
    }

    #[test]
    fn alias_expansion() {
        let map = aliases(&[("ll", "ls -l")]);
        assert_eq!(expand_aliases("ll /tmp", &map), "ls -l /tmp");
        assert_eq!(expand_aliases("ls", &map), "ls");
        let rec = aliases(&[("ll", "ll -a")]);
        assert_eq!(expand_aliases("ll", &rec), "ll -a");
    }

    fn recs(text: &str) -> Vec<RawRecord> {
        parse_trace_str(text, "u").unwrap().records
    }

    #[test]
    fn error_filtering() {
        let out = filter_errors(&recs("C sl\nE\nC ls"));
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].payload, "ls");
        assert_eq!(out.removed_commands, 1);

        let out = filter_errors(&recs("C ls"));
        assert_eq!(out.records.len(), 1);

        let out = filter_errors(&recs("E"));
        assert!(out.records.is_empty());
        assert_eq!(out.dangling_marks, 1);

        // Only the command directly before the mark is affected.
        let out = filter_errors(&recs("C a\nD /x\nE\nC b"));
        assert_eq!(out.records.len(), 3);
        assert_eq!(out.dangling_marks, 1);
    }

    #[test]
    fn placeholder_substitution() {
        assert_eq!(
            words(&normalize_tokens("ls -l /tmp")),
            ["ls", "parameter", "filename"]
        );
        assert_eq!(words(&normalize_tokens("cd src")), ["cd", "filename"]);
        assert_eq!(words(&normalize_tokens("ls")), ["ls"]);
        assert!(normalize_tokens("   ").is_empty());
    }

    #[test]
    fn vocab_ids_by_frequency() {
        let streams = vec![NormalizedTrace {
            user_id: "u".into(),
            lines: vec![
                vec![Token::from_word("a"), Token::from_word("b")],
                vec![Token::from_word("a")],
            ],
        }];
        let vocab = build_vocab(&streams).unwrap();
        assert_eq!(vocab.len(), 2);
        assert_eq!(vocab.id("a"), Some(0));
        assert_eq!(vocab.count(0), 2);
        assert_eq!(vocab.count(1), 1);
        assert_eq!(vocab.command_ids(), vec![0]);
        assert!(matches!(build_vocab(&[]), Err(Error::EmptyCorpus(_))));
    }

    #[test]
    fn encoding_and_line_starts() {
        let (norm, _) = normalize_trace(&parse_trace_str("C ls\nC cd src", "u").unwrap());
        let vocab = build_vocab(std::slice::from_ref(&norm)).unwrap();
        let enc = encode(std::slice::from_ref(&norm), &vocab).unwrap();
        assert_eq!(enc[0].line_starts, vec![0, 1]);
        let expected: Vec<_> = ["ls", "cd", "filename"]
            .iter()
            .map(|t| vocab.id(t).unwrap())
            .collect();
        assert_eq!(enc[0].ids, expected);

        let other = NormalizedTrace {
            user_id: "v".into(),
            lines: vec![vec![Token::from_word("vi")]],
        };
        match encode(&[other], &vocab) {
            Err(Error::OutOfVocabulary(t)) => assert_eq!(t, "vi"),
            r => panic!("expected oov, got {r:?}"),
        }
    }

    #[test]
    fn encode_exact_ids() {
        let vocab = Vocab::from_counts([
            ("a".to_string(), 9, true),
            ("filename".to_string(), 8, false),
            ("b".to_string(), 7, true),
            ("ls".to_string(), 6, true),
        ])
        .unwrap();
        let stream = NormalizedTrace {
            user_id: "u".into(),
            lines: vec![vec![Token::from_word("ls"), Token::from_word("filename")]],
        };
        assert_eq!(encode(&[stream], &vocab).unwrap()[0].ids, vec![3, 1]);
    }

    #[test]
    fn aliases_apply_only_after_definition() {
        let trace = parse_trace_str("C ll x\nA ll=ls -l\nC ll x\nC sl\nE\n", "u").unwrap();
        let (norm, stats) = normalize_trace(&trace);
        assert_eq!(words(&norm.lines[0]), ["ll", "filename"]);
        assert_eq!(words(&norm.lines[1]), ["ls", "parameter", "filename"]);
        assert_eq!(norm.lines.len(), 2);
        assert_eq!(stats.removed_commands, 1);
    }

    #[test]
    fn vocab_and_corpus_artifacts_reload() {
        let trace = parse_trace_str("C ls -l\nC cd src\nC ls\nC vi a b", "u1").unwrap();
        let (norm, _) = normalize_trace(&trace);
        let vocab = build_vocab(std::slice::from_ref(&norm)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (vp, cp) = (
            dir.path().join("vocab.txt"),
            dir.path().join("commands.txt"),
        );
        vocab.save(&vp, &cp).unwrap();
        let text = fs::read_to_string(&vp).unwrap();
        assert_eq!(text.lines().next(), Some("filename 0 3"));
        assert_eq!(Vocab::load(&vp, &cp).unwrap(), vocab);

        write_corpus(&dir.path().join("corpus"), std::slice::from_ref(&norm)).unwrap();
        let back = read_corpus(&dir.path().join("corpus")).unwrap();
        assert_eq!(back, vec![norm]);
    }
}
