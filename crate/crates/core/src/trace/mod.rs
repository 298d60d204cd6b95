//! Per-user session traces.
//!
//! The core reads a simple line-oriented format, one record per line:
//!
//! ```text
//! S <session info>      session start
//! C <command line>      command as typed
//! D <directory>         current working directory
//! A <name>=<expansion>  alias definition
//! E [message]           the preceding command failed
//! ```
//!
//! Any other line becomes an [`RecordTag::Other`] record carrying the whole
//! line, so parsing never drops input. Raw Greenberg files go through
//! [`greenberg`] first.

pub mod greenberg;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum RecordTag {
    SessionStart,
    Command,
    Directory,
    AliasDef,
    ErrorMark,
    Other,
}

impl RecordTag {
    pub fn letter(self) -> Option<char> {
        match self {
            RecordTag::SessionStart => Some('S'),
            RecordTag::Command => Some('C'),
            RecordTag::Directory => Some('D'),
            RecordTag::AliasDef => Some('A'),
            RecordTag::ErrorMark => Some('E'),
            RecordTag::Other => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub tag: RecordTag,
    /// For [`RecordTag::Other`] this is the complete original line.
    pub payload: String,
    /// 1-based line number in the source file.
    pub line_no: usize,
}

impl RawRecord {
    /// Splits an alias payload `name=expansion` at the first `=`.
    pub fn alias_parts(&self) -> Option<(&str, &str)> {
        if self.tag != RecordTag::AliasDef {
            return None;
        }
        split_alias(&self.payload)
    }
}

fn split_alias(payload: &str) -> Option<(&str, &str)> {
    let (name, expansion) = payload.split_once('=')?;
    let name = name.trim();
    if name.is_empty() || name.chars().any(char::is_whitespace) {
        return None;
    }
    Some((name, expansion.trim()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserTrace {
    pub user_id: String,
    pub records: Vec<RawRecord>,
    /// Final alias table after all definitions (last definition wins).
    pub aliases: BTreeMap<String, String>,
    /// Number of lines that did not match a known tag.
    pub unrecognized: usize,
}

impl UserTrace {
    pub fn commands(&self) -> impl Iterator<Item = &RawRecord> {
        self.records.iter().filter(|r| r.tag == RecordTag::Command)
    }

    /// Serializes back to the normalized line format. Parsing the result
    /// yields an identical trace.
    pub fn to_normalized(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&format_record(record));
            out.push('\n');
        }
        out
    }
}

pub fn format_record(record: &RawRecord) -> String {
    match record.tag.letter() {
        None => record.payload.clone(),
        Some(letter) if record.payload.is_empty() => letter.to_string(),
        Some(letter) => format!("{letter} {}", record.payload),
    }
}

/// Classifies one line of the normalized format.
fn classify(line: &str) -> (RecordTag, String) {
    let other = || (RecordTag::Other, line.to_string());
    let mut chars = line.chars();
    let Some(letter) = chars.next() else {
        return other();
    };
    let rest = chars.as_str();
    // Tag letter must stand alone: "C ls" or "S", never "Cls".
    if !(rest.is_empty() || rest.starts_with(char::is_whitespace)) {
        return other();
    }
    let payload = rest.trim();
    let tag = match letter {
        'S' => RecordTag::SessionStart,
        'C' if !payload.is_empty() => RecordTag::Command,
        'D' => RecordTag::Directory,
        'A' if split_alias(payload).is_some() => RecordTag::AliasDef,
        'E' => RecordTag::ErrorMark,
        _ => return other(),
    };
    // Trailing/leading whitespace in the payload would not survive a
    // round-trip unless it is trimmed here; lines where trimming loses
    // information are kept verbatim as Other.
    let canonical = if payload.is_empty() {
        letter.to_string()
    } else {
        format!("{letter} {payload}")
    };
    if canonical != line {
        return other();
    }
    (tag, payload.to_string())
}

/// Parses one user's trace in the normalized line format.
pub fn parse_trace<R: BufRead>(reader: R, user_id: &str) -> Result<UserTrace> {
    let mut records = Vec::new();
    let mut aliases = BTreeMap::new();
    let mut unrecognized = 0;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| Error::Io {
            source_name: user_id.to_string(),
            line: line_no,
            source,
        })?;
        let (tag, payload) = classify(&line);
        match tag {
            RecordTag::Other => unrecognized += 1,
            RecordTag::AliasDef => {
                let (name, expansion) = split_alias(&payload).expect("classified as alias");
                aliases.insert(name.to_string(), expansion.to_string());
            }
            _ => {}
        }
        records.push(RawRecord {
            tag,
            payload,
            line_no,
        });
    }
    Ok(UserTrace {
        user_id: user_id.to_string(),
        records,
        aliases,
        unrecognized,
    })
}

pub fn parse_trace_str(text: &str, user_id: &str) -> Result<UserTrace> {
    parse_trace(text.as_bytes(), user_id)
}

pub fn parse_trace_file(path: &Path) -> Result<UserTrace> {
    let file = fs::File::open(path).map_err(|e| Error::file(path, e))?;
    parse_trace(BufReader::new(file), &user_id_for(path))
}

/// User id derived from a trace file name (stem without extension).
pub fn user_id_for(path: &Path) -> String {
    path.file_stem()
        .or_else(|| path.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Selects which files of a directory belong to the user group.
#[derive(Debug, Clone, Default)]
pub enum UserFilter {
    #[default]
    All,
    /// Exact file stems.
    Only(BTreeSet<String>),
    /// File names starting with a prefix, e.g. `scientist-`.
    Prefix(String),
}

impl UserFilter {
    pub fn accepts(&self, file_name: &str) -> bool {
        match self {
            UserFilter::All => !file_name.starts_with('.'),
            UserFilter::Only(names) => names.contains(&user_id_for(Path::new(file_name))),
            UserFilter::Prefix(prefix) => file_name.starts_with(prefix.as_str()),
        }
    }
}

#[derive(Debug)]
pub struct GroupLoad {
    pub traces: Vec<UserTrace>,
    pub failures: Vec<(PathBuf, Error)>,
}

/// Lists the regular files of `dir` accepted by `filter`, sorted by name.
pub fn list_user_files(dir: &Path, filter: &UserFilter) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::file(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::file(dir, e))?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        if filter.accepts(&name) {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// Loads every accepted trace file of a directory. Files are parsed in
/// parallel; the result is ordered by file name. A file that fails to parse
/// is reported in `failures` and does not abort the load.
pub fn load_user_group(dir: &Path, filter: &UserFilter) -> Result<GroupLoad> {
    load_with(dir, filter, parse_trace_file)
}

pub(crate) fn load_with<F>(dir: &Path, filter: &UserFilter, parse: F) -> Result<GroupLoad>
where
    F: Fn(&Path) -> Result<UserTrace> + Sync,
{
    let files = list_user_files(dir, filter)?;
    if files.is_empty() {
        return Err(Error::EmptyCorpus(format!(
            "no trace files matched in {}",
            dir.display()
        )));
    }
    let parsed: Vec<_> = files
        .par_iter()
        .map(|path| (path.clone(), parse(path)))
        .collect();
    let mut traces = Vec::new();
    let mut failures = Vec::new();
    for (path, result) in parsed {
        match result {
            Ok(trace) => traces.push(trace),
            Err(err) => failures.push((path, err)),
        }
    }
    Ok(GroupLoad { traces, failures })
}
