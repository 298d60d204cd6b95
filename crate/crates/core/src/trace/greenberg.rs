//! Best-effort adapter from the Greenberg UNIX trace markup to the
//! normalized line format.
//!
//! Assumptions about the original markup, one letter per line:
//!
//! * `S <date>` starts a session and is passed through as `S`.
//! * `E <date>` ends a session. It is dropped: in the normalized format `E`
//!   means "the preceding command failed".
//! * `C <line>` is a command line and opens a command group. The lines that
//!   follow it (`D`, `A`, `H`, `X`) describe that command.
//! * `D <dir>` is the working directory, passed through.
//! * `A <text>` is the alias expansion of the command, `NIL` or empty when
//!   no alias was used. It becomes an `A name=expansion` definition emitted
//!   just before the command. When the expansion ends with the command's
//!   arguments, those arguments are stripped from it.
//! * `H <text>` is history-mechanism use. Dropped.
//! * `X <text>` is the error output, `NIL` or empty when none. A real error
//!   becomes an `E <text>` mark right after the command.
//!
//! Any other non-blank line is passed through untouched, where the core
//! parser records it as an unrecognized line.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::{load_with, parse_trace_str, user_id_for, GroupLoad, UserFilter, UserTrace};
use crate::error::{Error, Result};

#[derive(Default)]
struct Group {
    command: String,
    directory: Option<String>,
    alias: Option<String>,
    error: Option<String>,
}

fn is_nil(text: &str) -> bool {
    text.is_empty() || text.eq_ignore_ascii_case("nil")
}

impl Group {
    fn flush(self, out: &mut Vec<String>) {
        if let Some(dir) = self.directory {
            out.push(format!("D {dir}"));
        }
        let mut words = self.command.splitn(2, char::is_whitespace);
        let name = words.next().unwrap_or_default();
        let args = words.next().unwrap_or_default().trim();
        if let Some(expansion) = self.alias {
            let expansion = if !args.is_empty() && expansion.ends_with(args) {
                expansion[..expansion.len() - args.len()]
                    .trim_end()
                    .to_string()
            } else {
                expansion
            };
            if !name.is_empty() && !expansion.is_empty() && name != expansion {
                out.push(format!("A {name}={expansion}"));
            }
        }
        out.push(format!("C {}", self.command));
        if let Some(err) = self.error {
            out.push(format!("E {err}"));
        }
    }
}

/// Converts Greenberg markup into normalized lines.
pub fn convert<R: BufRead>(reader: R, source_name: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut group: Option<Group> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            source_name: source_name.to_string(),
            line: idx + 1,
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let (tag, rest) = match trimmed.split_once(char::is_whitespace) {
            Some((tag, rest)) => (tag, rest.trim()),
            None => (trimmed, ""),
        };
        match tag {
            "C" => {
                if let Some(g) = group.take() {
                    g.flush(&mut out);
                }
                if !rest.is_empty() {
                    group = Some(Group {
                        command: rest.to_string(),
                        ..Group::default()
                    });
                }
            }
            "D" | "A" | "X" | "H" if group.is_some() => {
                let g = group.as_mut().expect("checked");
                match tag {
                    "D" if !rest.is_empty() => g.directory = Some(rest.to_string()),
                    "A" if !is_nil(rest) => g.alias = Some(rest.to_string()),
                    "X" if !is_nil(rest) => g.error = Some(rest.to_string()),
                    _ => {}
                }
            }
            "D" | "A" | "X" | "H" => {}
            "S" | "E" => {
                if let Some(g) = group.take() {
                    g.flush(&mut out);
                }
                if tag == "S" {
                    out.push(if rest.is_empty() {
                        "S".to_string()
                    } else {
                        format!("S {rest}")
                    });
                }
            }
            _ => {
                if let Some(g) = group.take() {
                    g.flush(&mut out);
                }
                out.push(trimmed.to_string());
            }
        }
    }
    if let Some(g) = group.take() {
        g.flush(&mut out);
    }
    Ok(out)
}

pub fn parse_greenberg_file(path: &Path) -> Result<UserTrace> {
    let file = fs::File::open(path).map_err(|e| Error::file(path, e))?;
    let user_id = user_id_for(path);
    let lines = convert(BufReader::new(file), &user_id)?;
    let mut text = lines.join("\n");
    text.push('\n');
    parse_trace_str(&text, &user_id)
}

/// Like [`super::load_user_group`], reading raw Greenberg files.
pub fn load_greenberg_group(dir: &Path, filter: &UserFilter) -> Result<GroupLoad> {
    load_with(dir, filter, parse_greenberg_file)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::RecordTag;

    const SAMPLE: &str = "\
S Mon Oct 20 14:50:40 1986
C ll /tmp
D /user/u1
A ls -l /tmp
H NIL
X NIL
C sl
D /user/u1
A NIL
H NIL
X sl: Command not found.
C cd src
D /user/u1
A
H
X
E Mon Oct 20 15:02:11 1986
";

    #[test]
    fn converts_groups() {
        let lines = convert(SAMPLE.as_bytes(), "t").unwrap();
        assert_eq!(
            lines,
            [
                "S Mon Oct 20 14:50:40 1986",
                "D /user/u1",
                "A ll=ls -l",
                "C ll /tmp",
                "D /user/u1",
                "C sl",
                "E sl: Command not found.",
                "D /user/u1",
                "C cd src",
            ]
        );
        let trace = parse_trace_str(&lines.join("\n"), "t").unwrap();
        assert_eq!(trace.unrecognized, 0);
        assert_eq!(trace.aliases["ll"], "ls -l");
        assert_eq!(trace.records[6].tag, RecordTag::ErrorMark);
    }
}
