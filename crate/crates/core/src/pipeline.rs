//! Pipeline stages over an artifact directory.
//!
//! ```text
//! traces/<user>.txt        ingested traces, normalized line format
//! corpus/<user>.txt        one normalized command line per line
//! vocab.txt commands.txt   vocabulary and its command-name ids
//! kb.txt                   synonym neighbours
//! embeddings.<method>.txt
//! model.<method>.bin       history.<method>.jsonl
//! report.<method>.{token,command}.tsv   report.<method>.jsonl
//! report.baselines.tsv     report.baselines.jsonl
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{require_dir, require_file, PipelineConfig};
use crate::embed::{self, build_cooccurrence, EmbeddingMatrix, JointConfig, Method};
use crate::error::{Error, Result};
use crate::eval::{self, Baseline, EvalReport, GridData, GridReports};
use crate::kb::{self, KnowledgeBase};
use crate::model::{self, io as model_io, make_training_pairs, Model, TrainHistory};
use crate::normalize::{self, TokenStream, Vocab};
use crate::repl::{self, ReplState, StepOutput};
use crate::trace::{self, greenberg, UserFilter};

/// Progress sink; messages are single lines.
pub type Log<'a> = &'a (dyn Fn(String) + Sync);

pub fn silent(_: String) {}

#[derive(Debug, Clone)]
pub struct Artifacts {
    pub dir: PathBuf,
}

impl Artifacts {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Artifacts { dir: dir.into() }
    }

    pub fn traces(&self) -> PathBuf {
        self.dir.join("traces")
    }
    pub fn corpus(&self) -> PathBuf {
        self.dir.join("corpus")
    }
    pub fn vocab(&self) -> PathBuf {
        self.dir.join("vocab.txt")
    }
    pub fn commands(&self) -> PathBuf {
        self.dir.join("commands.txt")
    }
    pub fn kb(&self) -> PathBuf {
        self.dir.join("kb.txt")
    }
    pub fn embeddings(&self, m: Method) -> PathBuf {
        self.dir.join(format!("embeddings.{m}.txt"))
    }
    pub fn model(&self, m: Method) -> PathBuf {
        self.dir.join(format!("model.{m}.bin"))
    }
    pub fn history(&self, m: Method) -> PathBuf {
        self.dir.join(format!("history.{m}.jsonl"))
    }
    pub fn report(&self, tag: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("report.{tag}.{ext}"))
    }

    fn ensure(&self) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::file(&self.dir, e))
    }

    fn require(&self, path: &Path, producer: &str) -> Result<()> {
        require_file(path, &format!("artifact (run `{producer}` first)"))
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::file(path, e))
}

/// `a,b,c` selects users by id; `prefix*` selects by file-name prefix.
pub fn parse_user_filter(spec: Option<&str>) -> UserFilter {
    match spec.map(str::trim) {
        None | Some("") | Some("*") => UserFilter::All,
        Some(s) => match s.strip_suffix('*') {
            Some(prefix) => UserFilter::Prefix(prefix.to_string()),
            None => UserFilter::Only(
                s.split(',')
                    .map(|u| u.trim().to_string())
                    .collect::<BTreeSet<_>>(),
            ),
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestSummary {
    pub users: usize,
    pub records: usize,
    pub commands: usize,
    pub unrecognized: usize,
    pub failures: Vec<String>,
}

pub fn ingest(cfg: &PipelineConfig, log: Log<'_>) -> Result<IngestSummary> {
    let dir = require_dir(cfg.trace_dir.as_deref(), "trace_dir")?;
    let filter = parse_user_filter(cfg.users.as_deref());
    let group = if cfg.greenberg {
        greenberg::load_greenberg_group(&dir, &filter)?
    } else {
        trace::load_user_group(&dir, &filter)?
    };
    let failures: Vec<String> = group
        .failures
        .iter()
        .map(|(p, e)| format!("{}: {e}", p.display()))
        .collect();
    for f in &failures {
        log(format!("skipped {f}"));
    }
    if group.traces.is_empty() {
        return Err(Error::EmptyCorpus(format!(
            "no trace in {} could be read",
            dir.display()
        )));
    }
    let art = Artifacts::new(&cfg.artifact_dir);
    let out = art.traces();
    if out.exists() {
        fs::remove_dir_all(&out).map_err(|e| Error::file(&out, e))?;
    }
    fs::create_dir_all(&out).map_err(|e| Error::file(&out, e))?;
    let mut summary = IngestSummary {
        users: group.traces.len(),
        records: 0,
        commands: 0,
        unrecognized: 0,
        failures,
    };
    for t in &group.traces {
        summary.records += t.records.len();
        summary.commands += t.commands().count();
        summary.unrecognized += t.unrecognized;
        write(&out.join(format!("{}.txt", t.user_id)), &t.to_normalized())?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreprocessSummary {
    pub users: usize,
    pub lines: usize,
    pub tokens: usize,
    pub vocab_size: usize,
    pub commands: usize,
    pub removed_commands: usize,
    pub dangling_marks: usize,
    pub unrecognized: usize,
}

pub fn preprocess(cfg: &PipelineConfig, log: Log<'_>) -> Result<PreprocessSummary> {
    let art = Artifacts::new(&cfg.artifact_dir);
    let dir = require_dir(
        Some(&art.traces()),
        "ingested trace directory (run `ingest` first)",
    )?;
    let group = trace::load_user_group(&dir, &UserFilter::All)?;
    for (p, e) in &group.failures {
        log(format!("skipped {}: {e}", p.display()));
    }
    let (streams, stats) = normalize::normalize_all(&group.traces);
    let vocab = normalize::build_vocab(&streams)?;
    let corpus = art.corpus();
    if corpus.exists() {
        fs::remove_dir_all(&corpus).map_err(|e| Error::file(&corpus, e))?;
    }
    normalize::write_corpus(&corpus, &streams)?;
    vocab.save(&art.vocab(), &art.commands())?;
    Ok(PreprocessSummary {
        users: streams.len(),
        lines: stats.lines,
        tokens: stats.tokens,
        vocab_size: vocab.len(),
        commands: vocab.command_ids().len(),
        removed_commands: stats.removed_commands,
        dangling_marks: stats.dangling_marks,
        unrecognized: stats.unrecognized,
    })
}

pub fn load_vocab(art: &Artifacts) -> Result<Vocab> {
    art.require(&art.vocab(), "preprocess")?;
    art.require(&art.commands(), "preprocess")?;
    Vocab::load(&art.vocab(), &art.commands())
}

/// Vocabulary and per-user id streams.
pub fn load_streams(art: &Artifacts) -> Result<(Vocab, Vec<TokenStream>)> {
    let vocab = load_vocab(art)?;
    let corpus = normalize::read_corpus(&art.corpus())?;
    let streams = normalize::encode(&corpus, &vocab)?;
    Ok((vocab, streams))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KbSummary {
    pub documents: usize,
    pub pairs: usize,
}

pub fn kb_build(cfg: &PipelineConfig, log: Log<'_>) -> Result<KbSummary> {
    let dir = require_dir(cfg.man_dir.as_deref(), "man_dir")?;
    let art = Artifacts::new(&cfg.artifact_dir);
    art.ensure()?;
    let mut docs = kb::load_man_dir(&dir)?;
    if art.vocab().is_file() {
        let vocab = load_vocab(&art)?;
        let before = docs.len();
        docs = kb::restrict_to_vocab(docs, &vocab);
        log(format!(
            "{} of {before} manual pages match vocabulary commands",
            docs.len()
        ));
    }
    let kb = kb::build_kb(&docs, cfg.kb_neighbors)?;
    kb.save(&art.kb())?;
    Ok(KbSummary {
        documents: docs.len(),
        pairs: kb.pairs.len(),
    })
}

pub fn embed(cfg: &PipelineConfig, method: Method, log: Log<'_>) -> Result<EmbeddingMatrix> {
    cfg.validate()?;
    let art = Artifacts::new(&cfg.artifact_dir);
    let (vocab, streams) = load_streams(&art)?;
    let ids: Vec<&[u32]> = streams.iter().map(|s| s.ids.as_slice()).collect();
    let emb = match method {
        Method::Sgns => embed::train_sgns(&ids, vocab.len(), &cfg.sgns())?,
        Method::Glove | Method::Joint => {
            let cooc = build_cooccurrence(&ids, vocab.len(), cfg.window)?;
            log(format!(
                "co-occurrence matrix: {} non-zero entries",
                cooc.len()
            ));
            if method == Method::Glove {
                embed::train_glove(&cooc, &cfg.glove())?
            } else {
                art.require(&art.kb(), "kb-build")?;
                let kb = KnowledgeBase::load(&art.kb(), cfg.kb_neighbors)?;
                let (edges, dropped) = embed::resolve_kb(&kb, &vocab);
                log(format!(
                    "{} KB pairs used, {dropped} outside the vocabulary",
                    edges.len()
                ));
                let mut joint = JointConfig::new(cfg.lambda, edges)?;
                joint.weight_by_score = cfg.weight_by_score;
                embed::train_joint(&cooc, &joint, &cfg.glove())?
            }
        }
    };
    art.ensure()?;
    emb.save(&vocab, &art.embeddings(method))?;
    Ok(emb)
}

fn model_config(cfg: &PipelineConfig) -> model::ModelConfig {
    model::ModelConfig {
        seed: cfg.seed,
        ..cfg.model.clone()
    }
}

/// Trains on the chronological training split with the held-out tail as
/// validation and saves the model and its per-epoch history.
pub fn train(cfg: &PipelineConfig, method: Method, log: Log<'_>) -> Result<TrainHistory> {
    cfg.validate()?;
    let art = Artifacts::new(&cfg.artifact_dir);
    let (vocab, streams) = load_streams(&art)?;
    art.require(&art.embeddings(method), &format!("embed --method {method}"))?;
    let emb = EmbeddingMatrix::load(&art.embeddings(method), &vocab, method)?;
    let pairs = make_training_pairs(&streams, cfg.model.context_len);
    if pairs.skipped_streams > 0 {
        log(format!(
            "{} user streams too short for the context length",
            pairs.skipped_streams
        ));
    }
    let (tr, val) = eval::holdout_split(&pairs.examples, cfg.holdout)?;
    log(format!(
        "{} training pairs, {} validation pairs",
        tr.len(),
        val.len()
    ));
    let m = Model::new(vocab.len(), emb.dim(), model_config(cfg), Some(&emb))?;
    let (m, history) = model::train::train_with(m, tr, val, |s| {
        log(format!(
            "epoch {}: train loss {:.4}, val loss {:.4}, val accuracy {:.2}%",
            s.epoch,
            s.train_loss,
            s.val_loss,
            100.0 * s.val_accuracy
        ))
    })?;
    model_io::save(&m, &art.model(method))?;
    let mut lines = String::new();
    for e in &history.epochs {
        lines.push_str(&serde_json::to_string(e).expect("epoch stats serialize"));
        lines.push('\n');
    }
    write(&art.history(method), &lines)?;
    Ok(history)
}

/// Everything `evaluate` wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub grid: GridReports,
    pub baselines: Vec<EvalReport>,
}

pub fn evaluate(cfg: &PipelineConfig, method: Method, log: Log<'_>) -> Result<Evaluation> {
    cfg.validate()?;
    let art = Artifacts::new(&cfg.artifact_dir);
    let (vocab, streams) = load_streams(&art)?;
    art.require(&art.embeddings(method), &format!("embed --method {method}"))?;
    let emb = EmbeddingMatrix::load(&art.embeddings(method), &vocab, method)?;
    let pairs = make_training_pairs(&streams, cfg.model.context_len);
    let data = GridData {
        examples: &pairs.examples,
        vocab_size: vocab.len(),
        dim: emb.dim(),
        embedding: Some(&emb),
    };
    let mut grid_cfg = cfg.grid();
    grid_cfg.model = model_config(cfg);
    let grid = eval::run_grid(method.name(), &grid_cfg, &data, log)?;

    let names: Vec<Vec<&str>> = streams
        .iter()
        .map(|s| {
            s.command_names()
                .into_iter()
                .map(|id| vocab.token(id))
                .collect()
        })
        .collect();
    let baselines = [Baseline::MostRecent, Baseline::MostFrequent]
        .into_iter()
        .map(|b| eval::baseline_report(b, &names, cfg.holdout, &cfg.folds))
        .collect::<Result<Vec<_>>>()?;

    let tag = method.name();
    write(&art.report(tag, "token.tsv"), &grid.token.to_tsv())?;
    write(&art.report(tag, "command.tsv"), &grid.command.to_tsv())?;
    write(
        &art.report(tag, "jsonl"),
        &(grid.token.to_json_lines() + &grid.command.to_json_lines()),
    )?;
    let tsv: String = baselines.iter().map(EvalReport::to_tsv).collect();
    let json: String = baselines.iter().map(EvalReport::to_json_lines).collect();
    write(&art.report("baselines", "tsv"), &tsv)?;
    write(&art.report("baselines", "jsonl"), &json)?;
    Ok(Evaluation { grid, baselines })
}

/// Loads the model, vocabulary and alias file for interactive use.
pub fn open_repl(cfg: &PipelineConfig, method: Method) -> Result<ReplState> {
    let art = Artifacts::new(&cfg.artifact_dir);
    let vocab = load_vocab(&art)?;
    art.require(&art.model(method), &format!("train --method {method}"))?;
    let mut model = model_io::load(&art.model(method), &vocab)?;
    model.config.seed = cfg.seed;
    let aliases = match &cfg.alias_file {
        Some(p) => repl::load_aliases(p)?,
        None => Default::default(),
    };
    ReplState::new(model, vocab, aliases, cfg.suggestions)
}

/// Feeds `lines` through a fresh REPL state and returns the final output.
pub fn predict(cfg: &PipelineConfig, method: Method, lines: &[String]) -> Result<StepOutput> {
    let mut state = open_repl(cfg, method)?;
    let mut out = state.step("")?;
    let mut oov = Vec::new();
    for line in lines {
        out = state.step(line)?;
        oov.append(&mut out.oov);
    }
    out.oov = oov;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn user_filters() {
        assert!(matches!(parse_user_filter(None), UserFilter::All));
        assert!(matches!(parse_user_filter(Some("sci*")), UserFilter::Prefix(p) if p == "sci"));
        match parse_user_filter(Some("a, b")) {
            UserFilter::Only(s) => assert_eq!(s.into_iter().collect::<Vec<_>>(), ["a", "b"]),
            _ => panic!(),
        }
    }
}
