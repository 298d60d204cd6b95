//! `cmdseer`: next-command prediction pipeline and interactive REPL.

use std::fs::OpenOptions;
use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use cmdseer_core::config::{PipelineConfig, CONFIG_ENV};
use cmdseer_core::embed::Method;
use cmdseer_core::normalize::Vocab;
use cmdseer_core::pipeline::{self, Artifacts};
use cmdseer_core::repl::StepOutput;

#[derive(Parser)]
#[command(
    name = "cmdseer",
    version,
    about = "Predict the next shell command from session history"
)]
#[command(arg_required_else_help = true)]
struct Cli {
    /// Config file (`key = value` lines). Defaults to $CMDSEER_CONFIG.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory holding every generated artifact.
    #[arg(long, short = 'a', global = true)]
    artifacts: Option<PathBuf>,

    /// Seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// No progress messages on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read raw per-user trace files into the artifact directory.
    Ingest(IngestArgs),
    /// Normalize ingested traces and build the vocabulary.
    Preprocess,
    /// Build the command synonym knowledge base from manual pages.
    KbBuild(KbArgs),
    /// Train command embeddings.
    Embed(EmbedArgs),
    /// Train the next-command model.
    Train(TrainArgs),
    /// Run the evaluation protocol and write report tables.
    Eval(EvalArgs),
    /// Suggest the next command after the given command lines.
    Predict(PredictArgs),
    /// Interactive suggestions; entered lines are never executed.
    Repl(ReplArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Directory of per-user trace files.
    #[arg(long)]
    traces: Option<PathBuf>,
    /// Input files use the Greenberg dataset format.
    #[arg(long)]
    greenberg: bool,
    /// Users to load: `a,b,c` or a file-name prefix such as `scientist-*`.
    #[arg(long)]
    users: Option<String>,
}

#[derive(Args)]
struct KbArgs {
    /// Directory with one `<command>.txt` manual page per command.
    #[arg(long)]
    man_dir: Option<PathBuf>,
    /// Neighbours kept per command.
    #[arg(long)]
    neighbors: Option<usize>,
}

#[derive(Args)]
struct MethodArg {
    /// Embedding method: sgns, glove or joint.
    #[arg(long, short)]
    method: Option<Method>,
}

#[derive(Args)]
struct EmbedArgs {
    #[command(flatten)]
    method: MethodArg,
    #[arg(long)]
    dim: Option<usize>,
    /// Co-occurrence window in tokens.
    #[arg(long)]
    window: Option<usize>,
    /// Weight of the knowledge-base term (joint only).
    #[arg(long)]
    lambda: Option<f64>,
    /// Training epochs of the embedding trainer.
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    batch_size: Option<usize>,
    /// Maximum number of epochs.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    context_len: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    method: MethodArg,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    method: MethodArg,
    #[command(flatten)]
    model: ModelArgs,
    /// Cross-validation fold counts, e.g. `--folds 10` or `--folds 5,10`.
    #[arg(long, value_delimiter = ',')]
    folds: Option<Vec<usize>>,
    /// Sweep the configured batch-size grid instead of the single batch size.
    #[arg(long)]
    grid: bool,
    /// Batch sizes for `--grid`, comma separated.
    #[arg(long, value_delimiter = ',')]
    batch_sizes: Option<Vec<usize>>,
}

#[derive(Args)]
struct SuggestArgs {
    #[command(flatten)]
    method: MethodArg,
    /// Number of suggestions.
    #[arg(long, short)]
    k: Option<usize>,
    /// Alias file: `name=expansion` per line.
    #[arg(long)]
    aliases: Option<PathBuf>,
    /// Print JSON lines instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    common: SuggestArgs,
    /// Command lines entered so far, oldest first.
    #[arg(required = true)]
    lines: Vec<String>,
}

#[derive(Args)]
struct ReplArgs {
    #[command(flatten)]
    common: SuggestArgs,
    /// Append every entered line to this history file.
    #[arg(long)]
    record: Option<PathBuf>,
}

fn base_config(cli: &Cli) -> Result<PipelineConfig> {
    let path = cli
        .config
        .clone()
        .or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    let mut cfg = match path {
        Some(p) => PipelineConfig::from_file(&p)?,
        None => PipelineConfig::default(),
    };
    if let Some(dir) = &cli.artifacts {
        cfg.artifact_dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.model.seed = seed;
    }
    Ok(cfg)
}

fn apply_method(cfg: &mut PipelineConfig, m: &MethodArg) {
    if let Some(method) = m.method {
        cfg.method = method;
    }
}

fn apply_model(cfg: &mut PipelineConfig, m: &ModelArgs) {
    let model = &mut cfg.model;
    if let Some(v) = m.batch_size {
        model.batch_size = v;
    }
    if let Some(v) = m.epochs {
        model.max_epochs = v;
    }
    if let Some(v) = m.lr {
        model.learning_rate = v;
    }
    if let Some(v) = m.dropout {
        model.dropout = v;
    }
    if let Some(v) = m.context_len {
        model.context_len = v;
    }
    if let Some(v) = m.hidden {
        model.hidden1 = v;
        model.hidden2 = v;
    }
}

fn apply_suggest(cfg: &mut PipelineConfig, s: &SuggestArgs) {
    apply_method(cfg, &s.method);
    if let Some(k) = s.k {
        cfg.suggestions = k;
    }
    if let Some(p) = &s.aliases {
        cfg.alias_file = Some(p.clone());
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = base_config(&cli)?;
    let quiet = cli.quiet;
    let log = move |msg: String| {
        if !quiet {
            eprintln!("{msg}");
        }
    };
    match cli.command {
        Command::Ingest(a) => {
            if let Some(t) = a.traces {
                cfg.trace_dir = Some(t);
            }
            cfg.greenberg |= a.greenberg;
            if a.users.is_some() {
                cfg.users = a.users;
            }
            print_json(&pipeline::ingest(&cfg, &log)?)?;
        }
        Command::Preprocess => print_json(&pipeline::preprocess(&cfg, &log)?)?,
        Command::KbBuild(a) => {
            if let Some(d) = a.man_dir {
                cfg.man_dir = Some(d);
            }
            if let Some(n) = a.neighbors {
                cfg.kb_neighbors = n;
            }
            print_json(&pipeline::kb_build(&cfg, &log)?)?;
        }
        Command::Embed(a) => {
            apply_method(&mut cfg, &a.method);
            if let Some(v) = a.dim {
                cfg.dim = v;
            }
            if let Some(v) = a.window {
                cfg.window = v;
            }
            if let Some(v) = a.lambda {
                cfg.lambda = v;
            }
            if let Some(v) = a.epochs {
                cfg.glove_epochs = v;
                cfg.sgns_epochs = v;
            }
            let emb = pipeline::embed(&cfg, cfg.method, &log)?;
            let path = Artifacts::new(&cfg.artifact_dir).embeddings(cfg.method);
            print_json(&serde_json::json!({
                "method": cfg.method,
                "rows": emb.rows(),
                "dim": emb.dim(),
                "path": path,
            }))?;
        }
        Command::Train(a) => {
            apply_method(&mut cfg, &a.method);
            apply_model(&mut cfg, &a.model);
            let history = pipeline::train(&cfg, cfg.method, &log)?;
            print_json(&history)?;
        }
        Command::Eval(a) => {
            apply_method(&mut cfg, &a.method);
            apply_model(&mut cfg, &a.model);
            if let Some(f) = a.folds {
                cfg.folds = f;
            }
            if let Some(b) = a.batch_sizes {
                cfg.batch_sizes = b;
            } else if !a.grid {
                cfg.batch_sizes = vec![cfg.model.batch_size];
            }
            let out = pipeline::evaluate(&cfg, cfg.method, &log)?;
            print!("{}", out.grid.token.to_tsv());
            print!("{}", out.grid.command.to_tsv());
            for b in &out.baselines {
                print!("{}", b.to_tsv());
            }
        }
        Command::Predict(a) => {
            apply_suggest(&mut cfg, &a.common);
            let out = pipeline::predict(&cfg, cfg.method, &a.lines)?;
            let vocab = pipeline::load_vocab(&Artifacts::new(&cfg.artifact_dir))?;
            if a.common.json {
                println!("{}", out.to_json());
            } else {
                print!("{}", out.to_text(&vocab));
            }
        }
        Command::Repl(a) => {
            apply_suggest(&mut cfg, &a.common);
            if a.record.is_some() {
                cfg.history_file = a.record;
            }
            repl(&cfg, a.common.json)?;
        }
    }
    Ok(())
}

fn repl(cfg: &PipelineConfig, json: bool) -> Result<()> {
    let mut state = pipeline::open_repl(cfg, cfg.method)?;
    let mut history = match &cfg.history_file {
        Some(p) => Some(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .with_context(|| format!("opening history file {}", p.display()))?,
        ),
        None => None,
    };
    let stdin = io::stdin();
    let mut stdout = io::stdout().lock();
    if !json {
        writeln!(
            stdout,
            "cmdseer: {} suggestions from the {} model; commands are not executed. Ctrl-D to quit.",
            state.k, cfg.method
        )?;
    }
    let first = state.step("")?;
    show(&mut stdout, &first, &state.vocab, json)?;
    for line in stdin.lock().lines() {
        let line = line?;
        if let Some(h) = history.as_mut() {
            if !line.trim().is_empty() {
                writeln!(h, "{line}")?;
            }
        }
        let step = state.step(&line)?;
        show(&mut stdout, &step, &state.vocab, json)?;
        stdout.flush()?;
    }
    Ok(())
}

fn show(out: &mut impl Write, step: &StepOutput, vocab: &Vocab, json: bool) -> Result<()> {
    if json {
        writeln!(out, "{}", step.to_json())?;
    } else {
        write!(out, "{}", step.to_text(vocab))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let kind = err
                .downcast_ref::<cmdseer_core::Error>()
                .map_or("other", |e| e.kind());
            let msg = format!("{err:#}").replace('\n', " ");
            eprintln!("error[{kind}]: {msg}");
            ExitCode::FAILURE
        }
    }
}
