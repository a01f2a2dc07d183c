//! The `dactag` command line: `prepare`, `train`, `eval`, `tag` and `gradcheck`.
//!
//! Settings resolve in three layers: built-in defaults, then the `--config`
//! file, then flags. Exit codes: 0 success, 1 gradient check failure or
//! internal error, 2 config or usage, 3 data, 4 checkpoint.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use log::error;

pub use commands::{
    cmd_eval, cmd_gradcheck, cmd_prepare, cmd_tag, cmd_train, format_tagged, gradcheck_table, PrepareSummary,
    PreparedCorpus, TaggedLine, CHECKPOINT_FILE, CONFIG_FILE, CONVERSATIONS_DIR, REPORT_JSON_FILE, REPORT_TEXT_FILE,
    SPLIT_NAMES, STATS_FILE, TAGS_FILE, VOCAB_FILE,
};
pub use config::{RunConfig, KEYS};

use crate::error::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_CHECKPOINT: i32 = 4;

/// Exit status for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Mapping { .. } => EXIT_CONFIG,
        Error::Checkpoint(_) => EXIT_CHECKPOINT,
        Error::Parse { .. }
        | Error::Structure(_)
        | Error::UnknownTag(_)
        | Error::Format(_)
        | Error::Data(_)
        | Error::Load { .. }
        | Error::EmptySequence(_)
        | Error::Io(_) => EXIT_DATA,
        Error::Dimension { .. } | Error::Index { .. } | Error::Contract(_) | Error::NonFinite(_) => EXIT_FAILURE,
    }
}

#[derive(Debug, Parser)]
#[command(name = "dactag", version, about = "Dialog-act tagging with hierarchical gated recurrent networks")]
pub struct Cli {
    /// key=value settings file applied before flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Extra key=value setting; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize a raw corpus into conversations, vocabulary, tags and length stats.
    Prepare(PrepareArgs),
    /// Train a preset and write the best-validation checkpoint and report.
    Train(TrainArgs),
    /// Accuracy and per-class precision/recall of a checkpoint.
    Eval(EvalArgs),
    /// Tag each sentence of a conversation file.
    Tag(TagArgs),
    /// Finite-difference check of every operation, layer and the full model.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub train_list: Option<PathBuf>,
    #[arg(long)]
    pub valid_list: Option<PathBuf>,
    #[arg(long)]
    pub test_list: Option<PathBuf>,
    /// Tag collapse TSV; the bundled table when absent.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    /// Keep `+` lines as their own class instead of merging them.
    #[arg(long)]
    pub keep_continuations: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Prepared corpus directory.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub gru_bias: bool,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub accumulate: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// train, valid or test.
    #[arg(long)]
    pub split: Option<String>,
    /// A single conversation file instead of a prepared split.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub mapping: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TagArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Second checkpoint whose tags are printed alongside.
    #[arg(long)]
    pub compare: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Deliberately corrupt the gradient of this case.
    #[arg(long)]
    pub corrupt: Option<String>,
}

fn put(cfg: &mut RunConfig, key: &str, value: Option<impl ToString>) -> Result<()> {
    match value {
        Some(v) => cfg.set(key, v.to_string()),
        None => Ok(()),
    }
}

fn put_path(cfg: &mut RunConfig, key: &str, value: &Option<PathBuf>) -> Result<()> {
    put(cfg, key, value.as_ref().map(|p| p.display().to_string()))
}

impl Cli {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for kv in &self.set {
            cfg.apply_text(kv)?;
        }
        put(&mut cfg, "seed", self.seed)?;
        put_path(&mut cfg, "out", &self.out)?;
        match &self.command {
            Command::Prepare(a) => {
                put_path(&mut cfg, "corpus", &a.corpus)?;
                put_path(&mut cfg, "train_list", &a.train_list)?;
                put_path(&mut cfg, "valid_list", &a.valid_list)?;
                put_path(&mut cfg, "test_list", &a.test_list)?;
                put_path(&mut cfg, "mapping", &a.mapping)?;
                if a.keep_continuations {
                    cfg.set("keep_continuations", "true")?;
                }
            }
            Command::Train(a) => {
                put_path(&mut cfg, "data", &a.data)?;
                put(&mut cfg, "preset", a.preset.as_ref())?;
                put(&mut cfg, "epochs", a.epochs)?;
                put_path(&mut cfg, "embeddings", &a.embeddings)?;
                put(&mut cfg, "learning_rate", a.learning_rate)?;
                put(&mut cfg, "clip_norm", a.clip_norm)?;
                put(&mut cfg, "accumulate", a.accumulate)?;
                if a.gru_bias {
                    cfg.set("gru_bias", "true")?;
                }
            }
            Command::Eval(a) => {
                put_path(&mut cfg, "checkpoint", &a.checkpoint)?;
                put_path(&mut cfg, "data", &a.data)?;
                put(&mut cfg, "split", a.split.as_ref())?;
                put_path(&mut cfg, "input", &a.input)?;
                put_path(&mut cfg, "mapping", &a.mapping)?;
            }
            Command::Tag(a) => {
                put_path(&mut cfg, "checkpoint", &a.checkpoint)?;
                put_path(&mut cfg, "input", &a.input)?;
                put_path(&mut cfg, "compare", &a.compare)?;
            }
            Command::Gradcheck(a) => {
                put(&mut cfg, "corrupt", a.corrupt.as_ref())?;
            }
        }
        Ok(cfg)
    }
}

/// Runs one parsed command, printing results to stdout; returns the exit code.
pub fn execute(cli: &Cli) -> Result<i32> {
    let cfg = cli.resolve()?;
    match &cli.command {
        Command::Prepare(_) => {
            let s = cmd_prepare(&cfg)?;
            commands::write_stdout(&format!(
                "train {} / valid {} / test {} conversations\nvocabulary {} tokens, {} classes, {} continuation lines merged\n",
                s.counts[0], s.counts[1], s.counts[2], s.vocab_size, s.num_classes, s.continuations_merged
            ))?;
            for w in &s.warnings {
                commands::write_stdout(&format!("warning: {w}\n"))?;
            }
        }
        Command::Train(_) => {
            let report = cmd_train(&cfg)?;
            commands::write_stdout(&report.to_table())?;
        }
        Command::Eval(_) => {
            let ck = crate::models::Checkpoint::load(&cfg.require_path("checkpoint")?)?;
            let e = cmd_eval(&cfg)?;
            commands::write_stdout(&e.to_table(ck.tags.tags()))?;
        }
        Command::Tag(_) => {
            let lines = cmd_tag(&cfg)?;
            commands::write_stdout(&format_tagged(&lines))?;
        }
        Command::Gradcheck(_) => {
            let results = cmd_gradcheck(&cfg)?;
            commands::write_stdout(&gradcheck_table(&results))?;
            if results.iter().any(|r| !r.passed()) {
                return Ok(EXIT_FAILURE);
            }
        }
    }
    Ok(EXIT_OK)
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
