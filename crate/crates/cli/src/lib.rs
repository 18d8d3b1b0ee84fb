//! The `medreg` command line: corpus generation, splitting, preprocessing,
//! pretraining, training, evaluation, ablation and extraction.
//!
//! Every command writes its outputs plus one `<out>.manifest.json` holding
//! the effective configuration, seeds and content hashes of all inputs and
//! outputs. Failures print one JSON line on stderr and exit non-zero.

pub mod commands;
pub mod error;
pub mod manifest;
pub mod settings;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use error::{error_line, exit, CliError, CliResult, ErrorKind};
pub use manifest::{content_hash, manifest_path, RunManifest};
pub use settings::{Override, Preset, Settings, Source};

#[derive(Debug, Parser)]
#[command(name = "medreg", version, about = "Medication regimen extraction from conversation transcripts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags every command accepts.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Config file of `key = value` lines (default: $MEDREG_CONFIG).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice of the run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = settings::flag_override)]
    pub set: Vec<Override>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelFlags {
    /// Extraction architecture.
    #[arg(long, value_parser = ["qa", "md"])]
    pub model: Option<String>,
    /// Token embedding provider.
    #[arg(long, value_parser = ["lookup", "store", "pseudo"])]
    pub embedding: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic annotated corpus.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Output corpus file (line-delimited JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Split corpus transcript ids into train, validation, test and holdout.
    Split {
        #[command(flatten)]
        common: Common,
        /// Input corpus file.
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        /// Output split file (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn a corpus into model-ready examples.
    Preprocess {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelFlags,
        /// Input corpus file.
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        /// Output examples file (line-delimited JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Pretrain an encoder on grounded summaries.
    Pretrain {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelFlags,
        /// Input corpus file.
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        /// Split file; derived from the seed when absent.
        #[arg(long, value_name = "PATH")]
        split: Option<PathBuf>,
        /// Precomputed vector store for store embeddings.
        #[arg(long, value_name = "PATH")]
        store: Option<PathBuf>,
        /// Output summarizer checkpoint.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a QA or MD extraction model.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelFlags,
        /// Input corpus file.
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        /// Split file; derived from the seed when absent.
        #[arg(long, value_name = "PATH")]
        split: Option<PathBuf>,
        /// Summarizer checkpoint whose encoder and embeddings initialize the model.
        #[arg(long, value_name = "PATH")]
        pretrained_encoder: Option<PathBuf>,
        /// Precomputed vector store for store embeddings.
        #[arg(long, value_name = "PATH")]
        store: Option<PathBuf>,
        /// Output model checkpoint.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a trained model on a held-out split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Input corpus file.
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        /// Split file; derived from the seed when absent.
        #[arg(long, value_name = "PATH")]
        split: Option<PathBuf>,
        /// Model checkpoint.
        #[arg(long, value_name = "PATH")]
        model_path: PathBuf,
        /// Precomputed vector store for store embeddings.
        #[arg(long, value_name = "PATH")]
        store: Option<PathBuf>,
        /// Output report (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Train cold-start and pretrained models on growing training subsets.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelFlags,
        /// Input corpus file.
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        /// Split file; derived from the seed when absent.
        #[arg(long, value_name = "PATH")]
        split: Option<PathBuf>,
        /// Output table (tab-separated).
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract medication regimens from unannotated transcripts.
    Extract {
        #[command(flatten)]
        common: Common,
        /// Transcript file (line-delimited JSON; tags optional).
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
        /// Model checkpoint.
        #[arg(long, value_name = "PATH")]
        model_path: PathBuf,
        /// Output results (line-delimited JSON).
        #[arg(long)]
        out: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate { .. } => "generate",
            Command::Split { .. } => "split",
            Command::Preprocess { .. } => "preprocess",
            Command::Pretrain { .. } => "pretrain",
            Command::Train { .. } => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::Ablate { .. } => "ablate",
            Command::Extract { .. } => "extract",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Generate { common, .. }
            | Command::Split { common, .. }
            | Command::Preprocess { common, .. }
            | Command::Pretrain { common, .. }
            | Command::Train { common, .. }
            | Command::Evaluate { common, .. }
            | Command::Ablate { common, .. }
            | Command::Extract { common, .. } => common,
        }
    }

    fn model_flags(&self) -> Option<&ModelFlags> {
        match self {
            Command::Preprocess { model, .. }
            | Command::Pretrain { model, .. }
            | Command::Train { model, .. }
            | Command::Ablate { model, .. } => Some(model),
            _ => None,
        }
    }

    pub fn out(&self) -> &Path {
        match self {
            Command::Generate { out, .. }
            | Command::Split { out, .. }
            | Command::Preprocess { out, .. }
            | Command::Pretrain { out, .. }
            | Command::Train { out, .. }
            | Command::Evaluate { out, .. }
            | Command::Ablate { out, .. }
            | Command::Extract { out, .. } => out,
        }
    }
}

/// Layers file, environment and flag overrides into the run's settings.
pub fn resolve_settings(command: &Command, env: &[(String, String)]) -> medreg::Result<Settings> {
    let common = command.common();
    let config_path = common.config.clone().or_else(|| {
        env.iter()
            .find(|(k, _)| k == settings::CONFIG_ENV)
            .map(|(_, v)| PathBuf::from(v))
    });
    let mut overrides = match &config_path {
        Some(p) => settings::file_overrides(p)?,
        None => Vec::new(),
    };
    overrides.extend(settings::env_overrides(env.iter().cloned()));
    overrides.extend(common.set.iter().cloned());
    let flag = |key: &str, value: String| Override {
        key: key.to_string(),
        value,
        source: Source::Flag,
    };
    if let Some(seed) = common.seed {
        overrides.push(flag("seed", seed.to_string()));
    }
    if let Some(m) = command.model_flags() {
        if let Some(a) = &m.model {
            overrides.push(flag("model", a.clone()));
        }
        if let Some(e) = &m.embedding {
            overrides.push(flag("embedding", e.clone()));
        }
    }
    Settings::from_overrides(overrides)
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. `env` supplies the `MEDREG_*` layer.
pub fn run<I, T>(args: I, env: &[(String, String)]) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion | K::DisplayHelpOnMissingArgumentOrSubcommand) {
                print!("{e}");
                return if e.kind() == K::DisplayHelpOnMissingArgumentOrSubcommand {
                    exit::USAGE
                } else {
                    exit::OK
                };
            }
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("{}", error_line(ErrorKind::Usage, first));
            return exit::USAGE;
        }
    };
    match commands::execute(&cli.command, env) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("{}", e.to_line());
            e.exit_code()
        }
    }
}
