//! `polysim` command-line entry point.
//!
//! Exit status: 0 success, 1 usage, 2 data error, 3 external service.

mod commands;
mod error;
mod manifest;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use polysim::dataset::ParseMode;
use polysim::experiments::OfficialRow;
use polysim::metrics::{Pooling, Subtask};

use commands::Ctx;
use error::CliError;
use settings::{Overrides, Resolved};

#[derive(Parser)]
#[command(name = "polysim", version, about = "Contextual word-pair similarity through translation ensembles")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for the synthetic-hash encoder backend.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Abort on the first malformed dataset row (default).
    #[arg(long, global = true, conflicts_with = "lenient")]
    strict: bool,
    /// Skip malformed dataset rows and report them.
    #[arg(long, global = true)]
    lenient: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override the contextual-channel weight.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Override the static-channel weight.
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Override the extra languages (comma-separated; empty for none).
    #[arg(long, global = true)]
    languages: Option<String>,
    /// Override the translation engine id.
    #[arg(long = "engine-id", global = true)]
    engine_id: Option<String>,
    /// Subtask 2 pooling.
    #[arg(long, global = true, value_enum)]
    pooling: Option<PoolingArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PoolingArg {
    Pooled,
    PerContextMean,
}

impl From<PoolingArg> for Pooling {
    fn from(p: PoolingArg) -> Self {
        match p {
            PoolingArg::Pooled => Pooling::Pooled,
            PoolingArg::PerContextMean => Pooling::PerContextMean,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Canonical,
    Tsv,
}

#[derive(Subcommand)]
enum Command {
    /// Import a dataset into the canonical format.
    Ingest {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "tsv")]
        format: Format,
        #[arg(long, default_value = "<strong>")]
        open: String,
        #[arg(long, default_value = "</strong>")]
        close: String,
        /// Source language of TSV rows.
        #[arg(long, default_value = "en")]
        lang: String,
        /// Output file (default: <out>/dataset.jsonl).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Translate the dataset, extending the cache, and write aligned views.
    Translate {
        /// Target language (repeatable; default: the run file's languages).
        #[arg(long = "lang")]
        langs: Vec<String>,
    },
    /// Compile text vector files into the binary store format.
    Embed {
        #[arg(long)]
        lang: Option<String>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        preserve_case: bool,
    },
    /// Write subtask prediction files.
    Score,
    /// Score a prediction file against gold.
    Evaluate {
        #[arg(long, value_parser = parse_subtask)]
        subtask: Subtask,
        #[arg(long)]
        pred: PathBuf,
        /// Canonical dataset with gold scores (default: the run file's).
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Evaluate a grid of (alpha, beta) weights.
    Sweep {
        /// Points as `alpha:beta,alpha:beta,...`.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long = "subtask", value_parser = parse_subtask)]
        subtasks: Vec<Subtask>,
    },
    /// Add languages one at a time while the score improves.
    GreedyLangs {
        /// Comma-separated candidates (default: run file languages, else all).
        #[arg(long)]
        candidates: Option<String>,
        #[arg(long, value_parser = parse_subtask, default_value = "1")]
        subtask: Subtask,
    },
    /// Evaluate the same configuration with several engines' translations.
    CompareEngines {
        #[arg(long = "engine", required = true)]
        engines: Vec<String>,
        #[arg(long = "subtask", value_parser = parse_subtask)]
        subtasks: Vec<Subtask>,
    },
    /// Run a named official configuration.
    Official {
        #[arg(value_parser = parse_row)]
        row: OfficialRow,
    },
}

fn parse_subtask(s: &str) -> Result<Subtask, String> {
    s.parse::<u8>()
        .ok()
        .and_then(Subtask::from_number)
        .ok_or_else(|| format!("subtask must be 1 or 2, got {s:?}"))
}

fn parse_row(s: &str) -> Result<OfficialRow, String> {
    s.parse()
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect()
}

fn both_if_empty(subtasks: Vec<Subtask>) -> Vec<Subtask> {
    if subtasks.is_empty() {
        vec![Subtask::Change, Subtask::Similarity]
    } else {
        subtasks
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = cli.global;
    if let Some(n) = g.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    let ctx = Ctx {
        out: g.out.clone(),
        mode: if g.lenient { ParseMode::Lenient } else { ParseMode::Strict },
    };
    let overrides = Overrides {
        alpha: g.alpha,
        beta: g.beta,
        languages: g.languages.as_deref().map(split_list),
        engine: g.engine_id.clone(),
        seed: g.seed,
        pooling: g.pooling.map(Pooling::from),
    };
    let resolved = g.config.as_deref().map(|p| Resolved::load(p, &overrides)).transpose()?;
    let need = |r: &Option<Resolved>| -> Result<Resolved, CliError> {
        r.clone().ok_or_else(|| CliError::usage("this command needs --config"))
    };

    match cli.command {
        Command::Ingest {
            input,
            format,
            open,
            close,
            lang,
            output,
        } => commands::ingest(
            &ctx,
            commands::IngestArgs {
                input,
                tsv: matches!(format, Format::Tsv),
                open,
                close,
                lang,
                output,
            },
        ),
        Command::Translate { langs } => {
            let langs = (!langs.is_empty()).then_some(langs);
            commands::translate(&need(&resolved)?, &ctx, langs)
        }
        Command::Embed {
            lang,
            input,
            output,
            limit,
            preserve_case,
        } => commands::embed(
            resolved.as_ref(),
            &ctx,
            commands::EmbedArgs {
                lang,
                input,
                output,
                limit,
                preserve_case,
            },
        ),
        Command::Score => commands::score(&need(&resolved)?, &ctx),
        Command::Evaluate {
            subtask,
            pred,
            gold,
            json,
        } => {
            let pooling = resolved
                .as_ref()
                .map(|r| r.settings.pooling)
                .or(overrides.pooling)
                .unwrap_or_default();
            commands::evaluate_cmd(
                resolved.as_ref(),
                &ctx,
                commands::EvaluateArgs {
                    subtask,
                    pred,
                    gold,
                    pooling,
                    json,
                },
            )
        }
        Command::Sweep { grid, subtasks } => commands::sweep(&need(&resolved)?, &ctx, grid, both_if_empty(subtasks)),
        Command::GreedyLangs { candidates, subtask } => {
            commands::greedy(&need(&resolved)?, &ctx, candidates.as_deref().map(split_list), subtask)
        }
        Command::CompareEngines { engines, subtasks } => {
            commands::compare(&need(&resolved)?, &ctx, engines, both_if_empty(subtasks))
        }
        Command::Official { row } => commands::official(&need(&resolved)?, &ctx, row),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}
