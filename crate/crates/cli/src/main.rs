use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use latent_lexicon::directions::DirectionRecord;
use latent_lexicon::io;
use latent_lexicon_cli::commands::{self, Experiment, SourceKind, UsageError, Workspace};
use latent_lexicon_cli::config::CliConfig;
use latent_lexicon_cli::server::{self, AppState, TaskQueue};

#[derive(Parser)]
#[command(name = "latent-lexicon", version, about = "Layer-selective directions, oracle corpora and concept distillation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration; defaults apply to missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Top-level seed (per-stage seeds derive from it).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Class name; for `distill` it restricts the corpus to that class.
    #[arg(long, global = true)]
    class: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the direction store.
    GenDirections {
        #[arg(long, value_enum, default_value = "lsd")]
        source: SourceKind,
    },
    /// Render before/after PPM pairs for every direction.
    RenderPairs {
        #[arg(long)]
        directions: Option<PathBuf>,
    },
    /// Describe every direction with the programmatic annotator.
    AnnotateOracle {
        #[arg(long)]
        directions: Option<PathBuf>,
        #[arg(long)]
        annotators: Option<usize>,
    },
    /// Normalize a raw corpus into signed concept tokens.
    Clean {
        #[arg(long)]
        raw: Option<PathBuf>,
    },
    /// Solve for one latent direction per concept token.
    Distill {
        #[arg(long)]
        cleaned: Option<PathBuf>,
        #[arg(long)]
        directions: Option<PathBuf>,
    },
    /// Token counts per class.
    Stats {
        #[arg(long)]
        cleaned: Option<PathBuf>,
    },
    /// Distinct n-grams and inter-annotator BLEU of a raw corpus.
    Diversity {
        #[arg(long)]
        raw: Option<PathBuf>,
    },
    /// Run one evaluation protocol against a distilled vocabulary.
    Eval {
        #[arg(value_enum)]
        experiment: Experiment,
        #[arg(long)]
        vocabulary: Option<PathBuf>,
    },
    /// Serve annotation tasks over HTTP, appending to <out>/raw.jsonl.
    Serve {
        #[arg(long)]
        directions: Option<PathBuf>,
        /// Overrides the configured bind address.
        #[arg(long)]
        bind: Option<String>,
    },
}

fn load_config(common: &Common) -> Result<CliConfig> {
    let mut cfg = CliConfig::load(common.config.as_deref()).map_err(|e| commands::usage(format!("{e:#}")))?;
    if let Some(seed) = common.seed {
        cfg.pipeline.seed = seed;
    }
    if let Some(lambda) = common.lambda {
        cfg.pipeline.lambda = lambda;
    }
    if let Some(alpha) = common.alpha {
        cfg.pipeline.alpha = alpha;
    }
    cfg.validate().map_err(|e| commands::usage(format!("{e:#}")))?;
    commands::apply_class_override(&mut cfg, common.class.as_deref())?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    let ws = Workspace::new(cfg, cli.common.out.clone())?;
    let summary = match &cli.command {
        Command::GenDirections { source } => commands::gen_directions(&ws, *source)?,
        Command::RenderPairs { directions } => commands::render_pairs(&ws, directions.as_deref())?,
        Command::AnnotateOracle {
            directions,
            annotators,
        } => commands::annotate_oracle(&ws, directions.as_deref(), *annotators)?,
        Command::Clean { raw } => commands::clean(&ws, raw.as_deref())?,
        Command::Distill {
            cleaned,
            directions,
        } => commands::distill(
            &ws,
            cleaned.as_deref(),
            directions.as_deref(),
            cli.common.class.as_deref(),
        )?,
        Command::Stats { cleaned } => commands::stats(&ws, cleaned.as_deref())?,
        Command::Diversity { raw } => commands::diversity(&ws, raw.as_deref())?,
        Command::Eval {
            experiment,
            vocabulary,
        } => commands::eval(&ws, *experiment, vocabulary.as_deref())?,
        Command::Serve { directions, bind } => {
            let path = directions
                .clone()
                .unwrap_or_else(|| ws.path(commands::DIRECTIONS_FILE));
            let records: Vec<DirectionRecord> = io::read_jsonl(&path)?;
            let queue = TaskQueue::new(records, ws.cfg.serve.assignments_per_task);
            let state = Arc::new(AppState::new(
                ws.cfg.world()?,
                ws.cfg.pipeline.alpha,
                queue,
                ws.path(commands::RAW_FILE),
            ));
            let bind = bind.clone().unwrap_or_else(|| ws.cfg.serve.bind.clone());
            tokio::runtime::Runtime::new()?.block_on(server::serve(state, &bind))?;
            return Ok(());
        }
    };
    println!("{summary}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
