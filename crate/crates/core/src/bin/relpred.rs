use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use relpred::config::{Ablation, RunConfig};
use relpred::pipeline;
use relpred::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_PREREQUISITE: u8 = 4;

#[derive(Parser)]
#[command(name = "relpred", version, about = "Relation prediction over knowledge graphs")]
struct Cli {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override one configuration key (repeatable), e.g. `--set epochs=10`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; 1 makes every stage deterministic.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// `full` or `text-only`.
    #[arg(long, global = true)]
    ablation: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse splits and names, encode entity text, write the caches.
    Prepare,
    /// Learn structural node embeddings from random walks.
    TrainStructural,
    /// Train the relation network.
    Train,
    /// Report raw and filtered metrics on the test split.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Rank relations for one (head, tail) pair.
    Predict {
        #[arg(long)]
        head: String,
        #[arg(long)]
        tail: String,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn resolve_config(cli: &Cli) -> relpred::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for assignment in &cli.overrides {
        cfg.apply(assignment)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    if let Some(a) = &cli.ablation {
        cfg.ablation = a.parse::<Ablation>()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = resolve_config(&cli).context("resolving configuration")?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .context("configuring worker threads")?;
    }
    println!("# resolved configuration");
    print!("{cfg}");
    println!("# end configuration");

    match cli.command {
        Command::Prepare => {
            let report = pipeline::prepare(&cfg).context("prepare")?;
            println!("{report}");
        }
        Command::TrainStructural => {
            let report = pipeline::train_structural(&cfg).context("train-structural")?;
            println!("{report}");
        }
        Command::Train => {
            let report = pipeline::train_model(&cfg, |entry| println!("{entry}")).context("train")?;
            println!("{report}");
        }
        Command::Evaluate { checkpoint } => {
            let metrics = pipeline::evaluate_model(&cfg, checkpoint.as_deref()).context("evaluate")?;
            println!("{metrics}");
        }
        Command::Predict {
            head,
            tail,
            top,
            checkpoint,
        } => {
            let prediction =
                pipeline::predict(&cfg, checkpoint.as_deref(), &head, &tail, top).context("predict")?;
            print!("{prediction}");
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let Some(e) = err.chain().find_map(|c| c.downcast_ref::<Error>()) else {
        return EXIT_DATA;
    };
    match e.root() {
        Error::Config(_) => EXIT_USAGE,
        Error::NonFinite(_) => EXIT_NUMERIC,
        Error::Prerequisite { .. } | Error::MissingInput { .. } | Error::EmptyInput(_) => EXIT_PREREQUISITE,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
