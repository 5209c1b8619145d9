//! Command-line front end for the representation-learning experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use replearn_cli::commands;
use replearn_cli::config::Config;
use replearn_cli::error::Result;

#[derive(Parser)]
#[command(
    name = "replearn",
    version,
    about = "Multi-task representation learning experiments: learning surfaces, \
             representation errors, transfer curves, and sample-complexity bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file (TOML); defaults reproduce the reference experiment.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSV/SVG/model files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed from the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the (n, m) grid and emit the learning surface.
    Surface(CommonArgs),
    /// Score representation errors of trunks from successful cells.
    Reperror {
        #[command(flatten)]
        common: CommonArgs,
        /// Also score the analytic perfect trunk (reported as n_source 0).
        #[arg(long)]
        inject_perfect_trunk: bool,
    },
    /// Compare learning with a frozen representation against learning
    /// the full composite.
    Transfer(CommonArgs),
    /// Sweep the closed-form sample-complexity bounds over n.
    Bounds(CommonArgs),
    /// Monte-Carlo estimate of the empirical/true loss deviation
    /// probability at each configured m.
    Gap(CommonArgs),
    /// Train one composite and save a model file.
    Train(CommonArgs),
    /// Load a model file and report exact true errors.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Model file to evaluate; defaults to <out>/model.txt.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

fn load_config(common: &CommonArgs) -> Result<Config> {
    let mut config = Config::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Surface(common) => {
            let config = load_config(&common)?;
            commands::cmd_surface(&config, &common.out)
        }
        Command::Reperror { common, inject_perfect_trunk } => {
            let config = load_config(&common)?;
            commands::cmd_reperror(&config, &common.out, inject_perfect_trunk)
        }
        Command::Transfer(common) => {
            let config = load_config(&common)?;
            commands::cmd_transfer(&config, &common.out)
        }
        Command::Bounds(common) => {
            let config = load_config(&common)?;
            commands::cmd_bounds(&config, &common.out)
        }
        Command::Gap(common) => {
            let config = load_config(&common)?;
            commands::cmd_gap(&config, &common.out)
        }
        Command::Train(common) => {
            let config = load_config(&common)?;
            commands::cmd_train(&config, &common.out).map(|_| ())
        }
        Command::Eval { common, model } => {
            let config = load_config(&common)?;
            let path = model.unwrap_or_else(|| common.out.join("model.txt"));
            commands::cmd_eval(&config, &path)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
