use std::path::PathBuf;
use std::process::ExitCode;

use cautious_cli::commands::{self, Context};
use cautious_cli::config::ScenarioConfig;
use cautious_cli::{CliError, Format, GlobalOpts};
use clap::{Parser, Subcommand};

/// Cautious optimization of an unknown function from bounded-noise samples.
#[derive(Debug, Parser)]
#[command(name = "cautious-opt", version)]
struct Cli {
    /// Scenario configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Human)]
    format: Format,
    /// Worker threads for multi-trial runs (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Proceed even when convexity cannot be certified.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the set of consistent parameters to one batch.
    Regress,
    /// Evaluate worst-case bounds at the points of a CSV file (default: z0).
    Bound {
        #[arg(long)]
        points: Option<PathBuf>,
    },
    /// Minimize the worst-case bound over a polytope.
    Optimize,
    /// Run the online measure-then-optimize loop.
    Online {
        /// Seed range `a..b` or `a..=b`; one run per seed and start point.
        #[arg(long)]
        seeds: Option<String>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli.config.ok_or_else(|| CliError::Config("--config is required".into()))?;
    let cfg = ScenarioConfig::from_path(&path)?;
    let opts = GlobalOpts { seed: cli.seed, format: cli.format, jobs: cli.jobs, force: cli.force };
    let ctx = Context::new(cfg, opts)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Regress => commands::regress(&ctx, &mut out),
        Command::Bound { points } => commands::bound(&ctx, points.as_deref(), &mut out),
        Command::Optimize => commands::optimize(&ctx, &mut out).map(drop),
        Command::Online { seeds } => commands::online(&ctx, seeds.as_deref(), &mut out).map(drop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CAUTIOUS_OPT_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // reader went away (e.g. piped into `head`)
        Err(CliError::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
