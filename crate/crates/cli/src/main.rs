use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use invlab_cli::config::CONFIG_HELP;
use invlab_cli::{
    apply_seed_override, load_config, run, CliError, Command, OutputDir, EXIT_CHECK_FAILED, EXIT_OK,
};

#[derive(Parser)]
#[command(name = "invlab", version, about = "Inventory control with random delivery delays", after_long_help = CONFIG_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Sub,

    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for solving and simulation; defaults to all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory; overrides `output.directory`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Solve for the optimal policy and check its structure.
    Solve,
    /// Simulate cost samples under the optimal policy.
    Simulate,
    /// Martingale, ergodicity, normality, tail and dominance checks.
    Diagnose,
    /// Cost samples across horizons with normality and variance-growth checks.
    Clt,
    /// Compare the optimal policy with the configured alternatives.
    Compare,
    /// Run everything and write a summary.
    Report,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Solve => Command::Solve,
            Sub::Simulate => Command::Simulate,
            Sub::Diagnose => Command::Diagnose,
            Sub::Clt => Command::Clt,
            Sub::Compare => Command::Compare,
            Sub::Report => Command::Report,
        }
    }
}

fn execute(cli: &Cli) -> Result<bool, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config <path> is required".into()))?;
    let mut cfg = load_config(path)?;
    apply_seed_override(&mut cfg, std::env::var("INVLAB_SEED").ok().as_deref())?;
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot start {w} workers: {e}")))?;
    }
    let dir = cli.out.clone().unwrap_or_else(|| cfg.directory.clone());
    let outcome = run(cli.command.into(), &cfg, OutputDir::create(&dir)?)?;
    for line in &outcome.lines {
        println!("{line}");
    }
    Ok(outcome.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::from(EXIT_OK as u8),
        Ok(false) => ExitCode::from(EXIT_CHECK_FAILED as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
