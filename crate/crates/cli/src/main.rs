use std::path::PathBuf;
use std::process::ExitCode;

use chdbc_core::app::{self, Summary};
use chdbc_core::config::{load_config, RunConfig};
use chdbc_core::Error;
use clap::{Parser, Subcommand};

/// Cahn–Hilliard with dynamic boundary conditions on a periodic slab.
#[derive(Parser, Debug)]
#[command(name = "chdbc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed for the noise initializer (overrides `init.seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one trajectory.
    Run,
    /// Run the `[sweep]` table's values and compare final states.
    Sweep,
    /// Check potential assumptions and grid operator identities.
    Check,
    /// Solve for a steady state with the configured mean.
    Steady,
    /// Summarize checkpoints (a file or directory; default the output dir).
    Report { path: Option<PathBuf> },
}

fn load(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.init.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli, cfg: &RunConfig) -> Result<Summary, Error> {
    let out = cfg.output.dir.as_path();
    match &cli.command {
        Command::Run => app::cmd_run(cfg, out),
        Command::Sweep => app::cmd_sweep(cfg, out),
        Command::Check => app::cmd_check(cfg, Some(out)),
        Command::Steady => app::cmd_steady(cfg, out),
        Command::Report { path } => app::cmd_report(cfg, path.as_deref().unwrap_or(out)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load(&cli).and_then(|cfg| dispatch(&cli, &cfg));
    match result {
        Ok(summary) => {
            if !cli.quiet {
                print!("{}", app::format_summary(&summary));
            }
            ExitCode::from(app::EXIT_OK as u8)
        }
        Err(e) => {
            eprintln!("chdbc: {e}");
            if matches!(e, Error::Parse { .. } | Error::Validation(_)) {
                if let Some(out) = &cli.out {
                    app::write_failure(out, &e);
                }
            }
            ExitCode::from(app::exit_code(&e) as u8)
        }
    }
}
