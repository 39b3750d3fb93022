use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use obstacle_cli::{run, Command, RunConfig, RunOptions};

/// Solve and verify obstacle problems with measure data.
#[derive(Debug, Parser)]
#[command(name = "obstacle", version)]
struct Cli {
    /// Command to run; defaults to `command` in the config file.
    #[arg(value_enum)]
    command: Option<Command>,
    /// TOML problem configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for envelope sampling and Monte Carlo (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Continuation tolerance (overrides `solver.tol_cont`).
    #[arg(long)]
    tol: Option<f64>,
    /// Suppress the summary on stdout.
    #[arg(long)]
    quiet: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = std::fs::read_to_string(&cli.config)
        .map_err(|e| obstacle_cli::CliError::Io(format!("{}: {e}", cli.config.display())))
        .and_then(|text| RunConfig::from_toml(&text))
        .and_then(|cfg| {
            let command = cli.command.or(cfg.command).ok_or_else(|| {
                obstacle_cli::CliError::Parse(
                    "no command given on the command line or in the config".into(),
                )
            })?;
            let opts = RunOptions {
                command,
                out_dir: cli.out.clone().unwrap_or_else(|| cfg.output.dir.clone()),
                seed: cli.seed.unwrap_or(cfg.seed),
                tol: cli.tol,
            };
            run(&cfg, &opts)
        });
    match result {
        Ok(outcome) => {
            if !cli.quiet {
                print!("{}", outcome.summary);
            }
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
