use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use eulerdd_cli::run::{apply_overrides, execute, Overrides, RunError};
use eulerdd_cli::{load_config, BUNDLED};

/// Environment variable consulted for the worker count.
const THREADS_ENV: &str = "EULERDD_THREADS";

#[derive(Parser)]
#[command(name = "eulerdd", version, about = "Eulerian dynamical decoupling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file or a bundled config name.
    Run {
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        realizations: Option<usize>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the effective configuration and exit.
        #[arg(long)]
        dump_config: bool,
    },
    /// List the bundled configs.
    Configs,
}

fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n = v
                .trim()
                .parse::<usize>()
                .with_context(|| format!("{THREADS_ENV}={v} is not a thread count"))?;
            anyhow::ensure!(n > 0, "{THREADS_ENV} must be at least 1");
            Ok(Some(n))
        }
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Configs => {
            for (name, _) in BUNDLED {
                println!("{name}");
            }
            Ok(())
        }
        Command::Run {
            config,
            seed,
            realizations,
            threads,
            out,
            dump_config,
        } => {
            let cfg = load_config(&config).map_err(RunError::from)?;
            let overrides = Overrides {
                seed,
                realizations,
                threads,
                threads_env: threads_from_env()
                    .map_err(|e| RunError::from(eulerdd_cli::config::ConfigError::Conflict(e.to_string())))?,
                out,
            };
            if dump_config {
                let mut cfg = cfg;
                if overrides.seed.is_some() {
                    cfg.seed = overrides.seed;
                }
                if overrides.realizations.is_some() {
                    cfg.realizations = overrides.realizations;
                }
                if overrides.threads.is_some() {
                    cfg.threads = overrides.threads;
                }
                if overrides.out.is_some() {
                    cfg.output = overrides.out.clone();
                }
                print!("{}", cfg.to_text());
                return Ok(());
            }
            let cfg = apply_overrides(cfg, &overrides).map_err(RunError::from)?;
            let mut stdout = io::stdout();
            execute(&cfg, overrides.threads_env, &mut stdout)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<RunError>().map_or(2, RunError::exit_code);
            ExitCode::from(code)
        }
    }
}
