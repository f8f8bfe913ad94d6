use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use ohmlab::suite::{acceptance_suite, override_seed, run_suite};
use ohmlab::{parse, run_to, with_workers, ConfigError, Outcome, RunConfig};

const EXIT_CHECKS_FAILED: u8 = 1;
const EXIT_BAD_CONFIG: u8 = 2;
const EXIT_ABORTED: u8 = 3;

#[derive(Parser)]
#[command(name = "ohmlab", version, about = "Charge transport and heat production in disordered lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario from a TOML config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Check a config and print it with defaults applied.
    Validate { config: PathBuf },
    /// Run the full acceptance battery with built-in configs.
    Suite {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Master seed of the disorder ensemble.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, env = "OHMLAB_OUT")]
    out: Option<PathBuf>,
}

fn load(path: &PathBuf) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(parse(&text)?)
}

fn report(name: &str, out: &Outcome) {
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    for c in &out.checks {
        let tag = if c.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{name}] criterion {:>2} {} = {:e}", c.criterion, c.name, c.value);
    }
}

fn exit_for(err: &anyhow::Error) -> ExitCode {
    eprintln!("error: {err:#}");
    if err.downcast_ref::<ConfigError>().is_some() {
        ExitCode::from(EXIT_BAD_CONFIG)
    } else {
        ExitCode::from(EXIT_ABORTED)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => {
            let cfg = match load(&config) {
                Ok(c) => c,
                Err(e) => return exit_for(&e),
            };
            let diag = cfg.validate();
            for w in &diag.warnings {
                eprintln!("warning: {w}");
            }
            for e in &diag.errors {
                eprintln!("error: {e}");
            }
            println!("{}", serde_json::to_string_pretty(&cfg.resolved()).expect("config serializes"));
            if diag.is_valid() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_BAD_CONFIG)
            }
        }
        Command::Run { config, common } => {
            let result = load(&config).and_then(|mut cfg| {
                override_seed(&mut cfg, common.seed);
                if let Some(dir) = &common.out {
                    cfg.output.dir = dir.clone();
                }
                let dir = cfg.output.dir.clone();
                with_workers(common.workers, || run_to(&cfg, &dir))?
            });
            match result {
                Ok(out) => {
                    report(&config.display().to_string(), &out);
                    if out.pass() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_CHECKS_FAILED)
                    }
                }
                Err(e) => exit_for(&e),
            }
        }
        Command::Suite { common } => {
            let mut runs = acceptance_suite();
            for r in &mut runs {
                override_seed(&mut r.config, common.seed);
            }
            let dir = common.out.unwrap_or_else(|| RunConfig::default().output.dir);
            match with_workers(common.workers, || run_suite(&runs, Some(&dir))).and_then(|r| r) {
                Ok(results) => {
                    let mut ok = true;
                    for (name, out) in &results {
                        report(name, out);
                        ok &= out.pass();
                    }
                    if ok {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(EXIT_CHECKS_FAILED)
                    }
                }
                Err(e) => exit_for(&e),
            }
        }
    }
}
