//! Config-driven experiment runner for the `ohmlab-core` transport simulator.
//!
//! A run reads a [`RunConfig`], executes one [`Scenario`] and writes the resolved config,
//! CSV tables and a JSON summary of acceptance checks into an output directory.

pub mod config;
pub mod output;
pub mod scenarios;
pub mod suite;

use std::path::Path;

use anyhow::Result;

pub use config::{parse, ConfigError, Diagnostics, RunConfig, Scenario};
pub use output::{Check, Outcome, Table};

/// Validates and runs one scenario; nothing is written.
pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    let diag = cfg.validate();
    if !diag.is_valid() {
        return Err(ConfigError { issues: diag.errors }.into());
    }
    let mut out = scenarios::run_scenario(cfg)?;
    let mut warnings = diag.warnings;
    warnings.append(&mut out.warnings);
    out.warnings = warnings;
    Ok(out)
}

/// [`execute`] followed by writing the artifact set into `dir`.
pub fn run_to(cfg: &RunConfig, dir: &Path) -> Result<Outcome> {
    let out = execute(cfg)?;
    out.write(cfg, dir)?;
    Ok(out)
}

/// Runs `f` on a pool of `workers` threads (all cores when `None`).
pub fn with_workers<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        b = b.num_threads(n.max(1));
    }
    Ok(b.build()?.install(f))
}
