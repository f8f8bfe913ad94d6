//! Built-in configurations of the acceptance battery.

use std::path::Path;

use anyhow::Result;
use ohmlab_core::lattice_fields::{ProfileKind, Pulse};

use crate::config::{RunConfig, Scenario, TimeGrid};
use crate::output::Outcome;

#[derive(Clone, Debug)]
pub struct SuiteRun {
    pub name: String,
    pub config: RunConfig,
}

fn base(scenario: Scenario, d: usize, lambda: f64, beta: f64) -> RunConfig {
    let mut c = RunConfig { scenario, ..RunConfig::default() };
    c.model.d = d;
    c.model.lambda = lambda;
    c.model.beta = beta;
    c.model.master_seed = 2024;
    c
}

fn transport_grid() -> Vec<SuiteRun> {
    let mut runs = Vec::new();
    for d in [1usize, 2] {
        for lambda in [0.0, 0.5, 1.0] {
            for beta in [0.5, 2.0] {
                let mut c = base(Scenario::Transport, d, lambda, beta);
                c.model.l_list = vec![6];
                c.model.n = 20;
                c.model.margin = 2;
                c.numerics.tgrid = TimeGrid { end: 3.0, step: 0.1 };
                runs.push(SuiteRun { name: format!("transport_d{d}_lambda{lambda}_beta{beta}"), config: c });
            }
        }
    }
    runs
}

/// Every acceptance run with its output subdirectory name.
pub fn acceptance_suite() -> Vec<SuiteRun> {
    let mut runs = transport_grid();

    let mut c = base(Scenario::Greenkubo, 1, 1.0, 1.0);
    c.model.l_list = vec![4];
    c.model.n = 10;
    c.numerics.tgrid = TimeGrid { end: 8.0, step: 0.1 };
    runs.push(SuiteRun { name: "greenkubo".into(), config: c });

    let mut c = base(Scenario::Ohm, 1, 1.0, 1.0);
    c.model.l_list = vec![4];
    c.model.n = 3;
    c.field.pulse = Pulse::Bump { start: 0.0, end: 1.0, amplitude: 1.0 };
    c.field.profile = ProfileKind::Indicator;
    c.field.eta_list = vec![0.1, 0.01, 0.001];
    c.numerics.dt = 0.005;
    c.numerics.tgrid = TimeGrid { end: 2.0, step: 0.1 };
    c.numerics.v_buf = Some(4.0);
    runs.push(SuiteRun { name: "ohm".into(), config: c });

    let mut c = base(Scenario::Joule, 1, 3.0, 1.0);
    c.model.l_list = vec![8, 16];
    c.model.n = 8;
    c.field.pulse = Pulse::BumpDerivative { start: 0.0, end: 2.0, amplitude: 1.0 };
    c.field.profile = ProfileKind::Bump;
    c.field.eta_list = vec![0.1, 0.01];
    c.numerics.dt = 0.01;
    c.numerics.tgrid = TimeGrid { end: 3.0, step: 0.05 };
    c.numerics.v_buf = Some(4.0);
    runs.push(SuiteRun { name: "joule".into(), config: c });

    let mut c = base(Scenario::Acmeasure, 1, 1.0, 1.0);
    c.model.l_list = vec![6];
    c.model.n = 4;
    c.numerics.tgrid = TimeGrid { end: 4.0, step: 0.1 };
    runs.push(SuiteRun { name: "acmeasure".into(), config: c });

    let mut c = base(Scenario::Ergodic, 1, 1.0, 1.0);
    c.model.l_list = vec![4, 8, 12, 16, 24, 32];
    c.model.n = 50;
    runs.push(SuiteRun { name: "ergodic".into(), config: c });

    for d in [1usize, 2] {
        let mut c = base(Scenario::Decay, d, 1.0, 2.0);
        c.model.l_list = vec![if d == 1 { 8 } else { 3 }];
        c.model.n = 4;
        c.model.margin = 2;
        runs.push(SuiteRun { name: format!("decay_d{d}"), config: c });
    }
    runs
}

/// Applies the command-line overrides shared by `run` and `suite`.
pub fn override_seed(cfg: &mut RunConfig, seed: Option<u64>) {
    if let Some(s) = seed {
        cfg.model.master_seed = s;
    }
}

/// Runs the battery, writing each run into `out/<name>` when `out` is given.
pub fn run_suite(runs: &[SuiteRun], out: Option<&Path>) -> Result<Vec<(String, Outcome)>> {
    let mut results = Vec::with_capacity(runs.len());
    for r in runs {
        let outcome = match out {
            Some(dir) => crate::run_to(&r.config, &dir.join(&r.name))?,
            None => crate::execute(&r.config)?,
        };
        results.push((r.name.clone(), outcome));
    }
    Ok(results)
}
