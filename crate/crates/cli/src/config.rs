//! Run configuration: TOML in, fully resolved JSON out.

use std::fmt;
use std::path::PathBuf;

use ohmlab_core::disorder::{Distribution, DisorderSpec};
use ohmlab_core::lattice_fields::{ProfileKind, Pulse};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    #[default]
    Transport,
    Ohm,
    Joule,
    Greenkubo,
    Acmeasure,
    Ergodic,
    Decay,
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scenario::Transport => "transport",
            Scenario::Ohm => "ohm",
            Scenario::Joule => "joule",
            Scenario::Greenkubo => "greenkubo",
            Scenario::Acmeasure => "acmeasure",
            Scenario::Ergodic => "ergodic",
            Scenario::Decay => "decay",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub model: ModelConfig,
    pub field: FieldConfig,
    pub numerics: NumericsConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: Scenario::default(),
            model: ModelConfig::default(),
            field: FieldConfig::default(),
            numerics: NumericsConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d: usize,
    /// Averaging (or field) scales, increasing.
    pub l_list: Vec<usize>,
    pub lambda: f64,
    pub beta: f64,
    pub distribution: Distribution,
    pub master_seed: u64,
    /// Realizations.
    pub n: usize,
    /// Sites between the averaging box and the edge of the ambient box.
    pub margin: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 1,
            l_list: vec![4],
            lambda: 1.0,
            beta: 1.0,
            distribution: Distribution::Uniform,
            master_seed: 0,
            n: 10,
            margin: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub pulse: Pulse,
    pub profile: ProfileKind,
    /// Unit field direction; `e_1` when absent.
    pub direction: Option<Vec<f64>>,
    pub eta_list: Vec<f64>,
    /// Seeds of the random AC pulses used by the measure scenario.
    pub ac_seeds: Vec<u64>,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            pulse: Pulse::BumpDerivative { start: 0.0, end: 2.0, amplitude: 1.0 },
            profile: ProfileKind::Bump,
            direction: None,
            eta_list: vec![0.1, 0.01, 0.001],
            ac_seeds: vec![0, 1, 2],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeGrid {
    pub end: f64,
    pub step: f64,
}

impl TimeGrid {
    /// `0, step, …, end` with the last point snapped to `end`.
    pub fn points(&self) -> Vec<f64> {
        let n = (self.end / self.step - 1e-9).ceil().max(0.0) as usize;
        (0..=n).map(|i| if i == n { self.end } else { self.step * i as f64 }).collect()
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid { end: 3.0, step: 0.05 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsConfig {
    pub dt: f64,
    pub tgrid: TimeGrid,
    /// Lag spacing of kernels that are interpolated inside time integrals.
    pub kernel_step: f64,
    /// Light-cone speed padding the evolution box; `6 d` when absent.
    pub v_buf: Option<f64>,
    /// Spectral bin width; `(ε_max − ε_min) / 400` when absent.
    pub bin_width: Option<f64>,
    pub tolerances: Tolerances,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        NumericsConfig {
            dt: 0.01,
            tgrid: TimeGrid::default(),
            kernel_step: 0.005,
            v_buf: None,
            bin_width: None,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub xi_p_zero: f64,
    pub xi_p_symmetry: f64,
    pub xi_p_negativity: f64,
    pub xi_d_bound: f64,
    /// Multiples of the standard error.
    pub sigmas: f64,
    pub green_kubo: f64,
    /// Allowed deviation of fitted log–log slopes from their targets.
    pub slope: f64,
    pub balance: f64,
    pub heat_floor: f64,
    pub ac_endgame: f64,
    pub identity: f64,
    pub joule_relative: f64,
    pub joule_ratio: f64,
    pub weight_floor: f64,
    pub reconstruction: f64,
    pub dual_form: f64,
    pub form_floor: f64,
    pub drift: f64,
    pub magnus_order: f64,
    pub box_doubling: f64,
    pub fluctuation_floor: f64,
    pub wick: f64,
    pub kms: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            xi_p_zero: 1e-12,
            xi_p_symmetry: 1e-10,
            xi_p_negativity: 1e-8,
            xi_d_bound: 2.0,
            sigmas: 3.0,
            green_kubo: 1e-7,
            slope: 0.3,
            balance: 1e-8,
            heat_floor: 1e-10,
            ac_endgame: 1e-6,
            identity: 1e-10,
            joule_relative: 0.10,
            joule_ratio: 0.7,
            weight_floor: 1e-10,
            reconstruction: 1e-6,
            dual_form: 1e-3,
            form_floor: 1e-8,
            drift: 1e-8,
            magnus_order: 0.2,
            box_doubling: 0.01,
            fluctuation_floor: 1e-12,
            wick: 1e-10,
            kms: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("ohmlab-out") }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Severity {
    /// The value cannot be used.
    Schema,
    /// Well formed, but the scenario has nothing to measure.
    Degenerate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
    pub severity: Severity,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Schema => "invalid",
            Severity::Degenerate => "degenerate input",
        };
        write!(f, "{tag} at {}: {}", self.path, self.message)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub errors: Vec<ConfigIssue>,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }

    fn error(&mut self, path: &str, message: impl Into<String>) {
        self.errors.push(ConfigIssue { path: path.into(), message: message.into(), severity: Severity::Schema });
    }

    fn degenerate(&mut self, path: &str, message: impl Into<String>) {
        self.errors.push(ConfigIssue {
            path: path.into(),
            message: message.into(),
            severity: Severity::Degenerate,
        });
    }
}

#[derive(Debug)]
pub struct ConfigError {
    pub issues: Vec<ConfigIssue>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.issues.iter().map(|i| i.to_string()).collect();
        f.write_str(&lines.join("\n"))
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    pub fn is_degenerate(&self) -> bool {
        self.issues.iter().any(|i| i.severity == Severity::Degenerate)
    }
}

/// Parses TOML, reporting type errors with the dotted path of the offending field.
pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    let de = toml::Deserializer::parse(text).map_err(|e| ConfigError {
        issues: vec![ConfigIssue { path: "<document>".into(), message: e.to_string(), severity: Severity::Schema }],
    })?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ConfigError {
            issues: vec![ConfigIssue {
                path: if path == "." { "<document>".into() } else { path },
                message: e.into_inner().to_string().trim().to_string(),
                severity: Severity::Schema,
            }],
        }
    })
}

impl RunConfig {
    /// Fills every optional field with its effective value.
    pub fn resolved(&self) -> RunConfig {
        let mut c = self.clone();
        let d = c.model.d.max(1);
        if c.field.direction.is_none() {
            let mut w = vec![0.0; d];
            w[0] = 1.0;
            c.field.direction = Some(w);
        }
        if c.numerics.v_buf.is_none() {
            c.numerics.v_buf = Some(6.0 * d as f64);
        }
        c
    }

    pub fn direction(&self) -> Vec<f64> {
        self.resolved().field.direction.unwrap()
    }

    pub fn v_buf(&self) -> f64 {
        self.resolved().numerics.v_buf.unwrap()
    }

    pub fn disorder(&self) -> DisorderSpec {
        DisorderSpec {
            distribution: self.model.distribution.clone(),
            lambda: self.model.lambda,
            master_seed: self.model.master_seed,
        }
    }

    /// Schema and policy checks; no computation.
    pub fn validate(&self) -> Diagnostics {
        let mut g = Diagnostics::default();
        let m = &self.model;
        if !(1..=3).contains(&m.d) {
            g.error("model.d", "dimension must be 1, 2 or 3");
        }
        if m.l_list.is_empty() {
            g.error("model.l_list", "needs at least one scale");
        } else if m.l_list.windows(2).any(|w| w[1] <= w[0]) {
            g.error("model.l_list", "scales must increase");
        }
        if !(m.lambda >= 0.0 && m.lambda.is_finite()) {
            g.error("model.lambda", "disorder strength must be finite and ≥ 0");
        }
        if !(m.beta > 0.0 && m.beta.is_finite()) {
            g.error("model.beta", "inverse temperature must be finite and > 0");
        }
        if let Err(e) = m.distribution.validate() {
            g.error("model.distribution", e.to_string());
        }
        let min_n = if self.scenario == Scenario::Ergodic { 10 } else { 1 };
        if m.n < min_n {
            g.error("model.n", format!("needs at least {min_n} realization(s)"));
        }
        if matches!(self.scenario, Scenario::Transport | Scenario::Ergodic) && m.n < 2 {
            g.error("model.n", "ensemble statistics need at least 2 realizations");
        }
        if m.margin == 0 {
            g.error("model.margin", "the ambient box needs a margin of at least one site");
        }

        let f = &self.field;
        if let Err(e) = f.pulse.validate() {
            g.error("field.pulse", e.to_string());
        }
        if let Some(w) = &f.direction {
            if w.len() != m.d {
                g.error("field.direction", format!("expected {} components, got {}", m.d, w.len()));
            } else if w.iter().all(|&x| x == 0.0) || w.iter().any(|x| !x.is_finite()) {
                g.error("field.direction", "direction must be finite and nonzero");
            }
        }
        if f.eta_list.iter().any(|x| !x.is_finite()) {
            g.error("field.eta_list", "field strengths must be finite");
        }
        let nonzero: Vec<f64> = f.eta_list.iter().copied().filter(|&x| x != 0.0).collect();
        match self.scenario {
            Scenario::Ohm if nonzero.len() < 2 => {
                g.degenerate("field.eta_list", "Ohm fit needs at least two nonzero field strengths")
            }
            Scenario::Joule if nonzero.is_empty() => {
                g.degenerate("field.eta_list", "Joule comparison needs a nonzero field strength")
            }
            Scenario::Acmeasure if f.ac_seeds.is_empty() => {
                g.error("field.ac_seeds", "needs at least one pulse seed")
            }
            _ => {}
        }
        if matches!(self.scenario, Scenario::Ohm | Scenario::Joule)
            && f.eta_list.windows(2).any(|w| !(w[1].abs() < w[0].abs()))
        {
            g.error("field.eta_list", "field strengths must decrease in magnitude");
        }

        let n = &self.numerics;
        if !(n.dt > 0.0 && n.dt.is_finite()) {
            g.error("numerics.dt", "time step must be > 0");
        } else if n.dt * 4.0 * m.d as f64 * (2.0 + m.lambda.max(0.0)) > 0.5 {
            g.warnings.push(format!(
                "numerics.dt: dt·4d·(2+λ) = {:.3} exceeds 0.5; the midpoint rule may be inaccurate",
                n.dt * 4.0 * m.d as f64 * (2.0 + m.lambda)
            ));
        }
        if !(n.tgrid.end > 0.0 && n.tgrid.end.is_finite()) {
            g.error("numerics.tgrid.end", "grid end must be > 0");
        }
        if !(n.tgrid.step > 0.0 && n.tgrid.step <= n.tgrid.end.abs()) {
            g.error("numerics.tgrid.step", "grid step must be in (0, end]");
        }
        if !(n.kernel_step > 0.0 && n.kernel_step.is_finite()) {
            g.error("numerics.kernel_step", "kernel lag spacing must be > 0");
        }
        if let Some(v) = n.v_buf {
            if !(v >= 0.0 && v.is_finite()) {
                g.error("numerics.v_buf", "padding speed must be finite and ≥ 0");
            }
        }
        if let Some(w) = n.bin_width {
            if !(w > 0.0 && w.is_finite()) {
                g.error("numerics.bin_width", "bin width must be > 0");
            }
        }
        g
    }
}
