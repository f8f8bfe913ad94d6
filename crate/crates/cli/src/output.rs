//! Result tables, acceptance checks and the files they are written to.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::RunConfig;

/// Columns every row starts with.
pub const PROVENANCE: [&str; 6] = ["seed", "realization", "l", "beta", "lambda", "eta"];

#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub seed: u64,
    /// `None` for ensemble rows.
    pub realization: Option<u64>,
    pub l: usize,
    pub beta: f64,
    pub lambda: f64,
    pub eta: f64,
}

#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<(Provenance, Vec<f64>)>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn with_columns(name: &str, columns: Vec<String>) -> Self {
        Table { name: name.into(), columns, rows: Vec::new() }
    }

    pub fn push(&mut self, prov: Provenance, values: Vec<f64>) {
        assert_eq!(values.len(), self.columns.len(), "row width of table {}", self.name);
        self.rows.push((prov, values));
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(format!("{}.csv", self.name));
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
        let header: Vec<&str> = PROVENANCE.iter().copied().chain(self.columns.iter().map(String::as_str)).collect();
        w.write_record(&header)?;
        for (p, vals) in &self.rows {
            let mut rec = vec![
                p.seed.to_string(),
                p.realization.map_or_else(|| "ensemble".to_string(), |i| i.to_string()),
                p.l.to_string(),
                p.beta.to_string(),
                p.lambda.to_string(),
                p.eta.to_string(),
            ];
            rec.extend(vals.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "relation", rename_all = "snake_case")]
pub enum Bound {
    AtMost { limit: f64 },
    AtLeast { limit: f64 },
    Within { target: f64, tolerance: f64 },
    Holds,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    #[serde(skip)]
    pub name: String,
    /// Acceptance criterion this check belongs to.
    pub criterion: u8,
    pub value: f64,
    #[serde(flatten)]
    pub bound: Bound,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    fn make(name: &str, criterion: u8, value: f64, bound: Bound) -> Self {
        let pass = match bound {
            Bound::AtMost { limit } => value <= limit,
            Bound::AtLeast { limit } => value >= limit,
            Bound::Within { target, tolerance } => (value - target).abs() <= tolerance,
            Bound::Holds => value == 1.0,
        };
        Check { name: name.into(), criterion, value, bound, pass, note: None }
    }

    pub fn at_most(name: &str, criterion: u8, value: f64, limit: f64) -> Self {
        Self::make(name, criterion, value, Bound::AtMost { limit })
    }

    pub fn at_least(name: &str, criterion: u8, value: f64, limit: f64) -> Self {
        Self::make(name, criterion, value, Bound::AtLeast { limit })
    }

    pub fn within(name: &str, criterion: u8, value: f64, target: f64, tolerance: f64) -> Self {
        Self::make(name, criterion, value, Bound::Within { target, tolerance })
    }

    pub fn holds(name: &str, criterion: u8, ok: bool) -> Self {
        Self::make(name, criterion, if ok { 1.0 } else { 0.0 }, Bound::Holds)
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// Everything a scenario produces.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    /// Reported numbers that are not pass/fail.
    pub info: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Summary document: one key per check, plus `scenario`, `pass`, `info` and `warnings`.
    pub fn summary(&self, cfg: &RunConfig) -> Value {
        let mut m = Map::new();
        m.insert("scenario".into(), json!(cfg.scenario.to_string()));
        m.insert("pass".into(), json!(self.pass()));
        for c in &self.checks {
            let mut v = serde_json::to_value(c).expect("check serializes");
            if !c.value.is_finite() {
                // JSON has no NaN or infinity
                v["value"] = json!(c.value.to_string());
            }
            m.insert(c.name.clone(), v);
        }
        let info: Map<String, Value> = self
            .info
            .iter()
            .map(|(k, v)| (k.clone(), if v.is_finite() { json!(v) } else { json!(v.to_string()) }))
            .collect();
        m.insert("info".into(), Value::Object(info));
        m.insert("warnings".into(), json!(self.warnings));
        Value::Object(m)
    }

    /// Writes `config.json`, `summary.json` and one CSV per table into `dir`.
    pub fn write(&self, cfg: &RunConfig, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let config = serde_json::to_string_pretty(&cfg.resolved())?;
        fs::write(dir.join("config.json"), config + "\n")?;
        for t in &self.tables {
            t.write(dir)?;
        }
        let summary = serde_json::to_string_pretty(&self.summary(cfg))?;
        fs::write(dir.join("summary.json"), summary + "\n")?;
        Ok(())
    }
}
