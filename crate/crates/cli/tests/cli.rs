use std::fs;
use std::path::Path;
use std::process::Command;

use ohmlab::config::Severity;
use ohmlab::{execute, parse, run_to, with_workers, ConfigError, RunConfig};
use serde_json::Value;

const SMALL_TRANSPORT: &str = r#"
scenario = "transport"
[model]
d = 1
l_list = [4]
n = 2
[numerics]
tgrid = { end = 0.5, step = 0.25 }
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ohmlab"))
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn issues(err: anyhow::Error) -> ConfigError {
    err.downcast::<ConfigError>().expect("a config error")
}

#[test]
fn summary_carries_one_key_per_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse(SMALL_TRANSPORT).unwrap();
    let out = run_to(&cfg, dir.path()).unwrap();
    assert!(out.pass());

    let summary = read_json(&dir.path().join("summary.json"));
    for key in ["xi_p_symmetry_residual", "xi_p_negativity_max_eig", "xi_d_range_ok"] {
        let c = &summary[key];
        assert_eq!(c["criterion"], 1, "{key}");
        assert_eq!(c["pass"], true, "{key}");
        assert!(c["value"].is_number(), "{key}");
    }
    assert_eq!(summary["scenario"], "transport");
    assert_eq!(summary["pass"], true);

    let config = read_json(&dir.path().join("config.json"));
    assert_eq!(config["model"]["n"], 2);
    assert_eq!(config["field"]["direction"], serde_json::json!([1.0]));
}

#[test]
fn tables_start_with_provenance_columns() {
    let dir = tempfile::tempdir().unwrap();
    run_to(&parse(SMALL_TRANSPORT).unwrap(), dir.path()).unwrap();
    let mut r = csv::Reader::from_path(dir.path().join("kernel.csv")).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(&header[..6], ohmlab::output::PROVENANCE);
    for row in r.records() {
        assert_eq!(&row.unwrap()[1], "ensemble");
    }
}

#[test]
fn reruns_are_byte_identical_across_worker_counts() {
    let cfg = parse(SMALL_TRANSPORT).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    with_workers(Some(1), || run_to(&cfg, a.path())).unwrap().unwrap();
    with_workers(Some(4), || run_to(&cfg, b.path())).unwrap().unwrap();
    for name in ["config.json", "summary.json", "kernel.csv", "realizations.csv"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs");
    }
}

#[test]
fn empty_config_is_valid_and_resolves_defaults() {
    let cfg = parse("").unwrap();
    assert_eq!(cfg, RunConfig::default());
    assert!(cfg.validate().is_valid());
    let r = cfg.resolved();
    assert_eq!(r.field.direction, Some(vec![1.0]));
    assert_eq!(r.numerics.v_buf, Some(6.0));
    assert!(r.numerics.bin_width.is_none() || r.numerics.bin_width.unwrap() > 0.0);
}

#[test]
fn negative_beta_is_reported_at_its_path() {
    let cfg = parse("[model]\nbeta = -1.0\n").unwrap();
    let err = issues(execute(&cfg).unwrap_err());
    assert_eq!(err.issues.len(), 1);
    assert_eq!(err.issues[0].path, "model.beta");
    assert_eq!(err.issues[0].severity, Severity::Schema);
}

#[test]
fn type_errors_and_unknown_fields_carry_paths() {
    let err = parse("[model]\nbeta = \"hot\"\n").unwrap_err();
    assert_eq!(err.issues[0].path, "model.beta");
    let err = parse("[numerics]\ndtt = 0.1\n").unwrap_err();
    assert!(err.issues[0].path.starts_with("numerics"), "{}", err.issues[0].path);
    assert!(err.issues[0].message.contains("dtt"));
}

#[test]
fn zero_field_ohm_sweep_is_degenerate() {
    let cfg = parse("scenario = \"ohm\"\n[field]\neta_list = [0.0]\n").unwrap();
    let err = issues(execute(&cfg).unwrap_err());
    assert!(err.is_degenerate());
    assert!(err.issues.iter().any(|i| i.path == "field.eta_list"));
}

#[test]
fn coarse_time_step_warns() {
    let cfg = parse("[model]\nd = 2\n[numerics]\ndt = 0.05\n").unwrap();
    let diag = cfg.validate();
    assert!(diag.is_valid());
    assert!(diag.warnings.iter().any(|w| w.starts_with("numerics.dt")), "{:?}", diag.warnings);
    assert!(parse("").unwrap().validate().warnings.is_empty());
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    fs::write(&good, SMALL_TRANSPORT).unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[model]\nbeta = -1.0\n").unwrap();
    let strict = dir.path().join("strict.toml");
    fs::write(&strict, format!("{SMALL_TRANSPORT}[numerics.tolerances]\nxi_p_negativity = -1.0\n")).unwrap();

    let run = |cfg: &Path, out: &Path| {
        bin().arg("run").arg(cfg).arg("--out").arg(out).arg("--workers").arg("2").status().unwrap().code()
    };
    assert_eq!(run(&good, &dir.path().join("a")), Some(0));
    assert_eq!(run(&bad, &dir.path().join("b")), Some(2));
    assert_eq!(run(&strict, &dir.path().join("c")), Some(1));
    assert!(!dir.path().join("b").exists());
    assert_eq!(read_json(&dir.path().join("c/summary.json"))["pass"], false);

    let v = bin().arg("validate").arg(&bad).output().unwrap();
    assert_eq!(v.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&v.stderr).contains("model.beta"));
    let v = bin().arg("validate").arg(&good).output().unwrap();
    assert_eq!(v.status.code(), Some(0));
    let echoed: Value = serde_json::from_slice(&v.stdout).unwrap();
    assert_eq!(echoed["numerics"]["v_buf"], 6.0);
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, SMALL_TRANSPORT).unwrap();
    let out = dir.path().join("from-env");
    let status = bin().arg("run").arg(&cfg).env("OHMLAB_OUT", &out).current_dir(dir.path()).status().unwrap();
    assert!(status.success());
    assert!(out.join("summary.json").exists());
}

#[test]
fn seed_override_changes_the_ensemble() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, SMALL_TRANSPORT).unwrap();
    for (seed, sub) in [("1", "s1"), ("2", "s2")] {
        let st = bin().arg("run").arg(&cfg).arg("--seed").arg(seed).arg("--out").arg(dir.path().join(sub)).status();
        assert!(st.unwrap().success());
    }
    let a = fs::read_to_string(dir.path().join("s1/kernel.csv")).unwrap();
    let b = fs::read_to_string(dir.path().join("s2/kernel.csv")).unwrap();
    assert!(a.starts_with("seed,") && a.lines().nth(1).unwrap().starts_with("1,"));
    let values = |s: &str| s.lines().nth(3).unwrap().split_once(',').unwrap().1.to_string();
    assert_ne!(values(&a), values(&b));
}
