use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stabound"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

fn check<'a>(rep: &'a Value, name: &str) -> &'a Value {
    rep["checks"].as_array().unwrap().iter().find(|c| c["name"] == name).unwrap_or_else(|| panic!("no check {name}"))
}

#[test]
fn anchor_config_passes_with_mass_over_s() {
    let out = tempfile::tempdir().unwrap();
    let o = run(&["run", "--config", config("anchor_psi.json").to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rep = report(out.path());
    let c = check(&rep, "psi_anchor");
    assert_eq!(c["status"], "pass");
    assert!(c["detail"].as_str().unwrap().contains("mu(S)/s = 2.000000000000"));
    assert_eq!(rep["config_hash"].as_str().unwrap().len(), 64);
    assert!(out.path().join("timing.json").exists());
}

#[test]
fn s_equal_one_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"operator":{"s":1.0,"measure":{"type":"uniform","mass":1}},"checks":["psi_anchor"]}"#);
    assert_eq!(run(&["run", "--config", &cfg]).status.code(), Some(2));
    let cfg = config("anchor_psi.json");
    assert_eq!(run(&["operator", "eval", "--config", cfg.to_str().unwrap(), "--s", "1.5"]).status.code(), Some(2));
}

#[test]
fn empty_check_list_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"checks":[]}"#);
    let out = dir.path().join("out");
    let o = run(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(report(&out)["checks"].as_array().unwrap().len(), 0);
}

#[test]
fn unknown_names_are_schema_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"checks":["no_such_check"]}"#);
    assert_eq!(run(&["run", "--config", &cfg]).status.code(), Some(2));
    let cfg = config("anchor_psi.json");
    let o = run(&["run", "--config", cfg.to_str().unwrap(), "--tolerance", "nope=1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn failed_check_exits_one() {
    let cfg = config("anchor_psi.json");
    let o = run(&["operator", "eval", "--config", cfg.to_str().unwrap(), "--tolerance", "psi_anchor=-1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn numerical_breakdown_exits_three_with_module() {
    let cfg = config("atoms.json");
    let o = run(&["zeta", "build", "--config", cfg.to_str().unwrap(), "--s", "0.4"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("module zeta"));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config("interval.json");
    for (dir, extra) in [(a.path(), None), (b.path(), Some("--parallel"))] {
        let mut args = vec!["run", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap(), "--h", "0.015625"];
        args.extend(extra);
        assert_eq!(run(&args).status.code(), Some(0));
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() > 5);
    for n in names.iter().filter(|n| *n != "timing.json") {
        assert_eq!(std::fs::read(a.path().join(n)).unwrap(), std::fs::read(b.path().join(n)).unwrap(), "{n:?}");
    }
}

#[test]
fn rate_on_analytic_power_recovers_s() {
    let out = tempfile::tempdir().unwrap();
    let cfg = config("interval.json");
    let o = run(&["rate", "--analytic", "--config", cfg.to_str().unwrap(), "--s", "0.7", "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(check(&report(out.path()), "decay_rate")["value"].as_f64().unwrap() < 1e-9);
}

#[test]
fn limit_s1_table_is_monotone() {
    let out = tempfile::tempdir().unwrap();
    let cfg = config("interval.json");
    let o = run(&["limit-s1", "--config", cfg.to_str().unwrap(), "--h", "0.0078125", "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let table = std::fs::read_to_string(out.path().join("s1_limit.csv")).unwrap();
    assert_eq!(table.lines().next(), Some("s,err,slope"));
    assert_eq!(table.lines().count(), 5);
}

#[test]
fn solve_writes_solution_table() {
    let out = tempfile::tempdir().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"operator":{"s":0.5,"measure":{"type":"uniform","mass":1}},"domain":{"type":"interval","a":-1,"b":1},
            "f":{"type":"expr","expr":"1 + x * x"},"h":0.03125}"#,
    );
    let o = run(&["solve", "--config", &cfg, "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let table = std::fs::read_to_string(out.path().join("solution.csv")).unwrap();
    assert_eq!(table.lines().next(), Some("x0,d,u"));
    assert_eq!(table.lines().count(), 1 + 63);
    assert_eq!(check(&report(out.path()), "solve.positivity")["status"], "pass");
}

#[test]
fn report_aggregates_runs() {
    let a = tempfile::tempdir().unwrap();
    let cfg = config("anchor_psi.json");
    assert_eq!(run(&["run", "--config", cfg.to_str().unwrap(), "--out", a.path().to_str().unwrap()]).status.code(), Some(0));
    let summary = tempfile::tempdir().unwrap();
    let rep = a.path().join("report.json");
    let o = run(&["report", rep.to_str().unwrap(), rep.to_str().unwrap(), "--out", summary.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let s: Value = serde_json::from_str(&std::fs::read_to_string(summary.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["reports"].as_array().unwrap().len(), 2);
    assert_eq!(s["passed"], true);
}
