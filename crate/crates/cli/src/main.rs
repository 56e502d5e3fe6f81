//! `stabound` command-line driver.

mod checks;
mod experiment;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use stabound::report::{Check, RunReport, Status};
use stabound::Error;

use checks::{lookup, Artifact, Ctx, Stage};
use experiment::{parse_tolerance, ExperimentConfig};

#[derive(Parser)]
#[command(name = "stabound", version, about = "Boundary regularity checks for nonlocal operators with spherical Levy measures")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for report.json, timing.json and artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run independent checks of the same module concurrently.
    #[arg(long, global = true)]
    parallel: bool,
    /// Tolerance override, repeatable.
    #[arg(long = "tolerance", value_name = "NAME=VALUE", value_parser = parse_tolerance, global = true)]
    tolerances: Vec<(String, f64)>,
    /// Grid spacing override.
    #[arg(long, global = true)]
    h: Option<f64>,
    /// Order override.
    #[arg(long, global = true)]
    s: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the checks listed in the config.
    Run,
    /// Modulus upgrade and Dini verdicts.
    Modulus {
        #[command(subcommand)]
        action: ModulusCmd,
    },
    /// Build the profile and export it.
    Zeta {
        #[command(subcommand)]
        action: ZetaCmd,
    },
    /// Evaluate the operator on the anchor bump.
    Operator {
        #[command(subcommand)]
        action: OperatorCmd,
    },
    /// Verify the barrier signs on collar probes.
    Barrier {
        #[command(subcommand)]
        action: BarrierCmd,
    },
    /// Intermediate-scale estimate on a Dini graph.
    Lemma53,
    /// Solve the Dirichlet problem and export the solution.
    Solve,
    /// Boundary decay exponent.
    Rate {
        /// Fit the pure power d^s on the solver's nodes instead of the solution.
        #[arg(long)]
        analytic: bool,
    },
    /// Hopf margin and its refinement stability.
    Hopf,
    /// Convergence to the local limit as s -> 1.
    #[command(name = "limit-s1")]
    LimitS1,
    /// Aggregate report.json files into one table.
    Report {
        reports: Vec<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ModulusCmd {
    Check,
}

#[derive(Subcommand)]
enum ZetaCmd {
    Build,
}

#[derive(Subcommand)]
enum OperatorCmd {
    Eval,
}

#[derive(Subcommand)]
enum BarrierCmd {
    Verify,
}

enum Failure {
    Schema(String),
    Numerical { module: &'static str, msg: String },
    Io(String),
}

impl Failure {
    fn from_error(module: &'static str, e: Error) -> Self {
        match e {
            Error::Schema(m) => Failure::Schema(m),
            Error::InvalidParameter(_) | Error::OutOfRange(_) => Failure::Schema(format!("{module}: {e}")),
            e => Failure::Numerical { module, msg: e.to_string() },
        }
    }

    fn report(&self) -> ExitCode {
        match self {
            Failure::Schema(m) => {
                eprintln!("schema error: {m}");
                ExitCode::from(2)
            }
            Failure::Io(m) => {
                eprintln!("error: {m}");
                ExitCode::from(2)
            }
            Failure::Numerical { module, msg } => {
                eprintln!("numerical failure in module {module}: {msg}");
                ExitCode::from(3)
            }
        }
    }
}

fn load(common: &Common) -> Result<ExperimentConfig, Failure> {
    let path = common.config.as_ref().ok_or_else(|| Failure::Schema("--config is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::parse(&text).map_err(|e| Failure::from_error("cli", e))?;
    cfg.override_with(common.s, common.h, &common.tolerances).map_err(|e| Failure::from_error("cli", e))?;
    Ok(cfg)
}

struct Ran {
    name: &'static str,
    checks: Vec<Check>,
    artifacts: Vec<Artifact>,
    secs: f64,
}

/// Runs the named checks stage by stage. Within a stage, checks run
/// concurrently when `parallel` is set. Output follows stage order.
fn execute(ctx: &Ctx, names: &[String], parallel: bool) -> Result<Vec<Ran>, Failure> {
    let mut defs: Vec<_> = names.iter().map(|n| lookup(n).expect("validated")).collect();
    defs.dedup_by_key(|d| d.name);
    defs.sort_by_key(|d| d.stage);
    let mut out = Vec::new();
    let stages = [Stage::Modulus, Stage::Zeta, Stage::Operator, Stage::Geometry, Stage::Solver];
    for stage in stages {
        let group: Vec<_> = defs.iter().filter(|d| d.stage == stage).collect();
        let run = |d: &&&checks::CheckDef| {
            let t = Instant::now();
            let r = (d.run)(ctx);
            (d.name, r, t.elapsed().as_secs_f64())
        };
        let results: Vec<_> = if parallel { group.par_iter().map(run).collect() } else { group.iter().map(run).collect() };
        for (name, r, secs) in results {
            let o = r.map_err(|e| Failure::from_error(stage.name(), e))?;
            out.push(Ran { name, checks: o.checks, artifacts: o.artifacts, secs });
        }
    }
    Ok(out)
}

fn write(path: &Path, content: &str) -> Result<(), Failure> {
    std::fs::write(path, content).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn run_checks(common: &Common, names: Option<&[&str]>, analytic: bool) -> Result<bool, Failure> {
    let start = Instant::now();
    let mut cfg = load(common)?;
    if let Some(n) = names {
        cfg.checks = n.iter().map(|s| s.to_string()).collect();
    }
    let hash = cfg.hash();
    let out_dir = common.out.clone().or_else(|| cfg.out.as_ref().map(PathBuf::from));
    let list = cfg.checks.clone();
    let ctx = Ctx::new(cfg, analytic);
    let ran = execute(&ctx, &list, common.parallel)?;
    let mut report = RunReport { config_hash: hash, ..Default::default() };
    for r in &ran {
        report.checks.extend(r.checks.iter().cloned());
        report.artifacts.extend(r.artifacts.iter().map(|a| a.name.clone()));
    }
    print!("{}", report.table());
    for c in report.checks.iter().filter(|c| !c.detail.is_empty()) {
        println!("  {}: {}", c.name, c.detail);
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(&dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
        for r in &ran {
            for a in &r.artifacts {
                write(&dir.join(&a.name), &a.content)?;
            }
        }
        write(&dir.join("report.json"), &report.to_json())?;
        let timing = serde_json::json!({
            "total_secs": start.elapsed().as_secs_f64(),
            "checks": ran.iter().map(|r| (r.name.to_string(), serde_json::Value::from(r.secs))).collect::<serde_json::Map<_, _>>(),
        });
        write(&dir.join("timing.json"), &(serde_json::to_string_pretty(&timing).expect("json") + "\n"))?;
        println!("wrote {}", dir.display());
    }
    Ok(report.passed())
}

fn aggregate(common: &Common, paths: &[PathBuf]) -> Result<bool, Failure> {
    if paths.is_empty() {
        return Err(Failure::Schema("report needs at least one report.json".into()));
    }
    let mut all = RunReport::default();
    let mut rows = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?;
        let r: RunReport = serde_json::from_str(&text).map_err(|e| Failure::Schema(format!("{}: {e}", p.display())))?;
        let fails = r.checks.iter().filter(|c| c.status == Status::Fail).count();
        rows.push(serde_json::json!({
            "path": p.display().to_string(),
            "config_hash": r.config_hash,
            "checks": r.checks.len(),
            "failed": fails,
            "passed": r.passed(),
        }));
        let src = p.parent().and_then(|d| d.file_name()).map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
        all.checks.extend(r.checks.into_iter().map(|mut c| {
            c.name = format!("{src}/{}", c.name);
            c
        }));
    }
    print!("{}", all.table());
    let passed = all.passed();
    println!("{} reports, {} checks, {}", paths.len(), all.checks.len(), if passed { "all passing" } else { "failures present" });
    if let Some(dir) = &common.out {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
        let summary = serde_json::json!({ "passed": passed, "reports": rows, "checks": all.checks });
        write(&dir.join("summary.json"), &(serde_json::to_string_pretty(&summary).expect("json") + "\n"))?;
    }
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = &cli.common;
    let result = match &cli.cmd {
        Cmd::Run => run_checks(common, None, false),
        Cmd::Modulus { action: ModulusCmd::Check } => run_checks(common, Some(&["modulus_upgrade", "dini_verdict"]), false),
        Cmd::Zeta { action: ZetaCmd::Build } => run_checks(common, Some(&["zeta_properties"]), false),
        Cmd::Operator { action: OperatorCmd::Eval } => run_checks(common, Some(&["psi_anchor", "nondegeneracy"]), false),
        Cmd::Barrier { action: BarrierCmd::Verify } => run_checks(common, Some(&["barrier_plus", "barrier_minus"]), false),
        Cmd::Lemma53 => run_checks(common, Some(&["lemma53"]), false),
        Cmd::Solve => run_checks(common, Some(&["solve"]), false),
        Cmd::Rate { analytic } => run_checks(common, Some(&["decay_rate"]), *analytic),
        Cmd::Hopf => run_checks(common, Some(&["hopf"]), false),
        Cmd::LimitS1 => run_checks(common, Some(&["s1_limit"]), false),
        Cmd::Report { reports } => aggregate(common, reports),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => f.report(),
    }
}
