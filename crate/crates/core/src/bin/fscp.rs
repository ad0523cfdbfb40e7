//! Command-line front end: solve scenarios, run experiment sweeps,
//! validate assignments, cross-check the solver against the brute-force
//! oracle, and materialize generated scenarios.
//!
//! Exit codes: 0 success, 1 usage/input error, 2 infeasible or limits
//! exceeded, 3 internal error (including solver/oracle disagreement).
//! Every failure is also reported on stderr as a single-line JSON record:
//! `{"error":{"code":N,"kind":"...","message":"..."}}`.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use fscp::assignment::{structural_errors, Assignment};
use fscp::experiments::{
    generate_scenario, metrics, metrics_csv, run_sweep, GenSpec, RequestModel, SweepAxis,
};
use fscp::feasibility::{check_with, CheckOptions, ConstraintId, SplitOnceRelation, Violation};
use fscp::scenario::{load_scenario_path, save_scenario, Scenario};
use fscp::solver::{
    enumerate_optimal, solve, HardLimits, Mode, OracleError, SolverOptions,
};

#[derive(Parser)]
#[command(
    name = "fscp",
    version,
    about = "Joint baseband-function placement and edge caching optimizer"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one scenario and write the solution document plus one
    /// metrics CSV line (header included) on stdout.
    Solve(SolveArgs),
    /// Generate scenarios along an axis, solve every (point, mode) pair,
    /// and write the metrics CSV plus a `.meta.json` timing sidecar.
    Sweep(SweepArgs),
    /// Check an assignment document against a scenario; violations are
    /// written as CSV and make the exit code 2.
    Validate(ValidateArgs),
    /// Run the exact solver and the brute-force oracle on the same
    /// scenario and report agreement (exit 3 on mismatch).
    Compare(CompareArgs),
    /// Materialize a generator spec into a scenario document.
    Gen(GenArgs),
}

/// Solver knobs shared by the solving verbs. Flags given here override the
/// scenario document's `solver_defaults`, which overrides the built-ins
/// (fscp mode, 300 s budget, seed 1, gap 0, strict single-split equality,
/// literal delay sum, 1 worker).
#[derive(Args, Clone)]
struct SolverFlags {
    /// Solver strategy: fscp|all_ec|all_cc|greedy.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<Mode>,
    /// Wall-clock budget per solve, in seconds.
    #[arg(long = "time-budget")]
    time_budget: Option<f64>,
    /// Seed recorded with experiment outputs (and used by generators).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for the exact search (never changes the result).
    #[arg(long)]
    workers: Option<u32>,
    /// Relative optimality gap in [0, 1); 0 demands the exact optimum.
    #[arg(long)]
    gap: Option<f64>,
    /// Single-split rule: eq (as printed) or le (allow both corners).
    #[arg(long = "split-once", value_parser = parse_split_once)]
    split_once: Option<SplitOnceRelation>,
    /// Skip midhaul delay terms for edge-served cached traffic.
    #[arg(long = "path-aware", num_args = 0..=1, default_missing_value = "true")]
    path_aware: Option<bool>,
}

impl SolverFlags {
    /// Built-ins <- scenario `solver_defaults` <- these flags.
    fn resolve(&self, scenario: Option<&Scenario>) -> SolverOptions {
        let mut o = scenario
            .and_then(|s| s.solver_defaults.clone())
            .unwrap_or(SolverOptions {
                mode: Mode::Fscp,
                time_budget_s: 300.0,
                seed: 1,
                optimality_gap: 0.0,
                split_once_relation: SplitOnceRelation::Eq,
                path_aware_delay: false,
                parallel_workers: 1,
                trace_path: None,
            });
        if let Some(m) = self.mode {
            o.mode = m;
        }
        if let Some(t) = self.time_budget {
            o.time_budget_s = t;
        }
        if let Some(s) = self.seed {
            o.seed = s;
        }
        if let Some(w) = self.workers {
            o.parallel_workers = w;
        }
        if let Some(g) = self.gap {
            o.optimality_gap = g;
        }
        if let Some(r) = self.split_once {
            o.split_once_relation = r;
        }
        if let Some(p) = self.path_aware {
            o.path_aware_delay = p;
        }
        o
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Scenario document to solve.
    #[arg(long)]
    scenario: PathBuf,
    /// Where to write the solution document.
    #[arg(long, default_value = "solution.json")]
    out: PathBuf,
    /// Optional line-delimited JSON search-trace path (diagnostic only).
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    flags: SolverFlags,
}

#[derive(Args)]
struct SweepArgs {
    /// Generator template document; built-in reference family when absent.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Swept quantity: load|delay_threshold.
    #[arg(long, value_parser = parse_axis)]
    axis: SweepAxis,
    /// Comma-separated points along the axis.
    #[arg(long, value_delimiter = ',', required = true)]
    points: Vec<f64>,
    /// Comma-separated solver modes to run at every point.
    #[arg(
        long,
        value_delimiter = ',',
        value_parser = parse_mode,
        default_value = "fscp,all_ec,all_cc"
    )]
    modes: Vec<Mode>,
    /// Where to write the metrics CSV; `{out}.meta.json` gets the timings.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    flags: SolverFlags,
}

#[derive(Args)]
struct ValidateArgs {
    /// Scenario document the assignment refers to.
    #[arg(long)]
    scenario: PathBuf,
    /// Document holding the assignment under the top-level key
    /// `assignment` (a solution document qualifies).
    #[arg(long)]
    assignment: PathBuf,
    /// Violations CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Constraint families to skip, comma-separated (e.g. C1,C12).
    #[arg(long, value_delimiter = ',', value_parser = parse_constraint)]
    skip: Vec<ConstraintId>,
    /// Single-split rule: eq or le.
    #[arg(long = "split-once", value_parser = parse_split_once)]
    split_once: Option<SplitOnceRelation>,
    /// Skip midhaul delay terms for edge-served cached traffic.
    #[arg(long = "path-aware", num_args = 0..=1, default_missing_value = "true")]
    path_aware: Option<bool>,
}

#[derive(Args)]
struct CompareArgs {
    /// Scenario document; must be within the oracle's instance limits.
    #[arg(long)]
    scenario: PathBuf,
    #[command(flatten)]
    flags: SolverFlags,
}

#[derive(Args)]
struct GenArgs {
    /// Generator template document; built-in reference family when absent.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Scenario document destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the template's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the active-user fraction in [0, 1].
    #[arg(long)]
    load: Option<f64>,
    /// Override the mean delay threshold, in seconds.
    #[arg(long)]
    threshold: Option<f64>,
    /// Override the request model: uniform|pareto_80_20.
    #[arg(long, value_parser = parse_requests)]
    requests: Option<RequestModel>,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    Mode::from_str(s)
}

fn parse_axis(s: &str) -> Result<SweepAxis, String> {
    SweepAxis::from_str(s)
}

fn parse_constraint(s: &str) -> Result<ConstraintId, String> {
    ConstraintId::from_str(s)
}

fn parse_requests(s: &str) -> Result<RequestModel, String> {
    RequestModel::from_str(s)
}

fn parse_split_once(s: &str) -> Result<SplitOnceRelation, String> {
    match s {
        "eq" => Ok(SplitOnceRelation::Eq),
        "le" => Ok(SplitOnceRelation::Le),
        other => Err(format!("unknown relation `{other}` (expected eq|le)")),
    }
}

/// A failure destined for one of the non-zero exit codes.
enum Failure {
    Usage(String),
    Infeasible(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Infeasible(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    fn emit(&self) {
        let (kind, msg) = match self {
            Failure::Usage(m) => ("usage", m),
            Failure::Infeasible(m) => ("infeasible", m),
            Failure::Internal(m) => ("internal", m),
        };
        let rec = serde_json::json!({
            "error": { "code": self.code(), "kind": kind, "message": msg }
        });
        eprintln!("{rec}");
    }
}

fn usage<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Usage(e.to_string())
}

fn write_out(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text)
        .map_err(|e| Failure::Internal(format!("writing {}: {e}", path.display())))
}

/// Sidecar written next to a solution document: the real wall-clock time
/// (the document itself pins `wall_time_s` to zero) plus the resolved
/// inputs that produced it.
#[derive(Serialize)]
struct SolveMeta<'a> {
    scenario: String,
    options: &'a SolverOptions,
    wall_time_s: f64,
    proven_optimal: bool,
}

fn run_solve(a: &SolveArgs) -> Result<(), Failure> {
    let scenario = load_scenario_path(&a.scenario).map_err(usage)?;
    let mut opts = a.flags.resolve(Some(&scenario));
    opts.trace_path = a
        .trace
        .as_ref()
        .map(|p| p.to_string_lossy().into_owned());
    let t = Instant::now();
    let mut sol = solve(&scenario, &opts).map_err(usage)?;
    let wall = t.elapsed().as_secs_f64();
    sol.wall_time_s = 0.0;
    let mut doc = serde_json::to_string_pretty(&sol)
        .map_err(|e| Failure::Internal(e.to_string()))?;
    doc.push('\n');
    write_out(&a.out, &doc)?;
    let meta = SolveMeta {
        scenario: a.scenario.display().to_string(),
        options: &opts,
        wall_time_s: wall,
        proven_optimal: sol.proven_optimal,
    };
    let mut meta_doc =
        serde_json::to_string_pretty(&meta).map_err(|e| Failure::Internal(e.to_string()))?;
    meta_doc.push('\n');
    write_out(&sidecar_path(&a.out), &meta_doc)?;
    print!("{}", metrics_csv(&[metrics(&sol, &scenario)]));
    Ok(())
}

fn sidecar_path(out: &Path) -> PathBuf {
    PathBuf::from(format!("{}.meta.json", out.display()))
}

fn load_template(path: Option<&PathBuf>) -> Result<GenSpec, Failure> {
    let Some(p) = path else {
        return Ok(GenSpec::default());
    };
    let text = std::fs::read_to_string(p)
        .map_err(|e| Failure::Usage(format!("reading {}: {e}", p.display())))?;
    let g: GenSpec = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
    Ok(g)
}

fn run_sweep_cmd(a: &SweepArgs) -> Result<(), Failure> {
    let mut template = load_template(a.template.as_ref())?;
    let opts = a.flags.resolve(None);
    if let Some(seed) = a.flags.seed {
        template.seed = seed;
    }
    let (rows, meta) =
        run_sweep(&template, a.axis, &a.points, &a.modes, &opts).map_err(usage)?;
    write_out(&a.out, &metrics_csv(&rows))?;
    let mut meta_doc =
        serde_json::to_string_pretty(&meta).map_err(|e| Failure::Internal(e.to_string()))?;
    meta_doc.push('\n');
    write_out(&sidecar_path(&a.out), &meta_doc)
}

/// Any document whose top-level `assignment` key holds an assignment —
/// the shared serialization shape for the validate/compare flows; a
/// solution document parses too.
#[derive(Deserialize)]
struct AssignmentDoc {
    assignment: Assignment,
}

fn violations_csv(violations: &[Violation]) -> String {
    let mut out = String::from("constraint_id,subject,measured,bound\n");
    for v in violations {
        out.push_str(&format!(
            "{},{},{},{}\n",
            v.constraint_id, v.subject, v.measured, v.bound
        ));
    }
    out
}

fn run_validate(a: &ValidateArgs) -> Result<(), Failure> {
    let scenario = load_scenario_path(&a.scenario).map_err(usage)?;
    let text = std::fs::read_to_string(&a.assignment)
        .map_err(|e| Failure::Usage(format!("reading {}: {e}", a.assignment.display())))?;
    let doc: AssignmentDoc = serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("{}: {e}", a.assignment.display())))?;
    let structural = structural_errors(&doc.assignment, &scenario);
    if let Some(first) = structural.first() {
        return Err(Failure::Usage(format!(
            "assignment does not fit the scenario: {first}"
        )));
    }
    let check_opts = CheckOptions {
        split_once_relation: a.split_once.unwrap_or_default(),
        path_aware_delay: a.path_aware.unwrap_or(false),
        skip: a.skip.iter().copied().collect(),
    };
    let violations = check_with(&doc.assignment, &scenario, &check_opts);
    let csv = violations_csv(&violations);
    match &a.out {
        Some(p) => write_out(p, &csv)?,
        None => print!("{csv}"),
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::Infeasible(format!(
            "{} constraint violation(s)",
            violations.len()
        )))
    }
}

fn run_compare(a: &CompareArgs) -> Result<(), Failure> {
    let scenario = load_scenario_path(&a.scenario).map_err(usage)?;
    let opts = a.flags.resolve(Some(&scenario));
    let solved = solve(&scenario, &opts).map_err(usage)?;
    let oracle = enumerate_optimal(&scenario, &opts, &HardLimits::default()).map_err(
        |e: OracleError| Failure::Infeasible(e.to_string()),
    )?;
    let agree = solved.admitted_count == oracle.admitted_count
        && solved.total_power_w == oracle.total_power_w;
    if agree {
        println!(
            "MATCH admitted={} power_w={}",
            solved.admitted_count, solved.total_power_w
        );
        Ok(())
    } else {
        println!(
            "MISMATCH solve admitted={} power_w={} oracle admitted={} power_w={}",
            solved.admitted_count,
            solved.total_power_w,
            oracle.admitted_count,
            oracle.total_power_w
        );
        Err(Failure::Internal(
            "solver disagrees with the exhaustive oracle".into(),
        ))
    }
}

fn run_gen(a: &GenArgs) -> Result<(), Failure> {
    let mut g = load_template(a.template.as_ref())?;
    if let Some(seed) = a.seed {
        g.seed = seed;
    }
    if let Some(load) = a.load {
        g.active_user_fraction = load;
    }
    if let Some(th) = a.threshold {
        g.mean_delay_threshold_s = th;
    }
    if let Some(r) = a.requests {
        g.request_model = r;
    }
    let errs = g.validation_errors();
    if let Some(first) = errs.first() {
        return Err(Failure::Usage(format!("invalid generator spec: {first}")));
    }
    let doc = save_scenario(&generate_scenario(&g));
    match &a.out {
        Some(p) => write_out(p, &doc),
        None => {
            print!("{doc}");
            Ok(())
        }
    }
}

fn run() -> Result<(), Failure> {
    let cli = Cli::try_parse().map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
            print!("{e}");
            std::process::exit(0);
        }
        _ => Failure::Usage(e.to_string()),
    })?;
    match &cli.cmd {
        Cmd::Solve(a) => run_solve(a),
        Cmd::Sweep(a) => run_sweep_cmd(a),
        Cmd::Validate(a) => run_validate(a),
        Cmd::Compare(a) => run_compare(a),
        Cmd::Gen(a) => run_gen(a),
    }
}

fn main() {
    let outcome = std::panic::catch_unwind(run);
    let code = match outcome {
        Ok(Ok(())) => 0,
        Ok(Err(f)) => {
            f.emit();
            f.code()
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            let f = Failure::Internal(msg);
            f.emit();
            f.code()
        }
    };
    std::process::exit(code);
}
