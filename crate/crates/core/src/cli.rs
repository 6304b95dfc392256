//! Command line harness: `check`, `simulate`, `montecarlo`, `switching` and
//! `reproduce-example`.
//!
//! Exit codes: 0 success, 1 configuration error, 2 an assumption fails,
//! 3 a reproduction check fails, 4 runtime failure (non-finite state, I/O).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::protocol::{self, DiffusionMode, ProtocolError, ProtocolSystem, DEFAULT_RATIO_GRID};
use crate::scenario::ExampleScenario;
use crate::sde::{self, EnsembleResult, SdeError, Trajectory};
use crate::switching::{self, SwitchedSystem, SwitchingError, SwitchingReport};
use crate::{graph, Error};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_ASSUMPTION: i32 = 2;
pub const EXIT_REPRODUCE: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";

#[derive(Debug, Parser)]
#[command(
    name = "leader-consensus",
    version,
    about = "Leader-following consensus under measurement noise"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Settings that take precedence over the configuration file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo ensemble size.
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Use the leader channel diffusion without the leader noise intensity.
    #[arg(long)]
    pub paper_literal_diffusion: bool,
    /// Run even when an assumption fails.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (default: `output.dir` from the config, else `.`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the assumptions and print the report as JSON.
    Check {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// One seeded trajectory on a fixed topology.
    Simulate(RunArgs),
    /// Monte Carlo ensemble on a fixed topology.
    Montecarlo(RunArgs),
    /// Trajectory and ensemble on a switching topology.
    Switching(RunArgs),
    /// Run the built-in four-agent example.
    ReproduceExample {
        #[arg(long, default_value = "example-output")]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    fn assumption(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_ASSUMPTION,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

fn protocol_code(e: &ProtocolError) -> i32 {
    match e {
        ProtocolError::Gamma(_) | ProtocolError::Gain(_) | ProtocolError::Leader(_) => EXIT_CONFIG,
        ProtocolError::MissingRho(_) => EXIT_ASSUMPTION,
        ProtocolError::QuadratureUnstable { .. } | ProtocolError::Linalg(_) => EXIT_RUNTIME,
    }
}

fn sde_code(e: &SdeError) -> i32 {
    match e {
        SdeError::Config(_) => EXIT_CONFIG,
        SdeError::NonFinite { .. } => EXIT_RUNTIME,
        SdeError::Protocol(p) => protocol_code(p),
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Config(_) | Error::Graph(_) => EXIT_CONFIG,
            Error::Linalg(_) | Error::Io { .. } => EXIT_RUNTIME,
            Error::Protocol(p) => protocol_code(p),
            Error::Sde(s) => sde_code(s),
            Error::Switching(s) => match s {
                SwitchingError::NotBalanced(_) | SwitchingError::NotReachable(_) => EXIT_ASSUMPTION,
                SwitchingError::Protocol(p) => protocol_code(p),
                SwitchingError::Sde(s) => sde_code(s),
                SwitchingError::Linalg(_) => EXIT_RUNTIME,
                _ => EXIT_CONFIG,
            },
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

macro_rules! failure_from {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Error::from(e).into()
            }
        }
    )*};
}

failure_from!(
    crate::config::ConfigError,
    ProtocolError,
    SdeError,
    SwitchingError
);

/// Parses `args` (program name first) and runs the command.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli, stdout, stderr),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(stderr, "{text}")
            } else {
                write!(stdout, "{text}")
            };
            code
        }
    }
}

pub fn run(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::Check { config, overrides } => cmd_check(&config, &overrides, stdout),
        Command::Simulate(a) => cmd_run(RunKind::Simulate, &a, stdout),
        Command::Montecarlo(a) => cmd_run(RunKind::Montecarlo, &a, stdout),
        Command::Switching(a) => cmd_run(RunKind::Switching, &a, stdout),
        Command::ReproduceExample { out, overrides } => {
            cmd_reproduce_example(&out, &overrides, stdout)
        }
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn apply_overrides(cfg: &mut RunConfig, o: &Overrides) -> Result<(), Failure> {
    if let Some(seed) = o.seed {
        cfg.sim.seed = seed;
    }
    if let Some(runs) = o.runs {
        cfg.ensemble.runs = runs;
    }
    if let Some(dt) = o.dt {
        cfg.sim.dt = dt;
    }
    if let Some(horizon) = o.horizon {
        cfg.sim.horizon = horizon;
    }
    if o.paper_literal_diffusion {
        cfg.noise.mode = DiffusionMode::PaperLiteral;
    }
    cfg.resolve()?;
    Ok(())
}

fn load(path: &Path, o: &Overrides) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(path)?;
    apply_overrides(&mut cfg, o)?;
    Ok(cfg)
}

/// Fixed-topology assumption outcome.
struct FixedAnalysis {
    system: Option<ProtocolSystem>,
    report: Value,
    holds: bool,
    lambda_max_p: Option<f64>,
    rho: Option<f64>,
}

fn analyze_fixed(cfg: &RunConfig) -> Result<FixedAnalysis, Failure> {
    let topology = cfg.leader_topologies()?.remove(0);
    let reachable = graph::is_globally_reachable(&topology, 0);
    let system = match cfg.protocol_system() {
        Ok(sys) => sys,
        Err(e) if !reachable => {
            let h = cfg.gains.h;
            let report = json!({
                "a1": false,
                "a2": null,
                "a3": {"holds": h.integral_diverges()},
                "a4": {"holds": h.square_integrable()},
                "lambda_max_p": null,
                "rho": null,
                "warnings": [format!("leader is not globally reachable: {e}")],
            });
            return Ok(FixedAnalysis {
                system: None,
                report,
                holds: false,
                lambda_max_p: None,
                rho: None,
            });
        }
        Err(e) => return Err(e.into()),
    };
    let report = protocol::check_assumptions(&system, cfg.sim.horizon, DEFAULT_RATIO_GRID)?;
    Ok(FixedAnalysis {
        holds: report.all_hold(),
        lambda_max_p: Some(report.lambda_max_p),
        rho: Some(report.rho),
        report: serde_json::to_value(&report).expect("report serializes"),
        system: Some(system),
    })
}

fn analyze_switching(cfg: &RunConfig) -> Result<(SwitchedSystem, SwitchingReport), Failure> {
    let system = cfg.switched_system()?;
    let mut report = switching::inspect_switching(
        system.set(),
        system.gamma(),
        system.h(),
        system.g(),
        cfg.sim.horizon,
        DEFAULT_RATIO_GRID,
    )?;
    if let switching::SwitchingSignal::RoundRobin { dwell, .. } = system.signal() {
        if *dwell < 10.0 * cfg.sim.dt {
            report.warnings.push(format!(
                "dwell {dwell} is shorter than 10 dt = {}",
                10.0 * cfg.sim.dt
            ));
        }
    }
    Ok((system, report))
}

fn to_pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializes");
    s.push('\n');
    s
}

fn cmd_check(path: &Path, o: &Overrides, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let cfg = load(path, o)?;
    let (out, holds) = if cfg.is_switching() {
        let (_, report) = analyze_switching(&cfg)?;
        let holds = report.all_hold();
        (
            json!({
                "mu": report.mu,
                "nu": report.nu,
                "holds": holds,
                "switching_report": report,
            }),
            holds,
        )
    } else {
        let a = analyze_fixed(&cfg)?;
        (
            json!({
                "lambda_max_P": a.lambda_max_p,
                "rho": a.rho,
                "holds": a.holds,
                "assumption_report": a.report,
            }),
            a.holds,
        )
    };
    write!(stdout, "{}", to_pretty(&out)).map_err(|e| Failure::runtime(e.to_string()))?;
    Ok(if holds { EXIT_OK } else { EXIT_ASSUMPTION })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RunKind {
    Simulate,
    Montecarlo,
    Switching,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct MsPoint {
    t: f64,
    value: f64,
    stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct CheckItem {
    name: &'static str,
    passed: bool,
    detail: String,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    command: &'static str,
    #[serde(rename = "lambda_max_P")]
    lambda_max_p: Option<f64>,
    rho: Option<f64>,
    mu: Option<f64>,
    nu: Option<f64>,
    assumption_report: Value,
    ms_error: Vec<MsPoint>,
    envelope_violations: Option<usize>,
    runs: usize,
    seed: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    checks: Vec<CheckItem>,
    notes: Vec<String>,
    resolved_config: &'a RunConfig,
}

const SELECTED_TIMES: [f64; 12] = [
    0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 150.0, 200.0, 500.0, 1000.0,
];

/// Record indices nearest to a fixed list of report times, plus the last one.
fn selected_indices(times: &[f64]) -> Vec<usize> {
    let Some(&last) = times.last() else {
        return Vec::new();
    };
    let mut idx: Vec<usize> = SELECTED_TIMES
        .iter()
        .filter(|&&t| t <= last)
        .chain(std::iter::once(&last))
        .map(|&target| {
            (0..times.len())
                .min_by(|&a, &b| {
                    (times[a] - target)
                        .abs()
                        .total_cmp(&(times[b] - target).abs())
                })
                .expect("non-empty")
        })
        .collect();
    idx.dedup();
    idx
}

fn ensemble_points(res: &EnsembleResult) -> Vec<MsPoint> {
    selected_indices(&res.times)
        .into_iter()
        .map(|k| MsPoint {
            t: res.times[k],
            value: res.ms_error[k],
            stderr: Some(res.stderr[k]),
        })
        .collect()
}

fn trajectory_points(traj: &Trajectory) -> Vec<MsPoint> {
    selected_indices(&traj.times)
        .into_iter()
        .map(|k| MsPoint {
            t: traj.times[k],
            value: traj.states[k].norm_sq(),
            stderr: None,
        })
        .collect()
}

fn trajectory_csv(traj: &Trajectory) -> Vec<u8> {
    let mut buf = Vec::new();
    sde::write_trajectory_csv(&mut buf, traj).expect("in-memory write");
    buf
}

fn ensemble_csv(res: &EnsembleResult, envelope: &[f64]) -> Vec<u8> {
    let mut buf = Vec::new();
    sde::write_ensemble_csv(&mut buf, res, envelope).expect("in-memory write");
    buf
}

/// Files of one command, written only after every computation succeeded.
struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn new() -> Self {
        Self { files: Vec::new() }
    }

    fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    /// Writes every file; on failure removes what was written.
    fn write(&self, dir: &Path, stdout: &mut dyn Write) -> Result<(), Failure> {
        let existed = dir.exists();
        let cleanup = |written: &[PathBuf]| {
            for p in written {
                let _ = fs::remove_file(p);
            }
            if !existed {
                let _ = fs::remove_dir(dir);
            }
        };
        fs::create_dir_all(dir).map_err(|e| Failure::runtime(format!("{}: {e}", dir.display())))?;
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Err(e) = fs::write(&path, bytes) {
                written.push(path.clone());
                cleanup(&written);
                return Err(Failure::runtime(format!("{}: {e}", path.display())));
            }
            written.push(path);
        }
        for p in &written {
            let _ = writeln!(stdout, "wrote {}", p.display());
        }
        Ok(())
    }
}

fn out_dir(args_out: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    args_out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn leader_note(cfg: &RunConfig) -> String {
    format!(
        "leader starts at x0(0) = {}, v0(0) = {}, so x(0) = x*(0) + x0(0) and v(0) = v*(0) + v0(0)",
        cfg.leader.x0_init, cfg.leader.v0_init
    )
}

fn cmd_run(kind: RunKind, a: &RunArgs, stdout: &mut dyn Write) -> Result<i32, Failure> {
    let cfg = load(&a.config, &a.overrides)?;
    let dir = out_dir(a.out.as_deref(), &cfg);
    let outputs = match kind {
        RunKind::Switching => run_switching(&cfg, a.overrides.force)?,
        _ => {
            if cfg.is_switching() {
                return Err(Failure::config(
                    "topologies: a topology set needs the `switching` subcommand",
                ));
            }
            run_fixed(kind, &cfg, a.overrides.force)?
        }
    };
    outputs.write(&dir, stdout)?;
    Ok(EXIT_OK)
}

fn run_fixed(kind: RunKind, cfg: &RunConfig, force: bool) -> Result<Outputs, Failure> {
    let analysis = analyze_fixed(cfg)?;
    if !analysis.holds && !force {
        return Err(Failure::assumption(format!(
            "assumptions do not hold (use --force to run anyway): {}",
            analysis.report
        )));
    }
    let sys = analysis.system.as_ref().ok_or_else(|| {
        Failure::assumption(
            "the leader is not globally reachable; the protocol matrices are undefined",
        )
    })?;
    let mut outputs = Outputs::new();
    let mut notes = vec![leader_note(cfg)];
    let (ms_error, violations, command) = match kind {
        RunKind::Simulate => {
            let traj = sde::simulate(sys, &cfg.leader, &cfg.sim, &cfg.eps0)?;
            outputs.add(&cfg.output.trajectory, trajectory_csv(&traj));
            (trajectory_points(&traj), None, "simulate")
        }
        _ => {
            let res = sde::monte_carlo(sys, &cfg.leader, &cfg.sim, &cfg.eps0, cfg.ensemble.runs)?;
            let rho = analysis.rho.unwrap_or(0.0);
            let (envelope, violations) = if rho > 0.0 {
                let cmp = sde::compare_envelope(&res, sys, rho, &cfg.eps0)?;
                (cmp.envelope, Some(cmp.violations))
            } else {
                notes.push("rho <= 0: envelope unavailable".into());
                (vec![f64::NAN; res.times.len()], None)
            };
            outputs.add(&cfg.output.ensemble, ensemble_csv(&res, &envelope));
            (ensemble_points(&res), violations, "montecarlo")
        }
    };
    let summary = Summary {
        command,
        lambda_max_p: analysis.lambda_max_p,
        rho: analysis.rho,
        mu: None,
        nu: None,
        assumption_report: analysis.report.clone(),
        ms_error,
        envelope_violations: violations,
        runs: if kind == RunKind::Simulate {
            1
        } else {
            cfg.ensemble.runs
        },
        seed: cfg.sim.seed,
        checks: Vec::new(),
        notes,
        resolved_config: cfg,
    };
    outputs.add(&cfg.output.summary, to_pretty(&summary).into_bytes());
    outputs.add(
        RESOLVED_CONFIG_FILE,
        (cfg.to_json_pretty() + "\n").into_bytes(),
    );
    Ok(outputs)
}

fn run_switching(cfg: &RunConfig, force: bool) -> Result<Outputs, Failure> {
    let (sys, report) = analyze_switching(cfg)?;
    let holds = report.all_hold();
    if !holds && !force {
        return Err(Failure::assumption(format!(
            "switching assumptions do not hold (use --force to run anyway): {}",
            serde_json::to_string(&report).expect("report serializes")
        )));
    }
    let mut notes = vec![
        leader_note(cfg),
        "conservative switching envelope: decay nu/(1+gamma), largest noise trace over the set"
            .into(),
    ];
    let traj = switching::simulate_switching(&sys, &cfg.leader, &cfg.sim, &cfg.eps0)?;
    let res = switching::monte_carlo_switching(
        &sys,
        &cfg.leader,
        &cfg.sim,
        &cfg.eps0,
        cfg.ensemble.runs,
    )?;
    let (envelope, violations) = if report.nu > 0.0 {
        let cmp = switching::compare_switching_envelope(&res, &sys, report.nu, &cfg.eps0)?;
        (cmp.envelope, Some(cmp.violations))
    } else {
        notes.push("nu <= 0: envelope unavailable".into());
        (vec![f64::NAN; res.times.len()], None)
    };
    let mut outputs = Outputs::new();
    outputs.add(&cfg.output.trajectory, trajectory_csv(&traj));
    outputs.add(&cfg.output.ensemble, ensemble_csv(&res, &envelope));
    let summary = Summary {
        command: "switching",
        lambda_max_p: None,
        rho: None,
        mu: Some(report.mu),
        nu: Some(report.nu),
        assumption_report: serde_json::to_value(&report).expect("report serializes"),
        ms_error: ensemble_points(&res),
        envelope_violations: violations,
        runs: cfg.ensemble.runs,
        seed: cfg.sim.seed,
        checks: Vec::new(),
        notes,
        resolved_config: cfg,
    };
    outputs.add(&cfg.output.summary, to_pretty(&summary).into_bytes());
    outputs.add(
        RESOLVED_CONFIG_FILE,
        (cfg.to_json_pretty() + "\n").into_bytes(),
    );
    Ok(outputs)
}

fn cmd_reproduce_example(
    out: &Path,
    o: &Overrides,
    stdout: &mut dyn Write,
) -> Result<i32, Failure> {
    let mut cfg = ExampleScenario::config();
    apply_overrides(&mut cfg, o)?;
    let analysis = analyze_fixed(&cfg)?;
    let sys = analysis
        .system
        .as_ref()
        .ok_or_else(|| Failure::runtime("example system failed to assemble"))?;

    let traj = sde::simulate(sys, &cfg.leader, &cfg.sim, &cfg.eps0)?;
    let res = sde::monte_carlo(sys, &cfg.leader, &cfg.sim, &cfg.eps0, cfg.ensemble.runs)?;
    let rho = analysis.rho.unwrap_or(0.0);
    let cmp = if rho > 0.0 {
        Some(sde::compare_envelope(&res, sys, rho, &cfg.eps0)?)
    } else {
        None
    };

    let lmax = analysis.lambda_max_p.unwrap_or(f64::NAN);
    let (lo, hi) = ExampleScenario::LAMBDA_MAX_P;
    let first = res.ms_error[0];
    let last = *res.ms_error.last().expect("non-empty");
    let checks = vec![
        CheckItem {
            name: "assumptions",
            passed: analysis.holds,
            detail: "A1-A4 hold".into(),
        },
        CheckItem {
            name: "lambda_max_P",
            passed: (lo..=hi).contains(&lmax),
            detail: format!("{lmax} in [{lo}, {hi}]"),
        },
        CheckItem {
            name: "envelope_violations",
            passed: cmp.as_ref().is_some_and(|c| c.violations == 0),
            detail: match &cmp {
                Some(c) => format!("{} flagged times", c.violations),
                None => "rho <= 0".into(),
            },
        },
        CheckItem {
            name: "ms_error_decrease",
            passed: last < first,
            detail: format!("ms_error(T) = {last} vs ms_error(0) = {first}"),
        },
    ];

    let envelope = cmp
        .as_ref()
        .map(|c| c.envelope.clone())
        .unwrap_or_else(|| vec![f64::NAN; res.times.len()]);
    let mut outputs = Outputs::new();
    outputs.add(&cfg.output.trajectory, trajectory_csv(&traj));
    outputs.add(&cfg.output.ensemble, ensemble_csv(&res, &envelope));
    let summary = Summary {
        command: "reproduce-example",
        lambda_max_p: analysis.lambda_max_p,
        rho: analysis.rho,
        mu: None,
        nu: None,
        assumption_report: analysis.report.clone(),
        ms_error: ensemble_points(&res),
        envelope_violations: cmp.as_ref().map(|c| c.violations),
        runs: cfg.ensemble.runs,
        seed: cfg.sim.seed,
        checks: checks.clone(),
        notes: vec![
            leader_note(&cfg),
            "leader acceleration a0 = 0; dt, T and the ensemble size are harness defaults".into(),
        ],
        resolved_config: &cfg,
    };
    outputs.add(&cfg.output.summary, to_pretty(&summary).into_bytes());
    outputs.add(
        RESOLVED_CONFIG_FILE,
        (cfg.to_json_pretty() + "\n").into_bytes(),
    );
    outputs.write(out, stdout)?;

    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name)
        .collect();
    if failed.is_empty() {
        Ok(EXIT_OK)
    } else {
        Err(Failure {
            code: EXIT_REPRODUCE,
            message: format!("reproduction checks failed: {}", failed.join(", ")),
        })
    }
}
