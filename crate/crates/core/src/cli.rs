//! Command-line front end.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | invalid configuration or arguments |
//! | 2 | input file could not be parsed |
//! | 3 | infeasible instance; a JSON reason is printed on stdout |
//! | 4 | I/O error |
//! | 5 | internal control-plane error |

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;

use crate::config::{ScenarioConfig, SolverKind};
use crate::control_plane::{run_schedule, ControlError, EpochOutcome, SimOptions};
use crate::format::{self, FormatError, SolveMeta};
use crate::metrics::{emit_report, MetricsError, RunSummary};
use crate::optimizer::{self, all_on_baseline_watts, check_feasible, OptError, ProblemInstance, SolveOptions};
use crate::rf_env::{generate_stadium, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_INTERNAL: i32 = 5;

#[derive(Debug, Parser)]
#[command(name = "oran-es", version, about = "Energy-saving O-RAN control loop simulator and optimizer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Place O-RUs and UEs in the stadium and write a scenario file.
    Generate {
        /// Scenario configuration (TOML). Defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        orus: Option<usize>,
        #[arg(long)]
        ues: Option<usize>,
    },
    /// Solve one instance. Accepts an instance file or a scenario file,
    /// in which case every UE of the scenario is included.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value = "exact")]
        solver: SolverKind,
        /// Allocation output; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// Run the control loop over a scenario and write report files.
    Run {
        /// Scenario file, or a configuration file to generate one from.
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        /// UE count per epoch, cycled, e.g. `16,64,128`.
        #[arg(long, value_delimiter = ',')]
        ue_schedule: Option<Vec<usize>>,
        #[arg(long)]
        solver: Option<SolverKind>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jitter: Option<OnOff>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Parse(String),
    Infeasible(String),
    Io(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Io(_) => EXIT_IO,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m)
            | CliError::Parse(m)
            | CliError::Infeasible(m)
            | CliError::Io(m)
            | CliError::Internal(m) => m,
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Invalid(_) => CliError::Config(e.to_string()),
            _ => CliError::Parse(e.to_string()),
        }
    }
}

impl From<OptError> for CliError {
    fn from(e: OptError) -> Self {
        match e {
            OptError::InvalidInstance(_) => CliError::Config(e.to_string()),
            _ => CliError::Infeasible(e.to_string()),
        }
    }
}

impl From<ControlError> for CliError {
    fn from(e: ControlError) -> Self {
        match e {
            ControlError::Optimizer(o) => o.into(),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load_config(path: &Path) -> Result<ScenarioConfig, CliError> {
    let cfg = ScenarioConfig::from_toml(&read(path)?).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

fn build_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<Scenario, CliError> {
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    generate_stadium(cfg, seed).map_err(|e| CliError::Config(e.to_string()))
}

/// Whether the TOML text carries a top-level `kind` key.
fn has_kind(text: &str) -> Result<bool, CliError> {
    let v: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Parse(e.to_string()))?;
    Ok(v.contains_key("kind"))
}

fn load_scenario_or_config(path: &Path, seed: Option<u64>) -> Result<Scenario, CliError> {
    let text = read(path)?;
    if has_kind(&text)? {
        Ok(format::scenario_from_toml(&text)?)
    } else {
        let cfg = load_config(path)?;
        let seed = seed.unwrap_or(cfg.run.seed);
        build_scenario(&cfg, seed)
    }
}

pub fn cmd_generate(
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
    orus: Option<usize>,
    ues: Option<usize>,
) -> Result<(), CliError> {
    let mut cfg = match config {
        Some(p) => load_config(p)?,
        None => ScenarioConfig::default(),
    };
    if let Some(n) = orus {
        cfg.counts.orus = n;
    }
    if let Some(n) = ues {
        cfg.counts.ues = n;
        cfg.counts.ue_schedule.retain(|&k| k <= n);
    }
    let seed = seed.unwrap_or(cfg.run.seed);
    let scenario = build_scenario(&cfg, seed)?;
    write(out, &format::scenario_to_toml(&scenario))?;
    info!("wrote scenario with {} O-RUs and {} UEs to {}", scenario.orus.len(), scenario.ues.len(), out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct SolveSummary {
    status: &'static str,
    solver: String,
    objective_watts: f64,
    active_orus: usize,
    optimality: optimizer::Optimality,
    nodes_explored: u64,
    wall_time_s: f64,
}

#[derive(Debug, Serialize)]
struct Failure<'a> {
    status: &'static str,
    reason: &'a str,
}

pub fn cmd_solve(instance: &Path, solver: SolverKind, out: Option<&Path>, threads: usize) -> Result<(), CliError> {
    let text = read(instance)?;
    let inst = match format::document_kind(&text)?.as_str() {
        "scenario" => {
            let s = format::scenario_from_toml(&text)?;
            let demands: Vec<f64> = s.ues.iter().map(|u| u.demand_lambda).collect();
            ProblemInstance::from_scenario(&s, s.ues.len(), &demands)?
        }
        _ => format::instance_from_toml(&text)?,
    };
    let opts = SolveOptions::default().with_threads(threads);
    let report = optimizer::solve(solver, &inst, &opts)?;
    let violations = check_feasible(&inst, &report.allocation);
    if !violations.is_empty() {
        return Err(CliError::Internal(format!("solver returned an infeasible allocation: {violations:?}")));
    }
    let meta = SolveMeta {
        solver: solver.to_string(),
        optimality: report.optimality,
        nodes_explored: report.nodes_explored,
    };
    let doc = format::allocation_to_toml(&report.allocation, Some(&meta));
    let summary = SolveSummary {
        status: "ok",
        solver: solver.to_string(),
        objective_watts: report.allocation.objective_watts,
        active_orus: report.allocation.active.len(),
        optimality: report.optimality,
        nodes_explored: report.nodes_explored,
        wall_time_s: report.wall_time,
    };
    match out {
        Some(p) => {
            write(p, &doc)?;
            println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
        }
        None => print!("{doc}"),
    }
    Ok(())
}

pub struct RunArgs<'a> {
    pub scenario: &'a Path,
    pub epochs: Option<usize>,
    pub ue_schedule: Option<Vec<usize>>,
    pub solver: Option<SolverKind>,
    pub seed: Option<u64>,
    pub out: &'a Path,
    pub jitter: Option<bool>,
    pub threads: Option<usize>,
}

pub fn cmd_run(args: RunArgs<'_>) -> Result<RunSummary, CliError> {
    let scenario = load_scenario_or_config(args.scenario, args.seed)?;
    let mut cfg = scenario.config.clone();
    if let Some(k) = args.solver {
        cfg.solver.kind = k;
    }
    if let Some(s) = args.seed {
        cfg.run.seed = s;
    }
    if let Some(j) = args.jitter {
        cfg.latency.jitter = j;
    }
    if let Some(t) = args.threads {
        cfg.solver.threads = t.max(1);
    }
    let schedule = args.ue_schedule.unwrap_or_else(|| cfg.counts.schedule());
    if schedule.is_empty() {
        return Err(CliError::Config("invalid value for `ue_schedule`: must not be empty".into()));
    }
    if let Some(&n) = schedule.iter().find(|&&n| n == 0 || n > scenario.ues.len()) {
        return Err(CliError::Config(format!(
            "invalid value for `ue_schedule`: entry {n} must lie in 1..={}",
            scenario.ues.len()
        )));
    }
    let epochs = args.epochs.or(cfg.run.epochs).unwrap_or(schedule.len());
    let opts = SimOptions::from_config(&cfg);
    let (traces, _) = run_schedule(&scenario, &schedule, epochs, &opts)?;
    let baseline = all_on_baseline_watts(&ProblemInstance::from_scenario(&scenario, 0, &[])?);
    let summary = RunSummary::from_traces(&cfg.solver.kind.to_string(), cfg.run.seed, baseline, traces)?;
    emit_report(&summary, args.out)?;
    info!("wrote {} epochs to {}", summary.epochs(), args.out.display());
    Ok(summary)
}

fn failed_epochs(summary: &RunSummary) -> Vec<String> {
    summary
        .status
        .iter()
        .filter_map(|s| match &s.outcome {
            EpochOutcome::Failed { reason, .. } => Some(format!("epoch {}: {reason}", s.epoch)),
            _ => None,
        })
        .collect()
}

/// Run a parsed command and return the process exit code.
pub fn execute(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Generate { config, seed, out, orus, ues } => {
            cmd_generate(config.as_deref(), seed, &out, orus, ues)
        }
        Command::Solve { instance, solver, out, threads } => cmd_solve(&instance, solver, out.as_deref(), threads),
        Command::Run { scenario, epochs, ue_schedule, solver, seed, out, jitter, threads } => cmd_run(RunArgs {
            scenario: &scenario,
            epochs,
            ue_schedule,
            solver,
            seed,
            out: &out,
            jitter: jitter.map(|j| j == OnOff::On),
            threads,
        })
        .and_then(|summary| {
            let failed = failed_epochs(&summary);
            if failed.is_empty() {
                Ok(())
            } else {
                for f in &failed {
                    warn!("{f}");
                }
                Err(CliError::Infeasible(failed.join("; ")))
            }
        }),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            if let CliError::Infeasible(reason) = &e {
                let doc = Failure { status: "infeasible", reason };
                println!("{}", serde_json::to_string(&doc).expect("reason serializes"));
            }
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
