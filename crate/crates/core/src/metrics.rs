//! Energy, handover and delay accounting over a run, and report files.
//!
//! Power figures are taken from the traces, which carry the optimizer's
//! objective for each applied allocation; nothing here recomputes power.
//!
//! Files written by [`emit_report`]:
//!
//! | file | content |
//! |------|---------|
//! | `epochs.csv` | one row per epoch |
//! | `summary.json` | run-level totals |
//! | `fig_energy.csv` | total and per-UE power against UE count |
//! | `fig_handover.csv` | handover count and times |
//! | `fig_stage_delays.csv` | per-stage delay, one column per stage |
//! | `trace.jsonl` | stage records and events, one epoch per line |
//! | `solver_wall_time.csv` | host solver time; the only non-reproducible file |

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control_plane::{e2e_delay, ControlError, EpochOutcome, Event, LoopTrace, StageKind, StageRecord};
use crate::optimizer::Optimality;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("per-UE energy is undefined with no UEs")]
    NoUsers,
    #[error("epoch {0} is not in the account")]
    NoSuchEpoch(usize),
    #[error("baseline power must be positive, got {0}")]
    Baseline(f64),
    #[error(transparent)]
    Trace(#[from] ControlError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> MetricsError + '_ {
    move |source| MetricsError::Io { path: path.to_path_buf(), source }
}

/// Watts per UE.
pub fn per_ue_energy(total: f64, n_ues: usize) -> Result<f64, MetricsError> {
    if n_ues == 0 {
        return Err(MetricsError::NoUsers);
    }
    Ok(total / n_ues as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochEnergy {
    pub epoch: usize,
    pub n_ues: usize,
    pub total_watts: f64,
    pub active_e2n_count: usize,
    /// `total_watts / max(1, n_ues)`.
    pub per_ue_watts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyAccount {
    pub epochs: Vec<EpochEnergy>,
    pub baseline_allon_watts: f64,
}

/// Fraction of the all-on power saved in `epoch`, clamped to `[0, 1]`.
pub fn savings_vs_allon(account: &EnergyAccount, epoch: usize) -> Result<f64, MetricsError> {
    let b = account.baseline_allon_watts;
    if !(b > 0.0) {
        return Err(MetricsError::Baseline(b));
    }
    let e = account.epochs.get(epoch).ok_or(MetricsError::NoSuchEpoch(epoch))?;
    Ok((1.0 - e.total_watts / b).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochHandovers {
    pub epoch: usize,
    pub n_ues: usize,
    pub moves: usize,
    pub total_s: f64,
    pub per_ue_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochDelay {
    pub epoch: usize,
    pub n_ues: usize,
    pub total_s: f64,
    pub stages: BTreeMap<StageKind, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStatus {
    pub epoch: usize,
    pub triggered: bool,
    pub outcome: EpochOutcome,
    pub nodes_explored: Option<u64>,
    pub optimality: Option<Optimality>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub solver: String,
    pub seed: u64,
    pub energy: EnergyAccount,
    pub handovers: Vec<EpochHandovers>,
    pub e2e: Vec<EpochDelay>,
    pub status: Vec<EpochStatus>,
    /// Host seconds spent in the solver; `None` for epochs that did not solve.
    pub solver_wall_times: Vec<Option<f64>>,
    pub traces: Vec<LoopTrace>,
}

impl RunSummary {
    pub fn from_traces(
        solver: &str,
        seed: u64,
        baseline_allon_watts: f64,
        traces: Vec<LoopTrace>,
    ) -> Result<Self, MetricsError> {
        if !(baseline_allon_watts > 0.0) {
            return Err(MetricsError::Baseline(baseline_allon_watts));
        }
        let mut s = RunSummary {
            solver: solver.to_string(),
            seed,
            energy: EnergyAccount { epochs: Vec::new(), baseline_allon_watts },
            handovers: Vec::new(),
            e2e: Vec::new(),
            status: Vec::new(),
            solver_wall_times: Vec::new(),
            traces: Vec::new(),
        };
        for t in &traces {
            s.energy.epochs.push(EpochEnergy {
                epoch: t.epoch,
                n_ues: t.n_ues,
                total_watts: t.energy_after,
                active_e2n_count: t.active_after,
                per_ue_watts: t.energy_after / t.n_ues.max(1) as f64,
            });
            s.handovers.push(EpochHandovers {
                epoch: t.epoch,
                n_ues: t.n_ues,
                moves: t.handover_count,
                total_s: t.handover_total_s,
                per_ue_s: t.handover_per_ue_s,
            });
            let (total_s, _) = e2e_delay(t)?;
            let mut stages: BTreeMap<StageKind, f64> = StageKind::ALL.iter().map(|&k| (k, 0.0)).collect();
            for r in &t.records {
                *stages.get_mut(&r.stage).expect("all stages present") += r.duration;
            }
            s.e2e.push(EpochDelay { epoch: t.epoch, n_ues: t.n_ues, total_s, stages });
            s.status.push(EpochStatus {
                epoch: t.epoch,
                triggered: t.triggered,
                outcome: t.outcome.clone(),
                nodes_explored: t.solver.as_ref().map(|x| x.nodes_explored),
                optimality: t.solver.as_ref().map(|x| x.optimality),
            });
            s.solver_wall_times.push(t.solver.as_ref().map(|x| x.wall_time));
        }
        s.traces = traces;
        Ok(s)
    }

    pub fn epochs(&self) -> usize {
        self.energy.epochs.len()
    }
}

fn outcome_label(o: &EpochOutcome) -> &'static str {
    match o {
        EpochOutcome::Applied => "applied",
        EpochOutcome::Skipped => "skipped",
        EpochOutcome::Failed { .. } => "failed",
    }
}

fn optimality_label(o: Option<Optimality>) -> &'static str {
    match o {
        Some(Optimality::ProvedOptimal) => "proved_optimal",
        Some(Optimality::Heuristic) => "heuristic",
        None => "",
    }
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), MetricsError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file);
    let wrap = |e: csv::Error| MetricsError::Io { path: path.to_path_buf(), source: e.into() };
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(row).map_err(wrap)?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Serialize)]
struct TraceLine<'a> {
    epoch: usize,
    n_ues: usize,
    outcome: &'a EpochOutcome,
    records: &'a [StageRecord],
    events: &'a [Event],
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    solver: &'a str,
    seed: u64,
    epochs: usize,
    baseline_allon_watts: f64,
    epochs_applied: usize,
    epochs_skipped: usize,
    epochs_failed: usize,
    total_handovers: usize,
    mean_total_watts: Option<f64>,
    mean_savings_vs_allon: Option<f64>,
    max_e2e_s: Option<f64>,
    per_epoch: Vec<SummaryEpoch>,
}

#[derive(Serialize)]
struct SummaryEpoch {
    epoch: usize,
    n_ues: usize,
    active_e2n: usize,
    total_watts: f64,
    savings_vs_allon: f64,
    handovers: usize,
    e2e_s: f64,
}

/// Write every report file into `dir`, creating it if needed. All files
/// except `solver_wall_time.csv` depend only on the run's inputs.
pub fn emit_report(summary: &RunSummary, dir: &Path) -> Result<(), MetricsError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let f = |x: f64| x.to_string();
    let n = summary.epochs();
    let savings: Vec<f64> =
        (0..n).map(|e| savings_vs_allon(&summary.energy, e)).collect::<Result<_, _>>()?;

    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let en = &summary.energy.epochs[i];
        let ho = &summary.handovers[i];
        let st = &summary.status[i];
        rows.push(vec![
            en.epoch.to_string(),
            en.n_ues.to_string(),
            outcome_label(&st.outcome).to_string(),
            st.triggered.to_string(),
            en.active_e2n_count.to_string(),
            f(en.total_watts),
            f(en.per_ue_watts),
            f(summary.energy.baseline_allon_watts),
            f(savings[i]),
            ho.moves.to_string(),
            f(ho.total_s),
            f(ho.per_ue_s),
            f(summary.e2e[i].total_s),
            st.nodes_explored.map(|x| x.to_string()).unwrap_or_default(),
            optimality_label(st.optimality).to_string(),
        ]);
    }
    write_csv(
        &dir.join("epochs.csv"),
        &[
            "epoch",
            "n_ues",
            "outcome",
            "triggered",
            "active_e2n",
            "total_watts",
            "per_ue_watts",
            "baseline_watts",
            "savings_vs_allon",
            "handovers",
            "handover_total_s",
            "handover_per_ue_s",
            "e2e_total_s",
            "solver_nodes",
            "optimality",
        ],
        &rows,
    )?;

    let rows: Vec<Vec<String>> = summary
        .energy
        .epochs
        .iter()
        .map(|e| {
            vec![
                e.epoch.to_string(),
                e.n_ues.to_string(),
                e.active_e2n_count.to_string(),
                f(e.total_watts),
                f(e.per_ue_watts),
            ]
        })
        .collect();
    write_csv(
        &dir.join("fig_energy.csv"),
        &["epoch", "n_ues", "active_e2n", "total_watts", "per_ue_watts"],
        &rows,
    )?;

    let rows: Vec<Vec<String>> = summary
        .handovers
        .iter()
        .map(|h| {
            vec![h.epoch.to_string(), h.n_ues.to_string(), h.moves.to_string(), f(h.total_s), f(h.per_ue_s)]
        })
        .collect();
    write_csv(&dir.join("fig_handover.csv"), &["epoch", "n_ues", "handovers", "total_s", "per_ue_s"], &rows)?;

    let mut header = vec!["epoch", "n_ues"];
    header.extend(StageKind::ALL.iter().map(|k| k.name()));
    header.push("total_s");
    let rows: Vec<Vec<String>> = summary
        .e2e
        .iter()
        .map(|d| {
            let mut row = vec![d.epoch.to_string(), d.n_ues.to_string()];
            row.extend(StageKind::ALL.iter().map(|k| f(d.stages[k])));
            row.push(f(d.total_s));
            row
        })
        .collect();
    write_csv(&dir.join("fig_stage_delays.csv"), &header, &rows)?;

    let rows: Vec<Vec<String>> = summary
        .solver_wall_times
        .iter()
        .zip(&summary.energy.epochs)
        .map(|(w, e)| vec![e.epoch.to_string(), e.n_ues.to_string(), w.map(f).unwrap_or_default()])
        .collect();
    write_csv(&dir.join("solver_wall_time.csv"), &["epoch", "n_ues", "wall_time_s"], &rows)?;

    let path = dir.join("trace.jsonl");
    let mut out = std::io::BufWriter::new(fs::File::create(&path).map_err(io_err(&path))?);
    for t in &summary.traces {
        let line = TraceLine {
            epoch: t.epoch,
            n_ues: t.n_ues,
            outcome: &t.outcome,
            records: &t.records,
            events: &t.events,
        };
        serde_json::to_writer(&mut out, &line).map_err(|e| MetricsError::Io { path: path.clone(), source: e.into() })?;
        out.write_all(b"\n").map_err(io_err(&path))?;
    }
    out.flush().map_err(io_err(&path))?;

    let mean = |xs: &mut dyn Iterator<Item = f64>| {
        let (s, c) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
        (c > 0).then(|| s / c as f64)
    };
    let count = |label: &str| summary.status.iter().filter(|s| outcome_label(&s.outcome) == label).count();
    let doc = SummaryDoc {
        solver: &summary.solver,
        seed: summary.seed,
        epochs: n,
        baseline_allon_watts: summary.energy.baseline_allon_watts,
        epochs_applied: count("applied"),
        epochs_skipped: count("skipped"),
        epochs_failed: count("failed"),
        total_handovers: summary.handovers.iter().map(|h| h.moves).sum(),
        mean_total_watts: mean(&mut summary.energy.epochs.iter().map(|e| e.total_watts)),
        mean_savings_vs_allon: mean(&mut savings.iter().copied()),
        max_e2e_s: summary.e2e.iter().map(|d| d.total_s).reduce(f64::max),
        per_epoch: (0..n)
            .map(|i| SummaryEpoch {
                epoch: summary.energy.epochs[i].epoch,
                n_ues: summary.energy.epochs[i].n_ues,
                active_e2n: summary.energy.epochs[i].active_e2n_count,
                total_watts: summary.energy.epochs[i].total_watts,
                savings_vs_allon: savings[i],
                handovers: summary.handovers[i].moves,
                e2e_s: summary.e2e[i].total_s,
            })
            .collect(),
    };
    let path = dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(&doc).expect("summary serializes");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn account(totals: &[f64], baseline: f64) -> EnergyAccount {
        EnergyAccount {
            epochs: totals
                .iter()
                .enumerate()
                .map(|(i, &t)| EpochEnergy {
                    epoch: i,
                    n_ues: 16,
                    total_watts: t,
                    active_e2n_count: 1,
                    per_ue_watts: t / 16.0,
                })
                .collect(),
            baseline_allon_watts: baseline,
        }
    }

    #[test]
    fn savings_examples() {
        let b = 17.0 * 15.4757;
        let a = account(&[b, 15.4757, b * 1.01], b);
        assert_eq!(savings_vs_allon(&a, 0).unwrap(), 0.0);
        assert!((savings_vs_allon(&a, 1).unwrap() - (1.0 - 1.0 / 17.0)).abs() < 1e-12);
        assert_eq!(savings_vs_allon(&a, 2).unwrap(), 0.0);
        assert!(matches!(savings_vs_allon(&a, 3), Err(MetricsError::NoSuchEpoch(3))));
        assert!(matches!(savings_vs_allon(&account(&[1.0], 0.0), 0), Err(MetricsError::Baseline(_))));
    }

    #[test]
    fn per_ue_examples() {
        assert!((per_ue_energy(15.4757, 16).unwrap() - 0.9672).abs() < 1e-4);
        assert!((per_ue_energy(263.0869, 1024).unwrap() - 0.2569).abs() < 1e-4);
        assert_eq!(per_ue_energy(3.5, 1).unwrap(), 3.5);
        assert!(matches!(per_ue_energy(3.5, 0), Err(MetricsError::NoUsers)));
    }

    #[test]
    fn empty_run_writes_headers() {
        let dir = tempfile::tempdir().unwrap();
        let s = RunSummary::from_traces("exact", 1, 10.0, Vec::new()).unwrap();
        emit_report(&s, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("epochs.csv")).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("epoch,n_ues,"));
        assert_eq!(fs::read_to_string(dir.path().join("trace.jsonl")).unwrap(), "");
        let summary: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["epochs"], 0);
    }
}
