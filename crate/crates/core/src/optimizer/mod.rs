//! Per-time-step energy minimisation.
//!
//! The problem picks, for every O-RU, whether it is active (`z`) and at
//! which transmit power (`w`), associates every UE with exactly one active
//! O-RU (`x`), and gives each UE enough bandwidth (`y`) to meet its demand
//! through the Shannon rate `y * log2(1 + beta * w / sigma^2)`. The
//! objective is the radio power `sum over active r of w_r / eta_r + theta_r`.
//!
//! Transmit power is restricted to a per-O-RU grid of levels, so for a
//! fixed `(z, w)` each UE's bandwidth cost on each O-RU is a constant and
//! the remaining choice is a packing problem. Three solvers share that
//! model:
//!
//! * [`solve_bruteforce`] enumerates everything and is the test oracle.
//! * [`solve_exact`] is a best-first branch and bound over `(z, w)` with an
//!   exact packing search at the leaves.
//! * [`solve_greedy`] is a fast heuristic for large instances.

mod assign;
mod brute;
mod exact;
mod feasibility;
mod greedy;
mod tables;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ScenarioConfig;
use crate::rf_env::Scenario;

pub use brute::{solve_bruteforce, BRUTE_MAX_LEVELS, BRUTE_MAX_ORUS, BRUTE_MAX_UES};
pub use exact::solve_exact;
pub use feasibility::{check_feasible, ConstraintId, Subject, Violation};
pub use greedy::solve_greedy;

/// Relative tolerance used by every constraint comparison.
pub const REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OruId(pub u32);

impl fmt::Display for UeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ue{}", self.0)
    }
}

impl fmt::Display for OruId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "oru{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("allocation does not match instance: {0}")]
    Structural(String),
    #[error("link cannot carry a positive demand at zero SNR")]
    InfeasibleLink,
    #[error("no allocation meets every demand, even with all O-RUs at maximum power")]
    Infeasible,
    #[error("instance too large for exhaustive enumeration: {0}")]
    OracleTooLarge(String),
    #[error("search budget exhausted before any allocation was found")]
    BudgetExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeDemand {
    pub id: UeId,
    /// Throughput demand in bits per second.
    pub demand: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OruParams {
    pub id: OruId,
    pub max_power: f64,
    pub max_bandwidth: f64,
    pub static_power: f64,
    pub efficiency: f64,
    /// Allowed transmit powers in watts, ascending.
    pub power_levels: Vec<f64>,
}

impl OruParams {
    /// Power drawn when active at transmit power `w`.
    pub fn power_draw(&self, w: f64) -> f64 {
        w / self.efficiency + self.static_power
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub ues: Vec<UeDemand>,
    pub orus: Vec<OruParams>,
    /// `gain[u][r]`, linear, UE-major in the order of `ues` and `orus`.
    pub gain: Vec<Vec<f64>>,
    pub noise: f64,
    pub epsilon: f64,
}

impl ProblemInstance {
    pub fn validate(&self) -> Result<(), OptError> {
        let bad = |msg: String| Err(OptError::InvalidInstance(msg));
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return bad(format!("noise must be positive, got {}", self.noise));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.gain.len() != self.ues.len() {
            return bad("gain matrix row count differs from UE count".into());
        }
        let mut ue_ids = BTreeSet::new();
        for (u, ue) in self.ues.iter().enumerate() {
            if !ue_ids.insert(ue.id) {
                return bad(format!("duplicate UE id {}", ue.id));
            }
            if !(ue.demand >= 0.0 && ue.demand.is_finite()) {
                return bad(format!("UE {} demand must be finite and non-negative", ue.id));
            }
            if self.gain[u].len() != self.orus.len() {
                return bad(format!("gain row for UE {} has wrong length", ue.id));
            }
            if let Some(g) = self.gain[u].iter().find(|g| !(**g > 0.0 && g.is_finite())) {
                return bad(format!("UE {} has non-positive gain {g}", ue.id));
            }
        }
        let mut oru_ids = BTreeSet::new();
        for oru in &self.orus {
            if !oru_ids.insert(oru.id) {
                return bad(format!("duplicate O-RU id {}", oru.id));
            }
            if !(oru.max_power > 0.0 && oru.max_bandwidth > 0.0 && oru.static_power >= 0.0) {
                return bad(format!("O-RU {} has non-positive capacity", oru.id));
            }
            if !(oru.efficiency > 0.0 && oru.efficiency <= 1.0) {
                return bad(format!("O-RU {} efficiency outside (0, 1]", oru.id));
            }
            if oru.power_levels.is_empty() {
                return bad(format!("O-RU {} has no power levels", oru.id));
            }
            if oru.power_levels.windows(2).any(|p| p[1] <= p[0]) {
                return bad(format!("O-RU {} power levels are not strictly ascending", oru.id));
            }
            let lo = oru.power_levels[0];
            let hi = *oru.power_levels.last().unwrap();
            if lo < self.epsilon || hi > oru.max_power {
                return bad(format!("O-RU {} power levels must lie in [epsilon, max_power]", oru.id));
            }
        }
        Ok(())
    }

    pub fn oru_index(&self, id: OruId) -> Option<usize> {
        self.orus.iter().position(|o| o.id == id)
    }

    pub fn ue_index(&self, id: UeId) -> Option<usize> {
        self.ues.iter().position(|u| u.id == id)
    }

    pub fn snr(&self, u: usize, r: usize, w: f64) -> f64 {
        self.gain[u][r] * w / self.noise
    }

    /// Instance for the first `n_ues` terminals of a scenario, with the
    /// given per-UE demands (bits/s).
    pub fn from_scenario(scenario: &Scenario, n_ues: usize, demands: &[f64]) -> Result<Self, OptError> {
        if n_ues > scenario.ues.len() || demands.len() != n_ues {
            return Err(OptError::InvalidInstance(format!(
                "scenario holds {} UEs, asked for {n_ues} with {} demands",
                scenario.ues.len(),
                demands.len()
            )));
        }
        let cfg: &ScenarioConfig = &scenario.config;
        let instance = ProblemInstance {
            ues: scenario.ues[..n_ues]
                .iter()
                .zip(demands)
                .map(|(ue, &demand)| UeDemand { id: ue.id, demand })
                .collect(),
            orus: scenario
                .orus
                .iter()
                .map(|o| OruParams {
                    id: o.id,
                    max_power: o.max_power_gamma,
                    max_bandwidth: o.max_bandwidth_rho,
                    static_power: o.static_power_theta,
                    efficiency: o.amp_efficiency_eta,
                    power_levels: cfg.power_levels(o.max_power_gamma),
                })
                .collect(),
            gain: scenario.gain_matrix(n_ues),
            noise: cfg.radio.noise_floor_w(),
            epsilon: cfg.radio.epsilon_w,
        };
        instance.validate()?;
        Ok(instance)
    }
}

/// One time step's decision: association, bandwidth, power and activation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Allocation {
    pub assoc: BTreeMap<UeId, OruId>,
    pub bandwidth: BTreeMap<(UeId, OruId), f64>,
    /// Transmit power for every O-RU; zero when inactive.
    pub power: BTreeMap<OruId, f64>,
    pub active: BTreeSet<OruId>,
    pub objective_watts: f64,
}

impl Allocation {
    /// UEs attached to `oru`, ascending.
    pub fn users_of(&self, oru: OruId) -> impl Iterator<Item = UeId> + '_ {
        self.assoc.iter().filter(move |(_, &r)| r == oru).map(|(&u, _)| u)
    }

    /// Build from index-space decisions: `levels[r]` is the power-level
    /// index of O-RU `r` when active, `assign[u]` the O-RU index of UE `u`.
    pub(crate) fn from_decisions(instance: &ProblemInstance, levels: &[Option<usize>], assign: &[usize]) -> Self {
        let mut alloc = Allocation::default();
        for (r, oru) in instance.orus.iter().enumerate() {
            match levels[r] {
                Some(l) => {
                    alloc.active.insert(oru.id);
                    alloc.power.insert(oru.id, oru.power_levels[l]);
                }
                None => {
                    alloc.power.insert(oru.id, 0.0);
                }
            }
        }
        for (u, ue) in instance.ues.iter().enumerate() {
            let r = assign[u];
            let oru = &instance.orus[r];
            let w = alloc.power[&oru.id];
            let y = min_bandwidth(ue.demand, instance.snr(u, r, w)).unwrap_or(f64::INFINITY);
            alloc.assoc.insert(ue.id, oru.id);
            alloc.bandwidth.insert((ue.id, oru.id), y);
        }
        alloc.objective_watts = objective(instance, &alloc).expect("allocation built from instance");
        alloc
    }

    /// Same associations with every O-RU switched on. Idle O-RUs run at
    /// their lowest power level.
    pub fn forced_all_on(&self, instance: &ProblemInstance) -> Allocation {
        let mut out = self.clone();
        for oru in &instance.orus {
            if out.active.insert(oru.id) {
                out.power.insert(oru.id, oru.power_levels[0]);
            }
        }
        out.objective_watts = objective(instance, &out).expect("allocation built from instance");
        out
    }
}

/// Power of the trivial policy that keeps every O-RU on at maximum power.
pub fn all_on_baseline_watts(instance: &ProblemInstance) -> f64 {
    instance.orus.iter().map(|o| o.power_draw(o.max_power)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimality {
    ProvedOptimal,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub allocation: Allocation,
    pub nodes_explored: u64,
    /// Host wall-clock time of the solve, seconds.
    pub wall_time: f64,
    pub optimality: Optimality,
}

/// Knobs shared by the solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Previous association, used to break ties towards fewer handovers.
    pub previous: Option<BTreeMap<UeId, OruId>>,
    /// Worker threads for internal parallel sections. Results do not
    /// depend on this value.
    pub threads: usize,
    /// Node budget for one packing subproblem.
    pub max_assign_nodes: u64,
    /// Node budget for the outer branch and bound.
    pub max_search_nodes: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { previous: None, threads: 1, max_assign_nodes: 200_000, max_search_nodes: 2_000_000 }
    }
}

impl SolveOptions {
    pub fn with_previous(mut self, previous: BTreeMap<UeId, OruId>) -> Self {
        self.previous = Some(previous);
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads.max(1);
        self
    }

    pub(crate) fn pool(&self) -> rayon::ThreadPool {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads.max(1))
            .build()
            .expect("thread pool")
    }
}

/// Bits per second per hertz at the given linear SNR.
pub fn spectral_efficiency(snr_linear: f64) -> f64 {
    (1.0 + snr_linear).log2()
}

/// Smallest bandwidth that carries `demand` bits/s at `snr_linear`.
pub fn min_bandwidth(demand: f64, snr_linear: f64) -> Result<f64, OptError> {
    if demand == 0.0 {
        return Ok(0.0);
    }
    if !(snr_linear > 0.0) {
        return Err(OptError::InfeasibleLink);
    }
    Ok(demand / spectral_efficiency(snr_linear))
}

/// Radio power of an allocation. Inactive O-RUs contribute nothing.
pub fn objective(instance: &ProblemInstance, alloc: &Allocation) -> Result<f64, OptError> {
    let known: BTreeSet<OruId> = instance.orus.iter().map(|o| o.id).collect();
    if let Some(id) = alloc
        .active
        .iter()
        .chain(alloc.power.keys())
        .chain(alloc.assoc.values())
        .find(|id| !known.contains(id))
    {
        return Err(OptError::Structural(format!("unknown O-RU {id}")));
    }
    let mut total = 0.0;
    for oru in &instance.orus {
        if alloc.active.contains(&oru.id) {
            let w = alloc.power.get(&oru.id).copied().unwrap_or(0.0);
            total += oru.power_draw(w);
        }
    }
    Ok(total)
}

/// Number of UEs served by a different O-RU in `next` than in `prev`.
pub fn assoc_distance(prev: &Allocation, next: &Allocation) -> Result<usize, OptError> {
    assoc_map_distance(&prev.assoc, &next.assoc)
}

pub fn assoc_map_distance(prev: &BTreeMap<UeId, OruId>, next: &BTreeMap<UeId, OruId>) -> Result<usize, OptError> {
    if prev.len() != next.len() || prev.keys().zip(next.keys()).any(|(a, b)| a != b) {
        return Err(OptError::Structural("allocations cover different UE sets".into()));
    }
    Ok(prev.values().zip(next.values()).filter(|(a, b)| a != b).count())
}

pub(crate) fn fits(load: f64, cap: f64) -> bool {
    load <= cap * (1.0 + REL_TOL)
}

/// Dispatch by solver kind.
pub fn solve(
    kind: crate::config::SolverKind,
    instance: &ProblemInstance,
    options: &SolveOptions,
) -> Result<SolveReport, OptError> {
    use crate::config::SolverKind;
    match kind {
        SolverKind::Exact => solve_exact(instance, options),
        SolverKind::Greedy => solve_greedy(instance, options),
        SolverKind::Brute => solve_bruteforce(instance, options),
    }
}
