use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{ScenarioConfig, SolverKind};
use crate::rf_env::Scenario;
use crate::optimizer::{
    self, min_bandwidth, Allocation, OptError, Optimality, OruId, ProblemInstance, SolveOptions, UeId,
};

use super::{
    handover_delay, jitter_ratio, plan_handovers, stage_time, A1Policy, ComponentId, ControlError, LatencyModel,
    NodeState, PolicyType, StageKind,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub solver: SolverKind,
    pub solve: SolveOptions,
    pub latency: LatencyModel,
    /// Seeds the latency jitter stream.
    pub seed: u64,
    /// Re-optimize when total demand moves by more than this (bits/s).
    pub trigger_threshold_bps: f64,
    /// Earliest start of epoch `e` is `e * epoch_interval_s`.
    pub epoch_interval_s: f64,
    pub policy_validity_s: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            solver: SolverKind::Exact,
            solve: SolveOptions::default(),
            latency: LatencyModel::calibrated(),
            seed: 0,
            trigger_threshold_bps: 0.0,
            epoch_interval_s: 0.0,
            policy_validity_s: 60.0,
        }
    }
}

impl SimOptions {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        SimOptions {
            solver: cfg.solver.kind,
            solve: SolveOptions {
                threads: cfg.solver.threads.max(1),
                max_assign_nodes: cfg.solver.max_assign_nodes,
                ..SolveOptions::default()
            },
            latency: LatencyModel::from_config(&cfg.latency),
            seed: cfg.run.seed,
            trigger_threshold_bps: cfg.run.trigger_threshold_bps,
            epoch_interval_s: cfg.run.epoch_interval_s,
            ..SimOptions::default()
        }
    }
}

/// One epoch's UEs, demands and channel.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochInput {
    pub epoch: usize,
    pub instance: ProblemInstance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeStatus {
    pub state: NodeState,
    pub power: f64,
}

/// What the RAN looks like between epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RanState {
    /// Simulated time, seconds.
    pub clock: f64,
    pub nodes: BTreeMap<OruId, NodeStatus>,
    pub assoc: BTreeMap<UeId, OruId>,
    pub last_ues: Option<BTreeSet<UeId>>,
    pub last_total_demand: Option<f64>,
    pub next_policy_id: u64,
}

impl RanState {
    /// Every node active at maximum power, no UEs attached.
    pub fn all_on(instance: &ProblemInstance) -> Self {
        RanState {
            clock: 0.0,
            nodes: instance
                .orus
                .iter()
                .map(|o| (o.id, NodeStatus { state: NodeState::Active, power: o.max_power }))
                .collect(),
            assoc: BTreeMap::new(),
            last_ues: None,
            last_total_demand: None,
            next_policy_id: 1,
        }
    }

    /// Radio power of the current node configuration.
    pub fn power_watts(&self, instance: &ProblemInstance) -> f64 {
        let mut total = 0.0;
        for oru in &instance.orus {
            if let Some(s) = self.nodes.get(&oru.id) {
                if s.state == NodeState::Active {
                    total += oru.power_draw(s.power);
                }
            }
        }
        total
    }

    pub fn active_count(&self) -> usize {
        self.nodes.values().filter(|s| s.state == NodeState::Active).count()
    }

    /// The current configuration as an allocation over `instance`'s UEs.
    pub fn allocation(&self, instance: &ProblemInstance) -> Allocation {
        let mut alloc = Allocation::default();
        for oru in &instance.orus {
            let s = self.nodes[&oru.id];
            if s.state == NodeState::Active {
                alloc.active.insert(oru.id);
                alloc.power.insert(oru.id, s.power);
            } else {
                alloc.power.insert(oru.id, 0.0);
            }
        }
        for (u, ue) in instance.ues.iter().enumerate() {
            if let Some(&r) = self.assoc.get(&ue.id) {
                let i = instance.oru_index(r).expect("state refers to instance O-RUs");
                let y = min_bandwidth(ue.demand, instance.snr(u, i, alloc.power[&r])).unwrap_or(f64::INFINITY);
                alloc.assoc.insert(ue.id, r);
                alloc.bandwidth.insert((ue.id, r), y);
            }
        }
        alloc.objective_watts = self.power_watts(instance);
        alloc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    UeAttach { ue: UeId, node: OruId },
    UeDetach { ue: UeId, node: OruId },
    KpmReport { node: OruId, n_ues: usize },
    RcStateChange { node: OruId, state: NodeState, power: f64 },
    RcHandoverCommand { ue: UeId, source: OruId, target: OruId },
    HandoverComplete { ue: UeId, source: OruId, target: OruId },
}

/// Message on the E2 or RF-environment side, stamped with simulated time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub source: ComponentId,
    pub dest: ComponentId,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub epoch: usize,
    pub stage: StageKind,
    pub component: ComponentId,
    pub start: f64,
    pub end: f64,
    /// Modeled duration; `end - start` up to clock rounding.
    pub duration: f64,
    /// Load that drove the stage: UEs, or moves for handover stages.
    pub n_ues: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EpochOutcome {
    /// New allocation applied.
    Applied,
    /// No trigger fired; only monitoring ran.
    Skipped,
    /// Aborted at `stage`; RAN state unchanged.
    Failed { stage: StageKind, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    /// Host wall time; the only value in a trace that varies between runs.
    pub wall_time: f64,
    pub nodes_explored: u64,
    pub optimality: Optimality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopTrace {
    pub epoch: usize,
    pub n_ues: usize,
    pub triggered: bool,
    pub outcome: EpochOutcome,
    pub records: Vec<StageRecord>,
    pub events: Vec<Event>,
    pub handover_count: usize,
    pub handover_total_s: f64,
    pub handover_per_ue_s: f64,
    pub energy_before: f64,
    pub energy_after: f64,
    pub active_after: usize,
    pub policy: Option<A1Policy>,
    pub solver: Option<SolverStats>,
}

/// Total loop delay and the time spent in each component.
pub fn e2e_delay(trace: &LoopTrace) -> Result<(f64, BTreeMap<ComponentId, f64>), ControlError> {
    let (Some(first), Some(last)) = (trace.records.first(), trace.records.last()) else {
        return Err(ControlError::IncompleteTrace(format!("epoch {} has no stages", trace.epoch)));
    };
    let mut breakdown = BTreeMap::new();
    let mut cursor = first.start;
    for r in &trace.records {
        if !(r.start.is_finite() && r.end.is_finite() && r.end >= r.start && r.duration >= 0.0) {
            return Err(ControlError::IncompleteTrace(format!("stage {} has no valid end", r.stage.name())));
        }
        if r.start != cursor {
            return Err(ControlError::IncompleteTrace(format!("gap before stage {}", r.stage.name())));
        }
        cursor = r.end;
        *breakdown.entry(r.component).or_insert(0.0) += r.duration;
    }
    Ok((last.end - first.start, breakdown))
}

struct Recorder<'a> {
    epoch: usize,
    clock: f64,
    records: Vec<StageRecord>,
    events: Vec<Event>,
    model: &'a LatencyModel,
    rng: Option<ChaCha8Rng>,
}

impl Recorder<'_> {
    fn factor(&mut self, stage: StageKind) -> f64 {
        let ratio = jitter_ratio(stage);
        match &mut self.rng {
            Some(rng) if ratio > 0.0 => Normal::new(1.0, ratio).expect("finite ratio").sample(rng).max(0.0),
            _ => 1.0,
        }
    }

    /// Modeled duration of `stage` at load `n`, with jitter when enabled.
    fn duration(&mut self, stage: StageKind, n: usize) -> f64 {
        let base = stage_time(stage, n, self.model);
        base * self.factor(stage)
    }

    fn push(&mut self, stage: StageKind, component: ComponentId, dur: f64, n: usize) {
        let start = self.clock;
        let end = start + dur;
        self.records.push(StageRecord { epoch: self.epoch, stage, component, start, end, duration: dur, n_ues: n });
        self.clock = end;
    }

    /// One stage of length `dur` split across E2 nodes by their loads.
    fn push_split(&mut self, stage: StageKind, dur: f64, loads: &[(OruId, usize)]) {
        let total: usize = loads.iter().map(|l| l.1).sum();
        let start = self.clock;
        let mut cum = 0;
        for (i, &(node, n)) in loads.iter().enumerate() {
            cum += n;
            let end = if i + 1 == loads.len() {
                start + dur
            } else if total == 0 {
                start
            } else {
                start + dur * cum as f64 / total as f64
            };
            let share = if total == 0 {
                if i + 1 == loads.len() { dur } else { 0.0 }
            } else {
                dur * n as f64 / total as f64
            };
            self.records.push(StageRecord {
                epoch: self.epoch,
                stage,
                component: ComponentId::E2Node(node),
                start: self.clock,
                end,
                duration: share,
                n_ues: n,
            });
            self.clock = end;
        }
        self.clock = start + dur;
    }

    fn event(&mut self, time: f64, source: ComponentId, dest: ComponentId, kind: EventKind) {
        self.events.push(Event { time, source, dest, kind });
    }
}

fn jitter_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Strongest active node for UE index `u`; ties go to the lower index.
fn strongest(instance: &ProblemInstance, state: &RanState, u: usize) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (r, oru) in instance.orus.iter().enumerate() {
        if state.nodes[&oru.id].state != NodeState::Active {
            continue;
        }
        if best.is_none_or(|b| instance.gain[u][r] > instance.gain[u][b]) {
            best = Some(r);
        }
    }
    best
}

/// Run one pass of the control loop.
///
/// Stages 1 to 7 (connection, monitoring, telemetry export) always run.
/// The rApp and everything after it run only when the UE set changed or
/// total demand moved by more than the trigger threshold. An infeasible
/// solve ends the epoch at the rApp stage and leaves the RAN as it was.
pub fn run_epoch(
    state: &RanState,
    input: &EpochInput,
    opts: &SimOptions,
) -> Result<(RanState, LoopTrace), ControlError> {
    let inst = &input.instance;
    inst.validate()?;
    if inst.orus.iter().any(|o| !state.nodes.contains_key(&o.id)) || state.nodes.len() != inst.orus.len() {
        return Err(ControlError::State("state and instance disagree on the O-RU set".into()));
    }
    let epoch = input.epoch;
    let n = inst.ues.len();
    let mut st = state.clone();
    let t0 = st.clock.max(epoch as f64 * opts.epoch_interval_s);
    let mut rec = Recorder {
        epoch,
        clock: t0,
        records: Vec::new(),
        events: Vec::new(),
        model: &opts.latency,
        rng: opts.latency.jitter.then(|| jitter_rng(opts.seed, epoch)),
    };
    let energy_before = st.power_watts(inst);

    // UEs that left, then UEs that arrived.
    let present: BTreeSet<UeId> = inst.ues.iter().map(|u| u.id).collect();
    let gone: Vec<(UeId, OruId)> = st.assoc.iter().filter(|(u, _)| !present.contains(u)).map(|(&u, &r)| (u, r)).collect();
    for (ue, node) in gone {
        st.assoc.remove(&ue);
        rec.event(t0, ComponentId::RfEnvManager, ComponentId::E2Node(node), EventKind::UeDetach { ue, node });
    }
    for (u, ue) in inst.ues.iter().enumerate() {
        if st.assoc.contains_key(&ue.id) {
            continue;
        }
        let r = match strongest(inst, &st, u) {
            Some(r) => r,
            None => {
                // Nothing is on: wake the best node for this UE.
                let r = (0..inst.orus.len())
                    .max_by(|&a, &b| inst.gain[u][a].total_cmp(&inst.gain[u][b]).then(b.cmp(&a)))
                    .expect("at least one O-RU");
                let oru = &inst.orus[r];
                st.nodes.insert(oru.id, NodeStatus { state: NodeState::Active, power: oru.max_power });
                rec.event(
                    t0,
                    ComponentId::RfEnvManager,
                    ComponentId::E2Node(oru.id),
                    EventKind::RcStateChange { node: oru.id, state: NodeState::Active, power: oru.max_power },
                );
                r
            }
        };
        let node = inst.orus[r].id;
        st.assoc.insert(ue.id, node);
        rec.event(t0, ComponentId::RfEnvManager, ComponentId::E2Node(node), EventKind::UeAttach { ue: ue.id, node });
    }

    let loads: Vec<(OruId, usize)> = st
        .nodes
        .iter()
        .filter(|(_, s)| s.state == NodeState::Active)
        .map(|(&id, _)| (id, st.assoc.values().filter(|&&r| r == id).count()))
        .collect();

    let d = rec.duration(StageKind::RfEnvConnection, n);
    rec.push(StageKind::RfEnvConnection, ComponentId::RfEnvManager, d, n);
    let d = rec.duration(StageKind::E2nConnection, n);
    rec.push_split(StageKind::E2nConnection, d, &loads);
    for &(node, k) in &loads {
        let t = rec.clock;
        rec.event(t, ComponentId::E2Node(node), ComponentId::XAppMonitoring, EventKind::KpmReport { node, n_ues: k });
    }
    let d = if opts.latency.monitoring_sharded {
        let f = rec.factor(StageKind::XAppMonitoring);
        loads.iter().map(|&(_, k)| stage_time(StageKind::XAppMonitoring, k, &opts.latency)).fold(0.0, f64::max) * f
    } else {
        rec.duration(StageKind::XAppMonitoring, n)
    };
    rec.push(StageKind::XAppMonitoring, ComponentId::XAppMonitoring, d, n);
    for (stage, comp) in [
        (StageKind::MonitoringExport, ComponentId::MonitoringStore),
        (StageKind::VespaExport, ComponentId::VespaAgent),
        (StageKind::VesCollector, ComponentId::VesCollector),
        (StageKind::DataRiverDispatch, ComponentId::DataRiver),
    ] {
        let d = rec.duration(stage, n);
        rec.push(stage, comp, d, n);
    }

    let total_demand: f64 = inst.ues.iter().map(|u| u.demand).sum();
    let triggered = st.last_ues.as_ref() != Some(&present)
        || st
            .last_total_demand
            .is_none_or(|prev| (total_demand - prev).abs() > opts.trigger_threshold_bps);
    st.last_ues = Some(present);
    st.last_total_demand = Some(total_demand);

    let mut trace = LoopTrace {
        epoch,
        n_ues: n,
        triggered,
        outcome: EpochOutcome::Skipped,
        records: Vec::new(),
        events: Vec::new(),
        handover_count: 0,
        handover_total_s: 0.0,
        handover_per_ue_s: 0.0,
        energy_before,
        energy_after: 0.0,
        active_after: 0,
        policy: None,
        solver: None,
    };

    if triggered {
        let prev_alloc = st.allocation(inst);
        let solve_opts = SolveOptions { previous: Some(st.assoc.clone()), ..opts.solve.clone() };
        let wall = Instant::now();
        let result = optimizer::solve(opts.solver, inst, &solve_opts);
        let wall_time = wall.elapsed().as_secs_f64();
        let d = rec.duration(StageKind::RAppSolve, n);
        rec.push(StageKind::RAppSolve, ComponentId::RAppEnergySavings, d, n);
        let report = match result {
            Ok(r) => r,
            Err(e @ (OptError::Infeasible | OptError::BudgetExhausted | OptError::InfeasibleLink)) => {
                let mut unchanged = state.clone();
                unchanged.clock = rec.clock;
                trace.outcome = EpochOutcome::Failed { stage: StageKind::RAppSolve, reason: e.to_string() };
                trace.energy_after = energy_before;
                trace.active_after = state.active_count();
                trace.records = rec.records;
                trace.events = rec.events;
                return Ok((unchanged, trace));
            }
            Err(e) => return Err(e.into()),
        };
        trace.solver = Some(SolverStats {
            wall_time,
            nodes_explored: report.nodes_explored,
            optimality: report.optimality,
        });
        let next = report.allocation;
        let plan = plan_handovers(inst, &prev_alloc, &next)?;

        let policy = A1Policy {
            policy_id: st.next_policy_id,
            policy_type: PolicyType::EnergySaving,
            target_states: inst
                .orus
                .iter()
                .map(|o| (o.id, if next.active.contains(&o.id) { NodeState::Active } else { NodeState::Standby }))
                .collect(),
            power_levels: next.active.iter().map(|id| (*id, next.power[id])).collect(),
            target_assoc: next.assoc.clone(),
            validity: opts.policy_validity_s,
        };
        policy.validate(inst.epsilon)?;
        st.next_policy_id += 1;

        // Wake nodes and set powers before any UE moves.
        let mut power_changes = Vec::new();
        for id in &next.active {
            let w = next.power[id];
            let cur = st.nodes[id];
            if cur.state != NodeState::Active || cur.power != w {
                power_changes.push((*id, w));
            }
        }
        if power_changes.is_empty() {
            rec.push(StageKind::PowerConfig, ComponentId::XAppHandover, 0.0, 0);
        }
        for (id, w) in power_changes {
            let t = rec.clock;
            rec.event(
                t,
                ComponentId::XAppHandover,
                ComponentId::E2Node(id),
                EventKind::RcStateChange { node: id, state: NodeState::Active, power: w },
            );
            st.nodes.insert(id, NodeStatus { state: NodeState::Active, power: w });
            rec.push(StageKind::PowerConfig, ComponentId::E2Node(id), 0.0, 0);
        }
        rec.push(StageKind::A1PolicyDelivery, ComponentId::A1Mediator, 0.0, 0);

        let moves = plan.moves.len();
        let (ho_total, ho_per_ue) = handover_delay(&plan, &opts.latency);
        let f = rec.factor(StageKind::XAppHandover);
        let ho_start = rec.clock;
        let step = opts.latency.t_ho * f;
        let mut t = ho_start;
        for m in &plan.moves {
            rec.event(
                t,
                ComponentId::XAppHandover,
                ComponentId::E2Node(m.source),
                EventKind::RcHandoverCommand { ue: m.ue, source: m.source, target: m.target },
            );
            t += step;
            rec.event(
                t,
                ComponentId::E2Node(m.target),
                ComponentId::XAppHandover,
                EventKind::HandoverComplete { ue: m.ue, source: m.source, target: m.target },
            );
            st.assoc.insert(m.ue, m.target);
        }
        rec.push(StageKind::XAppHandover, ComponentId::XAppHandover, ho_total * f, moves);

        let mut per_target: BTreeMap<OruId, usize> = BTreeMap::new();
        for m in &plan.moves {
            *per_target.entry(m.target).or_insert(0) += 1;
        }
        let d = rec.duration(StageKind::E2nHandover, moves);
        if per_target.is_empty() {
            rec.push(StageKind::E2nHandover, ComponentId::XAppHandover, d, 0);
        } else {
            rec.push_split(StageKind::E2nHandover, d, &per_target.into_iter().collect::<Vec<_>>());
        }
        let d = rec.duration(StageKind::RfEnvHandover, moves);
        rec.push(StageKind::RfEnvHandover, ComponentId::RfEnvManager, d, moves);

        // Switch-off only after every handover has completed.
        if plan.deactivations.is_empty() {
            rec.push(StageKind::E2nPowerReconfig, ComponentId::XAppHandover, 0.0, 0);
        }
        for &id in &plan.deactivations {
            let t = rec.clock;
            rec.event(
                t,
                ComponentId::XAppHandover,
                ComponentId::E2Node(id),
                EventKind::RcStateChange { node: id, state: NodeState::Standby, power: 0.0 },
            );
            st.nodes.insert(id, NodeStatus { state: NodeState::Standby, power: 0.0 });
            rec.push(StageKind::E2nPowerReconfig, ComponentId::E2Node(id), 0.0, 0);
        }

        if st.assoc != next.assoc {
            return Err(ControlError::State("association after handovers differs from the solver's".into()));
        }
        trace.outcome = EpochOutcome::Applied;
        trace.handover_count = moves;
        trace.handover_total_s = ho_total * f;
        trace.handover_per_ue_s = ho_per_ue * f;
        trace.policy = Some(policy);
        trace.energy_after = next.objective_watts;
    } else {
        trace.energy_after = st.power_watts(inst);
    }

    st.clock = rec.clock;
    trace.active_after = st.active_count();
    trace.records = rec.records;
    trace.events = rec.events;
    Ok((st, trace))
}

/// Replay an epoch's events from the state it started in and check that no
/// UE is ever attached to a standby node, that handovers leave the node the
/// UE is actually on, that commands only target active nodes, and that the
/// number of attached UEs never changes once the epoch's arrivals are in.
pub fn validate_events(before: &RanState, trace: &LoopTrace) -> Result<(), ControlError> {
    let bad = |m: String| Err(ControlError::State(format!("epoch {}: {m}", trace.epoch)));
    let mut nodes: BTreeMap<OruId, NodeState> = before.nodes.iter().map(|(&id, s)| (id, s.state)).collect();
    let mut assoc = before.assoc.clone();
    let mut settled: Option<usize> = None;
    let mut last_time = f64::NEG_INFINITY;
    for ev in &trace.events {
        if ev.time < last_time {
            return bad("events out of time order".into());
        }
        last_time = ev.time;
        match &ev.kind {
            EventKind::UeAttach { ue, node } => {
                if settled.is_some() {
                    return bad(format!("{ue} attached mid-epoch"));
                }
                assoc.insert(*ue, *node);
            }
            EventKind::UeDetach { ue, .. } => {
                if settled.is_some() {
                    return bad(format!("{ue} detached mid-epoch"));
                }
                assoc.remove(ue);
            }
            EventKind::KpmReport { .. } => {
                settled.get_or_insert(assoc.len());
            }
            EventKind::RcStateChange { node, state, .. } => {
                nodes.insert(*node, *state);
            }
            EventKind::RcHandoverCommand { ue, source, target } => {
                settled.get_or_insert(assoc.len());
                if nodes.get(target) != Some(&NodeState::Active) {
                    return bad(format!("handover of {ue} targets non-active {target}"));
                }
                if assoc.get(ue) != Some(source) {
                    return bad(format!("handover of {ue} from {source}, but it is elsewhere"));
                }
            }
            EventKind::HandoverComplete { ue, source, target } => {
                if assoc.get(ue) != Some(source) {
                    return bad(format!("{ue} completed a handover from {source} it was not on"));
                }
                assoc.insert(*ue, *target);
            }
        }
        if let Some((ue, node)) = assoc.iter().find(|(_, r)| nodes.get(*r) != Some(&NodeState::Active)) {
            return bad(format!("{ue} attached to standby {node} at t = {}", ev.time));
        }
        if settled.is_some_and(|n| n != assoc.len()) {
            return bad("attached UE count changed during the epoch".into());
        }
    }
    Ok(())
}

/// Run `epochs` epochs over `scenario`, cycling through `schedule` for the
/// UE count of each epoch. The first `n` scenario UEs are present in an
/// epoch with `n` UEs. Every epoch's events are checked with
/// [`validate_events`] before the next one starts.
pub fn run_schedule(
    scenario: &Scenario,
    schedule: &[usize],
    epochs: usize,
    opts: &SimOptions,
) -> Result<(Vec<LoopTrace>, RanState), ControlError> {
    if schedule.is_empty() && epochs > 0 {
        return Err(ControlError::State("empty UE schedule".into()));
    }
    let demands: Vec<f64> = scenario.ues.iter().map(|u| u.demand_lambda).collect();
    let mut state: Option<RanState> = None;
    let mut traces = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let n = schedule[epoch % schedule.len()];
        let instance = ProblemInstance::from_scenario(scenario, n, demands.get(..n).unwrap_or(&demands))?;
        let before = state.take().unwrap_or_else(|| RanState::all_on(&instance));
        let (after, trace) = run_epoch(&before, &EpochInput { epoch, instance }, opts)?;
        validate_events(&before, &trace)?;
        traces.push(trace);
        state = Some(after);
    }
    let state = match state {
        Some(s) => s,
        None => RanState::all_on(&ProblemInstance::from_scenario(scenario, 0, &[])?),
    };
    Ok((traces, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::{OruParams, UeDemand};

    fn instance(n_ues: usize, n_orus: usize, per_oru: usize) -> ProblemInstance {
        let gain: f64 = 1e-10;
        let se = (1.0 + gain / 1e-12).log2();
        let demand = 100e6 * se / (per_oru as f64 + 0.5);
        ProblemInstance {
            ues: (0..n_ues).map(|i| UeDemand { id: UeId(i as u32), demand }).collect(),
            orus: (0..n_orus)
                .map(|i| OruParams {
                    id: OruId(i as u32),
                    max_power: 1.0,
                    max_bandwidth: 100e6,
                    static_power: 11.4757,
                    efficiency: 0.25,
                    power_levels: vec![1.0],
                })
                .collect(),
            gain: (0..n_ues)
                .map(|u| (0..n_orus).map(|r| if r == u % n_orus { gain * 1.5 } else { gain }).collect())
                .collect(),
            noise: 1e-12,
            epsilon: 1e-3,
        }
    }

    fn run(state: &RanState, inst: &ProblemInstance, epoch: usize) -> (RanState, LoopTrace) {
        let input = EpochInput { epoch, instance: inst.clone() };
        let out = run_epoch(state, &input, &SimOptions::default()).unwrap();
        validate_events(state, &out.1).unwrap();
        out
    }

    #[test]
    fn first_epoch_consolidates_and_orders_switch_off() {
        let inst = instance(16, 17, 62);
        let s0 = RanState::all_on(&inst);
        let (s1, trace) = run(&s0, &inst, 0);
        assert_eq!(trace.outcome, EpochOutcome::Applied);
        assert_eq!(s1.active_count(), 1);
        assert!((trace.energy_after - 15.4757).abs() < 1e-9);
        assert!((trace.energy_before - 17.0 * 15.4757).abs() < 1e-9);
        // Every switch-off comes after the last handover completion.
        let last_complete = trace
            .events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::HandoverComplete { .. }))
            .map(|e| e.time)
            .fold(f64::NEG_INFINITY, f64::max);
        for e in &trace.events {
            if let EventKind::RcStateChange { state: NodeState::Standby, .. } = e.kind {
                assert!(e.time >= last_complete);
            }
        }
        let vespa: Vec<_> = trace.records.iter().filter(|r| r.stage == StageKind::VespaExport).collect();
        assert_eq!(vespa.len(), 1);
        assert_eq!(vespa[0].duration, 4.332);
    }

    #[test]
    fn unchanged_demand_skips_and_keeps_state() {
        let inst = instance(16, 17, 62);
        let s0 = RanState::all_on(&inst);
        let (s1, _) = run(&s0, &inst, 0);
        let (s2, trace) = run(&s1, &inst, 1);
        assert_eq!(trace.outcome, EpochOutcome::Skipped);
        assert_eq!(trace.handover_count, 0);
        assert_eq!(s2.assoc, s1.assoc);
        assert_eq!(s2.nodes, s1.nodes);
    }

    #[test]
    fn infeasible_epoch_leaves_state() {
        let mut inst = instance(4, 2, 2);
        inst.ues.iter_mut().for_each(|u| u.demand = 1e12);
        let s0 = RanState::all_on(&inst);
        let (s1, trace) = run(&s0, &inst, 0);
        assert!(matches!(trace.outcome, EpochOutcome::Failed { stage: StageKind::RAppSolve, .. }));
        assert_eq!(s1.nodes, s0.nodes);
        assert_eq!(s1.assoc, s0.assoc);
        assert_eq!(trace.records.last().unwrap().stage, StageKind::RAppSolve);
    }

    #[test]
    fn breakdown_sums_to_total() {
        let inst = instance(40, 6, 9);
        let s0 = RanState::all_on(&inst);
        let (_, trace) = run(&s0, &inst, 0);
        let (total, parts) = e2e_delay(&trace).unwrap();
        let sum: f64 = parts.values().sum();
        assert!((sum - total).abs() < 1e-9);
    }

    #[test]
    fn empty_trace_is_incomplete() {
        let inst = instance(2, 2, 2);
        let (_, mut trace) = run(&RanState::all_on(&inst), &inst, 0);
        trace.records.clear();
        assert!(e2e_delay(&trace).is_err());
    }

    #[test]
    fn validator_catches_early_switch_off() {
        let inst = instance(16, 17, 62);
        let s0 = RanState::all_on(&inst);
        let (_, mut trace) = run(&s0, &inst, 0);
        // Move the first switch-off in front of the handovers.
        let idx = trace
            .events
            .iter()
            .position(|e| matches!(e.kind, EventKind::RcStateChange { state: NodeState::Standby, .. }))
            .unwrap();
        let mut ev = trace.events.remove(idx);
        let first_cmd = trace
            .events
            .iter()
            .position(|e| matches!(e.kind, EventKind::RcHandoverCommand { .. }))
            .unwrap();
        ev.time = trace.events[first_cmd].time;
        trace.events.insert(first_cmd, ev);
        assert!(validate_events(&s0, &trace).is_err());
    }
}
