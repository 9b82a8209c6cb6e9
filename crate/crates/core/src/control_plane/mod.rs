//! Discrete-event model of the closed control loop.
//!
//! Each epoch walks the same pipeline: RF environment and E2 node
//! connection, KPM monitoring, telemetry export over O1 (monitoring store,
//! VESPA agent, VES collector, data river), the energy-saving rApp, A1
//! policy delivery, UE handovers, and finally E2 node power reconfiguration.
//! Stage durations come from a [`LatencyModel`]; the only host-dependent
//! number is the solver wall time, which is recorded but never drives the
//! simulated clock.

mod handover;
mod latency;
mod sim;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optimizer::{OptError, OruId, UeId};

pub use handover::{handover_delay, plan_handovers, HandoverPlan, Move};
pub use latency::{
    calibration, fit_power_law_least_squares, jitter_ratio, stage_time, LatencyError, LatencyModel, PowerLaw,
    StageCurve,
};
pub use sim::{
    e2e_delay, run_epoch, run_schedule, validate_events, EpochInput, EpochOutcome, Event, EventKind, LoopTrace,
    NodeStatus, RanState, SimOptions, SolverStats, StageRecord,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentId {
    RfEnvManager,
    E2Node(OruId),
    XAppMonitoring,
    MonitoringStore,
    VespaAgent,
    VesCollector,
    DataRiver,
    RAppEnergySavings,
    A1Mediator,
    XAppHandover,
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComponentId::RfEnvManager => f.write_str("rf_env_manager"),
            ComponentId::E2Node(id) => write!(f, "e2_node/{}", id.0),
            ComponentId::XAppMonitoring => f.write_str("xapp_monitoring"),
            ComponentId::MonitoringStore => f.write_str("monitoring_store"),
            ComponentId::VespaAgent => f.write_str("vespa_agent"),
            ComponentId::VesCollector => f.write_str("ves_collector"),
            ComponentId::DataRiver => f.write_str("data_river"),
            ComponentId::RAppEnergySavings => f.write_str("rapp_energy_savings"),
            ComponentId::A1Mediator => f.write_str("a1_mediator"),
            ComponentId::XAppHandover => f.write_str("xapp_handover"),
        }
    }
}

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    RfEnvConnection,
    E2nConnection,
    XAppMonitoring,
    MonitoringExport,
    VespaExport,
    VesCollector,
    DataRiverDispatch,
    RAppSolve,
    PowerConfig,
    A1PolicyDelivery,
    XAppHandover,
    E2nHandover,
    RfEnvHandover,
    E2nPowerReconfig,
}

impl StageKind {
    pub const ALL: [StageKind; 14] = [
        StageKind::RfEnvConnection,
        StageKind::E2nConnection,
        StageKind::XAppMonitoring,
        StageKind::MonitoringExport,
        StageKind::VespaExport,
        StageKind::VesCollector,
        StageKind::DataRiverDispatch,
        StageKind::RAppSolve,
        StageKind::PowerConfig,
        StageKind::A1PolicyDelivery,
        StageKind::XAppHandover,
        StageKind::E2nHandover,
        StageKind::RfEnvHandover,
        StageKind::E2nPowerReconfig,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StageKind::RfEnvConnection => "rf_env_connection",
            StageKind::E2nConnection => "e2n_connection",
            StageKind::XAppMonitoring => "xapp_monitoring",
            StageKind::MonitoringExport => "monitoring_export",
            StageKind::VespaExport => "vespa_export",
            StageKind::VesCollector => "ves_collector",
            StageKind::DataRiverDispatch => "data_river_dispatch",
            StageKind::RAppSolve => "rapp_solve",
            StageKind::PowerConfig => "power_config",
            StageKind::A1PolicyDelivery => "a1_policy_delivery",
            StageKind::XAppHandover => "xapp_handover",
            StageKind::E2nHandover => "e2n_handover",
            StageKind::RfEnvHandover => "rf_env_handover",
            StageKind::E2nPowerReconfig => "e2n_power_reconfig",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeState {
    Active,
    Standby,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyType {
    EnergySaving,
}

/// Directive from the rApp to the near-real-time controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct A1Policy {
    pub policy_id: u64,
    pub policy_type: PolicyType,
    pub target_states: BTreeMap<OruId, NodeState>,
    pub power_levels: BTreeMap<OruId, f64>,
    pub target_assoc: BTreeMap<UeId, OruId>,
    /// Seconds the policy stays in force.
    pub validity: f64,
}

impl A1Policy {
    /// Every active node has a power level of at least `epsilon` and every
    /// UE targets an active node.
    pub fn validate(&self, epsilon: f64) -> Result<(), ControlError> {
        for (id, state) in &self.target_states {
            if *state == NodeState::Active && !self.power_levels.get(id).is_some_and(|&w| w >= epsilon * (1.0 - 1e-9)) {
                return Err(ControlError::Policy(format!("active node {id} lacks a power level >= epsilon")));
            }
        }
        for (ue, node) in &self.target_assoc {
            if self.target_states.get(node) != Some(&NodeState::Active) {
                return Err(ControlError::Policy(format!("{ue} targets non-active node {node}")));
            }
        }
        if !(self.validity > 0.0) {
            return Err(ControlError::Policy("validity must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("handover plan rejected: {0}")]
    RejectedPlan(String),
    #[error("invalid A1 policy: {0}")]
    Policy(String),
    #[error("incomplete trace: {0}")]
    IncompleteTrace(String),
    #[error("inconsistent RAN state: {0}")]
    State(String),
    #[error(transparent)]
    Optimizer(#[from] OptError),
}
