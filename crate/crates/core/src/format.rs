//! On-disk documents: scenarios, problem instances and allocations.
//!
//! All three are TOML with a top-level `kind` and `format_version`.
//! Scenarios keep full float precision so that a reloaded scenario yields
//! bit-identical instances. Instances and allocations print decimals with
//! 12 significant digits; integers round-trip exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ScenarioConfig, FORMAT_VERSION};
use crate::optimizer::{Allocation, Optimality, OruId, OruParams, ProblemInstance, UeDemand, UeId};
use crate::rf_env::{OruSite, Scenario, UeTerminal};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("expected a `{expected}` document, found `{found}`")]
    Kind { expected: String, found: String },
    #[error("unsupported format_version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("invalid document: {0}")]
    Invalid(String),
}

/// Round to 12 significant decimal digits.
pub fn round_sig12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

#[derive(Deserialize)]
struct Header {
    kind: String,
    format_version: u32,
}

/// The `kind` of a document, after checking its version.
pub fn document_kind(text: &str) -> Result<String, FormatError> {
    let h: Header = toml::from_str(text).map_err(|e| FormatError::Parse(e.to_string()))?;
    if h.format_version != FORMAT_VERSION {
        return Err(FormatError::Version { found: h.format_version, expected: FORMAT_VERSION });
    }
    Ok(h.kind)
}

fn expect_kind(text: &str, expected: &str) -> Result<(), FormatError> {
    let found = document_kind(text)?;
    if found != expected {
        return Err(FormatError::Kind { expected: expected.into(), found });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    kind: String,
    format_version: u32,
    seed: u64,
    config: ScenarioConfig,
    orus: Vec<OruSite>,
    ues: Vec<UeTerminal>,
    /// UE-major, dB.
    shadow_db: Vec<Vec<f64>>,
}

pub fn scenario_to_toml(s: &Scenario) -> String {
    let doc = ScenarioDoc {
        kind: "scenario".into(),
        format_version: FORMAT_VERSION,
        seed: s.seed,
        config: s.config.clone(),
        orus: s.orus.clone(),
        ues: s.ues.clone(),
        shadow_db: s.shadow_db.clone(),
    };
    toml::to_string(&doc).expect("scenario serializes")
}

pub fn scenario_from_toml(text: &str) -> Result<Scenario, FormatError> {
    expect_kind(text, "scenario")?;
    let doc: ScenarioDoc = toml::from_str(text).map_err(|e| FormatError::Parse(e.to_string()))?;
    let s = Scenario { config: doc.config, seed: doc.seed, orus: doc.orus, ues: doc.ues, shadow_db: doc.shadow_db };
    s.validate().map_err(|e| FormatError::Invalid(e.to_string()))?;
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UeRow {
    id: u32,
    demand_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OruRow {
    id: u32,
    max_power_w: f64,
    max_bandwidth_hz: f64,
    static_power_w: f64,
    efficiency: f64,
    power_levels_w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    kind: String,
    format_version: u32,
    noise_w: f64,
    epsilon_w: f64,
    /// UE-major linear gains, in the order of `ues` and `orus`.
    gain: Vec<Vec<f64>>,
    ues: Vec<UeRow>,
    orus: Vec<OruRow>,
}

pub fn instance_to_toml(inst: &ProblemInstance) -> String {
    let r = round_sig12;
    let doc = InstanceDoc {
        kind: "instance".into(),
        format_version: FORMAT_VERSION,
        noise_w: r(inst.noise),
        epsilon_w: r(inst.epsilon),
        gain: inst.gain.iter().map(|row| row.iter().map(|&g| r(g)).collect()).collect(),
        ues: inst.ues.iter().map(|u| UeRow { id: u.id.0, demand_bps: r(u.demand) }).collect(),
        orus: inst
            .orus
            .iter()
            .map(|o| OruRow {
                id: o.id.0,
                max_power_w: r(o.max_power),
                max_bandwidth_hz: r(o.max_bandwidth),
                static_power_w: r(o.static_power),
                efficiency: r(o.efficiency),
                power_levels_w: o.power_levels.iter().map(|&w| r(w)).collect(),
            })
            .collect(),
    };
    toml::to_string(&doc).expect("instance serializes")
}

pub fn instance_from_toml(text: &str) -> Result<ProblemInstance, FormatError> {
    expect_kind(text, "instance")?;
    let doc: InstanceDoc = toml::from_str(text).map_err(|e| FormatError::Parse(e.to_string()))?;
    let inst = ProblemInstance {
        ues: doc.ues.into_iter().map(|u| UeDemand { id: UeId(u.id), demand: u.demand_bps }).collect(),
        orus: doc
            .orus
            .into_iter()
            .map(|o| OruParams {
                id: OruId(o.id),
                max_power: o.max_power_w,
                max_bandwidth: o.max_bandwidth_hz,
                static_power: o.static_power_w,
                efficiency: o.efficiency,
                power_levels: o.power_levels_w,
            })
            .collect(),
        gain: doc.gain,
        noise: doc.noise_w,
        epsilon: doc.epsilon_w,
    };
    inst.validate().map_err(|e| FormatError::Invalid(e.to_string()))?;
    Ok(inst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssocRow {
    ue: u32,
    oru: u32,
    bandwidth_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PowerRow {
    oru: u32,
    active: bool,
    power_w: f64,
}

/// Solver metadata stored next to an allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveMeta {
    pub solver: String,
    pub optimality: Optimality,
    pub nodes_explored: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AllocationDoc {
    kind: String,
    format_version: u32,
    objective_watts: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    solve: Option<SolveMeta>,
    oru: Vec<PowerRow>,
    assoc: Vec<AssocRow>,
}

pub fn allocation_to_toml(alloc: &Allocation, meta: Option<&SolveMeta>) -> String {
    let r = round_sig12;
    let doc = AllocationDoc {
        kind: "allocation".into(),
        format_version: FORMAT_VERSION,
        objective_watts: r(alloc.objective_watts),
        solve: meta.cloned(),
        oru: alloc
            .power
            .iter()
            .map(|(id, &w)| PowerRow { oru: id.0, active: alloc.active.contains(id), power_w: r(w) })
            .collect(),
        assoc: alloc
            .assoc
            .iter()
            .map(|(u, o)| AssocRow {
                ue: u.0,
                oru: o.0,
                bandwidth_hz: r(alloc.bandwidth.get(&(*u, *o)).copied().unwrap_or(0.0)),
            })
            .collect(),
    };
    toml::to_string(&doc).expect("allocation serializes")
}

pub fn allocation_from_toml(text: &str) -> Result<(Allocation, Option<SolveMeta>), FormatError> {
    expect_kind(text, "allocation")?;
    let doc: AllocationDoc = toml::from_str(text).map_err(|e| FormatError::Parse(e.to_string()))?;
    let mut alloc = Allocation { objective_watts: doc.objective_watts, ..Default::default() };
    for row in doc.oru {
        alloc.power.insert(OruId(row.oru), row.power_w);
        if row.active {
            alloc.active.insert(OruId(row.oru));
        }
    }
    let mut seen = BTreeMap::new();
    for row in doc.assoc {
        if seen.insert(row.ue, row.oru).is_some() {
            return Err(FormatError::Invalid(format!("UE {} listed twice", row.ue)));
        }
        alloc.assoc.insert(UeId(row.ue), OruId(row.oru));
        alloc.bandwidth.insert((UeId(row.ue), OruId(row.oru)), row.bandwidth_hz);
    }
    Ok((alloc, doc.solve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::{solve_exact, SolveOptions};
    use crate::rf_env::generate_stadium;

    #[test]
    fn sig12_examples() {
        assert_eq!(round_sig12(0.0), 0.0);
        assert_eq!(round_sig12(1.0 / 3.0), 0.333333333333);
        assert_eq!(round_sig12(15.4757), 15.4757);
        assert_eq!(round_sig12(-2.0e-12 / 3.0), -6.66666666667e-13);
    }

    #[test]
    fn scenario_roundtrip_exact() {
        let cfg = ScenarioConfig::default();
        let s = generate_stadium(&cfg, 7).unwrap();
        let text = scenario_to_toml(&s);
        assert_eq!(scenario_from_toml(&text).unwrap(), s);
    }

    #[test]
    fn instance_and_allocation_roundtrip() {
        let s = generate_stadium(&ScenarioConfig::default(), 3).unwrap();
        let demands: Vec<f64> = s.ues.iter().map(|u| u.demand_lambda).collect();
        let inst = ProblemInstance::from_scenario(&s, s.ues.len(), &demands).unwrap();
        let text = instance_to_toml(&inst);
        let back = instance_from_toml(&text).unwrap();
        assert_eq!(instance_to_toml(&back), text);
        for (a, b) in inst.gain.iter().flatten().zip(back.gain.iter().flatten()) {
            assert!(((a - b) / a).abs() < 1e-11);
        }

        let rep = solve_exact(&back, &SolveOptions::default()).unwrap();
        let meta = SolveMeta { solver: "exact".into(), optimality: rep.optimality, nodes_explored: 3 };
        let text = allocation_to_toml(&rep.allocation, Some(&meta));
        let (alloc, m) = allocation_from_toml(&text).unwrap();
        assert_eq!(m, Some(meta));
        assert_eq!(alloc.assoc, rep.allocation.assoc);
        assert_eq!(alloc.active, rep.allocation.active);
        assert_eq!(allocation_to_toml(&alloc, m.as_ref()), text);
    }

    #[test]
    fn wrong_kind_rejected() {
        let s = generate_stadium(&ScenarioConfig::default(), 3).unwrap();
        let text = scenario_to_toml(&s);
        assert!(matches!(instance_from_toml(&text), Err(FormatError::Kind { .. })));
        assert!(matches!(document_kind("kind = 3"), Err(FormatError::Parse(_))));
        assert!(matches!(
            document_kind("kind = \"scenario\"\nformat_version = 9"),
            Err(FormatError::Version { found: 9, .. })
        ));
    }
}
