use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::optimizer::{check_feasible, Allocation, OruId, ProblemInstance, UeId};

use super::{stage_time, ControlError, LatencyModel, StageKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Move {
    pub ue: UeId,
    pub source: OruId,
    pub target: OruId,
}

/// Transition between two allocations. Executed as: activations, then
/// `moves` in order, then `deactivations`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HandoverPlan {
    pub moves: Vec<Move>,
    pub activations: Vec<OruId>,
    pub deactivations: Vec<OruId>,
}

impl HandoverPlan {
    pub fn is_empty(&self) -> bool {
        self.moves.is_empty() && self.activations.is_empty() && self.deactivations.is_empty()
    }

    /// Checks the plan against the association it starts from: no UE moves
    /// twice, no move lands on a node being switched off, and every UE of a
    /// node being switched off leaves it.
    pub fn validate(&self, prev_assoc: &BTreeMap<UeId, OruId>) -> Result<(), ControlError> {
        let reject = |m: String| Err(ControlError::RejectedPlan(m));
        let mut seen = BTreeSet::new();
        for m in &self.moves {
            if !seen.insert(m.ue) {
                return reject(format!("{} moves twice", m.ue));
            }
            if prev_assoc.get(&m.ue) != Some(&m.source) {
                return reject(format!("{} is not on {}", m.ue, m.source));
            }
            if self.deactivations.contains(&m.target) {
                return reject(format!("{} targets {} which is being switched off", m.ue, m.target));
            }
        }
        for node in &self.deactivations {
            if let Some((ue, _)) = prev_assoc.iter().find(|(u, r)| *r == node && !seen.contains(*u)) {
                return reject(format!("{ue} would stay on {node} after switch-off"));
            }
        }
        Ok(())
    }
}

/// Moves for every UE whose serving O-RU changes, sorted by UE id, plus the
/// O-RUs to wake and to switch off.
pub fn plan_handovers(
    instance: &ProblemInstance,
    prev: &Allocation,
    next: &Allocation,
) -> Result<HandoverPlan, ControlError> {
    let violations = check_feasible(instance, next);
    if let Some(v) = violations.first() {
        return Err(ControlError::RejectedPlan(format!(
            "target allocation is infeasible ({} violations, first {:?} on {:?})",
            violations.len(),
            v.constraint,
            v.subject
        )));
    }
    if !prev.assoc.keys().eq(next.assoc.keys()) {
        return Err(ControlError::RejectedPlan("allocations cover different UE sets".into()));
    }
    let moves = prev
        .assoc
        .iter()
        .zip(next.assoc.values())
        .filter(|((_, a), b)| a != b)
        .map(|((&ue, &source), &target)| Move { ue, source, target })
        .collect();
    let plan = HandoverPlan {
        moves,
        activations: next.active.difference(&prev.active).copied().collect(),
        deactivations: prev.active.difference(&next.active).copied().collect(),
    };
    plan.validate(&prev.assoc)?;
    Ok(plan)
}

/// `(total, per_ue)` seconds for the handover xApp to execute the plan.
pub fn handover_delay(plan: &HandoverPlan, model: &LatencyModel) -> (f64, f64) {
    let n = plan.moves.len();
    let total = stage_time(StageKind::XAppHandover, n, model);
    (total, total / n.max(1) as f64)
}
