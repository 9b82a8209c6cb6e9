use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{spectral_efficiency, Allocation, OruId, ProblemInstance, UeId, REL_TOL};

/// The constraint a violation belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConstraintId {
    /// Every UE is associated with exactly one known O-RU.
    Assoc,
    /// `0 <= w_r <= gamma_r`.
    PowerBound,
    /// An inactive O-RU transmits nothing.
    PowerZeroWhenOff,
    /// An inactive O-RU serves no UE.
    NoUsersWhenOff,
    /// An active O-RU transmits at least `epsilon`.
    PowerFloorWhenOn,
    /// Allocated bandwidth stays within `rho_r * z_r`.
    BandwidthCap,
    /// Shannon rate covers each UE's demand.
    RateDemand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Subject {
    Ue(UeId),
    Oru(OruId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: ConstraintId,
    pub subject: Subject,
    /// Amount by which the constraint is missed, in the constraint's units
    /// (UE count, watts, hertz or bits/s). Always positive.
    pub magnitude: f64,
}

/// Every constraint the allocation breaks; empty when feasible.
///
/// An inactive O-RU that still has UEs attached is reported once, as
/// [`ConstraintId::NoUsersWhenOff`]. Its power, its bandwidth and the rates
/// of its UEs are not checked further, since they all follow from that
/// single fault. UEs without an association are reported as
/// [`ConstraintId::Assoc`] and skip the rate check for the same reason.
pub fn check_feasible(instance: &ProblemInstance, alloc: &Allocation) -> Vec<Violation> {
    let mut out = Vec::new();
    let index_of: BTreeMap<OruId, usize> = instance.orus.iter().enumerate().map(|(i, o)| (o.id, i)).collect();
    let mut push = |constraint, subject, magnitude: f64| {
        if magnitude > 0.0 {
            out.push(Violation { constraint, subject, magnitude });
        }
    };

    for ue in &instance.ues {
        match alloc.assoc.get(&ue.id) {
            None => push(ConstraintId::Assoc, Subject::Ue(ue.id), 1.0),
            Some(r) if !index_of.contains_key(r) => push(ConstraintId::Assoc, Subject::Ue(ue.id), 1.0),
            Some(_) => {}
        }
    }
    for u in alloc.assoc.keys() {
        if instance.ue_index(*u).is_none() {
            push(ConstraintId::Assoc, Subject::Ue(*u), 1.0);
        }
    }

    let mut users = vec![0usize; instance.orus.len()];
    for r in alloc.assoc.values() {
        if let Some(&i) = index_of.get(r) {
            users[i] += 1;
        }
    }
    let mut used = vec![0.0f64; instance.orus.len()];
    for (&(_, r), &y) in &alloc.bandwidth {
        match index_of.get(&r) {
            Some(&i) => used[i] += y,
            None => push(ConstraintId::BandwidthCap, Subject::Oru(r), y.abs()),
        }
    }

    let mut skip = vec![false; instance.orus.len()];
    for (i, oru) in instance.orus.iter().enumerate() {
        let on = alloc.active.contains(&oru.id);
        let w = alloc.power.get(&oru.id).copied().unwrap_or(0.0);
        let subject = Subject::Oru(oru.id);
        if !on && users[i] > 0 {
            push(ConstraintId::NoUsersWhenOff, subject, users[i] as f64);
            skip[i] = true;
            continue;
        }
        if w < 0.0 {
            push(ConstraintId::PowerBound, subject, -w);
        } else if w > oru.max_power * (1.0 + REL_TOL) {
            push(ConstraintId::PowerBound, subject, w - oru.max_power);
        }
        if on {
            if w < instance.epsilon * (1.0 - REL_TOL) {
                push(ConstraintId::PowerFloorWhenOn, subject, instance.epsilon - w);
            }
            if used[i] > oru.max_bandwidth * (1.0 + REL_TOL) {
                push(ConstraintId::BandwidthCap, subject, used[i] - oru.max_bandwidth);
            }
        } else {
            if w > oru.max_power * REL_TOL {
                push(ConstraintId::PowerZeroWhenOff, subject, w);
            }
            if used[i] > 0.0 {
                push(ConstraintId::BandwidthCap, subject, used[i]);
            }
        }
    }

    for (u, ue) in instance.ues.iter().enumerate() {
        let Some(r) = alloc.assoc.get(&ue.id) else { continue };
        let Some(&i) = index_of.get(r) else { continue };
        if skip[i] {
            continue;
        }
        let w = alloc.power.get(r).copied().unwrap_or(0.0);
        let y = alloc.bandwidth.get(&(ue.id, *r)).copied().unwrap_or(0.0);
        let rate = y * spectral_efficiency(instance.snr(u, i, w));
        if rate < ue.demand * (1.0 - REL_TOL) {
            push(ConstraintId::RateDemand, Subject::Ue(ue.id), ue.demand - rate);
        }
    }
    out
}
