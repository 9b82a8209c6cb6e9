#![allow(dead_code)]

use oran_es::optimizer::{Allocation, ConstraintId, OruId, OruParams, ProblemInstance, UeDemand, UeId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Random instance within the exhaustive-search limits.
pub fn random_small(seed: u64, max_orus: usize, max_ues: usize, max_levels: usize) -> ProblemInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_orus = rng.random_range(1..=max_orus);
    let n_ues = rng.random_range(0..=max_ues);
    let epsilon = 1e-3;
    let orus = (0..n_orus)
        .map(|i| {
            let max_power = [0.5, 1.0, 2.0][rng.random_range(0..3)];
            let n_levels = rng.random_range(1..=max_levels);
            let mut grid = vec![epsilon, 0.25 * max_power, 0.5 * max_power, 0.75 * max_power, max_power];
            while grid.len() > n_levels {
                // Keep the maximum so every instance can use full power.
                let k = rng.random_range(0..grid.len() - 1);
                grid.remove(k);
            }
            OruParams {
                id: OruId(i as u32),
                max_power,
                max_bandwidth: rng.random_range(10e6..100e6),
                static_power: rng.random_range(0.0..15.0),
                efficiency: rng.random_range(0.1..=1.0),
                power_levels: grid,
            }
        })
        .collect();
    let ues = (0..n_ues)
        .map(|i| UeDemand { id: UeId(i as u32), demand: log_uniform(&mut rng, 1e5, 2e8) })
        .collect();
    let gain = (0..n_ues)
        .map(|_| (0..n_orus).map(|_| log_uniform(&mut rng, 1e-12, 1e-8)).collect())
        .collect();
    ProblemInstance { ues, orus, gain, noise: 1e-12, epsilon }
}

/// Identical O-RUs with one shared link gain; per-O-RU capacity is set by
/// `per_oru` UEs at maximum power.
pub fn uniform(n_ues: usize, n_orus: usize, per_oru: usize) -> ProblemInstance {
    let gain: f64 = 1e-10;
    let noise = 1e-12;
    let rho = 100e6;
    let se = (1.0 + gain / noise).log2();
    let demand = rho * se / (per_oru as f64 + 0.5);
    ProblemInstance {
        ues: (0..n_ues).map(|i| UeDemand { id: UeId(i as u32), demand }).collect(),
        orus: (0..n_orus)
            .map(|i| OruParams {
                id: OruId(i as u32),
                max_power: 1.0,
                max_bandwidth: rho,
                static_power: 11.4757,
                efficiency: 0.25,
                power_levels: vec![1.0],
            })
            .collect(),
        gain: vec![vec![gain; n_orus]; n_ues],
        noise,
        epsilon: 1e-3,
    }
}

/// Random instance up to `max_orus` x `max_ues` whose demands usually fit.
pub fn random_sized(seed: u64, max_orus: usize, max_ues: usize) -> ProblemInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n_orus = rng.random_range(1..=max_orus);
    let n_ues = rng.random_range(0..=max_ues);
    let mut inst = random_small(seed, n_orus, 0, 3);
    inst.orus.truncate(n_orus);
    let n_orus = inst.orus.len();
    let scale = log_uniform(&mut rng, 1e5, 4e6 * n_orus as f64 / (n_ues.max(1) as f64).sqrt());
    inst.ues = (0..n_ues)
        .map(|i| UeDemand { id: UeId(i as u32), demand: scale * rng.random_range(0.2..1.0) })
        .collect();
    inst.gain = (0..n_ues)
        .map(|_| (0..n_orus).map(|_| log_uniform(&mut rng, 1e-11, 1e-8)).collect())
        .collect();
    inst
}

/// Break exactly one constraint of a feasible allocation. Returns the
/// constraint that should now be reported, or `None` when the allocation
/// has nothing the chosen kind of poke can act on.
pub fn poke(
    inst: &ProblemInstance,
    alloc: &Allocation,
    kind: usize,
    rng: &mut ChaCha8Rng,
) -> Option<(Allocation, ConstraintId)> {
    let mut a = alloc.clone();
    let active: Vec<OruId> = a.active.iter().copied().collect();
    let inactive: Vec<OruId> = inst.orus.iter().map(|o| o.id).filter(|id| !a.active.contains(id)).collect();
    let loaded: Vec<OruId> = active.iter().copied().filter(|r| a.assoc.values().any(|x| x == r)).collect();
    let pick = |v: &[OruId], rng: &mut ChaCha8Rng| (!v.is_empty()).then(|| v[rng.random_range(0..v.len())]);
    let oru = |id: OruId| inst.orus.iter().find(|o| o.id == id).unwrap();
    match kind % 7 {
        0 => {
            let ues: Vec<UeId> = a.assoc.keys().copied().collect();
            let u = *ues.get(rng.random_range(0..ues.len().max(1)))?;
            a.assoc.remove(&u);
            Some((a, ConstraintId::Assoc))
        }
        1 => {
            let r = pick(&active, rng)?;
            a.power.insert(r, oru(r).max_power * rng.random_range(1.1..3.0));
            Some((a, ConstraintId::PowerBound))
        }
        2 => {
            let r = pick(&inactive, rng)?;
            a.power.insert(r, oru(r).max_power * rng.random_range(0.1..1.0));
            Some((a, ConstraintId::PowerZeroWhenOff))
        }
        3 => {
            let r = pick(&loaded, rng)?;
            a.active.remove(&r);
            Some((a, ConstraintId::NoUsersWhenOff))
        }
        4 => {
            let r = pick(&inactive, rng)?;
            a.active.insert(r);
            a.power.insert(r, 0.0);
            Some((a, ConstraintId::PowerFloorWhenOn))
        }
        5 => {
            let r = pick(&loaded, rng)?;
            let (&u, _) = a.assoc.iter().find(|(_, x)| **x == r)?;
            *a.bandwidth.get_mut(&(u, r))? += oru(r).max_bandwidth;
            Some((a, ConstraintId::BandwidthCap))
        }
        _ => {
            let ues: Vec<UeId> = inst.ues.iter().filter(|u| u.demand > 0.0).map(|u| u.id).collect();
            let u = *ues.get(rng.random_range(0..ues.len().max(1)))?;
            let r = a.assoc[&u];
            *a.bandwidth.get_mut(&(u, r))? *= rng.random_range(0.1..0.9);
            Some((a, ConstraintId::RateDemand))
        }
    }
}
