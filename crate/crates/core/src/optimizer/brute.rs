//! Exhaustive enumeration, used as the reference oracle.

use std::cmp::Ordering;
use std::time::Instant;

use rayon::prelude::*;

use super::tables::{config_cost, NeedTable};
use super::{fits, Allocation, OptError, Optimality, ProblemInstance, SolveOptions, SolveReport};

pub const BRUTE_MAX_ORUS: usize = 4;
pub const BRUTE_MAX_UES: usize = 8;
pub const BRUTE_MAX_LEVELS: usize = 3;

struct Candidate {
    cost: f64,
    active: usize,
    handovers: usize,
    on_list: Vec<usize>,
    power: f64,
    levels: Vec<Option<usize>>,
    assign: Vec<usize>,
}

impl Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.active.cmp(&other.active))
            .then(self.handovers.cmp(&other.handovers))
            .then(self.on_list.cmp(&other.on_list))
            .then(self.power.total_cmp(&other.power))
            .then(self.levels.cmp(&other.levels))
            .then(self.assign.cmp(&other.assign))
    }
}

fn better(a: Option<Candidate>, b: Option<Candidate>) -> Option<Candidate> {
    match (a, b) {
        (Some(a), Some(b)) => Some(if b.cmp(&a) == Ordering::Less { b } else { a }),
        (a, b) => a.or(b),
    }
}

/// Try every activation pattern, power level and association.
///
/// Ties are broken by fewer active O-RUs, fewer handovers against
/// `options.previous`, the lexicographically smallest active set (by
/// position in the instance), then the smallest total transmit power.
pub fn solve_bruteforce(instance: &ProblemInstance, options: &SolveOptions) -> Result<SolveReport, OptError> {
    instance.validate()?;
    let n_orus = instance.orus.len();
    let n_ues = instance.ues.len();
    let max_levels = instance.orus.iter().map(|o| o.power_levels.len()).max().unwrap_or(0);
    if n_orus > BRUTE_MAX_ORUS || n_ues > BRUTE_MAX_UES || max_levels > BRUTE_MAX_LEVELS {
        return Err(OptError::OracleTooLarge(format!(
            "{n_orus} O-RUs, {n_ues} UEs, {max_levels} levels (limits {BRUTE_MAX_ORUS}, {BRUTE_MAX_UES}, {BRUTE_MAX_LEVELS})"
        )));
    }
    let start = Instant::now();
    let table = NeedTable::build(instance, options);
    let prev: Vec<Option<usize>> = instance
        .ues
        .iter()
        .map(|ue| {
            options
                .previous
                .as_ref()
                .and_then(|p| p.get(&ue.id))
                .and_then(|&r| instance.oru_index(r))
        })
        .collect();

    // Mixed radix: digit r is 0 for off, l + 1 for level l.
    let radix: Vec<usize> = instance.orus.iter().map(|o| o.power_levels.len() + 1).collect();
    let n_configs: usize = radix.iter().product();

    let eval = |code: usize| -> (Option<Candidate>, u64) {
        let mut levels = Vec::with_capacity(n_orus);
        let mut c = code;
        for &b in &radix {
            let d = c % b;
            c /= b;
            levels.push(if d == 0 { None } else { Some(d - 1) });
        }
        let on_list: Vec<usize> = (0..n_orus).filter(|&r| levels[r].is_some()).collect();
        let k = on_list.len();
        if k == 0 && n_ues > 0 {
            return (None, 0);
        }
        let cost = config_cost(&table, &levels);
        let power: f64 = on_list.iter().map(|&r| instance.orus[r].power_levels[levels[r].unwrap()]).sum();
        let total = k.pow(n_ues as u32);
        let mut best: Option<Candidate> = None;
        let mut digits = vec![0usize; n_ues];
        for _ in 0..total {
            let mut load = vec![0.0; n_orus];
            for u in 0..n_ues {
                let r = on_list[digits[u]];
                load[r] += table.need[r][levels[r].unwrap()][u];
            }
            if on_list.iter().all(|&r| fits(load[r], instance.orus[r].max_bandwidth)) {
                let assign: Vec<usize> = digits.iter().map(|&d| on_list[d]).collect();
                let handovers = assign.iter().zip(&prev).filter(|(a, p)| p.is_some_and(|p| p != **a)).count();
                let cand = Candidate {
                    cost,
                    active: k,
                    handovers,
                    on_list: on_list.clone(),
                    power,
                    levels: levels.clone(),
                    assign,
                };
                best = better(best, Some(cand));
            }
            for d in digits.iter_mut() {
                *d += 1;
                if *d < k {
                    break;
                }
                *d = 0;
            }
        }
        (best, total as u64)
    };

    let reduce = |(a, na): (Option<Candidate>, u64), (b, nb): (Option<Candidate>, u64)| (better(a, b), na + nb);
    let (best, nodes) = if options.threads > 1 {
        options
            .pool()
            .install(|| (0..n_configs).into_par_iter().map(eval).reduce(|| (None, 0), reduce))
    } else {
        (0..n_configs).map(eval).fold((None, 0), reduce)
    };
    let best = best.ok_or(OptError::Infeasible)?;
    Ok(SolveReport {
        allocation: Allocation::from_decisions(instance, &best.levels, &best.assign),
        nodes_explored: nodes,
        wall_time: start.elapsed().as_secs_f64(),
        optimality: Optimality::ProvedOptimal,
    })
}

#[cfg(test)]
mod tests {
    use super::super::testutil::uniform;
    use super::super::{check_feasible, OruId};
    use super::*;

    #[test]
    fn single_link_lowest_level() {
        let inst = uniform(1, 1, 1e6, vec![0.25, 1.0]);
        let rep = solve_bruteforce(&inst, &SolveOptions::default()).unwrap();
        let a = &rep.allocation;
        assert_eq!(a.power[&OruId(0)], 0.25);
        assert!((a.objective_watts - (0.25 / 0.25 + 11.4757)).abs() < 1e-12);
        assert_eq!(rep.optimality, Optimality::ProvedOptimal);
    }

    #[test]
    fn two_ues_share_one_oru() {
        let inst = uniform(2, 2, 1e6, vec![0.5, 1.0]);
        let rep = solve_bruteforce(&inst, &SolveOptions::default()).unwrap();
        assert_eq!(rep.allocation.active.len(), 1);
        assert!(rep.allocation.active.contains(&OruId(0)));
        assert!(check_feasible(&inst, &rep.allocation).is_empty());
    }

    #[test]
    fn demand_beyond_capacity() {
        let inst = uniform(1, 2, 1e10, vec![1.0]);
        assert_eq!(solve_bruteforce(&inst, &SolveOptions::default()), Err(OptError::Infeasible));
    }

    #[test]
    fn guard() {
        let inst = uniform(9, 1, 1e6, vec![1.0]);
        assert!(matches!(solve_bruteforce(&inst, &SolveOptions::default()), Err(OptError::OracleTooLarge(_))));
        let inst = uniform(1, 5, 1e6, vec![1.0]);
        assert!(matches!(solve_bruteforce(&inst, &SolveOptions::default()), Err(OptError::OracleTooLarge(_))));
        let inst = uniform(1, 1, 1e6, vec![0.1, 0.2, 0.3, 0.4]);
        assert!(matches!(solve_bruteforce(&inst, &SolveOptions::default()), Err(OptError::OracleTooLarge(_))));
    }

    #[test]
    fn no_ues_all_off() {
        let inst = uniform(0, 3, 1e6, vec![1.0]);
        let rep = solve_bruteforce(&inst, &SolveOptions::default()).unwrap();
        assert!(rep.allocation.active.is_empty());
        assert_eq!(rep.allocation.objective_watts, 0.0);
    }
}
