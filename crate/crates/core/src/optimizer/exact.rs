//! Best-first branch and bound over O-RU activation and power level.
//!
//! O-RUs are decided in instance order. A node fixes a prefix: each decided
//! O-RU is off or on at one level. Leaves hold a complete `(z, w)` and are
//! checked lazily with the packing search in [`super::assign`].
//!
//! Node keys are lexicographic `(cost bound, active-count bound, handover
//! bound, active prefix, power prefix, level prefix)`, each a lower bound on
//! the same component of every leaf below. The first evaluated leaf to
//! leave the queue is therefore optimal under the full tie-break order.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::time::Instant;

use super::assign::{pack, PackProblem, Packing};
use super::tables::NeedTable;
use super::{greedy, Allocation, OptError, Optimality, ProblemInstance, SolveOptions, SolveReport, REL_TOL};

/// Relative slack applied to strict cost bounds so that a different
/// summation order can never make a bound exceed the true cost.
const BOUND_SLACK: f64 = 1e-12;

/// Normalized-load limit for pruning. Slightly looser than the packing
/// check so that rounding never prunes a leaf the packing would accept.
const LOOSE: f64 = 1.0 + REL_TOL + 1e-12;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
enum Dec {
    Off,
    On(u8),
}

#[derive(Clone, Debug)]
struct Key {
    cost: f64,
    active: usize,
    handovers: usize,
    on_list: Vec<u16>,
    power: f64,
    levels: Vec<u8>,
    depth: usize,
    seq: u64,
}

impl Key {
    fn order(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then(self.active.cmp(&other.active))
            .then(self.handovers.cmp(&other.handovers))
            .then_with(|| self.on_list.cmp(&other.on_list))
            .then(self.power.total_cmp(&other.power))
            .then_with(|| self.levels.cmp(&other.levels))
            .then(other.depth.cmp(&self.depth))
            .then(self.seq.cmp(&other.seq))
    }
}

struct Node {
    key: Key,
    dec: Vec<Dec>,
    cost_on: f64,
    /// Set once a leaf has been packed.
    assign: Option<Vec<usize>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.key.order(&other.key) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.order(&other.key)
    }
}

struct Ctx<'a> {
    instance: &'a ProblemInstance,
    table: NeedTable,
    n_orus: usize,
    n_ues: usize,
    /// `norm[r][l][u]`: fraction of O-RU `r`'s bandwidth UE `u` needs.
    norm: Vec<Vec<Vec<f64>>>,
    /// O-RUs per UE, by ascending load at maximum power.
    by_load: Vec<Vec<usize>>,
    /// O-RUs by ascending cost at their lowest level.
    by_cost: Vec<usize>,
    /// UEs with at most a few servable O-RUs, and those O-RUs.
    constrained: Vec<(usize, Vec<usize>)>,
    prev: Vec<Option<usize>>,
    prev_count: Vec<usize>,
    /// Previous UEs of `r` that can stay on `r` at level `l`, at most.
    stay_cap: Vec<Vec<usize>>,
}

const CONSTRAINED_MAX: usize = 3;

impl<'a> Ctx<'a> {
    fn new(instance: &'a ProblemInstance, options: &SolveOptions) -> Result<Self, OptError> {
        let table = NeedTable::build(instance, options);
        let n_orus = instance.orus.len();
        let n_ues = instance.ues.len();
        let norm: Vec<Vec<Vec<f64>>> = (0..n_orus)
            .map(|r| {
                let rho = instance.orus[r].max_bandwidth;
                table.need[r].iter().map(|row| row.iter().map(|n| n / rho).collect()).collect()
            })
            .collect();
        let top = |r: usize| table.top_level(r);
        let mut by_load = Vec::with_capacity(n_ues);
        let mut constrained = Vec::new();
        for u in 0..n_ues {
            let mut rs: Vec<usize> = (0..n_orus).collect();
            rs.sort_by(|&a, &b| norm[a][top(a)][u].total_cmp(&norm[b][top(b)][u]).then(a.cmp(&b)));
            let servable: Vec<usize> = rs.iter().copied().filter(|&r| norm[r][top(r)][u] <= LOOSE).collect();
            if servable.is_empty() {
                return Err(OptError::Infeasible);
            }
            if servable.len() <= CONSTRAINED_MAX {
                constrained.push((u, servable));
            }
            by_load.push(rs);
        }
        let mut by_cost: Vec<usize> = (0..n_orus).collect();
        by_cost.sort_by(|&a, &b| table.cost[a][0].total_cmp(&table.cost[b][0]).then(a.cmp(&b)));

        let prev: Vec<Option<usize>> = instance
            .ues
            .iter()
            .map(|ue| options.previous.as_ref().and_then(|p| p.get(&ue.id)).and_then(|&r| instance.oru_index(r)))
            .collect();
        let mut prev_count = vec![0; n_orus];
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_orus];
        for (u, p) in prev.iter().enumerate() {
            if let Some(r) = p {
                prev_count[*r] += 1;
                members[*r].push(u);
            }
        }
        let stay_cap = (0..n_orus)
            .map(|r| {
                (0..table.cost[r].len())
                    .map(|l| {
                        let mut needs: Vec<f64> = members[r].iter().map(|&u| norm[r][l][u]).collect();
                        needs.sort_by(f64::total_cmp);
                        let mut sum = 0.0;
                        let mut n = 0;
                        for x in needs {
                            sum += x;
                            if sum > LOOSE {
                                break;
                            }
                            n += 1;
                        }
                        n
                    })
                    .collect()
            })
            .collect();
        Ok(Ctx { instance, table, n_orus, n_ues, norm, by_load, by_cost, constrained, prev, prev_count, stay_cap })
    }

    fn cost(&self, r: usize, l: usize) -> f64 {
        self.table.cost[r][l]
    }

    /// Key for a node, or `None` when no leaf below it can be feasible.
    fn bound(&self, dec: &[Dec], cost_on: f64, seq: u64) -> Option<Key> {
        let depth = dec.len();
        let undecided = self.n_orus - depth;
        let top = |r: usize| self.table.top_level(r);

        let mut load = 0.0;
        for u in 0..self.n_ues {
            let mut best = f64::INFINITY;
            for &r in &self.by_load[u] {
                let floor = self.norm[r][top(r)][u];
                if floor >= best {
                    break;
                }
                if r < depth {
                    if let Dec::On(l) = dec[r] {
                        best = best.min(self.norm[r][l as usize][u]);
                    }
                } else {
                    best = floor;
                    break;
                }
            }
            if !(best <= LOOSE) {
                return None;
            }
            load += best;
        }
        let on_count = dec.iter().filter(|d| matches!(d, Dec::On(_))).count();
        let count_lb = (load * (1.0 - 1e-9) - 1e-9).ceil().max(0.0) as usize;
        if count_lb > on_count + undecided {
            return None;
        }

        // O-RUs some UE cannot do without.
        let mut forced: Vec<usize> = Vec::new();
        for (u, servable) in &self.constrained {
            let mut only = None;
            let mut n = 0;
            for &r in servable {
                let ok = if r < depth {
                    matches!(dec[r], Dec::On(l) if self.norm[r][l as usize][*u] <= LOOSE)
                } else {
                    true
                };
                if ok {
                    n += 1;
                    only = Some(r);
                }
            }
            match (n, only) {
                (0, _) => return None,
                (1, Some(r)) if r >= depth && !forced.contains(&r) => forced.push(r),
                _ => {}
            }
        }
        let mut extra: f64 = forced.iter().map(|&r| self.cost(r, 0)).sum();
        let mut more = count_lb.saturating_sub(on_count + forced.len());
        for &r in &self.by_cost {
            if more == 0 {
                break;
            }
            if r >= depth && !forced.contains(&r) {
                extra += self.cost(r, 0);
                more -= 1;
            }
        }
        let cost = if extra > 0.0 { (cost_on + extra) * (1.0 - BOUND_SLACK) } else { cost_on };

        let mut handovers = 0;
        for r in 0..self.n_orus {
            let stay = if r < depth {
                match dec[r] {
                    Dec::Off => 0,
                    Dec::On(l) => self.stay_cap[r][l as usize],
                }
            } else {
                self.stay_cap[r][top(r)]
            };
            handovers += self.prev_count[r].saturating_sub(stay);
        }

        let mut on_list = Vec::with_capacity(on_count);
        let mut levels = Vec::with_capacity(on_count);
        let mut power = 0.0;
        for (r, d) in dec.iter().enumerate() {
            if let Dec::On(l) = d {
                on_list.push(r as u16);
                levels.push(*l);
                power += self.instance.orus[r].power_levels[*l as usize];
            }
        }
        Some(Key {
            cost,
            active: on_count.max(count_lb),
            handovers,
            on_list,
            power,
            levels,
            depth,
            seq,
        })
    }

    fn pack_leaf(&self, dec: &[Dec], budget: u64) -> Packing {
        let slots: Vec<(usize, usize)> = dec
            .iter()
            .enumerate()
            .filter_map(|(r, d)| match d {
                Dec::On(l) => Some((r, *l as usize)),
                Dec::Off => None,
            })
            .collect();
        let caps: Vec<f64> = slots.iter().map(|&(r, _)| self.instance.orus[r].max_bandwidth).collect();
        let need: Vec<Vec<f64>> =
            (0..self.n_ues).map(|u| slots.iter().map(|&(r, l)| self.table.need[r][l][u]).collect()).collect();
        let prev: Vec<Option<usize>> =
            self.prev.iter().map(|p| p.and_then(|r| slots.iter().position(|&(s, _)| s == r))).collect();
        match pack(&PackProblem { caps: &caps, need: &need, prev: &prev }, budget) {
            Packing::Feasible(a) => Packing::Feasible(a.into_iter().map(|s| slots[s].0).collect()),
            other => other,
        }
    }
}

/// Optimal allocation over the discretized power grid.
///
/// Falls back to [`super::solve_greedy`] and reports
/// [`Optimality::Heuristic`] when the node budget runs out; a leaf whose
/// packing exceeds its own budget is skipped and also downgrades the flag.
pub fn solve_exact(instance: &ProblemInstance, options: &SolveOptions) -> Result<SolveReport, OptError> {
    instance.validate()?;
    let start = Instant::now();
    let ctx = Ctx::new(instance, options)?;
    let mut seq = 0u64;
    let mut heap = BinaryHeap::new();
    let root_key = ctx.bound(&[], 0.0, seq).ok_or(OptError::Infeasible)?;
    heap.push(Reverse(Node { key: root_key, dec: Vec::new(), cost_on: 0.0, assign: None }));

    let mut popped = 0u64;
    let mut incomplete = false;
    while let Some(Reverse(node)) = heap.pop() {
        popped += 1;
        if popped > options.max_search_nodes {
            log::warn!("exact search budget of {} nodes exhausted; using greedy", options.max_search_nodes);
            let mut rep = greedy::solve_greedy(instance, options)?;
            rep.nodes_explored += popped;
            rep.wall_time = start.elapsed().as_secs_f64();
            return Ok(rep);
        }
        if let Some(assign) = node.assign {
            let levels: Vec<Option<usize>> = node
                .dec
                .iter()
                .map(|d| match d {
                    Dec::On(l) => Some(*l as usize),
                    Dec::Off => None,
                })
                .collect();
            return Ok(SolveReport {
                allocation: Allocation::from_decisions(instance, &levels, &assign),
                nodes_explored: popped,
                wall_time: start.elapsed().as_secs_f64(),
                optimality: if incomplete { Optimality::Heuristic } else { Optimality::ProvedOptimal },
            });
        }
        let depth = node.dec.len();
        if depth == ctx.n_orus {
            match ctx.pack_leaf(&node.dec, options.max_assign_nodes) {
                Packing::Feasible(assign) => {
                    let handovers =
                        assign.iter().zip(&ctx.prev).filter(|(a, p)| p.is_some_and(|p| p != **a)).count();
                    let mut key = node.key;
                    key.handovers = handovers;
                    heap.push(Reverse(Node { key, dec: node.dec, cost_on: node.cost_on, assign: Some(assign) }));
                }
                Packing::Infeasible => {}
                Packing::Unknown => incomplete = true,
            }
            continue;
        }
        let mut children = vec![Dec::Off];
        children.extend((0..ctx.table.cost[depth].len()).map(|l| Dec::On(l as u8)));
        for d in children {
            let mut dec = node.dec.clone();
            dec.push(d);
            let cost_on = match d {
                Dec::Off => node.cost_on,
                Dec::On(l) => node.cost_on + ctx.cost(depth, l as usize),
            };
            seq += 1;
            if let Some(key) = ctx.bound(&dec, cost_on, seq) {
                heap.push(Reverse(Node { key, dec, cost_on, assign: None }));
            }
        }
    }
    if incomplete {
        Err(OptError::BudgetExhausted)
    } else {
        Err(OptError::Infeasible)
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::{demand_for_capacity, uniform};
    use super::super::{check_feasible, solve_bruteforce, OruId, UeId};
    use super::*;

    #[test]
    fn uniform_coverage_counts() {
        for k in 1..=4usize {
            for n in 1..=8usize {
                let mut inst = uniform(n, 8, 1.0, vec![1.0]);
                let d = demand_for_capacity(&inst, k, 1.0);
                inst.ues.iter_mut().for_each(|u| u.demand = d);
                let rep = solve_exact(&inst, &SolveOptions::default()).unwrap();
                assert_eq!(rep.allocation.active.len(), n.div_ceil(k), "n={n} k={k}");
                assert!(check_feasible(&inst, &rep.allocation).is_empty());
            }
        }
    }

    #[test]
    fn dominated_oru_stays_off() {
        // O-RU 1 carries both UEs at the lowest level; O-RU 0 needs full power.
        let mut inst = uniform(2, 2, 2e7, vec![1e-3, 1.0]);
        for row in inst.gain.iter_mut() {
            row[1] = 1e-8;
        }
        let rep = solve_exact(&inst, &SolveOptions::default()).unwrap();
        assert_eq!(rep.allocation.active.iter().copied().collect::<Vec<_>>(), vec![OruId(1)]);
        let brute = solve_bruteforce(&inst, &SolveOptions::default()).unwrap();
        assert_eq!(rep.allocation.objective_watts, brute.allocation.objective_watts);
    }

    #[test]
    fn previous_association_kept_on_ties() {
        let inst = uniform(3, 3, 1e6, vec![1.0]);
        let mut prev = std::collections::BTreeMap::new();
        for u in 0..3 {
            prev.insert(UeId(u), OruId(2));
        }
        let rep = solve_exact(&inst, &SolveOptions::default().with_previous(prev)).unwrap();
        assert_eq!(rep.allocation.active.iter().copied().collect::<Vec<_>>(), vec![OruId(2)]);
    }

    #[test]
    fn infeasible_demand() {
        let inst = uniform(1, 3, 1e12, vec![1.0]);
        assert_eq!(solve_exact(&inst, &SolveOptions::default()), Err(OptError::Infeasible));
    }

    #[test]
    fn tight_budget_falls_back_to_heuristic() {
        let inst = uniform(20, 6, 5e7, vec![0.5, 1.0]);
        let opts = SolveOptions { max_search_nodes: 2, ..Default::default() };
        let rep = solve_exact(&inst, &opts).unwrap();
        assert_eq!(rep.optimality, Optimality::Heuristic);
        assert!(check_feasible(&inst, &rep.allocation).is_empty());
    }
}
