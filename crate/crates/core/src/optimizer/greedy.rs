use std::time::Instant;

use super::assign::{pack, PackProblem, Packing};
use super::tables::NeedTable;
use super::{fits, Allocation, OptError, Optimality, ProblemInstance, SolveOptions, SolveReport};

/// First-fit heuristic by descending demand.
///
/// Each UE goes to the active O-RU with the best SNR that still has room
/// (loads are priced at maximum power). When none has room, the closed O-RU
/// with the best SNR that can carry the UE is switched on. Afterwards every
/// active O-RU drops to its lowest power level that still covers its UEs.
///
/// If the first-fit pass strands a UE, the UEs are packed exactly onto all
/// O-RUs at maximum power instead, so the heuristic finds an allocation
/// whenever one exists.
pub fn solve_greedy(instance: &ProblemInstance, options: &SolveOptions) -> Result<SolveReport, OptError> {
    instance.validate()?;
    let start = Instant::now();
    let table = NeedTable::build(instance, options);
    let n_orus = instance.orus.len();
    let n_ues = instance.ues.len();
    let top: Vec<usize> = (0..n_orus).map(|r| table.top_level(r)).collect();
    let need_top = |r: usize, u: usize| table.need[r][top[r]][u];
    let strength = |u: usize, r: usize| instance.gain[u][r] * instance.orus[r].max_power;

    let mut order: Vec<usize> = (0..n_ues).collect();
    order.sort_by(|&a, &b| instance.ues[b].demand.total_cmp(&instance.ues[a].demand).then(a.cmp(&b)));

    let mut active = vec![false; n_orus];
    let mut used = vec![0.0; n_orus];
    let mut assign = vec![usize::MAX; n_ues];
    let mut stranded = false;
    for &u in &order {
        let pick = |open: bool, used: &[f64], active: &[bool]| {
            (0..n_orus)
                .filter(|&r| active[r] == open && fits(used[r] + need_top(r, u), instance.orus[r].max_bandwidth))
                .max_by(|&a, &b| strength(u, a).total_cmp(&strength(u, b)).then(b.cmp(&a)))
        };
        let r = match pick(true, &used, &active) {
            Some(r) => r,
            None => match pick(false, &used, &active) {
                Some(r) => {
                    active[r] = true;
                    r
                }
                None => {
                    stranded = true;
                    break;
                }
            },
        };
        used[r] += need_top(r, u);
        assign[u] = r;
    }
    let mut nodes = n_ues as u64;

    if stranded {
        let caps: Vec<f64> = instance.orus.iter().map(|o| o.max_bandwidth).collect();
        let need: Vec<Vec<f64>> = (0..n_ues).map(|u| (0..n_orus).map(|r| need_top(r, u)).collect()).collect();
        let prev: Vec<Option<usize>> = instance
            .ues
            .iter()
            .map(|ue| options.previous.as_ref().and_then(|p| p.get(&ue.id)).and_then(|&r| instance.oru_index(r)))
            .collect();
        assign = match pack(&PackProblem { caps: &caps, need: &need, prev: &prev }, options.max_assign_nodes) {
            Packing::Feasible(a) => a,
            Packing::Infeasible => return Err(OptError::Infeasible),
            Packing::Unknown => return Err(OptError::BudgetExhausted),
        };
        nodes += options.max_assign_nodes.min(n_ues as u64);
    }

    let mut levels: Vec<Option<usize>> = vec![None; n_orus];
    for (r, level) in levels.iter_mut().enumerate() {
        let users: Vec<usize> = (0..n_ues).filter(|&u| assign[u] == r).collect();
        if users.is_empty() {
            continue;
        }
        let rho = instance.orus[r].max_bandwidth;
        *level = (0..=top[r]).find(|&l| fits(users.iter().map(|&u| table.need[r][l][u]).sum(), rho));
        debug_assert!(level.is_some());
    }

    Ok(SolveReport {
        allocation: Allocation::from_decisions(instance, &levels, &assign),
        nodes_explored: nodes,
        wall_time: start.elapsed().as_secs_f64(),
        optimality: Optimality::Heuristic,
    })
}
