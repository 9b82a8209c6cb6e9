//! Exact packing of UEs onto a fixed set of active O-RUs.

use super::fits;

pub(crate) enum Packing {
    /// Slot index per UE.
    Feasible(Vec<usize>),
    Infeasible,
    /// Budget ran out before the search could decide.
    Unknown,
}

/// One packing problem: `need[u][s]` hertz of slot `s` for UE `u`, slot `s`
/// holds `caps[s]` hertz. `prev[u]` is the slot the UE used last epoch.
pub(crate) struct PackProblem<'a> {
    pub caps: &'a [f64],
    pub need: &'a [Vec<f64>],
    pub prev: &'a [Option<usize>],
}

struct Search<'a> {
    p: &'a PackProblem<'a>,
    options: Vec<Vec<usize>>,
    order: Vec<usize>,
    /// Sum of per-UE minimum normalized load over `order[k..]`.
    suffix: Vec<f64>,
    class: Vec<usize>,
    used: Vec<f64>,
    free_norm: f64,
    assign: Vec<usize>,
    nodes: u64,
    budget: u64,
}

pub(crate) fn pack(p: &PackProblem<'_>, budget: u64) -> Packing {
    let n_ues = p.need.len();
    let n_slots = p.caps.len();
    if n_ues == 0 {
        return Packing::Feasible(Vec::new());
    }
    if n_slots == 0 {
        return Packing::Infeasible;
    }

    let mut options = Vec::with_capacity(n_ues);
    let mut min_load = Vec::with_capacity(n_ues);
    for u in 0..n_ues {
        let opts: Vec<usize> = (0..n_slots).filter(|&s| fits(p.need[u][s], p.caps[s])).collect();
        if opts.is_empty() {
            return Packing::Infeasible;
        }
        let m = opts.iter().map(|&s| p.need[u][s] / p.caps[s]).fold(f64::INFINITY, f64::min);
        options.push(opts);
        min_load.push(m);
    }
    let total: f64 = min_load.iter().sum();
    if total > n_slots as f64 * (1.0 + 1e-9) {
        return Packing::Infeasible;
    }

    let mut order: Vec<usize> = (0..n_ues).collect();
    order.sort_by(|&a, &b| {
        options[a]
            .len()
            .cmp(&options[b].len())
            .then(min_load[b].total_cmp(&min_load[a]))
            .then(a.cmp(&b))
    });
    let mut suffix = vec![0.0; n_ues + 1];
    for k in (0..n_ues).rev() {
        suffix[k] = suffix[k + 1] + min_load[order[k]];
    }

    // Slots that are interchangeable for every UE share a class.
    let mut class: Vec<usize> = (0..n_slots).collect();
    for s in 0..n_slots {
        for t in 0..s {
            if class[t] == t
                && p.caps[t].to_bits() == p.caps[s].to_bits()
                && (0..n_ues).all(|u| p.need[u][t].to_bits() == p.need[u][s].to_bits())
            {
                class[s] = t;
                break;
            }
        }
    }

    let mut search = Search {
        p,
        options,
        order,
        suffix,
        class,
        used: vec![0.0; n_slots],
        free_norm: n_slots as f64,
        assign: vec![usize::MAX; n_ues],
        nodes: 0,
        budget,
    };
    match search.dfs(0) {
        Some(true) => Packing::Feasible(search.assign),
        Some(false) => Packing::Infeasible,
        None => Packing::Unknown,
    }
}

impl Search<'_> {
    fn dfs(&mut self, k: usize) -> Option<bool> {
        if k == self.order.len() {
            return Some(true);
        }
        self.nodes += 1;
        if self.nodes > self.budget {
            return None;
        }
        if self.suffix[k] > self.free_norm * (1.0 + 1e-9) + 1e-12 {
            return Some(false);
        }
        let u = self.order[k];
        let p = self.p;
        let mut cands: Vec<(usize, f64, f64)> = self.options[u]
            .iter()
            .filter(|&&s| fits(self.used[s] + p.need[u][s], p.caps[s]))
            .map(|&s| (s, p.need[u][s] / p.caps[s], p.caps[s] - self.used[s] - p.need[u][s]))
            .collect();
        let prev = p.prev.get(u).copied().flatten();
        cands.sort_by(|a, b| {
            let pa = Some(a.0) != prev;
            let pb = Some(b.0) != prev;
            pa.cmp(&pb)
                .then(a.1.total_cmp(&b.1))
                .then(a.2.total_cmp(&b.2))
                .then(a.0.cmp(&b.0))
        });
        let mut tried: Vec<(usize, u64)> = Vec::new();
        for (s, _, _) in cands {
            let sig = (self.class[s], self.used[s].to_bits());
            if tried.contains(&sig) {
                continue;
            }
            tried.push(sig);
            let before = self.used[s];
            self.used[s] += p.need[u][s];
            self.free_norm -= p.need[u][s] / p.caps[s];
            self.assign[u] = s;
            match self.dfs(k + 1) {
                Some(true) => return Some(true),
                None => return None,
                Some(false) => {}
            }
            self.free_norm += p.need[u][s] / p.caps[s];
            self.used[s] = before;
        }
        Some(false)
    }
}
