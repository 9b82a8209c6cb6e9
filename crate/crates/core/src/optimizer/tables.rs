use rayon::prelude::*;

use super::{min_bandwidth, ProblemInstance, SolveOptions};

/// Bandwidth each UE needs on each O-RU at each power level.
pub(crate) struct NeedTable {
    /// `need[r][l][u]` in hertz; infinite when the link cannot carry the
    /// demand at all.
    pub need: Vec<Vec<Vec<f64>>>,
    /// `cost[r][l]`: power draw of O-RU `r` when active at level `l`.
    pub cost: Vec<Vec<f64>>,
}

impl NeedTable {
    pub fn build(instance: &ProblemInstance, options: &SolveOptions) -> Self {
        let row = |r: usize| -> Vec<Vec<f64>> {
            instance.orus[r]
                .power_levels
                .iter()
                .map(|&w| {
                    instance
                        .ues
                        .iter()
                        .enumerate()
                        .map(|(u, ue)| min_bandwidth(ue.demand, instance.snr(u, r, w)).unwrap_or(f64::INFINITY))
                        .collect()
                })
                .collect()
        };
        let need = if options.threads > 1 {
            options.pool().install(|| (0..instance.orus.len()).into_par_iter().map(row).collect())
        } else {
            (0..instance.orus.len()).map(row).collect()
        };
        let cost = instance
            .orus
            .iter()
            .map(|o| o.power_levels.iter().map(|&w| o.power_draw(w)).collect())
            .collect();
        NeedTable { need, cost }
    }

    pub fn top_level(&self, r: usize) -> usize {
        self.cost[r].len() - 1
    }
}

/// Running sum of the power draw of the active O-RUs, in index order.
/// Every solver prices a configuration through this function so that equal
/// configurations compare bit-for-bit.
pub(crate) fn config_cost(table: &NeedTable, levels: &[Option<usize>]) -> f64 {
    let mut total = 0.0;
    for (r, l) in levels.iter().enumerate() {
        if let Some(l) = l {
            total += table.cost[r][*l];
        }
    }
    total
}
