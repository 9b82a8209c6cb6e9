use std::fs;

use oran_es::config::{DemandProfile, ScenarioConfig, SolverKind};
use oran_es::control_plane::{
    e2e_delay, handover_delay, run_epoch, run_schedule, validate_events, EpochInput, EpochOutcome, HandoverPlan,
    LatencyModel, Move, RanState, SimOptions, StageKind,
};
use oran_es::metrics::{emit_report, savings_vs_allon, RunSummary};
use oran_es::optimizer::{all_on_baseline_watts, OruId, ProblemInstance, UeId};
use oran_es::rf_env::generate_stadium;
use proptest::prelude::*;

fn config(orus: usize, ues: usize, hi_bps: f64, jitter: bool, greedy: bool, seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.counts.orus = orus;
    cfg.counts.ues = ues;
    cfg.demand = DemandProfile::Uniform { min_bps: 1e6, max_bps: hi_bps };
    cfg.latency.jitter = jitter;
    cfg.solver.kind = if greedy { SolverKind::Greedy } else { SolverKind::Exact };
    cfg.run.seed = seed;
    cfg
}

fn summary(cfg: &ScenarioConfig, schedule: &[usize], seed: u64) -> RunSummary {
    let scenario = generate_stadium(cfg, seed).unwrap();
    let (traces, _) = run_schedule(&scenario, schedule, schedule.len() + 1, &SimOptions::from_config(cfg)).unwrap();
    let baseline = all_on_baseline_watts(&ProblemInstance::from_scenario(&scenario, 0, &[]).unwrap());
    RunSummary::from_traces(&cfg.solver.kind.to_string(), seed, baseline, traces).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn run_invariants(
        orus in 2usize..6,
        ues in 2usize..14,
        hi in 2e6f64..6e7,
        jitter in any::<bool>(),
        greedy in any::<bool>(),
        seed in any::<u64>(),
        raw in prop::collection::vec(1usize..100, 1..5),
    ) {
        let cfg = config(orus, ues, hi, jitter, greedy, seed);
        let schedule: Vec<usize> = raw.iter().map(|r| 1 + r % ues).collect();
        let s = summary(&cfg, &schedule, seed);
        prop_assert_eq!(s.epochs(), schedule.len() + 1);
        prop_assert_eq!(s.handovers.len(), s.epochs());
        prop_assert_eq!(s.e2e.len(), s.epochs());
        for (i, e) in s.energy.epochs.iter().enumerate() {
            prop_assert!(e.total_watts <= s.energy.baseline_allon_watts * (1.0 + 1e-12));
            let x = savings_vs_allon(&s.energy, i).unwrap();
            prop_assert!((0.0..=1.0).contains(&x));
            prop_assert_eq!(e.per_ue_watts, e.total_watts / e.n_ues.max(1) as f64);
        }
        for t in &s.traces {
            let (total, parts) = e2e_delay(t).unwrap();
            prop_assert!((parts.values().sum::<f64>() - total).abs() <= 1e-9);
            // Stages appear in pipeline order.
            prop_assert!(t.records.windows(2).all(|w| w[0].stage <= w[1].stage));
            if let EpochOutcome::Applied = t.outcome {
                prop_assert_eq!(t.records.last().unwrap().stage, StageKind::E2nPowerReconfig);
                if !jitter && t.handover_count > 0 {
                    prop_assert!((t.handover_per_ue_s - 2.02e-3).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn epoch_replay_is_safe(orus in 2usize..6, ues in 2usize..16, hi in 2e6f64..6e7, seed in any::<u64>()) {
        let cfg = config(orus, ues, hi, true, false, seed);
        let scenario = generate_stadium(&cfg, seed).unwrap();
        let demands: Vec<f64> = scenario.ues.iter().map(|u| u.demand_lambda).collect();
        let opts = SimOptions::from_config(&cfg);
        let mut state = RanState::all_on(&ProblemInstance::from_scenario(&scenario, 0, &[]).unwrap());
        for (epoch, n) in [ues, 1, ues / 2 + 1, ues].into_iter().enumerate() {
            let instance = ProblemInstance::from_scenario(&scenario, n, &demands[..n]).unwrap();
            let (next, trace) = run_epoch(&state, &EpochInput { epoch, instance }, &opts).unwrap();
            validate_events(&state, &trace).unwrap();
            if let EpochOutcome::Failed { .. } = trace.outcome {
                prop_assert_eq!(&next.nodes, &state.nodes);
            }
            prop_assert!(next.clock >= state.clock);
            state = next;
        }
    }

    #[test]
    fn per_ue_handover_time_is_flat(n in 1usize..2048, t_ho in 1e-4f64..1e-2) {
        let mut model = LatencyModel::calibrated();
        model.t_ho = t_ho;
        let plan = HandoverPlan {
            moves: (0..n).map(|i| Move { ue: UeId(i as u32), source: OruId(0), target: OruId(1) }).collect(),
            ..Default::default()
        };
        let (total, per) = handover_delay(&plan, &model);
        prop_assert!((per - t_ho).abs() <= 1e-12 * t_ho);
        prop_assert!((total - n as f64 * t_ho).abs() <= 1e-12 * total);
    }
}

#[test]
fn reports_are_byte_stable_and_round_trip() {
    let cfg = config(4, 12, 3e7, true, false, 77);
    let a = summary(&cfg, &[12, 4, 8], 77);
    let b = summary(&cfg, &[12, 4, 8], 77);
    let da = tempfile::tempdir().unwrap();
    let db = tempfile::tempdir().unwrap();
    emit_report(&a, da.path()).unwrap();
    emit_report(&b, db.path()).unwrap();
    for f in ["epochs.csv", "summary.json", "fig_energy.csv", "fig_handover.csv", "fig_stage_delays.csv", "trace.jsonl"] {
        assert_eq!(fs::read(da.path().join(f)).unwrap(), fs::read(db.path().join(f)).unwrap(), "{f}");
    }

    let text = fs::read_to_string(da.path().join("fig_energy.csv")).unwrap();
    assert!(!text.contains('\r'));
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    for (row, e) in rdr.records().zip(&a.energy.epochs) {
        let row = row.unwrap();
        let total: f64 = row[3].parse().unwrap();
        let per: f64 = row[4].parse().unwrap();
        assert!((total - e.total_watts).abs() <= 1e-9);
        assert!((per - e.per_ue_watts).abs() <= 1e-9);
    }
    let mut rdr = csv::Reader::from_path(da.path().join("fig_stage_delays.csv")).unwrap();
    for (row, d) in rdr.records().zip(&a.e2e) {
        let row = row.unwrap();
        for (k, stage) in StageKind::ALL.iter().enumerate() {
            let v: f64 = row[2 + k].parse().unwrap();
            assert!((v - d.stages[stage]).abs() <= 1e-9);
        }
    }
    let lines = fs::read_to_string(da.path().join("trace.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), a.epochs());
    for line in lines.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["records"].as_array().is_some_and(|r| !r.is_empty()));
    }
}
