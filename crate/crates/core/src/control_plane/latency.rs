//! Stage latency model.
//!
//! Each stage's duration is a function of a load count `n` (UEs, or moves
//! for the handover stages). The calibrated preset interpolates the measured
//! component means log-log between calibration points and extends the end
//! segments as power laws, so it reproduces every measured point exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{LatencyConfig, LatencyPreset};

use super::StageKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatencyError {
    #[error("invalid latency curve: {0}")]
    Invalid(String),
}

/// `t(n) = c * n^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub c: f64,
    pub k: f64,
}

impl PowerLaw {
    pub fn eval(&self, n: f64) -> f64 {
        if n <= 0.0 {
            0.0
        } else {
            self.c * n.powf(self.k)
        }
    }
}

/// Least-squares line through `(ln n, ln t)`.
pub fn fit_power_law_least_squares(points: &[(f64, f64)]) -> Result<PowerLaw, LatencyError> {
    if points.len() < 2 {
        return Err(LatencyError::Invalid("need at least two points".into()));
    }
    if points.iter().any(|&(n, t)| !(n > 0.0 && t > 0.0)) {
        return Err(LatencyError::Invalid("points must be positive".into()));
    }
    let m = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(LatencyError::Invalid("points share one n".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let k = sxy / sxx;
    Ok(PowerLaw { c: (my - k * mx).exp(), k })
}

/// Piecewise power law through calibration points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageCurve {
    /// `(n, seconds)`, strictly increasing in `n`.
    anchors: Vec<(f64, f64)>,
    /// Exponent used on both sides of a single anchor.
    exponent: f64,
}

impl StageCurve {
    pub fn zero() -> Self {
        StageCurve { anchors: Vec::new(), exponent: 0.0 }
    }

    pub fn power_law(law: PowerLaw) -> Result<Self, LatencyError> {
        if !(law.c >= 0.0 && law.k >= 0.0 && law.c.is_finite() && law.k.is_finite()) {
            return Err(LatencyError::Invalid(format!("c = {}, k = {} must be non-negative", law.c, law.k)));
        }
        Ok(StageCurve { anchors: vec![(1.0, law.c)], exponent: law.k })
    }

    /// One measured point and an exponent.
    pub fn anchored(n: f64, seconds: f64, exponent: f64) -> Result<Self, LatencyError> {
        if !(n > 0.0 && seconds >= 0.0 && exponent >= 0.0) {
            return Err(LatencyError::Invalid("anchor needs n > 0, t >= 0, k >= 0".into()));
        }
        Ok(StageCurve { anchors: vec![(n, seconds)], exponent })
    }

    /// Log-log interpolation through two or more points.
    pub fn through(points: &[(f64, f64)]) -> Result<Self, LatencyError> {
        if points.len() < 2 {
            return Err(LatencyError::Invalid("need at least two points".into()));
        }
        if points.iter().any(|&(n, t)| !(n > 0.0 && t > 0.0)) {
            return Err(LatencyError::Invalid("points must be positive".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(LatencyError::Invalid("points must be strictly increasing in n".into()));
        }
        Ok(StageCurve { anchors: points.to_vec(), exponent: 0.0 })
    }

    pub fn anchors(&self) -> &[(f64, f64)] {
        &self.anchors
    }

    /// Exponent of the segment that covers `n`.
    pub fn local_exponent(&self, n: f64) -> f64 {
        match self.anchors.len() {
            0 => 0.0,
            1 => self.exponent,
            len => {
                let i = self.anchors[1..len - 1].iter().take_while(|a| a.0 <= n).count();
                let (n0, t0) = self.anchors[i];
                let (n1, t1) = self.anchors[i + 1];
                (t1 / t0).ln() / (n1 / n0).ln()
            }
        }
    }

    pub fn eval(&self, n: f64) -> f64 {
        if n <= 0.0 || self.anchors.is_empty() {
            return 0.0;
        }
        if let Some(&(_, t)) = self.anchors.iter().find(|a| a.0 == n) {
            return t;
        }
        let len = self.anchors.len();
        let i = if len == 1 { 0 } else { self.anchors[1..len - 1].iter().take_while(|a| a.0 <= n).count() };
        let (n0, t0) = self.anchors[i];
        t0 * (n / n0).powf(self.local_exponent(n))
    }
}

/// Stage curves plus the per-move handover time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub stages: BTreeMap<StageKind, StageCurve>,
    /// Seconds per UE handover in the handover xApp.
    pub t_ho: f64,
    /// Fixed handover xApp overhead per epoch with at least one move.
    pub handover_overhead: f64,
    /// Multiply each modeled stage by `Normal(1, sd/mean)` noise.
    pub jitter: bool,
    /// One monitoring instance per E2 node; the stage takes the slowest.
    pub monitoring_sharded: bool,
}

/// Measured component means, seconds, at 16 / 256 / 1024 UEs.
pub mod calibration {
    pub const RF_ENV_CONNECTION: [(f64, f64); 2] = [(16.0, 0.0003), (1024.0, 0.035)];
    pub const E2N_CONNECTION: [(f64, f64); 2] = [(16.0, 0.0003), (1024.0, 0.035)];
    /// Only the 16-UE mean is reported for the loop measurement.
    pub const XAPP_MONITORING_16: f64 = 0.000155;
    /// Standalone scrape times used for the monitoring exponent.
    pub const XAPP_SCRAPE: [(f64, f64); 2] = [(4.0, 0.064), (256.0, 0.112)];
    pub const PROMETHEUS: [(f64, f64); 2] = [(16.0, 1.83), (1024.0, 215.246)];
    pub const VESPA: [(f64, f64); 3] = [(16.0, 4.332), (256.0, 168.0), (1024.0, 672.0)];
    pub const VES_COLLECTOR: [(f64, f64); 2] = [(16.0, 1.324148), (1024.0, 155.747)];
    pub const KAFKA: [(f64, f64); 2] = [(16.0, 0.722), (1024.0, 84.922)];
    pub const RAPP: [(f64, f64); 3] = [(16.0, 1.12632), (256.0, 73.0), (1024.0, 310.292)];
    /// Handover stages are driven by the number of moves.
    pub const E2N_HANDOVER: [(f64, f64); 2] = [(16.0, 0.018), (1024.0, 2.117)];
    pub const RF_ENV_HANDOVER: [(f64, f64); 2] = [(16.0, 0.05), (1024.0, 5.881)];
    pub const T_HO: f64 = 2.02e-3;
}

/// Standard deviation over mean at 16 UEs, per stage.
pub fn jitter_ratio(stage: StageKind) -> f64 {
    match stage {
        StageKind::RfEnvConnection | StageKind::E2nConnection => 0.00001 / 0.0003,
        StageKind::XAppMonitoring => 0.000167 / 0.000155,
        StageKind::MonitoringExport => 0.2 / 1.83,
        StageKind::VespaExport => 0.3 / 4.332,
        StageKind::VesCollector => 0.05 / 1.324148,
        StageKind::DataRiverDispatch => 0.1 / 0.722,
        StageKind::RAppSolve => 0.39 / 1.12632,
        StageKind::XAppHandover => 0.010 / 0.032,
        StageKind::E2nHandover => 0.002 / 0.018,
        StageKind::RfEnvHandover => 0.005 / 0.05,
        StageKind::PowerConfig | StageKind::A1PolicyDelivery | StageKind::E2nPowerReconfig => 0.0,
    }
}

impl LatencyModel {
    pub fn zero() -> Self {
        LatencyModel {
            stages: BTreeMap::new(),
            t_ho: 0.0,
            handover_overhead: 0.0,
            jitter: false,
            monitoring_sharded: false,
        }
    }

    pub fn calibrated() -> Self {
        use calibration::*;
        let curve = |p: &[(f64, f64)]| StageCurve::through(p).expect("calibration points are valid");
        let (n0, t0) = XAPP_SCRAPE[0];
        let (n1, t1) = XAPP_SCRAPE[1];
        let monitoring_k = (t1 / t0).ln() / (n1 / n0).ln();
        let stages = BTreeMap::from([
            (StageKind::RfEnvConnection, curve(&RF_ENV_CONNECTION)),
            (StageKind::E2nConnection, curve(&E2N_CONNECTION)),
            (
                StageKind::XAppMonitoring,
                StageCurve::anchored(16.0, XAPP_MONITORING_16, monitoring_k).expect("valid anchor"),
            ),
            (StageKind::MonitoringExport, curve(&PROMETHEUS)),
            (StageKind::VespaExport, curve(&VESPA)),
            (StageKind::VesCollector, curve(&VES_COLLECTOR)),
            (StageKind::DataRiverDispatch, curve(&KAFKA)),
            (StageKind::RAppSolve, curve(&RAPP)),
            (StageKind::E2nHandover, curve(&E2N_HANDOVER)),
            (StageKind::RfEnvHandover, curve(&RF_ENV_HANDOVER)),
        ]);
        LatencyModel { stages, t_ho: T_HO, handover_overhead: 0.0, jitter: false, monitoring_sharded: false }
    }

    pub fn from_config(cfg: &LatencyConfig) -> Self {
        let mut model = match cfg.preset {
            LatencyPreset::Calibrated => LatencyModel::calibrated(),
            LatencyPreset::Zero => LatencyModel::zero(),
        };
        model.t_ho = cfg.t_ho_s;
        model.handover_overhead = cfg.handover_overhead_s;
        model.jitter = cfg.jitter;
        model.monitoring_sharded = cfg.monitoring_sharded;
        model
    }
}

/// Modeled duration of a stage at load `n`; zero for stages without a curve.
/// The handover xApp stage is `n * t_ho` plus the fixed overhead.
pub fn stage_time(stage: StageKind, n: usize, model: &LatencyModel) -> f64 {
    if stage == StageKind::XAppHandover {
        return if n == 0 { 0.0 } else { n as f64 * model.t_ho + model.handover_overhead };
    }
    model.stages.get(&stage).map_or(0.0, |c| c.eval(n as f64))
}
