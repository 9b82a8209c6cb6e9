//! Stadium geometry and downlink channel model.
//!
//! Path loss follows a log-distance law anchored at the free-space loss of
//! a reference distance `d0`:
//!
//! ```text
//! PL(d) = FSPL(d0, f) + 10 * n * gamma_env * log10(d / d0) + X_sigma
//! ```
//!
//! where `X_sigma` is a log-normal shadowing sample frozen per (UE, O-RU)
//! pair for the lifetime of a scenario. The noise floor is a constant; no
//! interference is modelled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{DemandProfile, RadioConfig, ScenarioConfig};
use crate::optimizer::{OruId, UeId};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RfError {
    #[error("invalid channel model: {0}")]
    InvalidModel(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    linear_to_db(w) + 30.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3D {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Position3D { x, y, z }
    }

    pub fn distance(&self, other: &Position3D) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OruSite {
    pub id: OruId,
    pub position: Position3D,
    pub antenna_gain_gt: f64,
    pub max_power_gamma: f64,
    pub max_bandwidth_rho: f64,
    pub static_power_theta: f64,
    pub amp_efficiency_eta: f64,
    pub carrier_freq_ft: f64,
    /// Informational only; no part of the model depends on it.
    pub numerology_nt: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeTerminal {
    pub id: UeId,
    pub position: Position3D,
    pub rx_gain_gr: f64,
    pub demand_lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub path_loss_exponent: f64,
    pub reference_distance: f64,
    pub env_loss_factor_gamma: f64,
    pub shadowing_sigma: f64,
    pub noise_floor_sigma2: f64,
}

impl ChannelModel {
    pub fn from_radio(radio: &RadioConfig) -> Self {
        ChannelModel {
            path_loss_exponent: radio.path_loss_exponent,
            reference_distance: radio.reference_distance_m,
            env_loss_factor_gamma: radio.env_loss_factor,
            shadowing_sigma: radio.shadowing_sigma_db,
            noise_floor_sigma2: radio.noise_floor_w(),
        }
    }

    pub fn validate(&self) -> Result<(), RfError> {
        if !(self.noise_floor_sigma2 > 0.0) {
            return Err(RfError::InvalidModel("noise floor must be positive".into()));
        }
        if !(self.reference_distance > 0.0) {
            return Err(RfError::InvalidModel("reference distance must be positive".into()));
        }
        if !(self.shadowing_sigma >= 0.0) {
            return Err(RfError::InvalidModel("shadowing sigma must be non-negative".into()));
        }
        Ok(())
    }
}

/// Per-link quality snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub gain_beta: f64,
    pub rsrp: f64,
    pub snr: f64,
}

/// Free-space path loss in dB.
pub fn free_space_path_loss_db(distance: f64, freq: f64) -> f64 {
    20.0 * (4.0 * std::f64::consts::PI * distance * freq / SPEED_OF_LIGHT).log10()
}

/// Log-distance path loss in dB. Distances below the reference distance are
/// clamped to it.
pub fn path_loss_db(distance: f64, freq: f64, model: &ChannelModel, shadow_sample: f64) -> f64 {
    let d0 = model.reference_distance;
    let d = distance.max(d0);
    free_space_path_loss_db(d0, freq)
        + 10.0 * model.path_loss_exponent * model.env_loss_factor_gamma * (d / d0).log10()
        + shadow_sample
}

/// Linear channel gain including both antenna gains.
pub fn channel_gain(ue: &UeTerminal, oru: &OruSite, model: &ChannelModel, shadow_sample: f64) -> f64 {
    let d = ue.position.distance(&oru.position);
    let pl = path_loss_db(d, oru.carrier_freq_ft, model, shadow_sample);
    db_to_linear(oru.antenna_gain_gt + ue.rx_gain_gr - pl)
}

pub fn snr(gain_beta: f64, tx_power_w: f64, noise_sigma2: f64) -> Result<f64, RfError> {
    if !(noise_sigma2 > 0.0) {
        return Err(RfError::InvalidModel(format!("noise floor must be positive, got {noise_sigma2}")));
    }
    Ok(gain_beta * tx_power_w / noise_sigma2)
}

pub fn link_state(
    ue: &UeTerminal,
    oru: &OruSite,
    model: &ChannelModel,
    shadow_sample: f64,
    tx_power_w: f64,
) -> Result<LinkState, RfError> {
    let gain_beta = channel_gain(ue, oru, model, shadow_sample);
    let snr_lin = snr(gain_beta, tx_power_w, model.noise_floor_sigma2)?;
    Ok(LinkState {
        gain_beta,
        rsrp: watts_to_dbm(tx_power_w) + linear_to_db(gain_beta),
        snr: linear_to_db(snr_lin),
    })
}

/// A generated deployment: sites, terminals, and frozen shadowing.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub seed: u64,
    pub orus: Vec<OruSite>,
    pub ues: Vec<UeTerminal>,
    /// `shadow_db[u][r]` for UE index `u` and O-RU index `r`.
    pub shadow_db: Vec<Vec<f64>>,
}

impl Scenario {
    pub fn channel_model(&self) -> ChannelModel {
        ChannelModel::from_radio(&self.config.radio)
    }

    /// Linear gains for the first `n_ues` terminals, UE-major.
    pub fn gain_matrix(&self, n_ues: usize) -> Vec<Vec<f64>> {
        let model = self.channel_model();
        let uniform = self.config.radio.uniform_gain_db.map(db_to_linear);
        self.ues[..n_ues]
            .iter()
            .enumerate()
            .map(|(u, ue)| {
                self.orus
                    .iter()
                    .enumerate()
                    .map(|(r, oru)| uniform.unwrap_or_else(|| channel_gain(ue, oru, &model, self.shadow_db[u][r])))
                    .collect()
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), RfError> {
        if self.orus.is_empty() || self.ues.is_empty() {
            return Err(RfError::InvalidScenario("scenario needs at least one O-RU and one UE".into()));
        }
        if self.shadow_db.len() != self.ues.len() || self.shadow_db.iter().any(|row| row.len() != self.orus.len()) {
            return Err(RfError::InvalidScenario("shadow matrix shape does not match UE x O-RU".into()));
        }
        for oru in &self.orus {
            if !(oru.max_power_gamma > 0.0
                && oru.max_bandwidth_rho > 0.0
                && oru.amp_efficiency_eta > 0.0
                && oru.amp_efficiency_eta <= 1.0
                && oru.static_power_theta >= 0.0
                && oru.position.is_finite()
                && oru.position.z >= 0.0)
            {
                return Err(RfError::InvalidScenario(format!("O-RU {} has out-of-range parameters", oru.id)));
            }
        }
        for ue in &self.ues {
            if !(ue.demand_lambda >= 0.0 && ue.position.is_finite() && ue.position.z >= 0.0) {
                return Err(RfError::InvalidScenario(format!("UE {} has out-of-range parameters", ue.id)));
            }
        }
        let mut ids: Vec<_> = self.orus.iter().map(|o| o.id).collect();
        ids.sort();
        ids.dedup();
        if ids.len() != self.orus.len() {
            return Err(RfError::InvalidScenario("duplicate O-RU ids".into()));
        }
        let mut ids: Vec<_> = self.ues.iter().map(|u| u.id).collect();
        ids.sort();
        ids.dedup();
        if ids.len() != self.ues.len() {
            return Err(RfError::InvalidScenario("duplicate UE ids".into()));
        }
        Ok(())
    }
}

/// Point on the field perimeter at arc length `s`, with its outward normal.
fn perimeter_point(s: f64, length: f64, width: f64) -> ((f64, f64), (f64, f64)) {
    if s < length {
        ((s, 0.0), (0.0, -1.0))
    } else if s < length + width {
        ((length, s - length), (1.0, 0.0))
    } else if s < 2.0 * length + width {
        ((2.0 * length + width - s, width), (0.0, 1.0))
    } else {
        ((0.0, 2.0 * (length + width) - s), (-1.0, 0.0))
    }
}

/// Place O-RUs along both sidelines and UEs in the surrounding grandstand.
///
/// O-RUs alternate between the two long sides (`y = 0` and `y = width`) and
/// are equally spaced along each. UEs land uniformly on the perimeter at a
/// uniform depth in `[stand_inner_m, stand_outer_m]`; their height follows
/// the stand slope plus a fixed step past the middle of the band. The same
/// seed always yields the same scenario.
pub fn generate_stadium(config: &ScenarioConfig, seed: u64) -> Result<Scenario, RfError> {
    if config.counts.orus == 0 || config.counts.ues == 0 {
        return Err(RfError::InvalidScenario(format!(
            "need at least one O-RU and one UE (counts.orus = {}, counts.ues = {})",
            config.counts.orus, config.counts.ues
        )));
    }
    config.validate().map_err(|e| RfError::InvalidScenario(e.to_string()))?;

    let g = &config.geometry;
    let radio = &config.radio;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n_orus = config.counts.orus;
    let first_side = n_orus.div_ceil(2);
    let orus = (0..n_orus)
        .map(|i| {
            let (slot, count, y) = if i < first_side {
                (i, first_side, 0.0)
            } else {
                (i - first_side, n_orus - first_side, g.field_width_m)
            };
            let x = (slot as f64 + 0.5) * g.field_length_m / count as f64;
            OruSite {
                id: OruId(i as u32),
                position: Position3D::new(x, y, g.antenna_height_m),
                antenna_gain_gt: radio.antenna_gain_db,
                max_power_gamma: radio.max_power_w,
                max_bandwidth_rho: radio.bandwidth_hz,
                static_power_theta: radio.static_power_w,
                amp_efficiency_eta: radio.amp_efficiency,
                carrier_freq_ft: radio.carrier_freq_hz + (i as u32 % radio.channels) as f64 * radio.channel_spacing_hz,
                numerology_nt: radio.numerology,
            }
        })
        .collect::<Vec<_>>();

    let perimeter = 2.0 * (g.field_length_m + g.field_width_m);
    let band = g.stand_outer_m - g.stand_inner_m;
    let tan_slope = g.slope_deg.to_radians().tan();
    let ues = (0..config.counts.ues)
        .map(|i| {
            let s = rng.random_range(0.0..perimeter);
            let depth = rng.random_range(g.stand_inner_m..=g.stand_outer_m);
            let demand = match config.demand {
                DemandProfile::Constant { bps } => bps,
                DemandProfile::Uniform { min_bps, max_bps } if max_bps > min_bps => rng.random_range(min_bps..max_bps),
                DemandProfile::Uniform { min_bps, .. } => min_bps,
            };
            let ((bx, by), (nx, ny)) = perimeter_point(s, g.field_length_m, g.field_width_m);
            let into_stand = depth - g.stand_inner_m;
            let step = if into_stand > band / 2.0 { g.step_height_m } else { 0.0 };
            UeTerminal {
                id: UeId(i as u32),
                position: Position3D::new(bx + nx * depth, by + ny * depth, into_stand * tan_slope + step),
                rx_gain_gr: radio.ue_gain_db,
                demand_lambda: demand,
            }
        })
        .collect::<Vec<_>>();

    let normal = Normal::new(0.0, radio.shadowing_sigma_db)
        .map_err(|e| RfError::InvalidModel(format!("shadowing distribution: {e}")))?;
    let shadow_db = (0..ues.len())
        .map(|_| (0..orus.len()).map(|_| normal.sample(&mut rng)).collect())
        .collect();

    Ok(Scenario { config: config.clone(), seed, orus, ues, shadow_db })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn model(n: f64, sigma: f64) -> ChannelModel {
        ChannelModel {
            path_loss_exponent: n,
            reference_distance: 1.0,
            env_loss_factor_gamma: 1.0,
            shadowing_sigma: sigma,
            noise_floor_sigma2: 1e-12,
        }
    }

    #[test]
    fn path_loss_at_reference_distance_is_fspl() {
        let m = model(3.0, 0.0);
        for f in [1e9, 3.5e9, 7.125e9] {
            assert_eq!(path_loss_db(1.0, f, &m, 0.0), free_space_path_loss_db(1.0, f));
        }
    }

    #[test]
    fn decade_adds_twenty_db_at_exponent_two() {
        let m = model(2.0, 0.0);
        let f = 7.125e9;
        let delta = path_loss_db(10.0, f, &m, 0.0) - free_space_path_loss_db(1.0, f);
        assert!((delta - 20.0).abs() < 1e-12);
    }

    #[test]
    fn path_loss_thirty_metres_hand_value() {
        // 20log10(4*pi/c) + 20log10(f) + 20log10(d0), then 20log10(30).
        let f: f64 = 7.125e9;
        let fspl = 20.0 * (4.0 * std::f64::consts::PI / SPEED_OF_LIGHT).log10() + 20.0 * f.log10();
        let expected = fspl + 20.0 * 30f64.log10();
        assert!((fspl - 49.503_48).abs() < 1e-4, "fspl = {fspl}");
        assert!((20.0 * 30f64.log10() - 29.54).abs() < 0.01);
        let got = path_loss_db(30.0, f, &model(2.0, 0.0), 0.0);
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    }

    #[test]
    fn below_reference_distance_is_clamped() {
        let m = model(2.0, 0.0);
        assert_eq!(path_loss_db(0.2, 7e9, &m, 0.0), path_loss_db(1.0, 7e9, &m, 0.0));
    }

    fn site_at(pos: Position3D, gt: f64) -> OruSite {
        OruSite {
            id: OruId(0),
            position: pos,
            antenna_gain_gt: gt,
            max_power_gamma: 1.0,
            max_bandwidth_rho: 100e6,
            static_power_theta: 11.4757,
            amp_efficiency_eta: 0.25,
            carrier_freq_ft: 7.125e9,
            numerology_nt: 4,
        }
    }

    fn ue_at(pos: Position3D, gr: f64) -> UeTerminal {
        UeTerminal { id: UeId(0), position: pos, rx_gain_gr: gr, demand_lambda: 1e6 }
    }

    #[test]
    fn unity_gain_when_budget_is_zero_db() {
        let m = model(2.0, 0.0);
        let oru = site_at(Position3D::new(0.0, 0.0, 0.0), 0.0);
        let ue = ue_at(Position3D::new(1.0, 0.0, 0.0), 0.0);
        let pl = path_loss_db(1.0, oru.carrier_freq_ft, &m, 0.0);
        // Shadow sample cancels the free-space loss exactly.
        let beta = channel_gain(&ue, &oru, &m, -pl);
        assert!((beta - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gain_from_db_budget() {
        assert!((db_to_linear(8.0 + 2.0 - 110.0) - 1e-10).abs() < 1e-22);
    }

    #[test]
    fn gain_at_thirty_metres_composes_path_loss() {
        let m = model(2.0, 0.0);
        let oru = site_at(Position3D::new(0.0, 0.0, 10.0), 8.0);
        let ue = ue_at(Position3D::new(30.0, 0.0, 10.0), 2.0);
        let f = oru.carrier_freq_ft;
        let pl = 20.0 * (4.0 * std::f64::consts::PI / SPEED_OF_LIGHT).log10() + 20.0 * f.log10() + 20.0 * 30f64.log10();
        let expected = 10f64.powf((10.0 - pl) / 10.0);
        let beta = channel_gain(&ue, &oru, &m, 0.0);
        assert!(((beta - expected) / expected).abs() < 1e-12);
    }

    #[test]
    fn snr_examples() {
        assert_eq!(snr(0.5, 0.0, 1e-12).unwrap(), 0.0);
        let v = snr(1e-10, 1.0, 1e-12).unwrap();
        assert!((v - 100.0).abs() < 1e-9);
        let a = snr(3e-9, 0.7, 2e-12).unwrap();
        let b = snr(3e-9, 1.4, 2e-12).unwrap();
        assert_eq!(b, 2.0 * a);
        assert!(matches!(snr(1.0, 1.0, 0.0), Err(RfError::InvalidModel(_))));
        assert!(matches!(snr(1.0, 1.0, -1.0), Err(RfError::InvalidModel(_))));
    }

    #[test]
    fn rsrp_recomputable() {
        let m = model(2.0, 7.9);
        let oru = site_at(Position3D::new(10.0, 0.0, 10.0), 8.0);
        let ue = ue_at(Position3D::new(40.0, -20.0, 5.0), 2.0);
        let ls = link_state(&ue, &oru, &m, 3.3, 0.5).unwrap();
        let pl = path_loss_db(ue.position.distance(&oru.position), oru.carrier_freq_ft, &m, 3.3);
        let recomputed = watts_to_dbm(0.5) + oru.antenna_gain_gt + ue.rx_gain_gr - pl;
        assert!((ls.rsrp - recomputed).abs() < 1e-9);
        let snr_back = linear_to_db(ls.gain_beta * 0.5 / m.noise_floor_sigma2);
        assert!((ls.snr - snr_back).abs() < 1e-9);
    }

    #[test]
    fn stadium_is_deterministic() {
        let cfg = ScenarioConfig::default();
        let a = generate_stadium(&cfg, 42).unwrap();
        let b = generate_stadium(&cfg, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_stadium(&cfg, 43).unwrap();
        assert_ne!(a.ues, c.ues);
    }

    #[test]
    fn minimal_stadium() {
        let mut cfg = ScenarioConfig::default();
        cfg.counts.orus = 1;
        cfg.counts.ues = 1;
        let s = generate_stadium(&cfg, 7).unwrap();
        assert_eq!(s.shadow_db.len(), 1);
        assert_eq!(s.shadow_db[0].len(), 1);
        assert_eq!(s.orus[0].position.z, 10.0);
        s.validate().unwrap();
    }

    #[test]
    fn zero_counts_rejected() {
        let mut cfg = ScenarioConfig::default();
        cfg.counts.ues = 0;
        assert!(matches!(generate_stadium(&cfg, 1), Err(RfError::InvalidScenario(_))));
        let mut cfg = ScenarioConfig::default();
        cfg.counts.orus = 0;
        assert!(matches!(generate_stadium(&cfg, 1), Err(RfError::InvalidScenario(_))));
    }

    #[test]
    fn stadium_layout_constraints() {
        let mut cfg = ScenarioConfig::default();
        cfg.counts.orus = 17;
        cfg.counts.ues = 500;
        let s = generate_stadium(&cfg, 3).unwrap();
        let g = &cfg.geometry;
        for oru in &s.orus {
            assert_eq!(oru.position.z, g.antenna_height_m);
            assert!(oru.position.y == 0.0 || oru.position.y == g.field_width_m);
            assert!(oru.position.x > 0.0 && oru.position.x < g.field_length_m);
        }
        let max_z = (g.stand_outer_m - g.stand_inner_m) * g.slope_deg.to_radians().tan() + g.step_height_m;
        for ue in &s.ues {
            let p = ue.position;
            let dx = (-p.x).max(p.x - g.field_length_m).max(0.0);
            let dy = (-p.y).max(p.y - g.field_width_m).max(0.0);
            let depth = dx.max(dy);
            assert!(depth >= g.stand_inner_m - 1e-9 && depth <= g.stand_outer_m + 1e-9, "depth {depth}");
            assert!(p.z >= 0.0 && p.z <= max_z + 1e-9);
        }
    }

    #[test]
    fn shadowing_statistics() {
        let mut cfg = ScenarioConfig::default();
        cfg.counts.orus = 100;
        cfg.counts.ues = 100;
        let s = generate_stadium(&cfg, 2024).unwrap();
        let samples: Vec<f64> = s.shadow_db.iter().flatten().copied().collect();
        assert_eq!(samples.len(), 10_000);
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() <= 0.25, "mean {mean}");
        assert!((var.sqrt() - 7.9).abs() <= 0.2, "std {}", var.sqrt());
    }

    proptest! {
        #[test]
        fn path_loss_monotone_without_shadowing(d1 in 1.0f64..500.0, d2 in 1.0f64..500.0, n in 2.0f64..4.0) {
            let m = model(n, 0.0);
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(path_loss_db(lo, 7.125e9, &m, 0.0) <= path_loss_db(hi, 7.125e9, &m, 0.0));
        }

        #[test]
        fn gain_positive_and_snr_monotone(x in -200.0f64..200.0, y in -200.0f64..200.0, z in 0.0f64..30.0,
                                         shadow in -30.0f64..30.0, w in 0.001f64..10.0) {
            let m = model(2.0, 7.9);
            let oru = site_at(Position3D::new(0.0, 0.0, 10.0), 8.0);
            let ue = ue_at(Position3D::new(x, y, z), 2.0);
            let beta = channel_gain(&ue, &oru, &m, shadow);
            prop_assert!(beta > 0.0);
            let s1 = snr(beta, w, m.noise_floor_sigma2).unwrap();
            let s2 = snr(beta, w * 1.5, m.noise_floor_sigma2).unwrap();
            prop_assert!(s2 > s1);
            let worse = channel_gain(&ue, &oru, &m, shadow + 1.0);
            prop_assert!(snr(worse, w, m.noise_floor_sigma2).unwrap() < s1);
        }
    }
}
