//! Scenario and run configuration.
//!
//! A [`ScenarioConfig`] is read from a TOML document with one table per
//! concern (`[geometry]`, `[counts]`, `[radio]`, `[demand]`, `[solver]`,
//! `[latency]`, `[run]`). Every table is optional and falls back to the
//! defaults below, which follow the stadium deployment used in the
//! experiments (7.125 GHz carrier, 100 MHz channels, 8 dB / 2 dB antenna
//! gains, 1 W transmit power, 7.9 dB shadowing).

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Current version of every file format emitted by this crate.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("unsupported format_version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid { field: field.into(), reason: reason.into() }
    }
}

fn format_version() -> u32 {
    FORMAT_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "format_version")]
    pub format_version: u32,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub counts: CountsConfig,
    #[serde(default)]
    pub radio: RadioConfig,
    #[serde(default)]
    pub demand: DemandProfile,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub latency: LatencyConfig,
    #[serde(default)]
    pub run: RunConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            format_version: FORMAT_VERSION,
            geometry: GeometryConfig::default(),
            counts: CountsConfig::default(),
            radio: RadioConfig::default(),
            demand: DemandProfile::default(),
            solver: SolverConfig::default(),
            latency: LatencyConfig::default(),
            run: RunConfig::default(),
        }
    }
}

/// Stadium layout. Distances are measured from the field perimeter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub field_length_m: f64,
    pub field_width_m: f64,
    pub stand_inner_m: f64,
    pub stand_outer_m: f64,
    pub slope_deg: f64,
    pub step_height_m: f64,
    pub antenna_height_m: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            field_length_m: 105.0,
            field_width_m: 68.0,
            stand_inner_m: 5.0,
            stand_outer_m: 47.0,
            slope_deg: 25.0,
            step_height_m: 2.0,
            antenna_height_m: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountsConfig {
    pub orus: usize,
    /// Size of the UE pool placed in the stadium.
    pub ues: usize,
    /// UE count per epoch, cycled. Empty means `ues` every epoch.
    pub ue_schedule: Vec<usize>,
}

impl Default for CountsConfig {
    fn default() -> Self {
        CountsConfig { orus: 6, ues: 16, ue_schedule: Vec::new() }
    }
}

impl CountsConfig {
    pub fn schedule(&self) -> Vec<usize> {
        if self.ue_schedule.is_empty() {
            vec![self.ues]
        } else {
            self.ue_schedule.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub carrier_freq_hz: f64,
    /// O-RU `i` transmits on channel `i mod channels`.
    pub channels: u32,
    pub channel_spacing_hz: f64,
    pub bandwidth_hz: f64,
    pub antenna_gain_db: f64,
    pub ue_gain_db: f64,
    pub max_power_w: f64,
    pub numerology: u32,
    pub static_power_w: f64,
    pub amp_efficiency: f64,
    pub path_loss_exponent: f64,
    pub reference_distance_m: f64,
    pub env_loss_factor: f64,
    pub shadowing_sigma_db: f64,
    pub noise_floor_dbm: f64,
    pub epsilon_w: f64,
    /// Replace every geometric link gain with this value (dB). Used to pin
    /// per-O-RU capacity independently of the stadium layout.
    pub uniform_gain_db: Option<f64>,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            carrier_freq_hz: 7.125e9,
            channels: 6,
            channel_spacing_hz: 100e6,
            bandwidth_hz: 100e6,
            antenna_gain_db: 8.0,
            ue_gain_db: 2.0,
            max_power_w: 1.0,
            numerology: 4,
            static_power_w: 11.4757,
            amp_efficiency: 0.25,
            path_loss_exponent: 2.0,
            reference_distance_m: 1.0,
            env_loss_factor: 1.0,
            shadowing_sigma_db: 7.9,
            noise_floor_dbm: -87.0,
            epsilon_w: 1e-3,
            uniform_gain_db: None,
        }
    }
}

impl RadioConfig {
    pub fn noise_floor_w(&self) -> f64 {
        crate::rf_env::dbm_to_watts(self.noise_floor_dbm)
    }
}

/// Per-UE throughput demand for each epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum DemandProfile {
    Constant { bps: f64 },
    /// Independent uniform draw per UE, fixed when the scenario is generated.
    Uniform { min_bps: f64, max_bps: f64 },
}

impl Default for DemandProfile {
    fn default() -> Self {
        DemandProfile::Constant { bps: 20e6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Exact,
    Greedy,
    Brute,
}

impl std::str::FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(SolverKind::Exact),
            "greedy" => Ok(SolverKind::Greedy),
            "brute" => Ok(SolverKind::Brute),
            other => Err(format!("unknown solver `{other}` (expected exact, greedy or brute)")),
        }
    }
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolverKind::Exact => "exact",
            SolverKind::Greedy => "greedy",
            SolverKind::Brute => "brute",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub kind: SolverKind,
    /// Transmit power levels as fractions of each O-RU's maximum power.
    pub power_grid: Vec<f64>,
    /// Prepend the absolute floor `epsilon_w` as the lowest level.
    pub include_epsilon_level: bool,
    pub threads: usize,
    /// Search budget for a single association subproblem.
    pub max_assign_nodes: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            kind: SolverKind::Exact,
            power_grid: vec![0.25, 0.5, 0.75, 1.0],
            include_epsilon_level: true,
            threads: 1,
            max_assign_nodes: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyPreset {
    /// Calibrated to the measured component times at 16, 256 and 1024 UEs.
    Calibrated,
    /// Every stage takes zero time.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyConfig {
    pub preset: LatencyPreset,
    pub jitter: bool,
    pub t_ho_s: f64,
    pub handover_overhead_s: f64,
    /// Run one monitoring instance per E2 node instead of a single one.
    pub monitoring_sharded: bool,
}

impl Default for LatencyConfig {
    fn default() -> Self {
        LatencyConfig {
            preset: LatencyPreset::Calibrated,
            jitter: false,
            t_ho_s: 2.02e-3,
            handover_overhead_s: 0.0,
            monitoring_sharded: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Defaults to the length of the UE schedule.
    pub epochs: Option<usize>,
    pub seed: u64,
    /// Re-optimise only when total demand moves by more than this.
    pub trigger_threshold_bps: f64,
    /// Minimum spacing between epoch starts on the simulated clock.
    pub epoch_interval_s: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { epochs: None, seed: 42, trigger_threshold_bps: 0.0, epoch_interval_s: 0.0 }
    }
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, format!("must be positive and finite, got {v}")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ConfigError::invalid(field, format!("must be non-negative and finite, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.format_version != FORMAT_VERSION {
            return Err(ConfigError::Version { found: self.format_version, expected: FORMAT_VERSION });
        }
        let g = &self.geometry;
        positive("geometry.field_length_m", g.field_length_m)?;
        positive("geometry.field_width_m", g.field_width_m)?;
        non_negative("geometry.stand_inner_m", g.stand_inner_m)?;
        positive("geometry.stand_outer_m", g.stand_outer_m)?;
        if g.stand_outer_m <= g.stand_inner_m {
            return Err(ConfigError::invalid("geometry.stand_outer_m", "must exceed stand_inner_m"));
        }
        if !(0.0..90.0).contains(&g.slope_deg) {
            return Err(ConfigError::invalid("geometry.slope_deg", "must lie in [0, 90)"));
        }
        non_negative("geometry.step_height_m", g.step_height_m)?;
        non_negative("geometry.antenna_height_m", g.antenna_height_m)?;

        if self.counts.orus == 0 {
            return Err(ConfigError::invalid("counts.orus", "must be at least 1"));
        }
        if self.counts.ues == 0 {
            return Err(ConfigError::invalid("counts.ues", "must be at least 1"));
        }
        if let Some(&n) = self.counts.ue_schedule.iter().find(|&&n| n == 0 || n > self.counts.ues) {
            return Err(ConfigError::invalid(
                "counts.ue_schedule",
                format!("entry {n} must lie in 1..={}", self.counts.ues),
            ));
        }

        let r = &self.radio;
        positive("radio.carrier_freq_hz", r.carrier_freq_hz)?;
        if r.channels == 0 {
            return Err(ConfigError::invalid("radio.channels", "must be at least 1"));
        }
        non_negative("radio.channel_spacing_hz", r.channel_spacing_hz)?;
        positive("radio.bandwidth_hz", r.bandwidth_hz)?;
        positive("radio.max_power_w", r.max_power_w)?;
        non_negative("radio.static_power_w", r.static_power_w)?;
        if !(r.amp_efficiency > 0.0 && r.amp_efficiency <= 1.0) {
            return Err(ConfigError::invalid("radio.amp_efficiency", "must lie in (0, 1]"));
        }
        positive("radio.path_loss_exponent", r.path_loss_exponent)?;
        positive("radio.reference_distance_m", r.reference_distance_m)?;
        positive("radio.env_loss_factor", r.env_loss_factor)?;
        non_negative("radio.shadowing_sigma_db", r.shadowing_sigma_db)?;
        if !r.noise_floor_dbm.is_finite() {
            return Err(ConfigError::invalid("radio.noise_floor_dbm", "must be finite"));
        }
        positive("radio.epsilon_w", r.epsilon_w)?;
        if r.epsilon_w > r.max_power_w {
            return Err(ConfigError::invalid("radio.epsilon_w", "must not exceed max_power_w"));
        }
        if let Some(gain) = r.uniform_gain_db {
            if !gain.is_finite() {
                return Err(ConfigError::invalid("radio.uniform_gain_db", "must be finite"));
            }
        }
        for field in [r.antenna_gain_db, r.ue_gain_db] {
            if !field.is_finite() {
                return Err(ConfigError::invalid("radio.antenna_gain_db", "gains must be finite"));
            }
        }

        match self.demand {
            DemandProfile::Constant { bps } => non_negative("demand.bps", bps)?,
            DemandProfile::Uniform { min_bps, max_bps } => {
                non_negative("demand.min_bps", min_bps)?;
                non_negative("demand.max_bps", max_bps)?;
                if max_bps < min_bps {
                    return Err(ConfigError::invalid("demand.max_bps", "must be >= min_bps"));
                }
            }
        }

        let s = &self.solver;
        if s.power_grid.is_empty() && !s.include_epsilon_level {
            return Err(ConfigError::invalid("solver.power_grid", "must not be empty"));
        }
        for pair in s.power_grid.windows(2) {
            if pair[1] <= pair[0] {
                return Err(ConfigError::invalid("solver.power_grid", "must be strictly increasing"));
            }
        }
        for &f in &s.power_grid {
            if !(f > 0.0 && f <= 1.0) {
                return Err(ConfigError::invalid("solver.power_grid", format!("fraction {f} outside (0, 1]")));
            }
            if f * r.max_power_w < r.epsilon_w {
                return Err(ConfigError::invalid(
                    "solver.power_grid",
                    format!("level {f} x max_power_w falls below epsilon_w"),
                ));
            }
        }
        if s.threads == 0 {
            return Err(ConfigError::invalid("solver.threads", "must be at least 1"));
        }
        if s.max_assign_nodes == 0 {
            return Err(ConfigError::invalid("solver.max_assign_nodes", "must be at least 1"));
        }

        non_negative("latency.t_ho_s", self.latency.t_ho_s)?;
        non_negative("latency.handover_overhead_s", self.latency.handover_overhead_s)?;
        if self.run.epochs == Some(0) {
            return Err(ConfigError::invalid("run.epochs", "must be at least 1"));
        }
        non_negative("run.trigger_threshold_bps", self.run.trigger_threshold_bps)?;
        non_negative("run.epoch_interval_s", self.run.epoch_interval_s)?;
        Ok(())
    }

    /// Power levels in watts for an O-RU with the given maximum power.
    pub fn power_levels(&self, max_power_w: f64) -> Vec<f64> {
        let mut levels = Vec::with_capacity(self.solver.power_grid.len() + 1);
        if self.solver.include_epsilon_level {
            levels.push(self.radio.epsilon_w);
        }
        for &f in &self.solver.power_grid {
            let w = f * max_power_w;
            if levels.last().is_none_or(|&last| w > last) {
                levels.push(w);
            }
        }
        levels
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_roundtrips() {
        let cfg = ScenarioConfig::default();
        cfg.validate().unwrap();
        let back = ScenarioConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn empty_document_uses_defaults() {
        let cfg = ScenarioConfig::from_toml("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
    }

    #[test]
    fn zero_ues_names_the_field() {
        let mut cfg = ScenarioConfig::default();
        cfg.counts.ues = 0;
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("counts.ues"), "{err}");
    }

    #[test]
    fn schedule_beyond_pool_rejected() {
        let mut cfg = ScenarioConfig::default();
        cfg.counts.ue_schedule = vec![16, 32];
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("counts.ue_schedule"));
    }

    #[test]
    fn default_power_levels() {
        let cfg = ScenarioConfig::default();
        assert_eq!(cfg.power_levels(1.0), vec![1e-3, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(cfg.power_levels(2.0), vec![1e-3, 0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn demand_profile_tagged() {
        let cfg = ScenarioConfig::from_toml("[demand]\nprofile = \"uniform\"\nmin_bps = 1.0\nmax_bps = 2.0\n").unwrap();
        assert_eq!(cfg.demand, DemandProfile::Uniform { min_bps: 1.0, max_bps: 2.0 });
    }

    #[test]
    fn noise_floor_default_is_minus_87_dbm() {
        let w = RadioConfig::default().noise_floor_w();
        assert!((w - 1.995_262_314_968_88e-12).abs() < 1e-24);
    }
}
