//! Scenario documents (JSON) describing a reproducible run.
//!
//! ```json
//! {
//!   "name": "canonical-high",
//!   "plant": { "calibrate": { "rise_time_s": 95, "hold_temp_c": 50,
//!                             "endurance_min": 60, "ambient_c": 30 } },
//!   "script": [ { "t": 0.0, "cmd": "auth", "password": "mima1234" },
//!               { "t": 0.05, "cmd": "set_level", "level": "high" } ],
//!   "link": { "base_latency_ms": 20, "jitter_ms": 10 },
//!   "duration_s": 900,
//!   "time_mode": { "accelerated": 100 },
//!   "seed": 7
//! }
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::SafetyLimits;
use crate::link::LinkConfig;
use crate::plant::{calibrate_params, CalibrationOptions, CalibrationTargets, PlantParams};
use crate::protocol::MAX_PASSWORD_LEN;
use crate::types::Level;

use super::engine::{SensorFault, TwinSetup};
use super::TwinError;

pub const DEFAULT_PASSWORD: &str = "mima1234";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrateSpec {
    #[serde(flatten)]
    pub targets: CalibrationTargets,
    #[serde(default)]
    pub options: CalibrationOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantSpec {
    Params(PlantParams),
    Calibrate(CalibrateSpec),
}

impl Default for PlantSpec {
    fn default() -> Self {
        PlantSpec::Calibrate(CalibrateSpec { targets: CalibrationTargets::reference(), options: Default::default() })
    }
}

impl PlantSpec {
    pub fn resolve(&self) -> Result<PlantParams, TwinError> {
        match self {
            PlantSpec::Params(p) => {
                p.validate().map_err(|e| TwinError::Config(e.to_string()))?;
                Ok(p.clone())
            }
            PlantSpec::Calibrate(spec) => Ok(calibrate_params(&spec.targets, &spec.options)?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeMode {
    /// One simulated second per wall second.
    Realtime,
    /// N simulated seconds per wall second, N >= 1.
    Accelerated(f64),
    /// As fast as the host runs.
    #[default]
    Unpaced,
}

impl TimeMode {
    /// Wall-clock speed-up, `None` when unpaced.
    pub fn factor(&self) -> Option<f64> {
        match self {
            TimeMode::Realtime => Some(1.0),
            TimeMode::Accelerated(n) => Some(*n),
            TimeMode::Unpaced => None,
        }
    }
}

/// What the simulated phone app does at a scripted time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum AppAction {
    Auth {
        password: String,
    },
    SetLevel {
        level: Level,
    },
    /// Same as `set_level` with level off.
    Off,
    /// The app goes away: no more heartbeats or commands until `connect`.
    Disconnect,
    Connect,
    /// Physical power toggle on the control module.
    PowerCycle,
    PowerOff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub t: f64,
    #[serde(flatten)]
    pub action: AppAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub plant: PlantSpec,
    /// Starting pad temperature; ambient when absent.
    #[serde(default)]
    pub initial_temp_c: Option<f64>,
    /// Pairing secret stored on the device.
    #[serde(default = "default_password")]
    pub password: String,
    #[serde(default)]
    pub limits: SafetyLimits,
    /// The scenario seed replaces `link.seed`.
    #[serde(default)]
    pub link: LinkConfig,
    #[serde(default)]
    pub script: Vec<ScriptEntry>,
    pub duration_s: f64,
    #[serde(default)]
    pub time_mode: TimeMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sensor_noise_c: f64,
    #[serde(default)]
    pub sensor_faults: Vec<SensorFault>,
    #[serde(default)]
    pub log_path: Option<PathBuf>,
}

fn default_password() -> String {
    DEFAULT_PASSWORD.to_string()
}

impl ScenarioConfig {
    /// Pair and select High at t = 0 on the reference-calibrated pad.
    pub fn canonical_high(duration_s: f64) -> Self {
        Self {
            name: Some("canonical-high".into()),
            plant: PlantSpec::default(),
            initial_temp_c: None,
            password: default_password(),
            limits: SafetyLimits::default(),
            link: LinkConfig::default(),
            script: vec![
                ScriptEntry { t: 0.0, action: AppAction::Auth { password: default_password() } },
                ScriptEntry { t: 0.05, action: AppAction::SetLevel { level: Level::High } },
            ],
            duration_s,
            time_mode: TimeMode::Unpaced,
            seed: 0,
            sensor_noise_c: 0.0,
            sensor_faults: Vec::new(),
            log_path: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, TwinError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| TwinError::Config(format!("scenario JSON: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, TwinError> {
        let text = std::fs::read_to_string(path).map_err(|e| TwinError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }

    pub fn validate(&self) -> Result<(), TwinError> {
        let bad = |m: String| Err(TwinError::Config(m));
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad(format!("duration must be > 0, got {}", self.duration_s));
        }
        let mut prev = f64::NEG_INFINITY;
        for entry in &self.script {
            if !(entry.t >= 0.0 && entry.t <= self.duration_s) {
                return bad(format!("script time {} outside [0, {}]", entry.t, self.duration_s));
            }
            if entry.t <= prev {
                return bad(format!("script times must strictly increase ({} after {prev})", entry.t));
            }
            prev = entry.t;
            if let AppAction::Auth { password } = &entry.action {
                if password.len() > MAX_PASSWORD_LEN || password.is_empty() {
                    return bad(format!("script password at t={} must be 1..={MAX_PASSWORD_LEN} bytes", entry.t));
                }
            }
        }
        if let TimeMode::Accelerated(n) = self.time_mode {
            if !(n >= 1.0) {
                return bad(format!("acceleration factor must be >= 1, got {n}"));
            }
        }
        self.link.validate().map_err(TwinError::Config)?;
        self.limits.validate().map_err(TwinError::Config)?;
        Ok(())
    }

    /// Highest preset selected by the script, used as the report target.
    pub fn highest_target(&self) -> Option<f64> {
        self.script
            .iter()
            .filter_map(|e| match &e.action {
                AppAction::SetLevel { level } => level.target_temp(),
                _ => None,
            })
            .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.max(t))))
    }

    pub fn twin_setup(&self) -> Result<TwinSetup, TwinError> {
        Ok(TwinSetup {
            params: self.plant.resolve()?,
            initial_temp_c: self.initial_temp_c,
            limits: self.limits,
            password: self.password.clone(),
            link: self.link.clone(),
            seed: self.seed,
            sensor_noise_c: self.sensor_noise_c,
            sensor_faults: self.sensor_faults.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_example() {
        let text = r#"{
          "name": "canonical-high",
          "plant": { "calibrate": { "rise_time_s": 95, "hold_temp_c": 50,
                                    "endurance_min": 60, "ambient_c": 30 } },
          "script": [ { "t": 0.0, "cmd": "auth", "password": "mima1234" },
                      { "t": 0.05, "cmd": "set_level", "level": "high" } ],
          "link": { "base_latency_ms": 20, "jitter_ms": 10 },
          "duration_s": 900,
          "time_mode": { "accelerated": 100 },
          "seed": 7
        }"#;
        let cfg = ScenarioConfig::from_json(text).unwrap();
        assert_eq!(cfg.time_mode, TimeMode::Accelerated(100.0));
        assert_eq!(cfg.script[1].action, AppAction::SetLevel { level: Level::High });
        assert_eq!(cfg.highest_target(), Some(50.0));
        assert_eq!(cfg.password, DEFAULT_PASSWORD);
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = ScenarioConfig::canonical_high(900.0);
        assert_eq!(ScenarioConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_scripts() {
        let mut cfg = ScenarioConfig::canonical_high(900.0);
        cfg.script[1].t = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::canonical_high(900.0);
        cfg.script[1].t = 901.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::canonical_high(900.0);
        cfg.time_mode = TimeMode::Accelerated(0.5);
        assert!(cfg.validate().is_err());
        assert!(ScenarioConfig::from_json("{\"duration_s\": -1}").is_err());
        assert!(ScenarioConfig::from_json("not json").is_err());
    }

    #[test]
    fn realtime_and_unpaced_spellings() {
        let cfg = ScenarioConfig::from_json(r#"{"duration_s": 5, "time_mode": "realtime"}"#).unwrap();
        assert_eq!(cfg.time_mode, TimeMode::Realtime);
        let cfg = ScenarioConfig::from_json(r#"{"duration_s": 5}"#).unwrap();
        assert_eq!(cfg.time_mode, TimeMode::Unpaced);
    }
}
