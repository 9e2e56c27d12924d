//! Lumped thermal model of the three-zone heat pad and its battery.
//!
//! Each zone is a single thermal node with a resistance to ambient and a
//! conductive link to its neighbours (left-middle, middle-right):
//!
//! ```text
//! C_i dT_i/dt = d_i P_i - (T_i - T_amb) / R_i - sum_adj k (T_i - T_j)
//! ```
//!
//! integrated with fixed-step explicit Euler.

mod calibrate;
mod thermistor;

pub use calibrate::{
    calibrate_params, measure_hold_endurance, measure_rise_time, verify_calibration, CalibrationError,
    CalibrationOptions, CalibrationReport, CalibrationTargets,
};
pub use thermistor::{Thermistor, ADC_MAX, SENSE_MAX_C, SENSE_MIN_C};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ZONES: usize = 3;

/// Fixed integration step used by the twin, seconds.
pub const PLANT_DT: f64 = 0.1;

pub const DEFAULT_COUPLING: f64 = 0.2;
pub const DEFAULT_OVERHEAD_W: f64 = 0.3;
pub const DEFAULT_AMBIENT_C: f64 = 30.0;
/// 2200 mAh at 12 V.
pub const DEFAULT_BATTERY_WH: f64 = 26.4;
pub const DEFAULT_SUPPLY_V: f64 = 12.0;

/// 3S lithium-polymer window, volts.
pub const PACK_EMPTY_V: f64 = 9.0;
pub const PACK_FULL_V: f64 = 12.6;

pub type Duties = [f64; ZONES];
pub type ZoneTemps = [f64; ZONES];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("model integrity: {0}")]
    ModelIntegrity(String),
    #[error("invalid step: {0}")]
    InvalidStep(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    /// Zone-to-ambient thermal resistance, K/W.
    pub thermal_resistance: [f64; ZONES],
    /// Zone heat capacity, J/K.
    pub heat_capacity: [f64; ZONES],
    /// Heater power at full duty, W.
    pub max_power: [f64; ZONES],
    /// Conductance between adjacent zones, W/K.
    #[serde(default = "default_coupling")]
    pub coupling: f64,
    #[serde(default = "default_ambient")]
    pub ambient_temp: f64,
    #[serde(default = "default_supply")]
    pub supply_voltage: f64,
    #[serde(default = "default_battery")]
    pub battery_capacity: f64,
    /// Microcontroller and radio draw, W.
    #[serde(default = "default_overhead")]
    pub overhead_power: f64,
    #[serde(default)]
    pub sensor: Thermistor,
}

fn default_coupling() -> f64 {
    DEFAULT_COUPLING
}
fn default_ambient() -> f64 {
    DEFAULT_AMBIENT_C
}
fn default_supply() -> f64 {
    DEFAULT_SUPPLY_V
}
fn default_battery() -> f64 {
    DEFAULT_BATTERY_WH
}
fn default_overhead() -> f64 {
    DEFAULT_OVERHEAD_W
}

impl PlantParams {
    /// Identical zones with default coupling, ambient and battery.
    pub fn uniform(thermal_resistance: f64, heat_capacity: f64, max_power: f64) -> Self {
        Self {
            thermal_resistance: [thermal_resistance; ZONES],
            heat_capacity: [heat_capacity; ZONES],
            max_power: [max_power; ZONES],
            coupling: DEFAULT_COUPLING,
            ambient_temp: DEFAULT_AMBIENT_C,
            supply_voltage: DEFAULT_SUPPLY_V,
            battery_capacity: DEFAULT_BATTERY_WH,
            overhead_power: DEFAULT_OVERHEAD_W,
            sensor: Thermistor::default(),
        }
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        let integrity = |msg: String| Err(PlantError::ModelIntegrity(msg));
        for i in 0..ZONES {
            for (name, v) in [
                ("thermal_resistance", self.thermal_resistance[i]),
                ("heat_capacity", self.heat_capacity[i]),
                ("max_power", self.max_power[i]),
            ] {
                if !v.is_finite() || v <= 0.0 {
                    return integrity(format!("{name}[{i}] must be finite and > 0, got {v}"));
                }
            }
        }
        if !self.coupling.is_finite() || self.coupling < 0.0 {
            return integrity(format!("coupling must be finite and >= 0, got {}", self.coupling));
        }
        if !self.ambient_temp.is_finite() {
            return integrity("ambient temperature is not finite".into());
        }
        if !self.battery_capacity.is_finite() || self.battery_capacity <= 0.0 {
            return integrity(format!("battery capacity must be > 0, got {}", self.battery_capacity));
        }
        if !(PACK_EMPTY_V..=PACK_FULL_V).contains(&self.supply_voltage) {
            return integrity(format!(
                "supply voltage {} outside 3S window [{PACK_EMPTY_V}, {PACK_FULL_V}]",
                self.supply_voltage
            ));
        }
        if !self.overhead_power.is_finite() || self.overhead_power < 0.0 {
            return integrity(format!("overhead power must be >= 0, got {}", self.overhead_power));
        }
        Ok(())
    }

    /// Pack terminal voltage for reporting, linear in state of charge across
    /// the 3S window.
    pub fn battery_millivolts(&self, remaining_wh: f64) -> u16 {
        let soc = (remaining_wh / self.battery_capacity).clamp(0.0, 1.0);
        let v = PACK_EMPTY_V + (PACK_FULL_V - PACK_EMPTY_V) * soc;
        (v * 1000.0).round() as u16
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    /// Left, middle, right.
    pub zone_temps: ZoneTemps,
    pub battery_remaining: f64,
    pub elapsed: f64,
}

impl PlantState {
    /// All zones at ambient with a full battery.
    pub fn at_ambient(params: &PlantParams) -> Self {
        Self::at_temperature(params, params.ambient_temp)
    }

    pub fn at_temperature(params: &PlantParams, temp_c: f64) -> Self {
        Self { zone_temps: [temp_c; ZONES], battery_remaining: params.battery_capacity, elapsed: 0.0 }
    }

    pub fn is_depleted(&self) -> bool {
        self.battery_remaining <= 0.0
    }

    fn check_finite(&self) -> Result<(), PlantError> {
        if self.zone_temps.iter().all(|t| t.is_finite())
            && self.battery_remaining.is_finite()
            && self.elapsed.is_finite()
        {
            Ok(())
        } else {
            Err(PlantError::ModelIntegrity(format!("non-finite plant state {self:?}")))
        }
    }
}

fn check_step(duties: &Duties, dt: f64) -> Result<(), PlantError> {
    if !(dt > 0.0 && dt <= 1.0) {
        return Err(PlantError::InvalidStep(format!("dt must be in (0, 1], got {dt}")));
    }
    if let Some(d) = duties.iter().find(|d| !(0.0..=1.0).contains(*d)) {
        return Err(PlantError::InvalidStep(format!("duty {d} outside [0, 1]")));
    }
    Ok(())
}

/// Advance the pad by one explicit-Euler step of `dt` seconds.
///
/// A depleted battery delivers no heater power regardless of `duties`.
pub fn step_plant(
    state: &PlantState,
    duties: &Duties,
    params: &PlantParams,
    dt: f64,
) -> Result<PlantState, PlantError> {
    params.validate()?;
    state.check_finite()?;
    check_step(duties, dt)?;

    let effective = if state.is_depleted() { [0.0; ZONES] } else { *duties };
    let temps = &state.zone_temps;
    let mut next = state.clone();
    for i in 0..ZONES {
        let mut flow =
            effective[i] * params.max_power[i] - (temps[i] - params.ambient_temp) / params.thermal_resistance[i];
        if i > 0 {
            flow -= params.coupling * (temps[i] - temps[i - 1]);
        }
        if i + 1 < ZONES {
            flow -= params.coupling * (temps[i] - temps[i + 1]);
        }
        next.zone_temps[i] = temps[i] + dt * flow / params.heat_capacity[i];
    }
    let mut next = battery_step(&next, &effective, params, dt);
    next.elapsed = state.elapsed + dt;
    next.check_finite()?;
    Ok(next)
}

/// Energy drawn over `dt` seconds at the given duties, in watt-hours.
pub fn drawn_energy_wh(duties: &Duties, params: &PlantParams, dt: f64) -> f64 {
    let heater: f64 = duties.iter().zip(&params.max_power).map(|(d, p)| d * p).sum();
    (heater + params.overhead_power) * dt / 3600.0
}

/// Drain the battery for `dt` seconds of heater and controller load,
/// flooring at empty.
pub fn battery_step(state: &PlantState, duties: &Duties, params: &PlantParams, dt: f64) -> PlantState {
    let drawn = drawn_energy_wh(duties, params, dt);
    PlantState { battery_remaining: (state.battery_remaining - drawn).max(0.0), ..state.clone() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub adc_counts: [u16; ZONES],
    pub derived_temp: ZoneTemps,
    /// Set when the sensed temperature was outside the characterised range
    /// and the counts were saturated to the range edge.
    pub out_of_range: [bool; ZONES],
}

/// Read every zone thermistor through the divider and ADC.
pub fn sense(state: &PlantState, params: &PlantParams) -> SensorReading {
    sense_temps(&state.zone_temps, &params.sensor)
}

/// Like [`sense`] but for arbitrary thermistor temperatures, e.g. with
/// noise or an injected sensor fault applied.
pub fn sense_temps(temps: &ZoneTemps, sensor: &Thermistor) -> SensorReading {
    let mut reading =
        SensorReading { adc_counts: [0; ZONES], derived_temp: [0.0; ZONES], out_of_range: [false; ZONES] };
    for (i, &t) in temps.iter().enumerate() {
        let clamped = if t.is_nan() { SENSE_MIN_C } else { t.clamp(SENSE_MIN_C, SENSE_MAX_C) };
        reading.out_of_range[i] = clamped != t;
        reading.adc_counts[i] = sensor.counts(clamped);
        reading.derived_temp[i] = sensor.derived_temp(reading.adc_counts[i]);
    }
    reading
}
