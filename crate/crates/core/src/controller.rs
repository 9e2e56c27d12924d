//! Heat-pad firmware: pairing, preset regulation and the safety interlocks.
//!
//! The controller is a plain state value advanced by three inputs: decoded
//! link frames ([`ControllerState::apply_command`]), the elapsed time since
//! the last app traffic ([`ControllerState::watchdog_tick`]) and the zone
//! temperatures at each control tick ([`ControllerState::control_tick`]).
//! Faults latch until [`ControllerState::reset_to_boot`], the power switch.

use serde::{Deserialize, Serialize};

use crate::plant::{Duties, ZoneTemps, ZONES};
use crate::protocol::{Frame, FrameType, PasswordStore};
use crate::types::{FaultCode, Level, Mode};

/// Control cadence, seconds.
pub const CONTROL_DT: f64 = 0.1;

/// Half-width of the on/off dead band around the setpoint, °C.
pub const HYSTERESIS_BAND: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SafetyLimits {
    pub max_temp: f64,
    /// Population standard deviation across the three zones, °C.
    pub max_zone_sd: f64,
    pub sensor_min: f64,
    pub sensor_max: f64,
    /// Seconds without app traffic before heating is cut.
    pub watchdog_timeout: f64,
    pub low_battery_cutoff_wh: f64,
}

impl Default for SafetyLimits {
    fn default() -> Self {
        Self {
            max_temp: 55.0,
            max_zone_sd: 2.5,
            sensor_min: -10.0,
            sensor_max: 90.0,
            watchdog_timeout: 3.0,
            low_battery_cutoff_wh: 0.1,
        }
    }
}

impl SafetyLimits {
    pub fn validate(&self) -> Result<(), String> {
        let highest_target = Level::ALL.iter().filter_map(|l| l.target_temp()).fold(f64::MIN, f64::max);
        if !(self.max_temp > highest_target) {
            return Err(format!("max_temp {} must exceed every preset target", self.max_temp));
        }
        if !(self.max_zone_sd > 0.0) {
            return Err("max_zone_sd must be > 0".into());
        }
        if !(self.watchdog_timeout > 0.0) {
            return Err("watchdog_timeout must be > 0".into());
        }
        if !(self.sensor_min < self.sensor_max) {
            return Err("sensor range is empty".into());
        }
        if !(self.low_battery_cutoff_wh >= 0.0) {
            return Err("low_battery_cutoff_wh must be >= 0".into());
        }
        Ok(())
    }
}

/// Population standard deviation (divide by N).
pub fn population_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// First failing interlock in priority order: sensor range, over-temperature,
/// zone divergence, low battery.
pub fn safety_check(temps: &ZoneTemps, battery_wh: f64, limits: &SafetyLimits) -> Result<(), FaultCode> {
    if temps.iter().any(|t| !t.is_finite() || *t < limits.sensor_min || *t > limits.sensor_max) {
        return Err(FaultCode::SensorRange);
    }
    if temps.iter().any(|t| *t >= limits.max_temp) {
        return Err(FaultCode::OverTemp);
    }
    if population_sd(temps) >= limits.max_zone_sd {
        return Err(FaultCode::ZoneDivergence);
    }
    if battery_wh < limits.low_battery_cutoff_wh {
        return Err(FaultCode::LowBattery);
    }
    Ok(())
}

/// On below `target - band`, off above `target + band`, unchanged between.
pub fn hysteresis(temp: f64, target: f64, previous: f64) -> f64 {
    if temp < target - HYSTERESIS_BAND {
        1.0
    } else if temp > target + HYSTERESIS_BAND {
        0.0
    } else {
        previous
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControllerEvent {
    /// Emitted once on entry to Fault.
    FaultEntered(FaultCode),
    /// The watchdog expired while idle; the app must authenticate again.
    PairingDropped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickOutput {
    pub duties: Duties,
    pub events: Vec<ControllerEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub mode: Mode,
    pub active_preset: Level,
    pub duties: Duties,
    pub last_heartbeat_age: f64,
    pub fault_code: FaultCode,
    pub paired: bool,
}

impl Default for ControllerState {
    fn default() -> Self {
        Self::boot()
    }
}

impl ControllerState {
    pub fn boot() -> Self {
        Self {
            mode: Mode::Boot,
            active_preset: Level::Off,
            duties: [0.0; ZONES],
            last_heartbeat_age: 0.0,
            fault_code: FaultCode::None,
            paired: false,
        }
    }

    pub fn target_temp(&self) -> Option<f64> {
        self.active_preset.target_temp()
    }

    /// The power toggle: back to Boot, unpaired, fault cleared, heaters off.
    pub fn reset_to_boot(&mut self) {
        *self = Self::boot();
    }

    /// Power switch off. Only [`ControllerState::reset_to_boot`] leaves Off.
    pub fn power_off(&mut self) {
        *self = Self { mode: Mode::Off, ..Self::boot() };
    }

    fn stop_heating(&mut self) {
        self.duties = [0.0; ZONES];
    }

    fn enter_fault(&mut self, code: FaultCode) -> ControllerEvent {
        self.mode = Mode::Fault;
        self.fault_code = code;
        self.stop_heating();
        ControllerEvent::FaultEntered(code)
    }

    /// One regulation step on derived sensor temperatures.
    pub fn control_tick(&mut self, temps: &ZoneTemps, battery_wh: f64, limits: &SafetyLimits, _dt: f64) -> TickOutput {
        let mut events = Vec::new();
        match self.mode {
            Mode::Off => {}
            Mode::Fault => self.stop_heating(),
            _ => {
                if self.mode == Mode::Boot {
                    self.mode = Mode::Unpaired;
                }
                if let Err(code) = safety_check(temps, battery_wh, limits) {
                    events.push(self.enter_fault(code));
                }
            }
        }
        match (self.mode, self.target_temp()) {
            (Mode::Heating, Some(target)) => {
                for (duty, &t) in self.duties.iter_mut().zip(temps) {
                    *duty = hysteresis(t, target, *duty);
                }
            }
            _ => self.stop_heating(),
        }
        TickOutput { duties: self.duties, events }
    }

    /// Age the link. Heating without app traffic for longer than the timeout
    /// faults with LinkLost; an idle device only forgets the pairing.
    pub fn watchdog_tick(&mut self, dt: f64, limits: &SafetyLimits) -> Option<ControllerEvent> {
        if self.mode == Mode::Off {
            return None;
        }
        self.last_heartbeat_age += dt;
        // Ages accumulate in 0.1 s steps; absorb the rounding so exactly
        // `watchdog_timeout` of silence does not trip.
        if self.last_heartbeat_age <= limits.watchdog_timeout + 1e-9 {
            return None;
        }
        match self.mode {
            Mode::Heating => {
                self.paired = false;
                Some(self.enter_fault(FaultCode::LinkLost))
            }
            Mode::Idle if self.paired => {
                self.paired = false;
                Some(ControllerEvent::PairingDropped)
            }
            _ => None,
        }
    }

    /// Handle one decoded frame from the app; returns the frames to send back.
    pub fn apply_command(&mut self, frame: &Frame, store: &PasswordStore) -> Vec<Frame> {
        let kind = frame.frame_type();
        if self.mode == Mode::Off || kind.is_device_originated() {
            return Vec::new();
        }
        if kind == FrameType::AuthReq {
            let accepted = store.verify(frame);
            if accepted {
                self.paired = true;
                self.last_heartbeat_age = 0.0;
                if matches!(self.mode, Mode::Boot | Mode::Unpaired) {
                    self.mode = Mode::Idle;
                }
            }
            return vec![Frame::auth_ack(accepted)];
        }
        if !self.paired {
            return Vec::new();
        }
        self.last_heartbeat_age = 0.0;
        match kind {
            FrameType::Heartbeat => Vec::new(),
            FrameType::SetLevel => {
                let Some(level) = frame.as_level() else {
                    return Vec::new();
                };
                if self.mode == Mode::Fault {
                    return vec![Frame::fault_evt(self.fault_code)];
                }
                self.active_preset = level;
                if level == Level::Off {
                    self.mode = Mode::Idle;
                    self.stop_heating();
                } else {
                    self.mode = Mode::Heating;
                }
                vec![Frame::ack(FrameType::SetLevel, self.mode, self.active_preset)]
            }
            _ => Vec::new(),
        }
    }
}
