use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::controller::{ControllerEvent, ControllerState, SafetyLimits, CONTROL_DT};
use crate::link::{DuplexLink, LinkConfig, SendOutcome};
use crate::plant::{self, Duties, PlantParams, PlantState, SensorReading, ZoneTemps, PLANT_DT, ZONES};
use crate::protocol::{encode_frame, Frame, PasswordStore, StreamDecoder, TelemetryPayload};
use crate::types::{FaultCode, Mode};

use super::log::TelemetryRecord;
use super::TwinError;

/// Control ticks per telemetry record.
pub const TICKS_PER_SECOND: u64 = 10;

/// Random stream used for sensor noise; the link takes streams 0 and 1.
const NOISE_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SensorFaultKind {
    /// Reads a constant regardless of the zone temperature.
    Stuck {
        value_c: f64,
    },
    Offset {
        delta_c: f64,
    },
    /// Offset growing linearly from the start time.
    Drift {
        rate_c_per_s: f64,
    },
}

/// A thermistor misbehaving from `start_s` onward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorFault {
    pub zone: usize,
    pub start_s: f64,
    #[serde(flatten)]
    pub kind: SensorFaultKind,
}

impl SensorFault {
    fn apply(&self, now: f64, true_temp: f64) -> f64 {
        if now < self.start_s {
            return true_temp;
        }
        match self.kind {
            SensorFaultKind::Stuck { value_c } => value_c,
            SensorFaultKind::Offset { delta_c } => true_temp + delta_c,
            SensorFaultKind::Drift { rate_c_per_s } => true_temp + rate_c_per_s * (now - self.start_s),
        }
    }
}

/// Everything needed to build a [`Twin`].
#[derive(Debug, Clone)]
pub struct TwinSetup {
    pub params: PlantParams,
    pub initial_temp_c: Option<f64>,
    pub limits: SafetyLimits,
    pub password: String,
    pub link: LinkConfig,
    pub seed: u64,
    /// Half-width of uniform sensor noise, °C; 0 disables it.
    pub sensor_noise_c: f64,
    pub sensor_faults: Vec<SensorFault>,
}

/// What happened during one control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub tick: u64,
    pub time: f64,
    pub true_temps: ZoneTemps,
    pub reading: SensorReading,
    pub duties: Duties,
    pub mode: Mode,
    pub fault: FaultCode,
    pub battery_wh: f64,
    pub events: Vec<ControllerEvent>,
    /// Present on whole seconds.
    pub telemetry: Option<TelemetryRecord>,
}

/// Plant, firmware and link advanced together on a 10 Hz tick.
///
/// Within a tick at time `t`: frames delivered by `t` are applied, the
/// watchdog ages, the thermistors are read, the controller regulates, and
/// on whole seconds a telemetry frame goes out. The plant then integrates
/// one step with the chosen duties.
#[derive(Debug, Clone)]
pub struct Twin {
    params: PlantParams,
    plant: PlantState,
    controller: ControllerState,
    limits: SafetyLimits,
    store: PasswordStore,
    link: DuplexLink,
    device_rx: StreamDecoder,
    app_rx: StreamDecoder,
    noise_rng: ChaCha8Rng,
    sensor_noise_c: f64,
    sensor_faults: Vec<SensorFault>,
    tick: u64,
}

impl Twin {
    pub fn new(setup: TwinSetup) -> Result<Self, TwinError> {
        setup.params.validate().map_err(|e| TwinError::Config(e.to_string()))?;
        setup.limits.validate().map_err(TwinError::Config)?;
        setup.link.validate().map_err(TwinError::Config)?;
        if !(setup.sensor_noise_c >= 0.0 && setup.sensor_noise_c.is_finite()) {
            return Err(TwinError::Config(format!("sensor noise must be >= 0, got {}", setup.sensor_noise_c)));
        }
        if let Some(f) = setup.sensor_faults.iter().find(|f| f.zone >= ZONES) {
            return Err(TwinError::Config(format!("sensor fault on zone {} (zones are 0..{ZONES})", f.zone)));
        }
        let store = PasswordStore::new(&setup.password).map_err(|e| TwinError::Config(e.to_string()))?;
        let plant = match setup.initial_temp_c {
            Some(t) => PlantState::at_temperature(&setup.params, t),
            None => PlantState::at_ambient(&setup.params),
        };
        let mut noise_rng = ChaCha8Rng::seed_from_u64(setup.seed);
        noise_rng.set_stream(NOISE_STREAM);
        let link = LinkConfig { seed: setup.seed, ..setup.link };
        Ok(Self {
            params: setup.params,
            plant,
            controller: ControllerState::boot(),
            limits: setup.limits,
            store,
            link: DuplexLink::new(link),
            device_rx: StreamDecoder::new(),
            app_rx: StreamDecoder::new(),
            noise_rng,
            sensor_noise_c: setup.sensor_noise_c,
            sensor_faults: setup.sensor_faults,
            tick: 0,
        })
    }

    pub fn now(&self) -> f64 {
        self.tick as f64 * CONTROL_DT
    }

    pub fn tick_index(&self) -> u64 {
        self.tick
    }

    pub fn plant(&self) -> &PlantState {
        &self.plant
    }

    pub fn params(&self) -> &PlantParams {
        &self.params
    }

    pub fn controller(&self) -> &ControllerState {
        &self.controller
    }

    pub fn limits(&self) -> &SafetyLimits {
        &self.limits
    }

    /// App-side transmit toward the device.
    pub fn app_send(&mut self, frame: &Frame, at: f64) -> SendOutcome {
        self.link.uplink.send(&encode_frame(frame), at)
    }

    /// App-side receive: frames the device sent that have arrived by `now`.
    pub fn app_receive(&mut self, now: f64) -> Vec<Frame> {
        let bytes = self.link.downlink.poll(now);
        self.app_rx.push(&bytes)
    }

    /// The physical power toggle.
    pub fn power_cycle(&mut self) {
        self.controller.reset_to_boot();
    }

    pub fn power_off(&mut self) {
        self.controller.power_off();
    }

    fn device_send(&mut self, frame: &Frame, now: f64) {
        self.link.downlink.send(&encode_frame(frame), now);
    }

    fn sensed_temps(&mut self, now: f64) -> ZoneTemps {
        let mut temps = self.plant.zone_temps;
        if self.sensor_noise_c > 0.0 {
            for t in &mut temps {
                *t += self.noise_rng.random_range(-self.sensor_noise_c..=self.sensor_noise_c);
            }
        }
        for fault in &self.sensor_faults {
            temps[fault.zone] = fault.apply(now, temps[fault.zone]);
        }
        temps
    }

    /// Advance one control tick.
    pub fn step(&mut self) -> Result<TickRecord, TwinError> {
        let now = self.now();
        let mut events = Vec::new();

        let inbound = self.link.uplink.poll(now);
        for frame in self.device_rx.push(&inbound) {
            for reply in self.controller.apply_command(&frame, &self.store) {
                self.device_send(&reply, now);
            }
        }

        events.extend(self.controller.watchdog_tick(CONTROL_DT, &self.limits));

        let perceived = self.sensed_temps(now);
        let reading = plant::sense_temps(&perceived, &self.params.sensor);
        let out =
            self.controller.control_tick(&reading.derived_temp, self.plant.battery_remaining, &self.limits, CONTROL_DT);
        events.extend(out.events);

        for ev in &events {
            if let ControllerEvent::FaultEntered(code) = ev {
                self.device_send(&Frame::fault_evt(*code), now);
            }
        }

        let battery_mv = self.params.battery_millivolts(self.plant.battery_remaining);
        let telemetry = if self.tick.is_multiple_of(TICKS_PER_SECOND) {
            let payload = TelemetryPayload::from_celsius(
                reading.derived_temp,
                battery_mv,
                self.controller.mode,
                self.controller.fault_code,
            );
            self.device_send(&Frame::telemetry(&payload), now);
            Some(TelemetryRecord::new(
                (self.tick / TICKS_PER_SECOND) as f64,
                reading.derived_temp,
                self.plant.zone_temps,
                out.duties,
                self.plant.battery_remaining,
                battery_mv,
                self.controller.mode,
                self.controller.fault_code,
            ))
        } else {
            None
        };

        let record = TickRecord {
            tick: self.tick,
            time: now,
            true_temps: self.plant.zone_temps,
            reading,
            duties: out.duties,
            mode: self.controller.mode,
            fault: self.controller.fault_code,
            battery_wh: self.plant.battery_remaining,
            events,
            telemetry,
        };

        self.plant = plant::step_plant(&self.plant, &out.duties, &self.params, PLANT_DT)?;
        self.tick += 1;
        Ok(record)
    }
}
