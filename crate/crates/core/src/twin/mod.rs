//! Orchestration: the twin engine, scenario runs, telemetry logs and the
//! client-facing socket service.

mod engine;
pub mod log;
mod scenario;
pub mod service;

use std::time::{Duration, Instant};

use thiserror::Error;

pub use engine::{SensorFault, SensorFaultKind, TickRecord, Twin, TwinSetup, TICKS_PER_SECOND};
pub use log::{read_log, write_log, CsvLogWriter, LogError, TelemetryLog, TelemetryRecord};
pub use scenario::{AppAction, CalibrateSpec, PlantSpec, ScenarioConfig, ScriptEntry, TimeMode, DEFAULT_PASSWORD};

use crate::controller::CONTROL_DT;
use crate::plant::{CalibrationError, PlantError};
use crate::protocol::{make_auth, Frame};
use crate::types::Level;

#[derive(Debug, Error)]
pub enum TwinError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("calibration failed: {0}")]
    Calibration(#[from] CalibrationError),
    #[error("plant: {0}")]
    Plant(#[from] PlantError),
    #[error("log: {0}")]
    Log(#[from] LogError),
    #[error("I/O: {0}")]
    Io(String),
}

/// Ties simulated time to the wall clock.
#[derive(Debug)]
pub struct Pacer {
    start: Instant,
    factor: Option<f64>,
}

impl Pacer {
    pub fn new(mode: TimeMode) -> Self {
        Self { start: Instant::now(), factor: mode.factor() }
    }

    /// Sleep until the wall clock catches up with `sim_time`.
    pub fn wait_until(&self, sim_time: f64) {
        if let Some(factor) = self.factor {
            let due = Duration::from_secs_f64(sim_time / factor);
            let elapsed = self.start.elapsed();
            if due > elapsed {
                std::thread::sleep(due - elapsed);
            }
        }
    }
}

/// A frame the simulated app received, with its arrival tick time.
#[derive(Debug, Clone, PartialEq)]
pub struct AppReceived {
    pub time: f64,
    pub frame: Frame,
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub log: TelemetryLog,
    pub app_received: Vec<AppReceived>,
}

/// The phone app as scripted by a scenario: it sends a heartbeat every
/// whole second while connected.
struct ScriptedApp {
    connected: bool,
    next: usize,
}

const SCRIPT_EPSILON: f64 = 1e-9;

/// Run a scenario, calling `on_tick` after every control tick.
pub fn run_scenario_with(
    config: &ScenarioConfig,
    mut on_tick: impl FnMut(&TickRecord),
) -> Result<ScenarioOutcome, TwinError> {
    config.validate()?;
    let mut twin = Twin::new(config.twin_setup()?)?;
    let pacer = Pacer::new(config.time_mode);
    let mut app = ScriptedApp { connected: true, next: 0 };
    let mut log = TelemetryLog::default();
    let mut app_received = Vec::new();

    let total_ticks = (config.duration_s / CONTROL_DT).round() as u64;
    for tick in 0..=total_ticks {
        let now = tick as f64 * CONTROL_DT;
        while let Some(entry) = config.script.get(app.next).filter(|e| e.t <= now + SCRIPT_EPSILON) {
            app.next += 1;
            perform(&mut twin, &mut app, entry);
        }
        if app.connected && tick.is_multiple_of(TICKS_PER_SECOND) {
            twin.app_send(&Frame::heartbeat(), now);
        }

        let record = twin.step()?;
        if let Some(row) = &record.telemetry {
            log.records.push(row.clone());
        }
        on_tick(&record);

        app_received.extend(twin.app_receive(now).into_iter().map(|frame| AppReceived { time: now, frame }));
        pacer.wait_until(now);
    }

    if let Some(path) = &config.log_path {
        write_log(path, &log)?;
    }
    Ok(ScenarioOutcome { log, app_received })
}

fn perform(twin: &mut Twin, app: &mut ScriptedApp, entry: &ScriptEntry) {
    let at = entry.t;
    let send = |twin: &mut Twin, app: &ScriptedApp, frame: Frame| {
        if app.connected {
            twin.app_send(&frame, at);
        }
    };
    match &entry.action {
        AppAction::Auth { password } => {
            // validated in ScenarioConfig::validate
            if let Ok(frame) = make_auth(password) {
                send(twin, app, frame);
            }
        }
        AppAction::SetLevel { level } => send(twin, app, Frame::set_level(*level)),
        AppAction::Off => send(twin, app, Frame::set_level(Level::Off)),
        AppAction::Disconnect => app.connected = false,
        AppAction::Connect => app.connected = true,
        AppAction::PowerCycle => twin.power_cycle(),
        AppAction::PowerOff => twin.power_off(),
    }
}

/// Run a scenario to completion and return its 1 Hz log, writing it to
/// `log_path` when one is configured.
pub fn run_scenario(config: &ScenarioConfig) -> Result<TelemetryLog, TwinError> {
    Ok(run_scenario_with(config, |_| {})?.log)
}
