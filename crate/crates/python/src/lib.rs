//! Python bindings for `mima_twin`.
//!
//! Structured results cross the boundary as Python objects built from the
//! crate's JSON forms, so field names match the CLI and scenario files.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use mima_twin::controller::{ControllerEvent, CONTROL_DT};
use mima_twin::plant::{calibrate_params, verify_calibration, CalibrationOptions, CalibrationTargets, Thermistor};
use mima_twin::protocol::{self, PasswordStore};
use mima_twin::report::{compute_report, ReportOptions};
use mima_twin::{ControllerState, Frame, FrameType, Level, SafetyLimits, ScenarioConfig, TelemetryLog};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_level(level: &str) -> PyResult<Level> {
    level.parse().map_err(value_error)
}

/// Fit per-zone R, C and max power to heating-curve targets. Returns a dict
/// with `params` and the simulated `verification`.
#[pyfunction]
#[pyo3(signature = (rise_time_s=95.0, hold_temp_c=50.0, endurance_min=60.0, ambient_c=30.0, headroom=None))]
fn calibrate<'py>(
    py: Python<'py>,
    rise_time_s: f64,
    hold_temp_c: f64,
    endurance_min: f64,
    ambient_c: f64,
    headroom: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let targets = CalibrationTargets { rise_time_s, hold_temp_c, endurance_min, ambient_c };
    let mut opts = CalibrationOptions::default();
    if let Some(h) = headroom {
        opts.headroom = h;
    }
    let params = calibrate_params(&targets, &opts).map_err(value_error)?;
    let out = serde_json::json!({
        "params": params,
        "verification": verify_calibration(&params, &targets),
    });
    json_to_py(py, &out.to_string())
}

/// ADC counts for a temperature on the default NTC divider.
#[pyfunction]
fn thermistor_counts(temp_c: f64) -> u16 {
    Thermistor::default().counts(temp_c)
}

/// Temperature derived from ADC counts on the default NTC divider.
#[pyfunction]
fn thermistor_temp(counts: u16) -> f64 {
    Thermistor::default().derived_temp(counts)
}

/// Encode a frame from its type byte and payload.
#[pyfunction]
fn encode_frame<'py>(py: Python<'py>, frame_type: u8, payload: &[u8]) -> PyResult<Bound<'py, PyBytes>> {
    let t = FrameType::from_byte(frame_type).ok_or_else(|| value_error(format!("unknown frame type {frame_type}")))?;
    let frame = Frame::new(t, payload.to_vec()).map_err(value_error)?;
    Ok(PyBytes::new(py, &protocol::encode_frame(&frame)))
}

#[pyfunction]
fn auth_frame<'py>(py: Python<'py>, password: &str) -> PyResult<Bound<'py, PyBytes>> {
    let frame = protocol::make_auth(password).map_err(value_error)?;
    Ok(PyBytes::new(py, &protocol::encode_frame(&frame)))
}

#[pyfunction]
fn set_level_frame<'py>(py: Python<'py>, level: &str) -> PyResult<Bound<'py, PyBytes>> {
    Ok(PyBytes::new(py, &protocol::encode_frame(&Frame::set_level(parse_level(level)?))))
}

#[pyfunction]
fn heartbeat_frame<'py>(py: Python<'py>) -> Bound<'py, PyBytes> {
    PyBytes::new(py, &protocol::encode_frame(&Frame::heartbeat()))
}

/// Decode every frame in `data`: list of `(type, payload)` pairs.
#[pyfunction]
fn decode_stream<'py>(py: Python<'py>, data: &[u8]) -> Vec<(u8, Bound<'py, PyBytes>)> {
    protocol::decode_stream(data).frames.iter().map(|f| (f.frame_type() as u8, PyBytes::new(py, f.payload()))).collect()
}

/// Run a scenario given as JSON text; returns the telemetry CSV.
#[pyfunction]
fn run_scenario_json(py: Python<'_>, scenario: &str) -> PyResult<String> {
    let cfg = ScenarioConfig::from_json(scenario).map_err(value_error)?;
    let log = py.detach(|| mima_twin::run_scenario(&cfg)).map_err(value_error)?;
    Ok(log.to_csv_string())
}

/// Heating metrics for a telemetry CSV.
#[pyfunction]
#[pyo3(signature = (csv, target_c=50.0, window_start=None, window_end=None))]
fn report<'py>(
    py: Python<'py>,
    csv: &str,
    target_c: f64,
    window_start: Option<f64>,
    window_end: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let log = TelemetryLog::read_csv(csv.as_bytes()).map_err(value_error)?;
    let opts = ReportOptions { target_c, window: window_start.map(|s| (s, window_end)) };
    let m = compute_report(&log, &opts).map_err(value_error)?;
    json_to_py(py, &m.to_json())
}

/// The device state machine, driven by encoded frames and sensor readings.
#[pyclass(module = "mima_twin_py")]
struct Controller {
    state: ControllerState,
    store: PasswordStore,
    limits: SafetyLimits,
}

#[pymethods]
impl Controller {
    #[new]
    #[pyo3(signature = (password="mima1234"))]
    fn new(password: &str) -> PyResult<Self> {
        Ok(Self {
            state: ControllerState::boot(),
            store: PasswordStore::new(password).map_err(value_error)?,
            limits: SafetyLimits::default(),
        })
    }

    /// Feed raw bytes from the app; returns the encoded replies.
    fn receive<'py>(&mut self, py: Python<'py>, data: &[u8]) -> Vec<Bound<'py, PyBytes>> {
        protocol::decode_stream(data)
            .frames
            .iter()
            .flat_map(|f| self.state.apply_command(f, &self.store))
            .map(|r| PyBytes::new(py, &protocol::encode_frame(&r)))
            .collect()
    }

    /// One watchdog step; returns `"fault:<code>"`, `"pairing_dropped"` or None.
    #[pyo3(signature = (dt=CONTROL_DT))]
    fn watchdog_tick(&mut self, dt: f64) -> Option<String> {
        self.state.watchdog_tick(dt, &self.limits).map(event_name)
    }

    /// One control step; returns the zone duties.
    #[pyo3(signature = (temps, battery_wh, dt=CONTROL_DT))]
    fn control_tick(&mut self, temps: [f64; 3], battery_wh: f64, dt: f64) -> [f64; 3] {
        self.state.control_tick(&temps, battery_wh, &self.limits, dt).duties
    }

    fn power_cycle(&mut self) {
        self.state.reset_to_boot();
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.state.mode.as_str()
    }

    #[getter]
    fn fault(&self) -> &'static str {
        self.state.fault_code.as_str()
    }

    #[getter]
    fn level(&self) -> &'static str {
        self.state.active_preset.as_str()
    }

    #[getter]
    fn paired(&self) -> bool {
        self.state.paired
    }

    #[getter]
    fn duties(&self) -> [f64; 3] {
        self.state.duties
    }

    fn __repr__(&self) -> String {
        format!("Controller(mode={}, level={}, fault={})", self.mode(), self.level(), self.fault())
    }
}

fn event_name(ev: ControllerEvent) -> String {
    match ev {
        ControllerEvent::FaultEntered(code) => format!("fault:{code}"),
        ControllerEvent::PairingDropped => "pairing_dropped".to_string(),
    }
}

#[pymodule]
pub fn mima_twin_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(thermistor_counts, m)?)?;
    m.add_function(wrap_pyfunction!(thermistor_temp, m)?)?;
    m.add_function(wrap_pyfunction!(encode_frame, m)?)?;
    m.add_function(wrap_pyfunction!(auth_frame, m)?)?;
    m.add_function(wrap_pyfunction!(set_level_frame, m)?)?;
    m.add_function(wrap_pyfunction!(heartbeat_frame, m)?)?;
    m.add_function(wrap_pyfunction!(decode_stream, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario_json, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    m.add_class::<Controller>()?;
    Ok(())
}
