//! Command-line front end: `run`, `calibrate`, `report` and `serve`.
//!
//! Exit codes: 0 ok, 1 metric or infeasibility failure, 2 usage or I/O error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::plant::{
    calibrate_params, verify_calibration, CalibrationError, CalibrationOptions, CalibrationReport, CalibrationTargets,
};
use crate::report::{compute_report, ReportMetrics, ReportOptions};
use crate::twin::service::{self, DEFAULT_ADDR};
use crate::twin::{read_log, run_scenario, PlantSpec, ScenarioConfig, TimeMode, TwinError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mima-twin", version, about = "Heated-pad digital twin: simulate, calibrate, report, serve")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario file and write its 1 Hz telemetry log.
    Run(RunArgs),
    /// Fit plant parameters to heating-curve targets.
    Calibrate(CalibrateArgs),
    /// Compute heating metrics from a telemetry log.
    Report(ReportArgs),
    /// Serve the live twin over the line-delimited JSON socket API.
    Serve(ServeArgs),
}

#[derive(Debug, Args, Clone, Copy, Default)]
#[group(multiple = false)]
pub struct PaceArgs {
    /// Run N simulated seconds per wall second.
    #[arg(long, value_name = "N")]
    pub accel: Option<f64>,
    /// Run on the wall clock.
    #[arg(long)]
    pub realtime: bool,
}

impl PaceArgs {
    fn time_mode(&self) -> Option<TimeMode> {
        match (self.accel, self.realtime) {
            (Some(n), _) => Some(TimeMode::Accelerated(n)),
            (None, true) => Some(TimeMode::Realtime),
            _ => None,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub scenario: PathBuf,
    /// Replace the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replace the scenario duration, seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    #[command(flatten)]
    pub pace: PaceArgs,
    /// Log file; defaults to the scenario's `log_path` or `<scenario>.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Time to reach the hold temperature from ambient at full duty, s.
    #[arg(long, default_value_t = 95.0)]
    pub rise: f64,
    /// Hold temperature, °C.
    #[arg(long, default_value_t = 50.0)]
    pub hold: f64,
    /// Battery endurance at the hold, minutes.
    #[arg(long, default_value_t = 60.0)]
    pub endurance: f64,
    /// Ambient temperature, °C.
    #[arg(long, default_value_t = 30.0)]
    pub ambient: f64,
    /// Full-duty rise over the hold rise.
    #[arg(long)]
    pub headroom: Option<f64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub log: PathBuf,
    /// Hold target, °C.
    #[arg(long, default_value_t = 50.0)]
    pub target: f64,
    /// Steady window start, s. Defaults to 300 s when the log is long enough.
    #[arg(long)]
    pub window_start: Option<f64>,
    /// Steady window end, s. Defaults to the end of the log.
    #[arg(long, requires = "window_start")]
    pub window_end: Option<f64>,
    /// Print JSON instead of the table.
    #[arg(long)]
    pub json: bool,
    /// Also write the JSON metrics to this file.
    #[arg(long)]
    pub json_out: Option<PathBuf>,
    /// Exit 1 when the hold MAD exceeds this, °C.
    #[arg(long)]
    pub max_mad: Option<f64>,
    /// Exit 1 when any logged temperature exceeds this, °C.
    #[arg(long)]
    pub max_temp: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Scenario supplying plant, link and limits; the script is ignored.
    pub scenario: Option<PathBuf>,
    #[arg(long, env = service::ADDR_ENV, default_value = DEFAULT_ADDR)]
    pub addr: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub pace: PaceArgs,
    /// Incremental CSV log.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Calibration output: a `plant` block usable verbatim in a scenario file,
/// plus the inputs and the re-measured targets.
#[derive(Debug, Serialize)]
pub struct CalibrationFile {
    pub plant: PlantSpec,
    pub targets: CalibrationTargets,
    pub options: CalibrationOptions,
    pub verification: CalibrationReport,
}

/// Parse `args` (program name first) and execute; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a, out),
        Command::Calibrate(a) => cmd_calibrate(&a, out),
        Command::Report(a) => cmd_report(&a, out),
        Command::Serve(a) => cmd_serve(&a),
    };
    match result {
        Ok(code) => code,
        Err(Failure { code, message }) => {
            let _ = writeln!(err, "error: {message}");
            code
        }
    }
}

/// Process entry point.
pub fn main() -> i32 {
    run(std::env::args_os(), &mut std::io::stdout(), &mut std::io::stderr())
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: message.into() }
}

fn failure(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_FAILURE, message: message.into() }
}

impl From<TwinError> for Failure {
    fn from(e: TwinError) -> Self {
        match e {
            TwinError::Calibration(c) => failure(infeasible_message(&c)),
            TwinError::Plant(_) => failure(format!("run aborted: {e}")),
            TwinError::Config(_) | TwinError::Log(_) | TwinError::Io(_) => usage(e.to_string()),
        }
    }
}

fn infeasible_message(e: &CalibrationError) -> String {
    match e {
        CalibrationError::Infeasible { constraint, detail } => format!("infeasible {constraint} target: {detail}"),
        other => other.to_string(),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let mut cfg = ScenarioConfig::load(&a.scenario)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(d) = a.duration {
        cfg.duration_s = d;
    }
    if let Some(mode) = a.pace.time_mode() {
        cfg.time_mode = mode;
    }
    let log_path = match (&a.out, &cfg.log_path) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => p.clone(),
        (None, None) => a.scenario.with_extension("csv"),
    };
    cfg.log_path = Some(log_path.clone());
    cfg.validate()?;

    let log = run_scenario(&cfg)?;
    let target = cfg.highest_target().unwrap_or(50.0);
    let m = compute_report(&log, &ReportOptions::new(target)).map_err(|e| failure(e.to_string()))?;
    let name = cfg.name.as_deref().unwrap_or("scenario");
    let _ = writeln!(out, "{name}: {} log={}", summary(&m), log_path.display());
    Ok(EXIT_OK)
}

fn summary(m: &ReportMetrics) -> String {
    let rise = m.rise_time_s.map_or("n/a".into(), |r| format!("{r:.2}s"));
    let mad = m.hold_mad_c.map_or("n/a".into(), |v| format!("{v:.3}C"));
    let faults = if m.fault_timeline.is_empty() {
        "none".to_string()
    } else {
        m.fault_timeline.iter().map(|f| format!("{}@{:.1}s", f.code, f.time_s)).collect::<Vec<_>>().join(",")
    };
    format!(
        "target={:.1}C rise_time={rise} hold_mad={mad} max_temp={:.2}C endurance={:.2}min{} faults={faults}",
        m.target_c,
        m.max_temp_c,
        m.endurance_min,
        if m.depleted { "(depleted)" } else { "" },
    )
}

fn cmd_calibrate(a: &CalibrateArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let targets = CalibrationTargets {
        rise_time_s: a.rise,
        hold_temp_c: a.hold,
        endurance_min: a.endurance,
        ambient_c: a.ambient,
    };
    let mut options = CalibrationOptions::default();
    if let Some(h) = a.headroom {
        options.headroom = h;
    }
    let params = calibrate_params(&targets, &options).map_err(|e| failure(infeasible_message(&e)))?;
    let verification = verify_calibration(&params, &targets);
    let file = CalibrationFile { plant: PlantSpec::Params(params), targets, options, verification };
    let text = serde_json::to_string_pretty(&file).expect("calibration serialises") + "\n";
    match &a.out {
        Some(p) => write_file(p, &text)?,
        None => {
            let _ = out.write_all(text.as_bytes());
        }
    }
    if verification.all_ok() {
        Ok(EXIT_OK)
    } else {
        Err(failure("calibrated parameters miss a target in verification"))
    }
}

fn cmd_report(a: &ReportArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let log = read_log(&a.log).map_err(|e| usage(format!("{}: {e}", a.log.display())))?;
    let opts = ReportOptions { target_c: a.target, window: a.window_start.map(|s| (s, a.window_end)) };
    let m = compute_report(&log, &opts).map_err(|e| usage(e.to_string()))?;
    let json = m.to_json();
    if a.json {
        let _ = writeln!(out, "{json}");
    } else {
        let _ = write!(out, "{m}");
    }
    if let Some(p) = &a.json_out {
        write_file(p, &(json + "\n"))?;
    }
    if let (Some(limit), Some(mad)) = (a.max_mad, m.hold_mad_c) {
        if mad > limit {
            return Err(failure(format!("hold MAD {mad:.3} °C exceeds {limit} °C")));
        }
    }
    if let Some(limit) = a.max_temp {
        if m.max_temp_c > limit {
            return Err(failure(format!("max temperature {:.2} °C exceeds {limit} °C", m.max_temp_c)));
        }
    }
    Ok(EXIT_OK)
}

fn cmd_serve(a: &ServeArgs) -> Result<i32, Failure> {
    let mut cfg = match &a.scenario {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::canonical_high(1.0),
    };
    cfg.script.clear();
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = a.pace.time_mode() {
        cfg.time_mode = mode;
    }
    if a.out.is_some() {
        cfg.log_path = a.out.clone();
    }
    let rt = tokio::runtime::Runtime::new().map_err(|e| usage(format!("runtime: {e}")))?;
    rt.block_on(service::serve(cfg, &a.addr))?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("mima-twin").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(call(&[]).0, EXIT_USAGE);
        assert_eq!(call(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(call(&["run", "x.json", "--accel", "10", "--realtime"]).0, EXIT_USAGE);
        assert_eq!(call(&["--help"]).0, EXIT_OK);
    }

    #[test]
    fn missing_scenario_exit_2() {
        let (code, _, err) = call(&["run", "/nonexistent/scenario.json"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("/nonexistent/scenario.json"), "{err}");
    }

    #[test]
    fn infeasible_calibration_exit_1() {
        let (code, _, err) = call(&["calibrate", "--rise", "95", "--endurance", "1"]);
        assert_eq!(code, EXIT_FAILURE);
        assert!(err.contains("endurance"), "{err}");
    }
}
