//! Heating-curve metrics computed from a telemetry log.
//!
//! The pad temperature at a sample is the mean of the three derived zone
//! readings. Hold quality pools every zone reading in the window.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::twin::TelemetryLog;
use crate::types::FaultCode;

/// Start of the default steady window, seconds.
pub const DEFAULT_WINDOW_START_S: f64 = 300.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("window [{start}, {end}] s lies outside the log range [{first}, {last}] s")]
    WindowOutOfRange { start: f64, end: f64, first: f64, last: f64 },
    #[error("log is empty")]
    EmptyLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub target_c: f64,
    /// Explicit steady window; `None` uses `[300 s, end]` when the log is
    /// long enough and skips the hold metric otherwise.
    pub window: Option<(f64, Option<f64>)>,
}

impl ReportOptions {
    pub fn new(target_c: f64) -> Self {
        Self { target_c, window: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultEntry {
    pub time_s: f64,
    pub code: FaultCode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetrics {
    pub target_c: f64,
    /// First upward crossing of the target, interpolated between samples.
    pub rise_time_s: Option<f64>,
    /// Mean absolute deviation from the target over the steady window.
    pub hold_mad_c: Option<f64>,
    pub window: Option<(f64, f64)>,
    /// Highest derived or true zone temperature in the log.
    pub max_temp_c: f64,
    /// Time to battery exhaustion, or to the end of the log.
    pub endurance_min: f64,
    pub depleted: bool,
    pub fault_timeline: Vec<FaultEntry>,
}

impl ReportMetrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metrics serialise")
    }
}

impl fmt::Display for ReportMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>, unit: &str| v.map_or("n/a".to_string(), |v| format!("{v:.2} {unit}"));
        writeln!(f, "{:<16} {:.2} °C", "target", self.target_c)?;
        writeln!(f, "{:<16} {}", "rise time", opt(self.rise_time_s, "s"))?;
        let window = self.window.map_or(String::new(), |(a, b)| format!("  [{a:.0}, {b:.0}] s"));
        writeln!(f, "{:<16} {}{window}", "hold MAD", opt(self.hold_mad_c, "°C"))?;
        writeln!(f, "{:<16} {:.2} °C", "max temp", self.max_temp_c)?;
        let tag = if self.depleted { "depleted" } else { "end of log" };
        writeln!(f, "{:<16} {:.2} min ({tag})", "endurance", self.endurance_min)?;
        if self.fault_timeline.is_empty() {
            writeln!(f, "{:<16} none", "faults")?;
        }
        for e in &self.fault_timeline {
            writeln!(f, "{:<16} {:.1} s {}", "fault", e.time_s, e.code)?;
        }
        Ok(())
    }
}

/// Linear-interpolated time at which the pad mean first rises through
/// `target_c`.
pub fn rise_time(log: &TelemetryLog, target_c: f64) -> Option<f64> {
    log.records.windows(2).find_map(|w| {
        let (a, b) = (&w[0], &w[1]);
        let (ya, yb) = (a.mean_temp(), b.mean_temp());
        (ya < target_c && yb >= target_c).then(|| a.time_s + (target_c - ya) / (yb - ya) * (b.time_s - a.time_s))
    })
}

pub fn compute_report(log: &TelemetryLog, opts: &ReportOptions) -> Result<ReportMetrics, ReportError> {
    let (first, last) = match (log.records.first(), log.records.last()) {
        (Some(f), Some(l)) => (f.time_s, l.time_s),
        _ => return Err(ReportError::EmptyLog),
    };

    let window = match opts.window {
        Some((start, end)) => {
            let end = end.unwrap_or(last);
            if start < first || end > last || start >= end {
                return Err(ReportError::WindowOutOfRange { start, end, first, last });
            }
            Some((start, end))
        }
        None => {
            (DEFAULT_WINDOW_START_S >= first && DEFAULT_WINDOW_START_S < last).then_some((DEFAULT_WINDOW_START_S, last))
        }
    };

    let hold_mad_c = window.map(|(start, end)| {
        let (sum, n) = log
            .records
            .iter()
            .filter(|r| r.time_s >= start && r.time_s <= end)
            .flat_map(|r| r.zone_temps)
            .fold((0.0, 0usize), |(s, n), t| (s + (t - opts.target_c).abs(), n + 1));
        sum / n as f64
    });

    let max_temp_c =
        log.records.iter().flat_map(|r| r.zone_temps.into_iter().chain(r.true_temps)).fold(f64::NEG_INFINITY, f64::max);

    let exhausted = log.records.iter().find(|r| r.battery_wh <= 0.0 || r.fault == FaultCode::LowBattery);
    let (endurance_s, depleted) = match exhausted {
        Some(r) => (r.time_s, true),
        None => (last, false),
    };

    let mut fault_timeline = Vec::new();
    let mut prev = FaultCode::None;
    for r in &log.records {
        if r.fault != prev && r.fault != FaultCode::None {
            fault_timeline.push(FaultEntry { time_s: r.time_s, code: r.fault });
        }
        prev = r.fault;
    }

    Ok(ReportMetrics {
        target_c: opts.target_c,
        rise_time_s: rise_time(log, opts.target_c),
        hold_mad_c,
        window,
        max_temp_c,
        endurance_min: endurance_s / 60.0,
        depleted,
        fault_timeline,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twin::TelemetryRecord;
    use crate::types::Mode;

    fn log_from(temps: impl IntoIterator<Item = (f64, f64)>) -> TelemetryLog {
        TelemetryLog {
            records: temps
                .into_iter()
                .map(|(t, temp)| {
                    TelemetryRecord::new(
                        t,
                        [temp; 3],
                        [temp; 3],
                        [0.0; 3],
                        20.0,
                        12_000,
                        Mode::Heating,
                        FaultCode::None,
                    )
                })
                .collect(),
        }
    }

    #[test]
    fn linear_ramp_rise_time() {
        // 30 -> 50 over 100 s, then flat; crossing lands exactly on t = 100.
        let log = log_from((0..=200).map(|i| {
            let t = f64::from(i);
            (t, if i <= 100 { 30.0 + 0.2 * t } else { 50.0 })
        }));
        let m = compute_report(&log, &ReportOptions::new(50.0)).unwrap();
        assert!((m.rise_time_s.unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn interpolates_between_samples() {
        let log = log_from([(0.0, 49.0), (1.0, 49.5), (2.0, 50.5)]);
        assert!((rise_time(&log, 50.0).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn all_off_run() {
        let log = log_from((0..=400).map(|i| (f64::from(i), 30.0)));
        let m = compute_report(&log, &ReportOptions::new(50.0)).unwrap();
        assert_eq!(m.rise_time_s, None);
        // about ambient when asked
        let m = compute_report(&log, &ReportOptions { target_c: 30.0, window: Some((0.0, None)) }).unwrap();
        assert_eq!(m.hold_mad_c, Some(0.0));
        assert!(!m.depleted);
        assert!((m.endurance_min - 400.0 / 60.0).abs() < 1e-12);
    }

    #[test]
    fn mad_over_window() {
        // alternating 49.5 / 50.5 -> MAD 0.5
        let log = log_from((0..=600).map(|i| (f64::from(i), if i % 2 == 0 { 49.5 } else { 50.5 })));
        let m = compute_report(&log, &ReportOptions::new(50.0)).unwrap();
        assert!((m.hold_mad_c.unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(m.window, Some((300.0, 600.0)));
        assert_eq!(m.max_temp_c, 50.5);
    }

    #[test]
    fn window_outside_log_is_an_error() {
        let log = log_from((0..=100).map(|i| (f64::from(i), 30.0)));
        let opts = ReportOptions { target_c: 50.0, window: Some((300.0, None)) };
        assert!(matches!(compute_report(&log, &opts), Err(ReportError::WindowOutOfRange { .. })));
        let opts = ReportOptions { target_c: 50.0, window: Some((10.0, Some(200.0))) };
        assert!(compute_report(&log, &opts).is_err());
        // default window silently skipped on short logs
        let m = compute_report(&log, &ReportOptions::new(50.0)).unwrap();
        assert_eq!(m.hold_mad_c, None);
        assert_eq!(compute_report(&TelemetryLog::default(), &ReportOptions::new(50.0)), Err(ReportError::EmptyLog));
    }

    #[test]
    fn fault_timeline_and_depletion() {
        let mut log = log_from((0..10).map(|i| (f64::from(i), 40.0)));
        log.records[3].fault = FaultCode::LinkLost;
        log.records[4].fault = FaultCode::LinkLost;
        log.records[7].battery_wh = 0.0;
        let m = compute_report(&log, &ReportOptions::new(50.0)).unwrap();
        assert_eq!(m.fault_timeline, vec![FaultEntry { time_s: 3.0, code: FaultCode::LinkLost }]);
        assert!(m.depleted);
        assert!((m.endurance_min - 7.0 / 60.0).abs() < 1e-12);
    }

    #[test]
    fn json_is_stable() {
        let log = log_from((0..=400).map(|i| (f64::from(i), 30.0 + f64::from(i) * 0.1)));
        let a = compute_report(&log, &ReportOptions::new(50.0)).unwrap().to_json();
        let b = compute_report(&log, &ReportOptions::new(50.0)).unwrap().to_json();
        assert_eq!(a, b);
    }
}
