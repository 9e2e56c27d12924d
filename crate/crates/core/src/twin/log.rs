//! 1 Hz telemetry log and its CSV form.
//!
//! Header: `time_s,t1,t2,t3,true1,true2,true3,d1,d2,d3,batt_wh,batt_mv,mode,fault`.
//! Temperatures carry two decimals, duties three, battery energy four.
//! Records are quantised to that precision when built so a write/read cycle
//! returns equal values.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plant::{Duties, ZoneTemps};
use crate::types::{FaultCode, Mode};

pub const CSV_HEADER: [&str; 14] =
    ["time_s", "t1", "t2", "t3", "true1", "true2", "true3", "d1", "d2", "d3", "batt_wh", "batt_mv", "mode", "fault"];

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
}

fn quantize(v: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (v * scale).round() / scale
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub time_s: f64,
    /// Derived from the thermistor readings.
    pub zone_temps: ZoneTemps,
    /// Plant ground truth.
    pub true_temps: ZoneTemps,
    pub duties: Duties,
    pub battery_wh: f64,
    pub battery_mv: u16,
    pub mode: Mode,
    pub fault: FaultCode,
}

impl TelemetryRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        time_s: f64,
        zone_temps: ZoneTemps,
        true_temps: ZoneTemps,
        duties: Duties,
        battery_wh: f64,
        battery_mv: u16,
        mode: Mode,
        fault: FaultCode,
    ) -> Self {
        Self {
            time_s: quantize(time_s, 1),
            zone_temps: zone_temps.map(|t| quantize(t, 2)),
            true_temps: true_temps.map(|t| quantize(t, 2)),
            duties: duties.map(|d| quantize(d, 3)),
            battery_wh: quantize(battery_wh, 4),
            battery_mv,
            mode,
            fault,
        }
    }

    pub fn mean_temp(&self) -> f64 {
        self.zone_temps.iter().sum::<f64>() / self.zone_temps.len() as f64
    }

    fn to_fields(&self) -> Vec<String> {
        let mut f = vec![format!("{:.1}", self.time_s)];
        f.extend(self.zone_temps.iter().map(|t| format!("{t:.2}")));
        f.extend(self.true_temps.iter().map(|t| format!("{t:.2}")));
        f.extend(self.duties.iter().map(|d| format!("{d:.3}")));
        f.push(format!("{:.4}", self.battery_wh));
        f.push(self.battery_mv.to_string());
        f.push(self.mode.as_str().to_string());
        f.push(self.fault.as_str().to_string());
        f
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TelemetryLog {
    pub records: Vec<TelemetryRecord>,
}

impl TelemetryLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), LogError> {
        let mut w = CsvLogWriter::new(out)?;
        for r in &self.records {
            w.append(r)?;
        }
        w.flush()
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is ASCII")
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, LogError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = reader.headers()?.clone();
        if header.iter().ne(CSV_HEADER.iter().copied()) {
            return Err(LogError::Parse { line: 1, message: format!("unexpected header {:?}", header) });
        }
        let mut records = Vec::new();
        for row in reader.records() {
            let row = row?;
            let line = row.position().map_or(0, |p| p.line());
            let err = |message: String| LogError::Parse { line, message };
            if row.len() != CSV_HEADER.len() {
                return Err(err(format!("expected {} fields, got {}", CSV_HEADER.len(), row.len())));
            }
            let num = |i: usize| -> Result<f64, LogError> {
                row[i].trim().parse::<f64>().map_err(|e| err(format!("column {}: {e}", CSV_HEADER[i])))
            };
            let triple =
                |start: usize| -> Result<[f64; 3], LogError> { Ok([num(start)?, num(start + 1)?, num(start + 2)?]) };
            records.push(TelemetryRecord {
                time_s: num(0)?,
                zone_temps: triple(1)?,
                true_temps: triple(4)?,
                duties: triple(7)?,
                battery_wh: num(10)?,
                battery_mv: row[11].trim().parse().map_err(|e| err(format!("column batt_mv: {e}")))?,
                mode: row[12].trim().parse().map_err(err)?,
                fault: row[13].trim().parse().map_err(err)?,
            });
        }
        Ok(Self { records })
    }
}

/// Incremental CSV writer; the header goes out on construction.
pub struct CsvLogWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> CsvLogWriter<W> {
    pub fn new(out: W) -> Result<Self, LogError> {
        let mut inner = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        inner.write_record(CSV_HEADER)?;
        Ok(Self { inner })
    }

    pub fn append(&mut self, record: &TelemetryRecord) -> Result<(), LogError> {
        self.inner.write_record(record.to_fields())?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), LogError> {
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_log(path: &Path, log: &TelemetryLog) -> Result<(), LogError> {
    let file = File::create(path)?;
    log.write_csv(std::io::BufWriter::new(file))
}

pub fn read_log(path: &Path) -> Result<TelemetryLog, LogError> {
    TelemetryLog::read_csv(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(t: f64, temp: f64) -> TelemetryRecord {
        TelemetryRecord::new(
            t,
            [temp, temp + 0.123, temp - 0.456],
            [temp + 0.011, temp, temp],
            [1.0, 0.0, 0.5],
            26.123456,
            12_400,
            Mode::Heating,
            FaultCode::None,
        )
    }

    #[test]
    fn round_trip() {
        let log = TelemetryLog { records: (0..50).map(|i| record(f64::from(i), 30.0 + 0.37 * f64::from(i))).collect() };
        let back = TelemetryLog::read_csv(log.to_csv_string().as_bytes()).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn empty_log_is_header_only() {
        let s = TelemetryLog::default().to_csv_string();
        assert_eq!(s, format!("{}\n", CSV_HEADER.join(",")));
        assert!(TelemetryLog::read_csv(s.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn hand_built_file() {
        let text = "time_s,t1,t2,t3,true1,true2,true3,d1,d2,d3,batt_wh,batt_mv,mode,fault\n\
                    0.0,30.00,30.01,29.99,30.00,30.00,30.00,0.000,0.000,0.000,26.4000,12600,unpaired,none\n\
                    1.0,30.25,30.26,30.24,30.27,30.27,30.27,1.000,1.000,1.000,26.3870,12598,heating,none\n\
                    2.0,55.10,30.50,30.48,30.55,30.55,30.55,0.000,0.000,0.000,26.3741,12596,fault,over_temp\n";
        let log = TelemetryLog::read_csv(text.as_bytes()).unwrap();
        assert_eq!(log.len(), 3);
        let r = &log.records[2];
        assert_eq!(r.time_s, 2.0);
        assert_eq!(r.zone_temps, [55.10, 30.50, 30.48]);
        assert_eq!(r.battery_wh, 26.3741);
        assert_eq!(r.battery_mv, 12596);
        assert_eq!(r.mode, Mode::Fault);
        assert_eq!(r.fault, FaultCode::OverTemp);
        assert_eq!(log.records[1].duties, [1.0; 3]);
    }

    #[test]
    fn malformed_rows_report_line() {
        let text = "time_s,t1,t2,t3,true1,true2,true3,d1,d2,d3,batt_wh,batt_mv,mode,fault\n\
                    0.0,30.00,30.01,29.99,30.00,30.00,30.00,0.000,0.000,0.000,26.4000,12600,idle,none\n\
                    1.0,abc,30.01,29.99,30.00,30.00,30.00,0.000,0.000,0.000,26.4000,12600,idle,none\n";
        match TelemetryLog::read_csv(text.as_bytes()) {
            Err(LogError::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("t1"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad_mode = "time_s,t1,t2,t3,true1,true2,true3,d1,d2,d3,batt_wh,batt_mv,mode,fault\n\
                        0.0,30.00,30.01,29.99,30.00,30.00,30.00,0.000,0.000,0.000,26.4000,12600,toasting,none\n";
        assert!(matches!(TelemetryLog::read_csv(bad_mode.as_bytes()), Err(LogError::Parse { line: 2, .. })));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let log = TelemetryLog { records: vec![record(0.0, 30.0), record(1.0, 31.0)] };
        write_log(&path, &log).unwrap();
        assert_eq!(read_log(&path).unwrap(), log);
    }
}
