//! Vocabulary shared by the firmware, the wire format and the client API.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Off = 0,
    Low = 1,
    Medium = 2,
    High = 3,
}

impl Level {
    pub const ALL: [Level; 4] = [Level::Off, Level::Low, Level::Medium, Level::High];

    /// Regulation setpoint, °C. `None` for Off.
    pub fn target_temp(self) -> Option<f64> {
        match self {
            Level::Off => None,
            Level::Low => Some(40.0),
            Level::Medium => Some(45.0),
            Level::High => Some(50.0),
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        Self::ALL.get(usize::from(b)).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Off => "off",
            Level::Low => "low",
            Level::Medium => "medium",
            Level::High => "high",
        }
    }
}

impl FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|l| l.as_str().eq_ignore_ascii_case(s)).ok_or_else(|| format!("unknown level {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Boot = 0,
    Unpaired = 1,
    Idle = 2,
    Heating = 3,
    Fault = 4,
    Off = 5,
}

impl Mode {
    pub const ALL: [Mode; 6] = [Mode::Boot, Mode::Unpaired, Mode::Idle, Mode::Heating, Mode::Fault, Mode::Off];

    pub fn from_byte(b: u8) -> Option<Self> {
        Self::ALL.get(usize::from(b)).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Boot => "boot",
            Mode::Unpaired => "unpaired",
            Mode::Idle => "idle",
            Mode::Heating => "heating",
            Mode::Fault => "fault",
            Mode::Off => "off",
        }
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| format!("unknown mode {s:?}"))
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultCode {
    #[default]
    None = 0,
    OverTemp = 1,
    ZoneDivergence = 2,
    SensorRange = 3,
    LinkLost = 4,
    LowBattery = 5,
}

impl FaultCode {
    pub const ALL: [FaultCode; 6] = [
        FaultCode::None,
        FaultCode::OverTemp,
        FaultCode::ZoneDivergence,
        FaultCode::SensorRange,
        FaultCode::LinkLost,
        FaultCode::LowBattery,
    ];

    pub fn from_byte(b: u8) -> Option<Self> {
        Self::ALL.get(usize::from(b)).copied()
    }

    /// One bit per fault in the telemetry flags byte; `None` is 0.
    pub fn flag(self) -> u8 {
        match self {
            FaultCode::None => 0,
            other => 1 << (other as u8 - 1),
        }
    }

    pub fn from_flags(flags: u8) -> Self {
        Self::ALL[1..].iter().copied().find(|c| flags & c.flag() != 0).unwrap_or(FaultCode::None)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FaultCode::None => "none",
            FaultCode::OverTemp => "over_temp",
            FaultCode::ZoneDivergence => "zone_divergence",
            FaultCode::SensorRange => "sensor_range",
            FaultCode::LinkLost => "link_lost",
            FaultCode::LowBattery => "low_battery",
        }
    }
}

impl FromStr for FaultCode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| format!("unknown fault code {s:?}"))
    }
}

impl fmt::Display for FaultCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
