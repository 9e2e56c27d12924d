//! Digital twin of a three-zone, battery-powered heat pad with Bluetooth
//! app control.
//!
//! - [`plant`]: lumped thermal model, thermistor sensing, battery, calibration
//! - [`controller`]: firmware regulation and safety interlocks
//! - [`protocol`]: framed device link format
//! - [`link`]: seeded lossy link simulation
//! - [`twin`]: scenario runs, telemetry logs, socket service
//! - [`report`]: heating-curve metrics
//! - [`cli`]: the `mima-twin` command line

// Negated float comparisons are used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod controller;
pub mod link;
pub mod plant;
pub mod protocol;
pub mod report;
pub mod twin;
pub mod types;

pub use controller::{ControllerState, SafetyLimits};
pub use plant::{PlantParams, PlantState};
pub use protocol::{Frame, FrameType};
pub use twin::{run_scenario, ScenarioConfig, TelemetryLog, TelemetryRecord};
pub use types::{FaultCode, Level, Mode};
