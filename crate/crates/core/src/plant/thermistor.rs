//! NTC thermistor in a resistive divider read by a 10-bit ADC.
//!
//! The thermistor sits on the supply side of the divider and the fixed
//! resistor on the ground side, so the ADC reading rises with temperature:
//!
//! ```text
//! counts = round(1023 * R_fixed / (R_fixed + R(T)))
//! R(T)   = R0 * exp(B * (1/T - 1/T0))        (T in kelvin)
//! ```

use serde::{Deserialize, Serialize};

pub const ADC_MAX: u16 = 1023;

const KELVIN_OFFSET: f64 = 273.15;

/// Lowest temperature the sensing chain is characterised for.
pub const SENSE_MIN_C: f64 = -20.0;
/// Highest temperature the sensing chain is characterised for.
pub const SENSE_MAX_C: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thermistor {
    /// Resistance at `nominal_temp_c`, ohms.
    pub nominal_resistance: f64,
    pub nominal_temp_c: f64,
    /// Beta constant, kelvin.
    pub beta: f64,
    /// Fixed divider resistor, ohms.
    pub fixed_resistance: f64,
}

impl Default for Thermistor {
    /// NTC-103 part: 10 kOhm at 25 °C, B = 3950 K, on a 10 kOhm divider.
    fn default() -> Self {
        Self { nominal_resistance: 10_000.0, nominal_temp_c: 25.0, beta: 3950.0, fixed_resistance: 10_000.0 }
    }
}

impl Thermistor {
    pub fn resistance(&self, temp_c: f64) -> f64 {
        let t = temp_c + KELVIN_OFFSET;
        let t0 = self.nominal_temp_c + KELVIN_OFFSET;
        self.nominal_resistance * (self.beta * (1.0 / t - 1.0 / t0)).exp()
    }

    /// Inverse of [`Thermistor::resistance`].
    pub fn temperature(&self, resistance: f64) -> f64 {
        let t0 = self.nominal_temp_c + KELVIN_OFFSET;
        let inv_t = 1.0 / t0 + (resistance / self.nominal_resistance).ln() / self.beta;
        1.0 / inv_t - KELVIN_OFFSET
    }

    pub fn counts_for_resistance(&self, resistance: f64) -> u16 {
        let ratio = self.fixed_resistance / (self.fixed_resistance + resistance);
        let counts = (f64::from(ADC_MAX) * ratio).round();
        counts.clamp(0.0, f64::from(ADC_MAX)) as u16
    }

    /// Resistance implied by an ADC reading. The rails (0 and 1023) map to
    /// open and short circuits, so they are pulled in by one count.
    pub fn resistance_for_counts(&self, counts: u16) -> f64 {
        let c = f64::from(counts.clamp(1, ADC_MAX - 1));
        self.fixed_resistance * (f64::from(ADC_MAX) / c - 1.0)
    }

    pub fn counts(&self, temp_c: f64) -> u16 {
        self.counts_for_resistance(self.resistance(temp_c))
    }

    pub fn derived_temp(&self, counts: u16) -> f64 {
        self.temperature(self.resistance_for_counts(counts))
    }
}
