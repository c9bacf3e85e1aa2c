//! Fresnel geometry, the two-anchor range model and LoRa time-on-air.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;
pub const DEFAULT_FREQUENCY_HZ: f64 = 915e6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkError {
    #[error("obstruction distances must be non-negative with a positive sum")]
    DegenerateGeometry,
    #[error("spreading factor {0} outside 7..=12")]
    InvalidSpreadingFactor(u8),
    #[error("invalid airtime parameters: {0}")]
    InvalidAirtime(String),
    #[error("invalid link model: {0}")]
    InvalidModel(String),
}

pub fn wavelength_m(frequency_hz: f64) -> f64 {
    SPEED_OF_LIGHT_M_S / frequency_hz
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry {
    pub wavelength_m: f64,
    /// Obstruction to first antenna, metres.
    pub d1_m: f64,
    /// Obstruction to second antenna, metres.
    pub d2_m: f64,
}

impl LinkGeometry {
    pub fn at_915mhz(d1_m: f64, d2_m: f64) -> Self {
        Self { wavelength_m: wavelength_m(DEFAULT_FREQUENCY_HZ), d1_m, d2_m }
    }
}

/// First Fresnel zone radius at the obstruction point.
pub fn fresnel_radius(geom: &LinkGeometry) -> Result<f64, LinkError> {
    let LinkGeometry { wavelength_m, d1_m, d2_m } = *geom;
    if !(d1_m >= 0.0 && d2_m >= 0.0) || !(d1_m + d2_m > 0.0) || !(wavelength_m > 0.0) {
        return Err(LinkError::DegenerateGeometry);
    }
    Ok((wavelength_m * d1_m * d2_m / (d1_m + d2_m)).sqrt())
}

/// Range model anchored on the measured clear and in-canopy limits.
/// Success probability is 1 inside `range − rolloff`, falls linearly to 0
/// at `range`, and is 0 beyond. A zero rolloff is a hard step that still
/// passes at exactly `range`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkModel {
    pub tx_power_dbm: f64,
    pub clear_los_range_m: f64,
    pub canopy_range_m: f64,
    pub rolloff_width_m: f64,
}

impl Default for LinkModel {
    fn default() -> Self {
        Self {
            tx_power_dbm: 2.0,
            clear_los_range_m: 1000.0,
            canopy_range_m: 250.0,
            rolloff_width_m: 0.0,
        }
    }
}

impl LinkModel {
    pub fn validate(&self) -> Result<(), LinkError> {
        if !(self.canopy_range_m > 0.0 && self.canopy_range_m < self.clear_los_range_m) {
            return Err(LinkError::InvalidModel("need 0 < canopy_range < clear_los_range".into()));
        }
        if !(self.rolloff_width_m >= 0.0) || !self.clear_los_range_m.is_finite() {
            return Err(LinkError::InvalidModel("rolloff must be >= 0".into()));
        }
        Ok(())
    }

    pub fn range_m(&self, in_canopy: bool) -> f64 {
        if in_canopy {
            self.canopy_range_m
        } else {
            self.clear_los_range_m
        }
    }

    pub fn success_probability(&self, distance_m: f64, in_canopy: bool) -> f64 {
        let range = self.range_m(in_canopy);
        if self.rolloff_width_m <= 0.0 {
            return if distance_m <= range { 1.0 } else { 0.0 };
        }
        let inner = range - self.rolloff_width_m;
        if distance_m <= inner {
            1.0
        } else if distance_m >= range {
            0.0
        } else {
            (range - distance_m) / self.rolloff_width_m
        }
    }

    /// Draws from `rng` only when the outcome is uncertain.
    pub fn packet_success<R: Rng + ?Sized>(&self, distance_m: f64, in_canopy: bool, rng: &mut R) -> bool {
        let p = self.success_probability(distance_m, in_canopy);
        if p >= 1.0 {
            true
        } else if p <= 0.0 {
            false
        } else {
            rng.random::<f64>() < p
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CodingRate {
    #[serde(rename = "4/5")]
    Cr45,
    #[serde(rename = "4/6")]
    Cr46,
    #[serde(rename = "4/7")]
    Cr47,
    #[serde(rename = "4/8")]
    Cr48,
}

impl CodingRate {
    pub fn denominator(&self) -> u32 {
        match self {
            CodingRate::Cr45 => 5,
            CodingRate::Cr46 => 6,
            CodingRate::Cr47 => 7,
            CodingRate::Cr48 => 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AirtimeParams {
    pub spreading_factor: u8,
    pub coding_rate: CodingRate,
    pub bandwidth_hz: f64,
    pub payload_bytes: u32,
    pub preamble_symbols: u32,
    pub explicit_header: bool,
    pub low_data_rate_optimize: bool,
}

impl Default for AirtimeParams {
    fn default() -> Self {
        Self {
            spreading_factor: 7,
            coding_rate: CodingRate::Cr45,
            bandwidth_hz: 125_000.0,
            payload_bytes: 9,
            preamble_symbols: 8,
            explicit_header: true,
            low_data_rate_optimize: false,
        }
    }
}

impl AirtimeParams {
    pub fn with_payload(self, payload_bytes: u32) -> Self {
        Self { payload_bytes, ..self }
    }

    pub fn with_sf(self, spreading_factor: u8) -> Self {
        Self { spreading_factor, ..self }
    }

    pub fn symbol_time_ms(&self) -> f64 {
        2f64.powi(i32::from(self.spreading_factor)) / self.bandwidth_hz * 1000.0
    }

    /// Symbols after the preamble, including the 8 fixed header symbols.
    pub fn payload_symbols(&self) -> Result<u32, LinkError> {
        self.check()?;
        let sf = i64::from(self.spreading_factor);
        let pl = i64::from(self.payload_bytes);
        let h = i64::from(!self.explicit_header);
        let de = i64::from(self.low_data_rate_optimize);
        let num = 8 * pl - 4 * sf + 28 + 16 - 20 * h;
        let den = 4 * (sf - 2 * de);
        let blocks = if num <= 0 { 0 } else { (num + den - 1) / den };
        Ok(8 + (blocks * i64::from(self.coding_rate.denominator())).max(0) as u32)
    }

    fn check(&self) -> Result<(), LinkError> {
        if !(7..=12).contains(&self.spreading_factor) {
            return Err(LinkError::InvalidSpreadingFactor(self.spreading_factor));
        }
        if self.payload_bytes == 0 || self.payload_bytes > 255 {
            return Err(LinkError::InvalidAirtime("payload must be 1..=255 bytes".into()));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(LinkError::InvalidAirtime("bandwidth must be > 0".into()));
        }
        Ok(())
    }
}

/// LoRa packet duration in milliseconds (CRC on).
pub fn time_on_air(p: &AirtimeParams) -> Result<f64, LinkError> {
    let symbols = p.payload_symbols()?;
    Ok((f64::from(p.preamble_symbols) + 4.25 + f64::from(symbols)) * p.symbol_time_ms())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fresnel_examples() {
        let mid = fresnel_radius(&LinkGeometry::at_915mhz(500.0, 500.0)).unwrap();
        assert!((mid - 9.05).abs() < 0.01, "{mid}");
        assert_eq!(fresnel_radius(&LinkGeometry::at_915mhz(0.0, 800.0)).unwrap(), 0.0);
        let a = fresnel_radius(&LinkGeometry::at_915mhz(120.0, 880.0)).unwrap();
        let b = fresnel_radius(&LinkGeometry::at_915mhz(880.0, 120.0)).unwrap();
        assert_eq!(a, b);
        assert!(fresnel_radius(&LinkGeometry::at_915mhz(0.0, 0.0)).is_err());
        assert!(fresnel_radius(&LinkGeometry::at_915mhz(-1.0, 10.0)).is_err());
    }

    #[test]
    fn hard_step_anchors() {
        let m = LinkModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(m.packet_success(900.0, false, &mut rng));
        assert!(!m.packet_success(1100.0, false, &mut rng));
        assert!(m.packet_success(200.0, true, &mut rng));
        assert!(!m.packet_success(300.0, true, &mut rng));
        assert!(m.packet_success(0.0, true, &mut rng));
        assert!(m.packet_success(1000.0, false, &mut rng));
    }

    #[test]
    fn hard_step_leaves_rng_untouched() {
        let m = LinkModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for d in [0.0, 100.0, 999.0, 1500.0] {
            m.packet_success(d, false, &mut rng);
        }
        let mut fresh = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(rng.random::<u64>(), fresh.random::<u64>());
    }

    #[test]
    fn rolloff_ramps_linearly() {
        let m = LinkModel { rolloff_width_m: 100.0, ..Default::default() };
        assert_eq!(m.success_probability(900.0, false), 1.0);
        assert!((m.success_probability(950.0, false) - 0.5).abs() < 1e-12);
        assert_eq!(m.success_probability(1000.0, false), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let hits = (0..10_000).filter(|_| m.packet_success(975.0, false, &mut rng)).count();
        assert!((2_200..2_800).contains(&hits), "{hits}");
    }

    #[test]
    fn model_validation() {
        assert!(LinkModel::default().validate().is_ok());
        let bad = LinkModel { canopy_range_m: 2000.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn airtime_rejects_bad_sf() {
        assert_eq!(
            time_on_air(&AirtimeParams::default().with_sf(6)),
            Err(LinkError::InvalidSpreadingFactor(6))
        );
        assert!(time_on_air(&AirtimeParams::default().with_sf(13)).is_err());
        assert!(time_on_air(&AirtimeParams::default().with_payload(0)).is_err());
    }

    #[test]
    fn doubling_bandwidth_halves_airtime() {
        let base = AirtimeParams::default();
        let wide = AirtimeParams { bandwidth_hz: 250_000.0, ..base };
        assert_eq!(base.payload_symbols().unwrap(), wide.payload_symbols().unwrap());
        let ratio = time_on_air(&base).unwrap() / time_on_air(&wide).unwrap();
        assert!((ratio - 2.0).abs() < 1e-12);
    }
}
