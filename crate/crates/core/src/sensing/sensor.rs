use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SoilType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElectrodePair {
    /// Zinc / stainless steel, the node's probe.
    ZnSS,
    /// Zinc / aluminium.
    ZnAl,
}

/// Open-circuit voltage of a galvanic probe as a logistic curve in VWC:
/// `floor + (plateau − floor) / (1 + exp(−steepness·(vwc − midpoint)))`,
/// plus a linear temperature term, a soil offset and optional noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GalvanicSensorModel {
    pub electrode_pair: ElectrodePair,
    pub spacing_inches: f64,
    pub floor_v: f64,
    pub plateau_v: f64,
    pub steepness: f64,
    pub midpoint_vwc: f64,
    /// Volts per °C away from 25 °C.
    pub temp_coeff_v_per_c: f64,
    pub noise_sigma_v: f64,
}

impl GalvanicSensorModel {
    pub fn zn_ss() -> Self {
        Self {
            electrode_pair: ElectrodePair::ZnSS,
            spacing_inches: 1.0,
            floor_v: 0.42,
            plateau_v: 0.70,
            steepness: 12.0,
            midpoint_vwc: 0.12,
            temp_coeff_v_per_c: 0.0005,
            noise_sigma_v: 0.0,
        }
    }

    /// Tuned so the curve reads 0.2 V at 32 % VWC.
    pub fn zn_al() -> Self {
        let plateau_v = 0.21;
        let steepness = 20.0;
        // plateau / (1 + e^-x) = 0.2  =>  x = ln(20)
        let midpoint_vwc = 0.32 - (20.0f64).ln() / steepness;
        Self {
            electrode_pair: ElectrodePair::ZnAl,
            spacing_inches: 1.0,
            floor_v: 0.0,
            plateau_v,
            steepness,
            midpoint_vwc,
            temp_coeff_v_per_c: 0.0005,
            noise_sigma_v: 0.0,
        }
    }

    pub fn for_pair(pair: ElectrodePair) -> Self {
        match pair {
            ElectrodePair::ZnSS => Self::zn_ss(),
            ElectrodePair::ZnAl => Self::zn_al(),
        }
    }

    pub fn with_noise(self, sigma_v: f64) -> Self {
        Self { noise_sigma_v: sigma_v.max(0.0), ..self }
    }

    /// Noise-free reading, clamped to [0, 1] V.
    pub fn ideal_voltage(&self, vwc: f64, soil: &SoilType, temp_c: f64) -> f64 {
        let logistic = 1.0 / (1.0 + (-self.steepness * (vwc - self.midpoint_vwc)).exp());
        let v = self.floor_v
            + (self.plateau_v - self.floor_v) * logistic
            + self.temp_coeff_v_per_c * (temp_c - 25.0)
            + soil.signal_offset_v;
        v.clamp(0.0, 1.0)
    }

    pub fn voltage<R: Rng + ?Sized>(&self, vwc: f64, soil: &SoilType, temp_c: f64, rng: &mut R) -> f64 {
        let v = self.ideal_voltage(vwc, soil, temp_c);
        if self.noise_sigma_v > 0.0 {
            let n = Normal::new(0.0, self.noise_sigma_v).expect("sigma checked positive");
            (v + n.sample(rng)).clamp(0.0, 1.0)
        } else {
            v
        }
    }
}
