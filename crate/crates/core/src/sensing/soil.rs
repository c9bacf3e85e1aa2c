use serde::{Deserialize, Serialize};

use super::{SensingError, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SoilName {
    Osco,
    Catlin,
    Wyanet,
    Potting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Drainage {
    Well,
    Poor,
}

/// Drying behaviour of one soil. VWC values are fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoilType {
    pub name: SoilName,
    pub drainage: Drainage,
    pub drying_rate_per_hour: f64,
    pub residual_vwc: f64,
    pub saturation_vwc: f64,
    /// Ionic offset added to the galvanic cell voltage, volts.
    pub signal_offset_v: f64,
}

impl SoilType {
    pub fn preset(name: SoilName) -> Self {
        match name {
            SoilName::Osco => Self {
                name,
                drainage: Drainage::Well,
                drying_rate_per_hour: 0.25,
                residual_vwc: 0.12,
                saturation_vwc: 0.45,
                signal_offset_v: 0.0,
            },
            SoilName::Wyanet => Self {
                name,
                drainage: Drainage::Well,
                drying_rate_per_hour: 0.20,
                residual_vwc: 0.10,
                saturation_vwc: 0.42,
                signal_offset_v: -0.005,
            },
            SoilName::Catlin => Self {
                name,
                drainage: Drainage::Poor,
                drying_rate_per_hour: 0.08,
                residual_vwc: 0.20,
                saturation_vwc: 0.48,
                signal_offset_v: 0.01,
            },
            SoilName::Potting => Self {
                name,
                drainage: Drainage::Poor,
                drying_rate_per_hour: 0.05,
                residual_vwc: 0.15,
                saturation_vwc: 0.60,
                signal_offset_v: 0.015,
            },
        }
    }

    pub fn validate(&self) -> Result<(), SensingError> {
        let ok = self.drying_rate_per_hour > 0.0
            && self.drying_rate_per_hour.is_finite()
            && 0.0 <= self.residual_vwc
            && self.residual_vwc < self.saturation_vwc
            && self.saturation_vwc <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(SensingError::InvalidSoil(format!("{:?}", self.name)))
        }
    }

    fn rate_per_second(&self) -> f64 {
        self.drying_rate_per_hour / 3600.0
    }

    /// Time for the excess above residual to halve, seconds.
    pub fn half_life_s(&self) -> f64 {
        std::f64::consts::LN_2 / self.rate_per_second()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WateringEvent {
    pub time_s: f64,
    pub added_vwc: f64,
}

/// Closed-form VWC trajectory: exponential relaxation toward the residual
/// between waterings, a clamped step at each watering.
#[derive(Debug, Clone, PartialEq)]
pub struct SoilTrace {
    soil: SoilType,
    /// (start time, VWC at start) of each segment, ascending from t = 0.
    segments: Vec<(f64, f64)>,
}

impl SoilTrace {
    pub fn new(
        soil: SoilType,
        initial_vwc: f64,
        watering: &[WateringEvent],
    ) -> Result<Self, SensingError> {
        soil.validate()?;
        if !(soil.residual_vwc..=soil.saturation_vwc).contains(&initial_vwc) {
            return Err(SensingError::InvalidSoil(format!(
                "initial VWC {initial_vwc} outside [{}, {}]",
                soil.residual_vwc, soil.saturation_vwc
            )));
        }
        if watering
            .iter()
            .any(|e| !(e.time_s >= 0.0) || !e.time_s.is_finite() || !(e.added_vwc >= 0.0))
        {
            return Err(SensingError::InvalidSoil("bad watering event".into()));
        }
        let mut events: Vec<WateringEvent> = watering.to_vec();
        events.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
        let mut segments = vec![(0.0, initial_vwc)];
        for e in &events {
            let before = relax(&soil, &segments, e.time_s);
            segments.push((e.time_s, (before + e.added_vwc).min(soil.saturation_vwc)));
        }
        Ok(Self { soil, segments })
    }

    pub fn soil(&self) -> &SoilType {
        &self.soil
    }

    /// VWC at `t_s`; times before 0 report the initial value.
    pub fn vwc_at(&self, t_s: f64) -> f64 {
        relax(&self.soil, &self.segments, t_s)
    }
}

fn relax(soil: &SoilType, segments: &[(f64, f64)], t_s: f64) -> f64 {
    let idx = segments.partition_point(|(start, _)| *start <= t_s);
    let (start, v0) = segments[idx.saturating_sub(1)];
    let elapsed = (t_s - start).max(0.0);
    let r = soil.residual_vwc;
    r + (v0 - r) * (-soil.rate_per_second() * elapsed).exp()
}

/// Samples a soil's VWC every `step_s` from 0 to `duration_s` inclusive.
pub fn simulate_soil_vwc(
    soil: &SoilType,
    initial_vwc: f64,
    watering: &[WateringEvent],
    duration_s: f64,
    step_s: f64,
) -> Result<TimeSeries, SensingError> {
    if !(step_s > 0.0) || !(duration_s >= 0.0) {
        return Err(SensingError::InvalidSoil("step and duration must be positive".into()));
    }
    let trace = SoilTrace::new(*soil, initial_vwc, watering)?;
    let n = (duration_s / step_s).floor() as usize;
    let points = (0..=n)
        .map(|i| {
            let t = i as f64 * step_s;
            (t, trace.vwc_at(t))
        })
        .collect();
    TimeSeries::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn well_draining_soils_dry_faster() {
        let well = [SoilName::Osco, SoilName::Wyanet].map(SoilType::preset);
        let poor = [SoilName::Catlin, SoilName::Potting].map(SoilType::preset);
        for w in &well {
            assert_eq!(w.drainage, Drainage::Well);
            for p in &poor {
                assert_eq!(p.drainage, Drainage::Poor);
                assert!(w.drying_rate_per_hour > p.drying_rate_per_hour);
            }
        }
    }

    #[test]
    fn equilibrium_is_flat() {
        let soil = SoilType::preset(SoilName::Catlin);
        let s = simulate_soil_vwc(&soil, soil.residual_vwc, &[], 86_400.0, 600.0).unwrap();
        assert!(s.values().all(|v| v == soil.residual_vwc));
    }

    #[test]
    fn watering_clamps_at_saturation() {
        let soil = SoilType::preset(SoilName::Osco);
        let ev = [WateringEvent { time_s: 100.0, added_vwc: 5.0 }];
        let trace = SoilTrace::new(soil, 0.3, &ev).unwrap();
        assert_eq!(trace.vwc_at(100.0), soil.saturation_vwc);
        assert!(trace.vwc_at(99.0) < 0.3);
        assert!(trace.vwc_at(3600.0) < soil.saturation_vwc);
    }

    #[test]
    fn osco_half_dries_before_catlin() {
        let ev = [WateringEvent { time_s: 0.0, added_vwc: 0.2 }];
        let half_time = |name| {
            let soil = SoilType::preset(name);
            let trace = SoilTrace::new(soil, soil.residual_vwc, &ev).unwrap();
            let peak = trace.vwc_at(0.0);
            let target = soil.residual_vwc + (peak - soil.residual_vwc) / 2.0;
            (0..).map(|m| m as f64 * 60.0).find(|t| trace.vwc_at(*t) <= target).unwrap()
        };
        assert!(half_time(SoilName::Osco) < half_time(SoilName::Catlin));
    }

    #[test]
    fn rejects_out_of_range_start() {
        let soil = SoilType::preset(SoilName::Osco);
        assert!(SoilTrace::new(soil, 0.9, &[]).is_err());
        assert!(SoilTrace::new(soil, 0.0, &[]).is_err());
    }
}
