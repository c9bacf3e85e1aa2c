//! Scenario files: a versioned TOML document describing the field, its
//! nodes, roads, vehicle routes, weather and model parameters.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::energy::{CapacitorState, CyclePowerTable, HarvestProfile, LightCondition};
use crate::gateway::{Route, Waypoint};
use crate::link::{AirtimeParams, LinkModel};
use crate::node::SignatureThresholds;
use crate::sensing::{CalibrationModel, ElectrodePair, GalvanicSensorModel, SoilName, SoilType};

pub const SCHEMA_VERSION: u32 = 1;
pub const DAY_S: f64 = 86_400.0;
/// Weather is piecewise constant over slots of this length.
pub const WEATHER_SLOT_S: f64 = 1200.0;
pub const SLOTS_PER_DAY: usize = 72;

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub duration_days: f64,
    #[serde(default = "default_duty")]
    pub duty_cycle_minutes: f64,
    #[serde(default)]
    pub rng_seed: u64,
    pub field: Field,
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub roads: Vec<Road>,
    #[serde(default)]
    pub routes: Vec<RouteSpec>,
    #[serde(default)]
    pub weather: WeatherSpec,
    #[serde(default)]
    pub watering: Vec<WateringSpec>,
    #[serde(default)]
    pub climate: ClimateSpec,
    #[serde(default)]
    pub link: LinkModel,
    #[serde(default)]
    pub airtime: AirtimeParams,
    #[serde(default)]
    pub energy: CyclePowerTable,
    #[serde(default)]
    pub harvest: HarvestProfile,
    #[serde(default)]
    pub thresholds: SignatureThresholds,
    #[serde(default)]
    pub sensor: SensorSpec,
    #[serde(default)]
    pub calibration: CalibrationModel,
    #[serde(default)]
    pub capacitor: CapacitorSpec,
}

fn default_duty() -> f64 {
    20.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Field {
    pub polygon: Vec<Point>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AntennaPlacement {
    AboveCanopy,
    InCanopy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: u32,
    pub position: Point,
    pub soil: SoilName,
    #[serde(default = "default_antenna")]
    pub antenna: AntennaPlacement,
    /// Starting VWC fraction; defaults to halfway between residual and
    /// saturation.
    #[serde(default)]
    pub initial_vwc: Option<f64>,
    /// Starting capacitor voltage; defaults to full.
    #[serde(default)]
    pub initial_voltage: Option<f64>,
}

fn default_antenna() -> AntennaPlacement {
    AntennaPlacement::AboveCanopy
}

impl NodeSpec {
    pub fn in_canopy(&self) -> bool {
        self.antenna == AntennaPlacement::InCanopy
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Road {
    #[serde(default)]
    pub name: String,
    pub points: Vec<Point>,
}

/// A route driven on selected days. Waypoint times are seconds after the
/// start of each listed day; with `days` omitted the route repeats daily.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteSpec {
    #[serde(default)]
    pub days: Option<Vec<u32>>,
    #[serde(default, rename = "loop")]
    pub looped: bool,
    /// `[x_m, y_m, t_s]` triples.
    pub waypoints: Vec<[f64; 3]>,
}

impl RouteSpec {
    pub fn route_on_day(&self, day: u32) -> Route {
        let base = f64::from(day) * DAY_S;
        Route {
            waypoints: self
                .waypoints
                .iter()
                .map(|[x, y, t]| Waypoint { x_m: *x, y_m: *y, t_s: base + t })
                .collect(),
            looped: self.looped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeatherSpec {
    /// Illuminance of a sunny daylight slot.
    pub day_klux: f64,
    /// Illuminance of a cloudy daylight slot.
    pub cloudy_klux: f64,
    /// Minute of day at which light begins (inclusive).
    pub light_start_minute: u32,
    /// Minute of day at which light ends (exclusive).
    pub light_end_minute: u32,
    /// Sky used for days without an override.
    pub default_sky: LightCondition,
    /// Same illuminance around the clock; overrides everything else.
    pub constant_klux: Option<f64>,
    pub days: Vec<DayWeather>,
}

impl Default for WeatherSpec {
    fn default() -> Self {
        Self {
            day_klux: 80.0,
            cloudy_klux: 8.0,
            light_start_minute: 360,
            light_end_minute: 1080,
            default_sky: LightCondition::Sunny,
            constant_klux: None,
            days: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DayWeather {
    pub day: u32,
    #[serde(default)]
    pub sky: Option<LightCondition>,
    /// Explicit kLux per 20-minute slot, 72 entries starting at midnight.
    #[serde(default)]
    pub slots_klux: Option<Vec<f64>>,
}

impl WeatherSpec {
    /// Illuminance in the slot containing `t_s`.
    pub fn klux_at(&self, t_s: f64) -> f64 {
        if let Some(k) = self.constant_klux {
            return k;
        }
        let t = t_s.max(0.0);
        let day = (t / DAY_S).floor() as u32;
        let slot = (((t - f64::from(day) * DAY_S) / WEATHER_SLOT_S).floor() as usize).min(SLOTS_PER_DAY - 1);
        let over = self.days.iter().find(|d| d.day == day);
        if let Some(slots) = over.and_then(|d| d.slots_klux.as_ref()) {
            return slots[slot];
        }
        let sky = over.and_then(|d| d.sky).unwrap_or(self.default_sky);
        let minute = slot as u32 * (WEATHER_SLOT_S as u32 / 60);
        let lit = (self.light_start_minute..self.light_end_minute).contains(&minute);
        match (lit, sky) {
            (false, _) | (_, LightCondition::Dark) => 0.0,
            (true, LightCondition::Cloudy) => self.cloudy_klux,
            (true, LightCondition::Sunny) => self.day_klux,
        }
    }

    /// Start of the slot after the one containing `t_s`.
    pub fn next_change_s(&self, t_s: f64) -> f64 {
        ((t_s / WEATHER_SLOT_S).floor() + 1.0) * WEATHER_SLOT_S
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.light_start_minute > self.light_end_minute || self.light_end_minute > 1440 {
            return Err(SimError::invalid("weather: light window must satisfy start <= end <= 1440"));
        }
        let finite_nonneg = |k: f64| k.is_finite() && k >= 0.0;
        if !finite_nonneg(self.day_klux) || !finite_nonneg(self.cloudy_klux) {
            return Err(SimError::invalid("weather: kLux values must be finite and >= 0"));
        }
        if self.constant_klux.is_some_and(|k| !finite_nonneg(k)) {
            return Err(SimError::invalid("weather: constant_klux must be finite and >= 0"));
        }
        let mut seen = BTreeSet::new();
        for d in &self.days {
            if !seen.insert(d.day) {
                return Err(SimError::invalid(format!("weather: day {} listed twice", d.day)));
            }
            if let Some(s) = &d.slots_klux {
                if s.len() != SLOTS_PER_DAY || !s.iter().all(|k| finite_nonneg(*k)) {
                    return Err(SimError::invalid(format!(
                        "weather: day {} needs {SLOTS_PER_DAY} finite non-negative slots",
                        d.day
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WateringSpec {
    pub time_s: f64,
    pub added_vwc: f64,
    /// Nodes whose soil gets the water; all nodes when omitted.
    #[serde(default)]
    pub nodes: Option<Vec<u32>>,
}

/// Buried-probe temperature: a mild sinusoid peaking mid-afternoon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClimateSpec {
    pub mean_temp_c: f64,
    pub diurnal_amplitude_c: f64,
}

impl Default for ClimateSpec {
    fn default() -> Self {
        Self { mean_temp_c: 20.0, diurnal_amplitude_c: 3.0 }
    }
}

impl ClimateSpec {
    pub fn temp_at(&self, t_s: f64) -> f64 {
        let phase = (t_s.rem_euclid(DAY_S) - 9.0 * 3600.0) / DAY_S * std::f64::consts::TAU;
        self.mean_temp_c + self.diurnal_amplitude_c * phase.sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSpec {
    pub pair: ElectrodePair,
    pub noise_sigma_v: f64,
    /// Full curve replacing the preset for `pair`.
    pub curve: Option<GalvanicSensorModel>,
}

impl Default for SensorSpec {
    fn default() -> Self {
        Self { pair: ElectrodePair::ZnSS, noise_sigma_v: 0.002, curve: None }
    }
}

impl SensorSpec {
    pub fn model(&self) -> GalvanicSensorModel {
        self.curve
            .unwrap_or_else(|| GalvanicSensorModel::for_pair(self.pair).with_noise(self.noise_sigma_v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapacitorSpec {
    pub capacitance_farads: f64,
    pub v_max_volts: f64,
    pub v_min_volts: f64,
}

impl Default for CapacitorSpec {
    fn default() -> Self {
        Self { capacitance_farads: 1.0, v_max_volts: 5.5, v_min_volts: 3.3 }
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let s: Scenario = toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario is always serialisable")
    }

    pub fn duty_seconds(&self) -> f64 {
        self.duty_cycle_minutes * 60.0
    }

    pub fn end_s(&self) -> f64 {
        self.duration_days * DAY_S
    }

    pub fn soil_for(&self, node: &NodeSpec) -> SoilType {
        SoilType::preset(node.soil)
    }

    pub fn capacitor_for(&self, node: &NodeSpec) -> Result<CapacitorState, SimError> {
        let c = self.capacitor;
        CapacitorState::new(
            c.capacitance_farads,
            c.v_max_volts,
            c.v_min_volts,
            node.initial_voltage.unwrap_or(c.v_max_volts),
        )
        .map_err(|e| SimError::invalid(format!("node {}: {e}", node.id)))
    }

    /// Every scheduled route instance within the scenario, in time order.
    pub fn routes(&self) -> Vec<Route> {
        let days = self.duration_days.ceil().max(0.0) as u32;
        let mut out: Vec<Route> = Vec::new();
        for spec in &self.routes {
            let on_days: Vec<u32> = match &spec.days {
                Some(d) => d.iter().copied().filter(|d| *d < days).collect(),
                None => (0..days).collect(),
            };
            out.extend(on_days.into_iter().map(|d| spec.route_on_day(d)));
        }
        out.sort_by(|a, b| a.start_s().total_cmp(&b.start_s()));
        out
    }

    pub fn node(&self, id: u32) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(SimError::invalid(format!(
                "schema_version {} not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.duration_days > 0.0 && self.duration_days.is_finite()) {
            return Err(SimError::invalid("duration_days must be > 0"));
        }
        if !(crate::energy::MIN_DUTY_CYCLE_MINUTES..=crate::energy::MAX_DUTY_CYCLE_MINUTES)
            .contains(&self.duty_cycle_minutes)
        {
            return Err(SimError::invalid("duty_cycle_minutes outside 100 ms .. 120 min"));
        }
        if self.field.polygon.len() < 3 || self.field.polygon.iter().flatten().any(|c| !c.is_finite()) {
            return Err(SimError::invalid("field polygon needs at least 3 finite vertices"));
        }
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id) {
                return Err(SimError::invalid(format!("node id {} used twice", n.id)));
            }
            if !point_in_polygon(n.position, &self.field.polygon) {
                return Err(SimError::invalid(format!(
                    "node {} at ({}, {}) lies outside the field",
                    n.id, n.position[0], n.position[1]
                )));
            }
            let soil = self.soil_for(n);
            if let Some(v) = n.initial_vwc {
                if !(soil.residual_vwc..=soil.saturation_vwc).contains(&v) {
                    return Err(SimError::invalid(format!(
                        "node {}: initial_vwc {v} outside [{}, {}]",
                        n.id, soil.residual_vwc, soil.saturation_vwc
                    )));
                }
            }
            self.capacitor_for(n)?;
        }
        for (i, r) in self.roads.iter().enumerate() {
            if r.points.len() < 2 || r.points.iter().flatten().any(|c| !c.is_finite()) {
                return Err(SimError::invalid(format!("road {i} needs at least 2 finite points")));
            }
        }
        for (i, spec) in self.routes.iter().enumerate() {
            spec.route_on_day(0)
                .validate()
                .map_err(|e| SimError::invalid(format!("route {i}: {e}")))?;
        }
        for (i, w) in self.watering.iter().enumerate() {
            if !(w.time_s >= 0.0 && w.time_s.is_finite() && w.added_vwc >= 0.0) {
                return Err(SimError::invalid(format!("watering {i}: bad time or amount")));
            }
            if let Some(nodes) = &w.nodes {
                if let Some(bad) = nodes.iter().find(|id| !ids.contains(id)) {
                    return Err(SimError::invalid(format!("watering {i}: unknown node {bad}")));
                }
            }
        }
        let curve = self.sensor.model();
        if !(curve.noise_sigma_v >= 0.0 && curve.noise_sigma_v.is_finite()) {
            return Err(SimError::invalid("sensor: noise_sigma_v must be finite and >= 0"));
        }
        self.weather.validate()?;
        self.link.validate().map_err(|e| SimError::invalid(e.to_string()))?;
        crate::link::time_on_air(&self.airtime).map_err(|e| SimError::invalid(e.to_string()))?;
        self.energy.validate().map_err(|e| SimError::invalid(e.to_string()))?;
        self.harvest.validate().map_err(|e| SimError::invalid(e.to_string()))?;
        Ok(())
    }
}

/// Even-odd test; points on an edge count as inside.
pub fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if distance_to_segment(p, a, b) <= 1e-9 {
            return true;
        }
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (pi, pj) = (poly[i], poly[j]);
        if (pi[1] > p[1]) != (pj[1] > p[1]) {
            let x = pj[0] + (p[1] - pj[1]) * (pi[0] - pj[0]) / (pi[1] - pj[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub fn distance_to_segment(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return distance(p, a);
    }
    let s = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0);
    distance(p, [a[0] + s * dx, a[1] + s * dy])
}
