//! Versioned JSON payloads. Every response carries `schema_version`; all
//! times are seconds since scenario start.

use serde::{Deserialize, Serialize};

use agmule_core::energy::LightCondition;
use agmule_core::gateway::{RecencyClass, Route, Waypoint};
use agmule_core::sim::{NodePrediction, PickupZone, Point, Road};

pub const WIRE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSnapshot {
    pub id: u32,
    pub position: Point,
    pub in_canopy: bool,
    pub recency: RecencyClass,
    pub last_contact_s: Option<f64>,
    pub buffer_occupancy: usize,
    /// Calibrated VWC of the newest delivered record.
    pub last_vwc_percent: Option<f64>,
    pub capacitor_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSnapshot {
    pub schema_version: u32,
    pub scenario: String,
    pub sim_time_s: f64,
    pub end_time_s: f64,
    pub field: Vec<Point>,
    pub roads: Vec<Road>,
    pub gateway_position: Option<Point>,
    pub nodes: Vec<NodeSnapshot>,
    pub zones: Vec<PickupZone>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub t_s: f64,
    pub cycle_index: u32,
    pub vwc_percent: f64,
    /// Trailing mean of `vwc_percent` over the response's window.
    pub vwc_smoothed_percent: f64,
    pub temp_c: f64,
    pub sun_state: LightCondition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSeries {
    pub schema_version: u32,
    pub node_id: u32,
    pub window_samples: usize,
    pub points: Vec<SeriesPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zones {
    pub schema_version: u32,
    pub duty_cycle_minutes: f64,
    pub zones: Vec<PickupZone>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointPayload {
    pub x_m: f64,
    pub y_m: f64,
    pub t_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutePayload {
    #[serde(default)]
    pub waypoints: Vec<WaypointPayload>,
    #[serde(default, rename = "loop")]
    pub looped: bool,
}

impl RoutePayload {
    pub fn to_route(&self) -> Route {
        Route {
            waypoints: self.waypoints.iter().map(|w| Waypoint { x_m: w.x_m, y_m: w.y_m, t_s: w.t_s }).collect(),
            looped: self.looped,
        }
    }

    /// Field-level problems; empty when the route is usable.
    pub fn field_errors(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        for (i, w) in self.waypoints.iter().enumerate() {
            for (name, v) in [("x_m", w.x_m), ("y_m", w.y_m), ("t_s", w.t_s)] {
                if !v.is_finite() {
                    errs.push(FieldError::new(format!("route.waypoints[{i}].{name}"), "must be a finite number"));
                }
            }
            if i > 0 && w.t_s.is_finite() && self.waypoints[i - 1].t_s.is_finite() && w.t_s <= self.waypoints[i - 1].t_s {
                errs.push(FieldError::new(
                    format!("route.waypoints[{i}].t_s"),
                    "times must increase along the route",
                ));
            }
        }
        if self.looped && self.waypoints.len() == 1 {
            errs.push(FieldError::new("route.loop", "a looping route needs at least two waypoints"));
        }
        errs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfRequest {
    pub schema_version: u32,
    pub route: RoutePayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResponse {
    pub schema_version: u32,
    pub sim_time_s: f64,
    pub predictions: Vec<NodePrediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRequest {
    pub schema_version: u32,
    /// Scenario document, TOML.
    pub scenario_toml: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub schema_version: u32,
    pub sim_time_s: f64,
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaybackStatus {
    pub schema_version: u32,
    /// Simulated seconds per wall-clock second; zero when stopped.
    pub ratio: f64,
    pub sim_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub schema_version: u32,
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<FieldError>,
}
