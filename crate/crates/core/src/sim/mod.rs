//! Discrete-event simulation of a deployment: nodes waking on their timers,
//! harvesting from the weather, and trading records with a gateway carried
//! along vehicle routes.

mod cost;
mod engine;
mod geometry;
mod metrics;
mod scenario;
mod whatif;
mod zones;

use thiserror::Error;

pub use cost::{estimate_deployment_cost, CostEstimate, GATEWAY_COST_MILLS, NODE_COST_MILLS};
pub use engine::{run, NodeView, RunOutput, Simulation, TraceEvent};
pub use geometry::{in_range_intervals, longest_in_range_s, segment_disc_clip};
pub use metrics::{LatencyStats, Metrics, NodeMetrics, RecencySample};
pub use scenario::{
    distance, distance_to_segment, point_in_polygon, AntennaPlacement, CapacitorSpec, ClimateSpec,
    DayWeather, Field, NodeSpec, Point, Road, RouteSpec, Scenario, SensorSpec, WateringSpec,
    WeatherSpec, DAY_S, SCHEMA_VERSION, SLOTS_PER_DAY, WEATHER_SLOT_S,
};
pub use whatif::{whatif_route, NodePrediction};
pub use zones::{compute_pickup_zones, PickupZone, ZoneSegment};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("unknown node {0}")]
    UnknownNode(u32),
}

impl SimError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        SimError::InvalidScenario(msg.into())
    }
}
