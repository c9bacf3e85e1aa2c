//! Query service over a running simulation: field snapshot with contact
//! recency, calibrated node series, pickup zones and what-if routes.
//!
//! Reads share a lock; stepping takes it exclusively, so every response is
//! built from a single instant of the simulation.

mod http;
pub mod wire;

use std::sync::Arc;
use std::time::Duration;

use parking_lot::{Mutex, RwLock};
use thiserror::Error;
use tokio::task::JoinHandle;

use agmule_core::gateway::recency_of;
use agmule_core::sensing::{rolling_mean, TimeSeries};
use agmule_core::sim::{compute_pickup_zones, whatif_route, PickupZone, Scenario, Simulation};

pub use http::router;
use wire::*;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ServiceError {
    #[error("no simulation session is loaded")]
    NoSession,
    #[error("unknown node {0}")]
    UnknownNode(u32),
    #[error("request failed validation")]
    Validation(Vec<FieldError>),
    #[error("scenario rejected: {0}")]
    Scenario(String),
    #[error("bad request: {0}")]
    BadRequest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ServiceConfig {
    /// Rolling-mean window for node series; one day of wakes when unset.
    pub window_samples: Option<usize>,
}

struct Session {
    sim: Simulation,
    zones: Vec<PickupZone>,
}

#[derive(Default)]
pub struct Service {
    config: ServiceConfig,
    session: RwLock<Option<Session>>,
    playback: Mutex<Option<(f64, JoinHandle<()>)>>,
}

impl Service {
    pub fn new(config: ServiceConfig) -> Self {
        Self { config, ..Default::default() }
    }

    pub fn load_scenario(&self, scenario: Scenario) -> Result<FieldSnapshot, ServiceError> {
        let sim = Simulation::new(scenario).map_err(|e| ServiceError::Scenario(e.to_string()))?;
        let zones = compute_pickup_zones(sim.scenario());
        let session = Session { sim, zones };
        let snap = snapshot(&session);
        *self.session.write() = Some(session);
        Ok(snap)
    }

    pub fn load_request(&self, req: &SessionRequest) -> Result<FieldSnapshot, ServiceError> {
        check_schema(req.schema_version)?;
        let scenario = Scenario::from_toml_str(&req.scenario_toml).map_err(|e| ServiceError::Scenario(e.to_string()))?;
        self.load_scenario(scenario)
    }

    fn read<T>(&self, f: impl FnOnce(&Session) -> Result<T, ServiceError>) -> Result<T, ServiceError> {
        let guard = self.session.read();
        f(guard.as_ref().ok_or(ServiceError::NoSession)?)
    }

    pub fn get_field(&self) -> Result<FieldSnapshot, ServiceError> {
        self.read(|s| Ok(snapshot(s)))
    }

    pub fn get_zones(&self) -> Result<Zones, ServiceError> {
        self.read(|s| {
            Ok(Zones {
                schema_version: WIRE_SCHEMA_VERSION,
                duty_cycle_minutes: s.sim.scenario().duty_cycle_minutes,
                zones: s.zones.clone(),
            })
        })
    }

    /// Delivered records only, calibrated and smoothed, within `[from, to]`.
    pub fn get_node_series(&self, node_id: u32, from_s: Option<f64>, to_s: Option<f64>) -> Result<NodeSeries, ServiceError> {
        self.read(|s| {
            let scenario = s.sim.scenario();
            if scenario.node(node_id).is_none() {
                return Err(ServiceError::UnknownNode(node_id));
            }
            let window = self
                .config
                .window_samples
                .unwrap_or_else(|| (1440.0 / scenario.duty_cycle_minutes).round().max(1.0) as usize)
                .max(1);
            let mut entries: Vec<_> = s
                .sim
                .gateway()
                .uplink_log()
                .iter()
                .filter(|e| e.node_id == node_id)
                .filter_map(|e| {
                    let vwc = scenario.calibration.voltage_to_vwc_percent(e.record.voltage_v()).ok()?;
                    Some((e, vwc))
                })
                .collect();
            entries.sort_by(|a, b| {
                a.0.reconstructed_time_s
                    .total_cmp(&b.0.reconstructed_time_s)
                    .then(a.0.record.cycle_index.cmp(&b.0.record.cycle_index))
            });
            let raw = TimeSeries::new(entries.iter().map(|(e, v)| (e.reconstructed_time_s, *v)).collect())
                .map_err(|e| ServiceError::BadRequest(format!("node {node_id} log is not time ordered: {e}")))?;
            let smooth = rolling_mean(&raw, window).expect("window is at least one");
            let points = entries
                .iter()
                .zip(smooth.values())
                .filter(|((e, _), _)| {
                    from_s.is_none_or(|f| e.reconstructed_time_s >= f) && to_s.is_none_or(|t| e.reconstructed_time_s <= t)
                })
                .map(|((e, vwc), smoothed)| SeriesPoint {
                    t_s: e.reconstructed_time_s,
                    cycle_index: e.record.cycle_index,
                    vwc_percent: *vwc,
                    vwc_smoothed_percent: smoothed,
                    temp_c: e.record.temp_c(),
                    sun_state: e.record.sun_state,
                })
                .collect();
            Ok(NodeSeries { schema_version: WIRE_SCHEMA_VERSION, node_id, window_samples: window, points })
        })
    }

    pub fn post_whatif(&self, req: &WhatIfRequest) -> Result<WhatIfResponse, ServiceError> {
        check_schema(req.schema_version)?;
        let errs = req.route.field_errors();
        if !errs.is_empty() {
            return Err(ServiceError::Validation(errs));
        }
        self.read(|s| {
            let predictions = whatif_route(&s.sim, &req.route.to_route())
                .map_err(|e| ServiceError::Validation(vec![FieldError::new("route", e.to_string())]))?;
            Ok(WhatIfResponse { schema_version: req.schema_version, sim_time_s: s.sim.now_s(), predictions })
        })
    }

    /// Advances the simulation; readers see the state before or after.
    pub fn step(&self, minutes: f64) -> Result<StepResponse, ServiceError> {
        if !(minutes.is_finite() && minutes >= 0.0) {
            return Err(ServiceError::Validation(vec![FieldError::new("minutes", "must be a finite number >= 0")]));
        }
        let mut guard = self.session.write();
        let s = guard.as_mut().ok_or(ServiceError::NoSession)?;
        s.sim.advance(minutes * 60.0);
        Ok(StepResponse { schema_version: WIRE_SCHEMA_VERSION, sim_time_s: s.sim.now_s(), finished: s.sim.is_finished() })
    }

    pub fn playback_status(&self) -> Result<PlaybackStatus, ServiceError> {
        let ratio = self.playback.lock().as_ref().map_or(0.0, |(r, _)| *r);
        self.read(|s| Ok(PlaybackStatus { schema_version: WIRE_SCHEMA_VERSION, ratio, sim_time_s: s.sim.now_s() }))
    }

    /// Steps the simulation in the background at `ratio` simulated seconds
    /// per wall-clock second; zero stops playback. Must be called from
    /// within a Tokio runtime.
    pub fn set_playback(self: &Arc<Self>, ratio: f64, tick: Duration) -> Result<PlaybackStatus, ServiceError> {
        if !(ratio.is_finite() && ratio >= 0.0) {
            return Err(ServiceError::Validation(vec![FieldError::new("ratio", "must be a finite number >= 0")]));
        }
        self.read(|_| Ok(()))?;
        let mut slot = self.playback.lock();
        if let Some((_, handle)) = slot.take() {
            handle.abort();
        }
        if ratio > 0.0 {
            let svc = Arc::clone(self);
            let minutes = ratio * tick.as_secs_f64() / 60.0;
            let handle = tokio::spawn(async move {
                let mut interval = tokio::time::interval(tick);
                interval.tick().await;
                loop {
                    interval.tick().await;
                    let svc = Arc::clone(&svc);
                    let done = tokio::task::spawn_blocking(move || svc.step(minutes).map(|r| r.finished))
                        .await
                        .unwrap_or(Ok(true))
                        .unwrap_or(true);
                    if done {
                        break;
                    }
                }
            });
            *slot = Some((ratio, handle));
        }
        drop(slot);
        self.playback_status()
    }
}

fn check_schema(v: u32) -> Result<(), ServiceError> {
    if v == WIRE_SCHEMA_VERSION {
        Ok(())
    } else {
        Err(ServiceError::Validation(vec![FieldError::new(
            "schema_version",
            format!("unsupported version {v}, expected {WIRE_SCHEMA_VERSION}"),
        )]))
    }
}

fn snapshot(s: &Session) -> FieldSnapshot {
    let sim = &s.sim;
    let now = sim.now_s();
    let gw = sim.gateway();
    let scenario = sim.scenario();
    let nodes = sim
        .node_views()
        .into_iter()
        .map(|v| {
            let last_contact_s = gw.last_contact(v.node_id);
            let last_vwc_percent = gw
                .uplink_log()
                .iter()
                .filter(|e| e.node_id == v.node_id)
                .max_by_key(|e| e.record.cycle_index)
                .and_then(|e| scenario.calibration.voltage_to_vwc_percent(e.record.voltage_v()).ok());
            NodeSnapshot {
                id: v.node_id,
                position: v.position,
                in_canopy: v.in_canopy,
                recency: recency_of(last_contact_s.map(|l| l.min(now)), now).expect("age clamped to be non-negative"),
                last_contact_s,
                buffer_occupancy: v.buffered,
                last_vwc_percent,
                capacitor_v: v.capacitor_v,
            }
        })
        .collect();
    FieldSnapshot {
        schema_version: WIRE_SCHEMA_VERSION,
        scenario: scenario.name.clone(),
        sim_time_s: now,
        end_time_s: sim.end_s(),
        field: scenario.field.polygon.clone(),
        roads: scenario.roads.clone(),
        gateway_position: sim.gateway_position_at(now).map(|(x, y)| [x, y]),
        nodes,
        zones: s.zones.clone(),
    }
}

/// Serves `app` on `listener` until the process stops.
pub async fn serve(listener: tokio::net::TcpListener, app: axum::Router) -> std::io::Result<()> {
    axum::serve(listener, app).await
}
