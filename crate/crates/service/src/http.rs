use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::wire::{ErrorBody, SessionRequest, WhatIfRequest, WIRE_SCHEMA_VERSION};
use crate::{Service, ServiceError};

const PLAYBACK_TICK: Duration = Duration::from_millis(250);

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, error) = match &self {
            ServiceError::NoSession => (StatusCode::CONFLICT, "no_session"),
            ServiceError::UnknownNode(_) => (StatusCode::NOT_FOUND, "unknown_node"),
            ServiceError::Validation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "validation"),
            ServiceError::Scenario(_) => (StatusCode::UNPROCESSABLE_ENTITY, "scenario"),
            ServiceError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
        };
        let fields = match &self {
            ServiceError::Validation(f) => f.clone(),
            _ => Vec::new(),
        };
        let body = ErrorBody { schema_version: WIRE_SCHEMA_VERSION, error: error.into(), message: self.to_string(), fields };
        (status, Json(body)).into_response()
    }
}

type Reply<T> = Result<Json<T>, ServiceError>;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(e.to_string()))
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ServiceError> {
    q.map(|Query(v)| v).map_err(|e| ServiceError::BadRequest(e.body_text()))
}

#[derive(Deserialize)]
struct RangeQuery {
    from: Option<f64>,
    to: Option<f64>,
}

#[derive(Deserialize)]
struct StepQuery {
    minutes: f64,
}

#[derive(Deserialize)]
struct PlaybackQuery {
    ratio: f64,
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/field", get(field))
        .route("/zones", get(zones))
        .route("/nodes/{id}/series", get(series))
        .route("/whatif", post(whatif))
        .route("/session", post(session))
        .route("/step", post(step))
        .route("/playback", get(playback_status).post(playback))
        .with_state(service)
}

async fn field(State(svc): State<Arc<Service>>) -> Reply<crate::wire::FieldSnapshot> {
    svc.get_field().map(Json)
}

async fn zones(State(svc): State<Arc<Service>>) -> Reply<crate::wire::Zones> {
    svc.get_zones().map(Json)
}

async fn series(
    State(svc): State<Arc<Service>>,
    Path(id): Path<u32>,
    q: Result<Query<RangeQuery>, QueryRejection>,
) -> Reply<crate::wire::NodeSeries> {
    let q = query(q)?;
    svc.get_node_series(id, q.from, q.to).map(Json)
}

async fn whatif(State(svc): State<Arc<Service>>, body: Bytes) -> Reply<crate::wire::WhatIfResponse> {
    let req: WhatIfRequest = parse_body(&body)?;
    svc.post_whatif(&req).map(Json)
}

async fn session(State(svc): State<Arc<Service>>, body: Bytes) -> Reply<crate::wire::FieldSnapshot> {
    let req: SessionRequest = parse_body(&body)?;
    svc.set_playback(0.0, PLAYBACK_TICK).ok();
    svc.load_request(&req).map(Json)
}

async fn step(
    State(svc): State<Arc<Service>>,
    q: Result<Query<StepQuery>, QueryRejection>,
) -> Reply<crate::wire::StepResponse> {
    let minutes = query(q)?.minutes;
    tokio::task::spawn_blocking(move || svc.step(minutes))
        .await
        .map_err(|e| ServiceError::BadRequest(e.to_string()))?
        .map(Json)
}

async fn playback_status(State(svc): State<Arc<Service>>) -> Reply<crate::wire::PlaybackStatus> {
    svc.playback_status().map(Json)
}

async fn playback(
    State(svc): State<Arc<Service>>,
    q: Result<Query<PlaybackQuery>, QueryRejection>,
) -> Reply<crate::wire::PlaybackStatus> {
    let ratio = query(q)?.ratio;
    svc.set_playback(ratio, PLAYBACK_TICK).map(Json)
}

