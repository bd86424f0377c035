//! HTTP+JSON routes and the server-sent event stream.

use std::convert::Infallible;
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use stintlab::strategy::{Strategy, WhatIfRequest};
use stintlab::Compound;
use tokio_stream::wrappers::errors::BroadcastStreamRecvError;
use tokio_stream::wrappers::BroadcastStream;
use tokio_stream::{Stream, StreamExt};

use crate::hub::{Hub, HubError};
use crate::session::{Append, EventRecord, LapInput, SessionConfig};

pub struct ApiError(StatusCode, serde_json::Value);

impl From<HubError> for ApiError {
    fn from(e: HubError) -> Self {
        let msg = e.to_string();
        match e {
            HubError::NotFound(_) => ApiError(StatusCode::NOT_FOUND, json!({ "error": msg })),
            HubError::Conflict(_) => ApiError(StatusCode::CONFLICT, json!({ "error": msg })),
            HubError::Invalid(_) => {
                ApiError(StatusCode::UNPROCESSABLE_ENTITY, json!({ "error": msg }))
            }
            HubError::OutOfOrder { expected } => ApiError(
                StatusCode::CONFLICT,
                json!({ "error": msg, "expected_lap": expected }),
            ),
            HubError::NotReady(_) => ApiError(StatusCode::CONFLICT, json!({ "error": msg })),
            HubError::Internal(_) => {
                ApiError(StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": msg }))
            }
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(e.status(), json!({ "error": e.body_text() }))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(hub: Hub) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}/laps", post(append_lap))
        .route("/sessions/{id}/forecast", get(forecast))
        .route("/sessions/{id}/whatif", post(whatif))
        .route("/sessions/{id}/state", get(state))
        .route("/sessions/{id}/events", get(events))
        .with_state(hub)
}

#[derive(Serialize)]
struct Created {
    id: String,
}

async fn create_session(
    State(hub): State<Hub>,
    body: Result<Json<SessionConfig>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Created>)> {
    let Json(config) = body?;
    let id = hub.create(config)?;
    Ok((StatusCode::CREATED, Json(Created { id })))
}

async fn list_sessions(State(hub): State<Hub>) -> Json<Vec<String>> {
    Json(hub.list())
}

#[derive(Serialize)]
struct Appended {
    status: &'static str,
    lap_number: u32,
    next_expected: u32,
}

async fn append_lap(
    State(hub): State<Hub>,
    Path(id): Path<String>,
    body: Result<Json<LapInput>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Appended>)> {
    let Json(lap) = body?;
    let outcome = hub.append(&id, lap)?;
    let next_expected = hub.get(&id)?.state().next_lap();
    let (code, status) = match outcome {
        Append::Accepted => (StatusCode::ACCEPTED, "accepted"),
        Append::Duplicate => (StatusCode::OK, "duplicate"),
    };
    Ok((code, Json(Appended { status, lap_number: lap.lap_number, next_expected })))
}

async fn forecast(State(hub): State<Hub>, Path(id): Path<String>) -> ApiResult<Response> {
    let s = hub.get(&id)?.state();
    match s.forecast {
        Some(f) => Ok(Json(f).into_response()),
        None => Err(HubError::NotReady("no forecast yet".into()).into()),
    }
}

async fn state(State(hub): State<Hub>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(hub.get(&id)?.state()).into_response())
}

/// Either explicit strategies, or `pit_lap` + `compound` compared with
/// staying out.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfBody {
    #[serde(default)]
    pub a: Option<Strategy>,
    #[serde(default)]
    pub b: Option<Strategy>,
    #[serde(default)]
    pub pit_lap: Option<u32>,
    #[serde(default)]
    pub compound: Option<Compound>,
    pub horizon: u32,
    #[serde(default)]
    pub pit_loss_s: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

async fn whatif(
    State(hub): State<Hub>,
    Path(id): Path<String>,
    body: Result<Json<WhatIfBody>, JsonRejection>,
) -> ApiResult<Response> {
    let Json(body) = body?;
    let config = hub.get(&id)?.state().config;
    let a = match (body.a, body.pit_lap, body.compound) {
        (Some(a), None, None) => a,
        (None, Some(lap), Some(compound)) => Strategy::Pit { lap, compound },
        _ => {
            return Err(HubError::Invalid(
                "give either strategy `a` or both `pit_lap` and `compound`".into(),
            )
            .into())
        }
    };
    let req = WhatIfRequest {
        a,
        b: body.b.unwrap_or(Strategy::StayOut),
        horizon: body.horizon,
        pit_loss_s: body.pit_loss_s.unwrap_or(config.pit_loss_s),
        seed: body.seed.unwrap_or(config.seed),
    };
    let result = tokio::task::spawn_blocking(move || hub.what_if(&id, &req))
        .await
        .map_err(|e| ApiError::from(HubError::Internal(e.to_string())))??;
    Ok(Json(result).into_response())
}

#[derive(Debug, Deserialize)]
struct Since {
    since: Option<u64>,
}

fn sse_event(rec: &EventRecord) -> SseEvent {
    SseEvent::default()
        .event(rec.event.kind())
        .id(rec.seq.to_string())
        .json_data(rec)
        .expect("events serialize")
}

/// Replays the log from `?since=` (or after `Last-Event-ID`), then follows
/// live events. A client that falls behind the channel is disconnected and
/// resumes from its last id.
async fn events(
    State(hub): State<Hub>,
    Path(id): Path<String>,
    Query(q): Query<Since>,
    headers: HeaderMap,
) -> ApiResult<Sse<impl Stream<Item = Result<SseEvent, Infallible>>>> {
    let session = hub.get(&id)?;
    let resume = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse::<u64>().ok())
        .map(|n| n + 1);
    let since = q.since.or(resume).unwrap_or(0);
    let (backlog, rx) = session.subscribe(since);
    let next = since + backlog.len() as u64;
    let live = BroadcastStream::new(rx)
        .take_while(|r| !matches!(r, Err(BroadcastStreamRecvError::Lagged(_))))
        .filter_map(move |r| r.ok().filter(|rec| rec.seq >= next));
    let stream = tokio_stream::iter(backlog)
        .chain(live)
        .map(|rec| Ok(sse_event(&rec)));
    Ok(Sse::new(stream).keep_alive(KeepAlive::new().interval(Duration::from_secs(15))))
}
