//! HTTP and WebSocket bridge for the dashboard.
//!
//! * `GET /ws` streams every `incubator.#` message as a JSON text frame
//!   `{"topic", "ts", "body"}`.
//! * `GET /api/history?topic=&from=&to=` returns recorded messages as a JSON
//!   array; `from` and `to` default to the whole recording.
//! * `POST /api/command` takes `{"type", "payload"}` and forwards the payload
//!   to the bus, answering 202.
//!
//! The command schemas are listed in `docs/gateway.md`.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use incubator_bus::BusClient;
use incubator_core::controller::ControllerConfig;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::broadcast;
use tokio::task::JoinHandle;
use tracing::{debug, warn};

use crate::datalog::{Datalog, DatalogError};
use crate::messages::{
    topics, CalibrationRequest, ControllerRequest, Disturbance, OrchestratorRequest, WhatifRequest,
};

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
/// Messages a WebSocket client may fall behind before it is dropped.
pub const CLIENT_BACKLOG: usize = 1000;

#[derive(Clone)]
struct AppState {
    bus: BusClient,
    datalog: Option<Datalog>,
    stream: broadcast::Sender<Arc<str>>,
}

pub struct GatewayHandle {
    pub addr: SocketAddr,
    pub task: JoinHandle<()>,
}

pub async fn gateway_serve(bus: BusClient, datalog: Option<Datalog>, bind: &str) -> anyhow::Result<GatewayHandle> {
    let (stream, _) = broadcast::channel(CLIENT_BACKLOG);
    let mut sub = bus.subscribe(topics::ALL).await?;
    let fanout = stream.clone();
    tokio::spawn(async move {
        while let Some(m) = sub.recv().await {
            match serde_json::to_string(&m) {
                Ok(text) => {
                    let _ = fanout.send(Arc::from(text));
                }
                Err(e) => warn!(error = %e, "cannot encode message for websocket"),
            }
        }
    });
    let app = router(AppState { bus, datalog, stream });
    let listener = tokio::net::TcpListener::bind(bind).await?;
    let addr = listener.local_addr()?;
    let task = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            warn!(error = %e, "gateway stopped");
        }
    });
    Ok(GatewayHandle { addr, task })
}

fn router(state: AppState) -> Router {
    Router::new()
        .route("/ws", get(ws_upgrade))
        .route("/api/history", get(history))
        .route("/api/command", post(command))
        .with_state(state)
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    let rx = state.stream.subscribe();
    ws.on_upgrade(move |socket| stream_to_client(socket, rx))
}

async fn stream_to_client(mut socket: WebSocket, mut rx: broadcast::Receiver<Arc<str>>) {
    loop {
        tokio::select! {
            msg = rx.recv() => match msg {
                Ok(text) => {
                    if socket.send(WsMessage::Text(text.as_ref().into())).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    debug!(missed = n, "dropping slow websocket client");
                    let _ = socket.send(WsMessage::Close(None)).await;
                    return;
                }
                Err(broadcast::error::RecvError::Closed) => return,
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(WsMessage::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

#[derive(Debug, Deserialize)]
struct HistoryQuery {
    topic: String,
    from: Option<f64>,
    to: Option<f64>,
}

fn error(status: StatusCode, reason: impl Into<String>) -> Response {
    (status, Json(json!({"error": reason.into()}))).into_response()
}

async fn history(State(state): State<AppState>, query: Result<Query<HistoryQuery>, axum::extract::rejection::QueryRejection>) -> Response {
    let Query(q) = match query {
        Ok(q) => q,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    let Some(log) = state.datalog else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "no datalog configured");
    };
    let from = q.from.unwrap_or(f64::NEG_INFINITY);
    let to = q.to.unwrap_or(f64::INFINITY);
    let result = tokio::task::spawn_blocking(move || log.query(&q.topic, from, to)).await;
    match result {
        Ok(Ok(messages)) => Json(messages).into_response(),
        Ok(Err(DatalogError::InvalidArgument(e))) => error(StatusCode::BAD_REQUEST, e),
        Ok(Err(e)) => error(StatusCode::SERVICE_UNAVAILABLE, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

#[derive(Debug, Deserialize)]
struct Command {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    payload: Value,
}

/// Checks `payload` against the schema of `kind` and returns the topic and
/// body to publish.
fn route_command(kind: &str, payload: Value) -> Result<(&'static str, Value), String> {
    fn check<T: serde::de::DeserializeOwned + serde::Serialize>(payload: Value) -> Result<Value, String> {
        let parsed: T = serde_json::from_value(payload).map_err(|e| e.to_string())?;
        serde_json::to_value(parsed).map_err(|e| e.to_string())
    }
    match kind {
        "disturbance" => Ok((topics::PLANT_DISTURBANCE, check::<Disturbance>(payload)?)),
        "calibrate" => Ok((topics::CALIBRATION_REQUEST, check::<CalibrationRequest>(payload)?)),
        "whatif" => Ok((topics::WHATIF_REQUEST, check::<WhatifRequest>(payload)?)),
        "controller_config" => {
            let config: ControllerConfig = serde_json::from_value(payload).map_err(|e| e.to_string())?;
            let req = ControllerRequest::Configure { config };
            Ok((topics::CONTROLLER_STATE, serde_json::to_value(req).map_err(|e| e.to_string())?))
        }
        "orchestrator_mode" => Ok((topics::ORCHESTRATOR_STATE, check::<OrchestratorRequest>(payload)?)),
        other => Err(format!("unknown command type '{other}'")),
    }
}

async fn command(State(state): State<AppState>, body: Result<Json<Command>, axum::extract::rejection::JsonRejection>) -> Response {
    let Json(cmd) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    let (topic, body) = match route_command(&cmd.kind, cmd.payload) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    let Value::Object(map) = body else {
        return error(StatusCode::BAD_REQUEST, "payload must be a JSON object");
    };
    match state.bus.publish(topic, map) {
        Ok(()) => (StatusCode::ACCEPTED, Json(json!({"accepted": true, "topic": topic}))).into_response(),
        Err(e) => error(StatusCode::SERVICE_UNAVAILABLE, e.to_string()),
    }
}
