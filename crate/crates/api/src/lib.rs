//! HTTP control and streaming API over a live simulation.
//!
//! Endpoints:
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/api/v1/state` | tick-boundary [`StateSnapshot`] |
//! | GET | `/api/v1/kpis` | live totals against the shadow baseline |
//! | GET | `/api/v1/stream?filter=&since=` | NDJSON event stream |
//! | POST | `/api/v1/policies` | partial policy update |
//! | POST | `/api/v1/faults` | fault or fire injection |
//! | POST | `/api/v1/actuators/{machine_id}` | actuator override |
//! | POST | `/api/v1/sim` | pause, resume, speed |
//!
//! POST requests accept an `Idempotency-Key` header; a repeated key with the
//! same body is acknowledged as `already-applied` without being applied again.

mod error;
mod model;
mod session;
mod stream;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde_json::Value;
use smartfab_core::analytics::PolicyPatch;
use smartfab_core::scenario::Scenario;
use smartfab_core::sim::{CommandBody, SimControl};
use tokio::net::TcpListener;
use tokio::sync::{oneshot, Mutex};

pub use error::ApiError;
pub use model::{
    Ack, AckStatus, ActiveAlert, ActuatorRequest, ControlLine, EventBody, FaultRequest, LiveKpis, MachineSnapshot,
    SimRequest, StateSnapshot, StreamEvent,
};
pub use session::{ServeOptions, Session, Shared};

use session::Inbox;

struct Remembered {
    route: &'static str,
    body: Value,
    ack: Ack,
}

struct AppState {
    session: Session,
    inbox: std::sync::mpsc::Sender<Inbox>,
    idempotency: Mutex<HashMap<String, Remembered>>,
}

pub fn router(session: Session) -> Router {
    let inbox = session.sender();
    let state = Arc::new(AppState {
        session,
        inbox,
        idempotency: Mutex::new(HashMap::new()),
    });
    Router::new()
        .route("/api/v1/state", get(get_state))
        .route("/api/v1/kpis", get(get_kpis))
        .route("/api/v1/stream", get(stream::get_stream))
        .route("/api/v1/policies", post(post_policies))
        .route("/api/v1/faults", post(post_faults))
        .route("/api/v1/actuators/{machine_id}", post(post_actuator))
        .route("/api/v1/sim", post(post_sim))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .with_state(state)
}

fn json_response(value: &impl serde::Serialize) -> Response {
    match serde_json::to_vec(value) {
        Ok(body) => ([(header::CONTENT_TYPE, "application/json")], body).into_response(),
        Err(e) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()).into_response(),
    }
}

async fn get_state(State(app): State<Arc<AppState>>) -> Response {
    json_response(&*app.session.shared().snapshot())
}

async fn get_kpis(State(app): State<Arc<AppState>>) -> Response {
    json_response(&app.session.shared().snapshot().kpis)
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<(Value, T), ApiError> {
    let raw: Value = serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed JSON: {e}")))?;
    let parsed = T::deserialize(&raw).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok((raw, parsed))
}

fn known_machine(app: &AppState, id: &str) -> Result<(), ApiError> {
    if app.session.shared().machine_ids.iter().any(|m| &**m == id) {
        Ok(())
    } else {
        Err(ApiError::not_found(format!("unknown machine {id:?}")))
    }
}

async fn submit(
    app: &AppState,
    headers: &HeaderMap,
    route: &'static str,
    raw: Value,
    body: CommandBody,
    apply_at_tick: Option<u64>,
) -> Result<Response, ApiError> {
    let key = match headers.get("idempotency-key") {
        Some(v) => Some(
            v.to_str()
                .map_err(|_| ApiError::bad_request("Idempotency-Key must be visible ASCII"))?
                .to_owned(),
        ),
        None => None,
    };
    // Held across the round trip so concurrent requests with one key apply once.
    let mut seen = app.idempotency.lock().await;
    if let Some(k) = &key {
        if let Some(prev) = seen.get(k) {
            if prev.route != route || prev.body != raw {
                return Err(ApiError::new(
                    StatusCode::CONFLICT,
                    "idempotency-conflict",
                    format!("key {k:?} was already used for a different request"),
                ));
            }
            let mut ack = prev.ack.clone();
            ack.status = AckStatus::AlreadyApplied;
            return Ok(json_response(&ack));
        }
    }
    let (tx, rx) = oneshot::channel();
    app.inbox
        .send(Inbox::Command {
            body,
            apply_at_tick,
            reply: tx,
        })
        .map_err(|_| ApiError::unavailable())?;
    let ack = rx.await.map_err(|_| ApiError::unavailable())??;
    if let Some(k) = key {
        seen.insert(
            k,
            Remembered {
                route,
                body: raw,
                ack: ack.clone(),
            },
        );
    }
    Ok((StatusCode::ACCEPTED, json_response(&ack)).into_response())
}

async fn post_policies(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let (raw, patch): (_, PolicyPatch) = parse(&body)?;
    if !raw.is_object() {
        return Err(ApiError::bad_request("policy patch must be a JSON object"));
    }
    submit(&app, &headers, "policies", raw, CommandBody::PolicyChange(patch), None).await
}

async fn post_faults(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let (raw, req): (_, FaultRequest) = parse(&body)?;
    known_machine(&app, &req.machine_id)?;
    if req.repair_ticks == Some(0) {
        return Err(ApiError::bad_request("repair_ticks must be positive"));
    }
    let cmd = CommandBody::FaultInjection {
        machine_id: req.machine_id,
        kind: req.kind,
        repair_ticks: req.repair_ticks,
    };
    submit(&app, &headers, "faults", raw, cmd, req.apply_at_tick).await
}

async fn post_actuator(
    State(app): State<Arc<AppState>>,
    Path(machine_id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let (raw, req): (_, ActuatorRequest) = parse(&body)?;
    known_machine(&app, &machine_id)?;
    let cmd = CommandBody::ActuatorOverride {
        machine_id: machine_id.as_str().into(),
        actuator: req.actuator,
        on: req.on,
    };
    let raw = serde_json::json!({ "machine_id": machine_id, "request": raw });
    submit(&app, &headers, "actuators", raw, cmd, req.apply_at_tick).await
}

async fn post_sim(State(app): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> Result<Response, ApiError> {
    let (raw, req): (_, SimRequest) = parse(&body)?;
    match (req.action, req.speed) {
        (SimControl::Speed, Some(s)) if s.is_finite() && s > 0.0 => {}
        (SimControl::Speed, _) => return Err(ApiError::bad_request("speed must be a positive number")),
        (_, Some(_)) => return Err(ApiError::bad_request("speed is only valid with action \"speed\"")),
        _ => {}
    }
    let cmd = CommandBody::SimControl {
        action: req.action,
        speed: req.speed,
    };
    submit(&app, &headers, "sim", raw, cmd, None).await
}

/// A bound, not yet running server.
pub struct Server {
    listener: TcpListener,
    router: Router,
    shared: Arc<Shared>,
}

impl Server {
    /// Starts the simulation and binds `addr`.
    pub async fn bind(addr: SocketAddr, scenario: Arc<Scenario>, options: ServeOptions) -> std::io::Result<Server> {
        let listener = TcpListener::bind(addr).await?;
        let session = Session::start(scenario, options).map_err(std::io::Error::other)?;
        let shared = session.shared().clone();
        Ok(Server {
            listener,
            router: router(session),
            shared,
        })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    pub fn shared(&self) -> &Arc<Shared> {
        &self.shared
    }

    pub async fn run(self) -> std::io::Result<()> {
        axum::serve(self.listener, self.router).await
    }

    /// Serves until `shutdown` resolves, then stops the simulation.
    pub async fn run_until(self, shutdown: impl std::future::Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
        axum::serve(self.listener, self.router)
            .with_graceful_shutdown(shutdown)
            .await
    }
}

/// Runs the service on `0.0.0.0:port` until Ctrl-C.
pub fn serve_blocking(scenario: Arc<Scenario>, port: u16, options: ServeOptions) -> std::io::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let server = Server::bind(SocketAddr::from(([0, 0, 0, 0], port)), scenario, options).await?;
        eprintln!("listening on http://{}", server.local_addr()?);
        server
            .run_until(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })
}
