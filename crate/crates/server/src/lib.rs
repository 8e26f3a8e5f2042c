//! HTTP control service for a running simulation.
//!
//! One writer (the run loop or a command) holds the session lock for at most one step at
//! a time, so every command lands between steps in arrival order. Read endpoints only
//! take snapshots.

mod session;

use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use civitas_core::net::NetworkDocument;
use civitas_core::sim::{AgentDetail, ScenarioEvent, StateView, World};
use civitas_core::Tick;
use futures::Stream;
use serde::Deserialize;
use thiserror::Error;
use tokio::sync::broadcast;

pub use session::{CommandOutcome, Proposal, Session, SessionCommand, SessionStatus, StateDelta, DEFAULT_HISTORY, DEFAULT_SPEED};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown tick {0}")]
    UnknownTick(Tick),
    #[error("unknown agent {0}")]
    UnknownAgent(String),
    #[error("unknown proposal {0}")]
    UnknownProposal(u64),
    #[error("{0}")]
    BadRequest(String),
    #[error("simulation error: {0}")]
    Sim(String),
}

impl ServiceError {
    fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownTick(_) | ServiceError::UnknownAgent(_) | ServiceError::UnknownProposal(_) => StatusCode::NOT_FOUND,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Sim(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        (self.status(), Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

/// Shared handle to the session and the delta broadcast.
#[derive(Clone)]
pub struct AppState {
    session: Arc<Mutex<Session>>,
    deltas: broadcast::Sender<StateDelta>,
}

impl AppState {
    pub fn new(session: Session) -> Self {
        let (deltas, _) = broadcast::channel(4096);
        AppState { session: Arc::new(Mutex::new(session)), deltas }
    }

    pub fn from_world(world: World) -> Self {
        Self::new(Session::new(world))
    }

    /// Locks the session; a panic in another holder does not poison reads.
    pub fn lock(&self) -> MutexGuard<'_, Session> {
        self.session.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn subscribe(&self) -> broadcast::Receiver<StateDelta> {
        self.deltas.subscribe()
    }

    fn publish(&self, deltas: Vec<StateDelta>) {
        for d in deltas {
            // No subscribers is fine.
            let _ = self.deltas.send(d);
        }
    }

    /// Runs one tick if the session is running; returns whether it stepped.
    pub fn tick_once(&self) -> Result<bool, ServiceError> {
        let deltas = {
            let mut s = self.lock();
            if !s.should_run() {
                return Ok(false);
            }
            s.step_n(1)?
        };
        self.publish(deltas);
        Ok(true)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/network", get(get_network))
        .route("/state", get(get_state))
        .route("/agents/{id}", get(get_agent))
        .route("/agents/{id}/interview", post(post_interview))
        .route("/command", post(post_command))
        .route("/events/propose", post(post_propose))
        .route("/events/{id}/confirm", post(post_confirm))
        .route("/stream", get(get_stream))
        .with_state(state)
}

async fn get_network(State(app): State<AppState>) -> Json<NetworkDocument> {
    Json(app.lock().world().graph().to_document())
}

#[derive(Debug, Deserialize)]
struct StateQuery {
    at: Option<Tick>,
}

async fn get_state(State(app): State<AppState>, Query(q): Query<StateQuery>) -> Result<Json<StateView>, ServiceError> {
    Ok(Json(app.lock().state(q.at)?))
}

async fn get_agent(State(app): State<AppState>, Path(id): Path<String>) -> Result<Json<AgentDetail>, ServiceError> {
    app.lock().world().agent_detail(&id).map(Json).ok_or(ServiceError::UnknownAgent(id))
}

#[derive(Debug, Deserialize)]
struct InterviewBody {
    question: String,
    #[serde(default)]
    persist: bool,
}

async fn post_interview(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<InterviewBody>,
) -> Result<Json<civitas_core::cognition::InterviewExchange>, ServiceError> {
    let state = app.clone();
    let ex = tokio::task::spawn_blocking(move || state.lock().interview(&id, &body.question, body.persist))
        .await
        .map_err(|e| ServiceError::Sim(e.to_string()))??;
    Ok(Json(ex))
}

async fn post_command(State(app): State<AppState>, Json(cmd): Json<SessionCommand>) -> Result<Json<CommandOutcome>, ServiceError> {
    cmd.validate()?;
    let state = app.clone();
    let (outcome, deltas) = tokio::task::spawn_blocking(move || state.lock().apply(cmd))
        .await
        .map_err(|e| ServiceError::Sim(e.to_string()))??;
    app.publish(deltas);
    Ok(Json(outcome))
}

#[derive(Debug, Deserialize)]
struct ProposeBody {
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    event: Option<ScenarioEvent>,
}

async fn post_propose(State(app): State<AppState>, Json(body): Json<ProposeBody>) -> Result<Json<Proposal>, ServiceError> {
    Ok(Json(app.lock().propose(body.text.as_deref(), body.event)?))
}

async fn post_confirm(State(app): State<AppState>, Path(id): Path<u64>) -> Result<Json<Proposal>, ServiceError> {
    Ok(Json(app.lock().confirm(id)?))
}

async fn get_stream(State(app): State<AppState>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let rx = app.subscribe();
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(d) => {
                    let line = serde_json::to_string(&d).expect("delta serializes");
                    return Some((Ok(Event::default().data(line)), rx));
                }
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    tracing::warn!(skipped = n, "stream client lagging");
                }
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}

/// Steps the session at its current speed while it is running.
pub async fn run_loop(app: AppState) {
    loop {
        let (running, speed) = {
            let s = app.lock();
            (s.should_run(), s.speed())
        };
        if running {
            let state = app.clone();
            match tokio::task::spawn_blocking(move || state.tick_once()).await {
                Ok(Ok(_)) => {}
                Ok(Err(e)) => {
                    tracing::error!(error = %e, "step failed; pausing");
                    let _ = app.lock().apply(SessionCommand::Pause);
                }
                Err(e) => tracing::error!(error = %e, "step task panicked"),
            }
            tokio::time::sleep(Duration::from_secs_f64(1.0 / speed)).await;
        } else {
            tokio::time::sleep(Duration::from_millis(50)).await;
        }
    }
}

/// Serves the control API on `addr` until the process ends.
pub async fn serve(world: World, addr: SocketAddr) -> std::io::Result<()> {
    let app = AppState::from_world(world);
    tokio::spawn(run_loop(app.clone()));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "control service listening");
    axum::serve(listener, router(app)).await
}
