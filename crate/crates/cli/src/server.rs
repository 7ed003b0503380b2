//! Session protocol over local HTTP.
//!
//! `POST /sessions` takes one `new` message and answers with the initial
//! state and a session id. `POST /sessions/{id}` takes newline-delimited
//! messages and answers one line per message, in order. `DELETE
//! /sessions/{id}` drops a session. Requests to one session are serialized.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response as HttpResponse};
use axum::routing::post;
use axum::Router;
use tokio::net::TcpListener;

use crate::session::{Request, RequestEnvelope, Response, ResponseEnvelope, Session, SessionError};

const NDJSON: &str = "application/x-ndjson";

#[derive(Default)]
pub struct Sessions {
    next_id: AtomicU64,
    live: Mutex<HashMap<u64, Arc<tokio::sync::Mutex<Session>>>>,
}

impl Sessions {
    fn get(&self, id: u64) -> Option<Arc<tokio::sync::Mutex<Session>>> {
        self.live
            .lock()
            .expect("session table poisoned")
            .get(&id)
            .cloned()
    }
}

pub fn router() -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", post(send).delete(close))
        .with_state(Arc::new(Sessions::default()))
}

fn ndjson(status: StatusCode, lines: &[ResponseEnvelope]) -> HttpResponse {
    let mut body = String::new();
    for line in lines {
        body.push_str(&serde_json::to_string(line).expect("responses serialize"));
        body.push('\n');
    }
    (status, [(header::CONTENT_TYPE, NDJSON)], body).into_response()
}

fn error_line(session: Option<u64>, e: &SessionError) -> ResponseEnvelope {
    ResponseEnvelope::new(session, Response::error(e))
}

async fn create(State(sessions): State<Arc<Sessions>>, body: String) -> HttpResponse {
    let created = match RequestEnvelope::parse(body.trim()) {
        Ok(Request::New { instance }) => Session::new(&instance),
        Ok(_) => Err(SessionError::NoSession),
        Err(e) => Err(e),
    }
    .and_then(|s| Ok((s.view()?, s)));
    match created {
        Ok((view, session)) => {
            let id = sessions.next_id.fetch_add(1, Ordering::Relaxed) + 1;
            sessions
                .live
                .lock()
                .expect("session table poisoned")
                .insert(id, Arc::new(tokio::sync::Mutex::new(session)));
            ndjson(
                StatusCode::CREATED,
                &[ResponseEnvelope::new(Some(id), Response::State(view))],
            )
        }
        Err(e) => ndjson(StatusCode::BAD_REQUEST, &[error_line(None, &e)]),
    }
}

async fn send(
    State(sessions): State<Arc<Sessions>>,
    Path(id): Path<u64>,
    body: String,
) -> HttpResponse {
    let Some(session) = sessions.get(id) else {
        return ndjson(
            StatusCode::NOT_FOUND,
            &[error_line(Some(id), &SessionError::NoSession)],
        );
    };
    let mut session = session.lock().await;
    let lines: Vec<ResponseEnvelope> = body
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| match RequestEnvelope::parse(line) {
            Ok(request) => ResponseEnvelope::new(Some(id), session.handle(request)),
            Err(e) => error_line(Some(id), &e),
        })
        .collect();
    ndjson(StatusCode::OK, &lines)
}

async fn close(State(sessions): State<Arc<Sessions>>, Path(id): Path<u64>) -> StatusCode {
    match sessions
        .live
        .lock()
        .expect("session table poisoned")
        .remove(&id)
    {
        Some(_) => StatusCode::NO_CONTENT,
        None => StatusCode::NOT_FOUND,
    }
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(addr: SocketAddr) -> std::io::Result<()> {
    let listener = TcpListener::bind(addr).await?;
    serve_on(listener).await
}

pub async fn serve_on(listener: TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router()).await
}
