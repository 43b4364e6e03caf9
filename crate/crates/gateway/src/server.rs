//! The HTTP sidecar.

use std::future::Future;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use polity_core::{Entity, Refutation, VerifyReport};
use serde::Serialize;
use tokio::net::TcpListener;

use crate::log::{DecisionRecord, Mode};
use crate::runtime::{CallError, CallReport, Denial, Gateway};

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DenialBody {
    pub slot: String,
    pub reason: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<VerifyReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refutation: Option<Refutation>,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CallResponse {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record: Option<DecisionRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub item: Option<Entity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub denial: Option<DenialBody>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn respond(report: CallReport) -> Response {
    let mut body = CallResponse { record: report.record, item: None, denial: None, error: None };
    let status = match report.result {
        Ok(item) => {
            body.item = Some(item);
            StatusCode::OK
        }
        Err(CallError::Denied(d)) => {
            let status = if matches!(d, Denial::Malformed(_)) { StatusCode::BAD_REQUEST } else { StatusCode::FORBIDDEN };
            let mut denial = DenialBody { slot: d.slot().to_owned(), reason: d.reason(), report: None, refutation: None };
            match d {
                Denial::Rejected { report, .. } => denial.report = Some(*report),
                Denial::Refuted { refutation, .. } => denial.refutation = Some(*refutation),
                _ => {}
            }
            body.denial = Some(denial);
            status
        }
        Err(CallError::Upstream(e)) => {
            body.error = Some(e.to_string());
            StatusCode::BAD_GATEWAY
        }
        Err(CallError::Log(e)) => {
            body.error = Some(e.to_string());
            StatusCode::INTERNAL_SERVER_ERROR
        }
    };
    (status, Json(body)).into_response()
}

async fn run(gw: Arc<Gateway>, body: Bytes, mode: Mode) -> Response {
    let report = tokio::task::spawn_blocking(move || gw.handle_bytes_as(&body, mode)).await;
    match report {
        Ok(r) => respond(r),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

async fn decide(State(gw): State<Arc<Gateway>>, body: Bytes) -> Response {
    run(gw, body, Mode::LocalDecide).await
}

async fn verify_call(State(gw): State<Arc<Gateway>>, body: Bytes) -> Response {
    run(gw, body, Mode::RemoteVerify).await
}

async fn decision(State(gw): State<Arc<Gateway>>, Path(id): Path<String>) -> Response {
    match gw.log().get(&id) {
        Some(r) => Json(r).into_response(),
        None => (StatusCode::NOT_FOUND, Json(serde_json::json!({ "error": format!("no decision {id}") }))).into_response(),
    }
}

pub fn router(gw: Arc<Gateway>) -> Router {
    Router::new()
        .route("/decide", post(decide))
        .route("/verify-call", post(verify_call))
        .route("/decisions/{id}", get(decision))
        .route("/healthz", get(|| async { "ok" }))
        .with_state(gw)
}

/// Serves until `shutdown` resolves, then syncs the decision log.
pub async fn serve_until(
    listener: TcpListener,
    app: Router,
    gw: Arc<Gateway>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await?;
    gw.log().sync().map_err(std::io::Error::other)
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        if let Ok(mut s) = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            s.recv().await;
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}
