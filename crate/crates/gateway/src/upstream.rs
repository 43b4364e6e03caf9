//! The guarded downstream service and the capability needed to call it.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json as AxumJson, Router};
use polity_core::{Entity, EntityStore, Value};
use serde_json::{json, Map, Value as Json};
use thiserror::Error;

use crate::log::SlotRecord;

/// Proof that every slot of a guard passed for one request. Only
/// [`CallPermit::grant`] constructs one, and [`Upstream::call`] cannot be
/// invoked without it.
#[derive(Debug)]
pub struct CallPermit {
    request_id: String,
    request: Entity,
}

impl CallPermit {
    /// `None` unless `slots` covers all `expected` slots and each one is
    /// `Yes` or `Accepted`.
    pub(crate) fn grant(request_id: &str, expected: usize, slots: &[SlotRecord], request: &Entity) -> Option<Self> {
        let complete = expected > 0 && slots.len() == expected && slots.iter().all(|s| s.verdict.passed());
        complete.then(|| Self { request_id: request_id.to_owned(), request: request.clone() })
    }

    pub fn request_id(&self) -> &str {
        &self.request_id
    }

    /// The entity forwarded upstream.
    pub fn request(&self) -> &Entity {
        &self.request
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UpstreamError {
    #[error("upstream unreachable: {0}")]
    Transport(String),
    #[error("upstream returned status {0}")]
    Status(u16),
    #[error("upstream response malformed: {0}")]
    Malformed(String),
}

pub trait Upstream: Send + Sync {
    /// Performs the downstream call; the response is a JSON object.
    fn call(&self, permit: &CallPermit) -> Result<Map<String, Json>, UpstreamError>;
}

fn request_name(permit: &CallPermit, field: &str) -> Result<String, UpstreamError> {
    match permit.request().attributes.get(field) {
        Some(Value::Str(s)) => Ok(s.clone()),
        _ => Err(UpstreamError::Malformed(format!("request entity has no string `{field}`"))),
    }
}

/// In-process video service backed by a catalog, instrumented for audits:
/// it records the request id of every invocation.
pub struct StubUpstream {
    field: String,
    catalog: BTreeMap<String, Map<String, Json>>,
    forced: Mutex<Option<Result<Map<String, Json>, UpstreamError>>>,
    calls: Mutex<Vec<String>>,
}

impl StubUpstream {
    /// Looks requests up by the string attribute `field` of the request
    /// entity.
    pub fn new(field: impl Into<String>, catalog: impl IntoIterator<Item = Map<String, Json>>) -> Self {
        let catalog = catalog
            .into_iter()
            .filter_map(|item| Some((item.get("name")?.as_str()?.to_owned(), item)))
            .collect();
        Self { field: field.into(), catalog, forced: Mutex::new(None), calls: Mutex::new(Vec::new()) }
    }

    /// A catalog of every entity of `kind` in the store, keyed by `name`.
    pub fn from_store(field: impl Into<String>, store: &EntityStore, kind: &str) -> Self {
        Self::new(field, store.entities_of_kind(kind).map(entity_json))
    }

    /// Makes every later call return `response` instead of the catalog
    /// entry.
    pub fn force(&self, response: Option<Result<Map<String, Json>, UpstreamError>>) {
        *self.forced.lock().unwrap_or_else(|e| e.into_inner()) = response;
    }

    pub fn lookup(&self, name: &str) -> Option<Map<String, Json>> {
        self.catalog.get(name).cloned()
    }

    /// Request ids of every invocation, in order.
    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().unwrap_or_else(|e| e.into_inner()).len()
    }
}

impl Upstream for StubUpstream {
    fn call(&self, permit: &CallPermit) -> Result<Map<String, Json>, UpstreamError> {
        self.calls.lock().unwrap_or_else(|e| e.into_inner()).push(permit.request_id().to_owned());
        if let Some(forced) = self.forced.lock().unwrap_or_else(|e| e.into_inner()).clone() {
            return forced;
        }
        let name = request_name(permit, &self.field)?;
        self.lookup(&name).ok_or(UpstreamError::Status(404))
    }
}

#[derive(serde::Deserialize)]
struct VideoQuery {
    name: String,
}

async fn video(State(stub): State<Arc<StubUpstream>>, AxumJson(q): AxumJson<VideoQuery>) -> Response {
    match stub.lookup(&q.name) {
        Some(item) => AxumJson(item).into_response(),
        None => StatusCode::NOT_FOUND.into_response(),
    }
}

/// `POST /video {"name"}` answered from the stub's catalog.
pub fn video_router(stub: Arc<StubUpstream>) -> Router {
    Router::new().route("/video", post(video)).with_state(stub)
}

/// Scalar attributes of an entity as a JSON object.
pub fn entity_json(e: &Entity) -> Map<String, Json> {
    e.attributes
        .iter()
        .filter_map(|(k, v)| {
            let j = match v {
                Value::Nat(n) => json!(n),
                Value::Str(s) => json!(s),
                Value::Bool(b) => json!(b),
                _ => return None,
            };
            Some((k.clone(), j))
        })
        .collect()
}

/// Speaks `POST {base}/video {"name"} -> {"name", "ageLimit"}`.
pub struct HttpUpstream {
    url: String,
    field: String,
    agent: ureq::Agent,
}

impl HttpUpstream {
    pub fn new(base: &str, field: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        Self { url: format!("{}/video", base.trim_end_matches('/')), field: field.into(), agent }
    }
}

impl Upstream for HttpUpstream {
    fn call(&self, permit: &CallPermit) -> Result<Map<String, Json>, UpstreamError> {
        let name = request_name(permit, &self.field)?;
        let mut resp = self.agent.post(&self.url).send_json(json!({ "name": name })).map_err(|e| match e {
            ureq::Error::StatusCode(code) => UpstreamError::Status(code),
            other => UpstreamError::Transport(other.to_string()),
        })?;
        match resp.body_mut().read_json::<Json>() {
            Ok(Json::Object(map)) => Ok(map),
            Ok(other) => Err(UpstreamError::Malformed(format!("expected an object, got {other}"))),
            Err(e) => Err(UpstreamError::Malformed(e.to_string())),
        }
    }
}
