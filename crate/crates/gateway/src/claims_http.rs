//! Claim servers over HTTP: `POST /claims/query` with a bearer token.

use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use polity_core::claims::{retain_requested, Claim, ClaimError, ClaimServer, ClaimSource};
use polity_core::EntityId;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimQuery {
    pub subject: EntityId,
    pub properties: Vec<String>,
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers.get(header::AUTHORIZATION)?.to_str().ok()?.strip_prefix("Bearer ")
}

async fn query(State(server): State<Arc<ClaimServer>>, headers: HeaderMap, Json(q): Json<ClaimQuery>) -> Response {
    let token = bearer(&headers).unwrap_or_default().to_owned();
    match server.query(&token, &q.subject, &q.properties) {
        Ok(claims) => Json(claims).into_response(),
        Err(ClaimError::Unauthorized) => StatusCode::UNAUTHORIZED.into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

pub fn claim_router(server: Arc<ClaimServer>) -> Router {
    Router::new().route("/claims/query", post(query)).with_state(server)
}

/// Blocking client for a remote claim server. Responses are filtered to the
/// requested subject and properties; signatures are checked later, by the
/// claim bag.
pub struct HttpClaimClient {
    url: String,
    token: String,
    agent: ureq::Agent,
}

impl HttpClaimClient {
    pub fn new(base: &str, token: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        Self { url: format!("{}/claims/query", base.trim_end_matches('/')), token: token.into(), agent }
    }
}

impl ClaimSource for HttpClaimClient {
    fn fetch_claims(&self, subject: &EntityId, properties: &[String]) -> Result<Vec<Claim>, ClaimError> {
        let body = ClaimQuery { subject: subject.clone(), properties: properties.to_vec() };
        let mut resp = self
            .agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {}", self.token))
            .send_json(&body)
            .map_err(|e| match e {
                ureq::Error::StatusCode(401) => ClaimError::Unauthorized,
                other => ClaimError::Unavailable(other.to_string()),
            })?;
        let claims: Vec<Claim> = resp.body_mut().read_json().map_err(|e| ClaimError::Unavailable(e.to_string()))?;
        Ok(retain_requested(claims, subject, properties))
    }
}
