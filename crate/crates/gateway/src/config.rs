//! Sidecar configuration. Relative paths resolve against the config file's
//! directory.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use polity_core::claims::{Claim, ClaimServer, IssuerKeypair, TrustConfig};
use polity_core::clock::Clock;
use polity_core::{compile_paths, CompiledBundle, VerifyOptions};
use serde::Deserialize;
use thiserror::Error;

use crate::claims_http::{ClaimQuery, HttpClaimClient};
use crate::guard::{GuardError, GuardSpec};
use crate::log::{DecisionLog, LogError};
use crate::runtime::{ClaimFeed, Gateway};
use crate::upstream::{HttpUpstream, StubUpstream, Upstream};

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    pub listen: SocketAddr,
    pub bundle: Vec<PathBuf>,
    pub guard: PathBuf,
    pub trust: PathBuf,
    /// JSON arrays of signed claims consulted by LocalDecide.
    #[serde(default)]
    pub claims: Vec<PathBuf>,
    pub log: PathBuf,
    #[serde(default = "default_skew")]
    pub max_skew_secs: u64,
    #[serde(default)]
    pub required_claims: Vec<String>,
    pub upstream: UpstreamConfig,
    #[serde(default)]
    pub claim_source: Vec<ClaimSourceConfig>,
    pub claim_server: Option<ClaimServerConfig>,
}

fn default_skew() -> u64 {
    300
}

fn default_field() -> String {
    "videoName".into()
}

fn default_timeout() -> u64 {
    5000
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum UpstreamConfig {
    Http {
        url: String,
        #[serde(default = "default_field")]
        field: String,
        #[serde(default = "default_timeout")]
        timeout_ms: u64,
    },
    /// Answers from the bundle's own entities of `entity_kind`, by `name`.
    Catalog {
        entity_kind: String,
        #[serde(default = "default_field")]
        field: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimSourceConfig {
    pub url: String,
    pub token: String,
    pub queries: Vec<ClaimQuery>,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
}

/// Serves `POST /claims/query` next to the gateway, signing with `key`
/// about the bundle's entities.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimServerConfig {
    pub key: PathBuf,
    pub tokens: Vec<String>,
    pub validity_secs: i64,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {reason}")]
    File { path: PathBuf, reason: String },
    #[error("bundle does not compile:\n{0}")]
    Bundle(String),
    #[error("guard: {0}")]
    Guard(#[from] GuardError),
    #[error(transparent)]
    Log(#[from] LogError),
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError::File { path: path.to_owned(), reason: e.to_string() })
}

fn bad(path: &Path, reason: impl ToString) -> ConfigError {
    ConfigError::File { path: path.to_owned(), reason: reason.to_string() }
}

pub fn load_bundle(paths: &[PathBuf]) -> Result<CompiledBundle, ConfigError> {
    compile_paths(paths).map_err(|errs| ConfigError::Bundle(errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("\n")))
}

pub fn load_trust(path: &Path) -> Result<TrustConfig, ConfigError> {
    TrustConfig::from_json(&read(path)?).map_err(|e| bad(path, e))
}

pub fn load_claims(path: &Path) -> Result<Vec<Claim>, ConfigError> {
    serde_json::from_str(&read(path)?).map_err(|e| bad(path, e))
}

/// A running gateway's parts, built from a config.
pub struct Built {
    pub gateway: Arc<Gateway>,
    pub claim_server: Option<Arc<ClaimServer>>,
}

impl GatewayConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg: GatewayConfig = toml::from_str(&read(path)?).map_err(|e| bad(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.bundle.iter_mut().for_each(join);
        cfg.claims.iter_mut().for_each(join);
        join(&mut cfg.guard);
        join(&mut cfg.trust);
        join(&mut cfg.log);
        if let Some(cs) = cfg.claim_server.as_mut() {
            join(&mut cs.key);
        }
        Ok(cfg)
    }

    /// Fails fast on any bundle, guard, trust or log problem.
    pub fn build(&self, clock: Arc<dyn Clock>) -> Result<Built, ConfigError> {
        let bundle = Arc::new(load_bundle(&self.bundle)?);
        let guard = GuardSpec::from_json(&read(&self.guard)?, &bundle)?;
        let trust = load_trust(&self.trust)?;
        let mut claims = Vec::new();
        for p in &self.claims {
            claims.extend(load_claims(p)?);
        }
        let upstream: Arc<dyn Upstream> = match &self.upstream {
            UpstreamConfig::Http { url, field, timeout_ms } => {
                Arc::new(HttpUpstream::new(url, field.clone(), Duration::from_millis(*timeout_ms)))
            }
            UpstreamConfig::Catalog { entity_kind, field } => {
                Arc::new(StubUpstream::from_store(field.clone(), &bundle.store, entity_kind))
            }
        };
        let log = Arc::new(DecisionLog::open(&self.log)?);
        let opts = VerifyOptions {
            max_skew: chrono::Duration::seconds(self.max_skew_secs as i64),
            required_claims: self.required_claims.clone(),
        };
        let claim_server = match &self.claim_server {
            Some(cs) => {
                let key = IssuerKeypair::from_json(&read(&cs.key)?).map_err(|e| bad(&cs.key, e))?;
                Some(Arc::new(ClaimServer::new(
                    key,
                    bundle.store.clone(),
                    chrono::Duration::seconds(cs.validity_secs),
                    cs.tokens.clone(),
                    Arc::clone(&clock),
                )))
            }
            None => None,
        };
        let mut gw = Gateway::new(Arc::clone(&bundle), guard, trust, upstream, clock, log).with_claims(claims).with_options(opts);
        for src in &self.claim_source {
            let queries = src.queries.iter().map(|q| (q.subject.clone(), q.properties.clone())).collect();
            let client = HttpClaimClient::new(&src.url, src.token.clone(), Duration::from_millis(src.timeout_ms));
            gw = gw.with_feed(ClaimFeed { source: Box::new(client), queries });
        }
        Ok(Built { gateway: Arc::new(gw), claim_server })
    }
}
