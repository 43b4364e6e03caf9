//! The sidecar, the video stub and the claim server over real sockets.

mod support;

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration as StdDuration;

use axum::Router;
use chrono::Duration;
use polity_core::claims::{ClaimError, ClaimServer, ClaimSource};
use polity_core::clock::FixedClock;
use polity_gateway::claims_http::{claim_router, HttpClaimClient};
use polity_gateway::config::{ConfigError, GatewayConfig};
use polity_gateway::log::read_chain;
use polity_gateway::runtime::ClaimFeed;
use polity_gateway::server::{router, serve_until};
use polity_gateway::upstream::video_router;
use polity_gateway::{CallMode, CallRequest, DecisionLog, Gateway, HttpUpstream, StubUpstream};
use serde_json::Value as Json;
use support::{entities, t0, Fixture};
use tokio::sync::oneshot;

struct Server {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl Server {
    /// Serves `app` on an ephemeral port; with a gateway, shutdown goes
    /// through [`serve_until`] so the log is synced.
    fn start(app: Router, gw: Option<Arc<Gateway>>) -> Self {
        let std_listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        std_listener.set_nonblocking(true).unwrap();
        let addr = std_listener.local_addr().unwrap();
        let (stop, rx) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener).unwrap();
                let shutdown = async {
                    let _ = rx.await;
                };
                match gw {
                    Some(gw) => serve_until(listener, app, gw, shutdown).await.unwrap(),
                    None => axum::serve(listener, app).with_graceful_shutdown(shutdown).await.unwrap(),
                }
            });
        });
        Self { addr, stop: Some(stop), thread: Some(thread) }
    }

    fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    fn stop(&mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        if let Some(t) = self.thread.take() {
            t.join().unwrap();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.stop();
    }
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(StdDuration::from_secs(10)))
        .build()
        .into()
}

fn post(url: &str, body: &str) -> (u16, Json) {
    let mut resp = agent().post(url).header("content-type", "application/json").send(body).unwrap();
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().unwrap();
    (status, serde_json::from_str(&text).unwrap_or(Json::Null))
}

fn get(url: &str) -> (u16, Json) {
    let mut resp = agent().get(url).call().unwrap();
    let status = resp.status().as_u16();
    let text = resp.body_mut().read_to_string().unwrap();
    (status, serde_json::from_str(&text).unwrap_or(Json::Null))
}

#[test]
fn sidecar_endpoints() {
    let f = Fixture::new();
    let remote = f.honest_remote(&entities("context", "sender", "service"), &support::corpus_claims(), &support::trust(), t0());
    let Fixture { gw, stub, log, .. } = f;
    let gw = Arc::new(gw);
    let mut server = Server::start(router(gw.clone()), Some(gw.clone()));

    let body = |e| serde_json::to_string(&CallRequest::local(e)).unwrap();
    let (status, ok) = post(&server.url("/decide"), &body(entities("context", "sender", "service")));
    assert_eq!(status, 200, "{ok}");
    assert_eq!(ok["record"]["outcome"]["kind"], "allowed");
    assert_eq!(ok["item"]["attributes"]["name"]["payload"], "I'm PG 13");
    assert!(ok["record"]["slots"].as_array().unwrap().iter().all(|s| s["hash"].as_str().is_some_and(|h| h.len() == 64)));
    for (sender, service, slot) in [("youngSender", "service", "sender"), ("sender", "service2", "service")] {
        let (status, denied) = post(&server.url("/decide"), &body(entities("context", sender, service)));
        assert_eq!((status, denied["denial"]["slot"].as_str()), (403, Some(slot)));
        assert!(denied["denial"]["refutation"].is_object());
    }

    let id = ok["record"]["requestId"].as_str().unwrap();
    let (status, rec) = get(&server.url(&format!("/decisions/{id}")));
    assert_eq!((status, &rec), (200, &ok["record"]));
    assert_eq!(get(&server.url("/decisions/no-such-id")).0, 404);

    let (status, _) = post(&server.url("/verify-call"), &serde_json::to_string(&remote).unwrap());
    assert_eq!(status, 200);
    let mut tampered = remote.clone();
    if let CallMode::RemoteVerify { envelopes, .. } = &mut tampered.mode {
        envelopes.get_mut("sender").unwrap().claims[0].sig[0] ^= 1;
    }
    let (status, denied) = post(&server.url("/verify-call"), &serde_json::to_string(&tampered).unwrap());
    assert_eq!(status, 403);
    assert_eq!(denied["denial"]["report"]["verdict"], "Rejected");
    assert_eq!(denied["denial"]["report"]["failures"][0]["reason"], "SignatureInvalid");

    // wrong endpoint for the mode, and garbage, are logged and refused
    assert_eq!(post(&server.url("/decide"), &serde_json::to_string(&remote).unwrap()).0, 400);
    assert_eq!(post(&server.url("/verify-call"), "{").0, 400);
    server.stop();
    assert_eq!(log.len(), 7);
    support::audit(&log.records(), &stub.calls());
}

#[test]
fn http_upstream_round_trip_and_outage() {
    let b = support::bundle();
    let video = Arc::new(StubUpstream::from_store("videoName", &b.store, "Item"));
    let upstream_server = Server::start(video_router(video), None);
    let clock = Arc::new(FixedClock::new(t0()));
    let make = |url: &str| {
        let up = Arc::new(HttpUpstream::new(url, "videoName", StdDuration::from_secs(5)));
        Gateway::new(b.clone(), support::guard(&b), support::trust(), up, clock.clone(), Arc::new(DecisionLog::in_memory()))
            .with_claims(support::corpus_claims())
    };
    let gw = make(&format!("http://{}", upstream_server.addr));
    let r = gw.handle(&CallRequest::local(entities("context", "sender", "service")));
    assert_eq!(support::summary(&r), "Allowed(\"I'm PG 13\")");
    drop(upstream_server);
    let r = gw.handle(&CallRequest::local(entities("context", "sender", "service")));
    assert_eq!(support::summary(&r), "UpstreamError");
    // unknown video: the service answers 404
    let video = Arc::new(StubUpstream::new("videoName", []));
    let empty = Server::start(video_router(video), None);
    let gw = make(&format!("http://{}", empty.addr));
    let r = gw.handle(&CallRequest::local(entities("context", "sender", "service")));
    assert!(matches!(r.result, Err(polity_gateway::CallError::Upstream(polity_gateway::UpstreamError::Status(404)))));
}

#[test]
fn claim_server_feeds_the_gateway() {
    let b = support::bundle();
    let clock = Arc::new(FixedClock::new(t0()));
    let cs = Arc::new(ClaimServer::new(support::bank(), b.store.clone(), Duration::hours(1), ["tok".to_owned()], clock.clone()));
    let server = Server::start(claim_router(cs), None);
    let base = format!("http://{}", server.addr);
    let daddy = b.resolve_entity("daddy").unwrap();
    let props = vec!["parentOf".to_owned(), "grants".to_owned(), "nickname".to_owned()];

    let client = HttpClaimClient::new(&base, "tok", StdDuration::from_secs(5));
    let claims = client.fetch_claims(&daddy, &props).unwrap();
    assert_eq!(claims.iter().map(|c| c.property.as_str()).collect::<Vec<_>>(), ["parentOf", "grants"]);
    let trust = support::trust();
    for c in &claims {
        assert!(polity_core::claims::verify_claim(c, &trust.trust, &trust.keys, t0()).is_trusted());
    }
    let bad = HttpClaimClient::new(&base, "wrong", StdDuration::from_secs(5));
    assert_eq!(bad.fetch_claims(&daddy, &props), Err(ClaimError::Unauthorized));
    let down = HttpClaimClient::new("http://127.0.0.1:9", "tok", StdDuration::from_secs(2));
    assert!(matches!(down.fetch_claims(&daddy, &props), Err(ClaimError::Unavailable(_))));

    let stub = Arc::new(StubUpstream::from_store("videoName", &b.store, "Item"));
    let gw = Gateway::new(b.clone(), support::guard(&b), trust, stub, clock, Arc::new(DecisionLog::in_memory())).with_feed(ClaimFeed {
        source: Box::new(HttpClaimClient::new(&base, "tok", StdDuration::from_secs(5))),
        queries: vec![(daddy.clone(), props.clone())],
    });
    let bag = gw.claim_bag(t0());
    assert!(bag.trusted(&daddy, "parentOf").is_some() && bag.trusted(&daddy, "grants").is_some());
    assert!(gw.handle(&CallRequest::local(entities("context", "sender", "service"))).result.is_ok());
}

#[test]
fn config_builds_and_shuts_down_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = GatewayConfig::load(&support::corpus().join("gateway.toml")).unwrap();
    cfg.log = dir.path().join("decisions.log");
    let built = cfg.build(Arc::new(FixedClock::new(t0()))).unwrap();
    assert!(built.claim_server.is_some());
    let app = router(built.gateway.clone()).merge(claim_router(built.claim_server.unwrap()));
    let mut server = Server::start(app, Some(built.gateway.clone()));
    let body = serde_json::to_string(&CallRequest::local(entities("context", "sender", "service"))).unwrap();
    assert_eq!(post(&server.url("/decide"), &body).0, 200);
    let (status, claims) = {
        let mut resp = agent()
            .post(&server.url("/claims/query"))
            .header("Authorization", "Bearer dev-token")
            .send_json(serde_json::json!({"subject": "urn:polity:sender", "properties": ["age"]}))
            .unwrap();
        (resp.status().as_u16(), resp.body_mut().read_json::<Json>().unwrap())
    };
    assert_eq!((status, claims.as_array().unwrap().len()), (200, 1));
    server.stop();
    let records = read_chain(std::fs::read(dir.path().join("decisions.log")).unwrap().as_slice()).unwrap();
    assert_eq!(records.len(), 1);
}

#[test]
fn startup_fails_fast_on_a_bad_bundle() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.pol"), "schema A { n: Nat }\npolicy P(a: A) { rule r: a.m == 1; }\n").unwrap();
    let cfg_text = std::fs::read_to_string(support::corpus().join("gateway.toml"))
        .unwrap()
        .replace("bundle = [\"transaction.pol\"]", "bundle = [\"bad.pol\"]");
    let corpus = support::corpus();
    let cfg_text = cfg_text
        .replace("\"guard.json\"", &format!("{:?}", corpus.join("guard.json")))
        .replace("\"trust.json\"", &format!("{:?}", corpus.join("trust.json")))
        .replace("\"claims.json\"", &format!("{:?}", corpus.join("claims.json")))
        .replace("\"keys/bank.json\"", &format!("{:?}", corpus.join("keys/bank.json")));
    let path = dir.path().join("gateway.toml");
    std::fs::write(&path, cfg_text).unwrap();
    let cfg = GatewayConfig::load(&path).unwrap();
    match cfg.build(Arc::new(FixedClock::new(t0()))) {
        Err(ConfigError::Bundle(msg)) => assert!(msg.contains('m'), "{msg}"),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("a bundle with type errors must not start"),
    }
    assert!(!dir.path().join("decisions.log").exists());
}
