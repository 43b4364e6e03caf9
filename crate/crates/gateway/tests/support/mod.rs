//! The transaction fixtures behind a gateway with an instrumented stub.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use polity_core::claims::{Claim, ClaimBag, IssuerKeypair, TrustConfig};
use polity_core::clock::{timestamp, FixedClock};
use polity_core::{CompiledBundle, Entity};
use polity_gateway::config::{load_bundle, load_claims, load_trust};
use polity_gateway::{
    client_envelopes, CallReport, CallRequest, DecisionLog, DecisionRecord, Gateway, GuardSpec, Outcome, StubUpstream,
};

pub fn corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn t0() -> DateTime<Utc> {
    timestamp::parse("2026-03-01T12:00:00.000Z").unwrap()
}

pub fn bundle() -> Arc<CompiledBundle> {
    Arc::new(load_bundle(&[corpus().join("transaction.pol")]).unwrap())
}

pub fn trust() -> TrustConfig {
    load_trust(&corpus().join("trust.json")).unwrap()
}

pub fn corpus_claims() -> Vec<Claim> {
    load_claims(&corpus().join("claims.json")).unwrap()
}

/// The development issuer trusted by `corpus/trust.json`.
pub fn bank() -> IssuerKeypair {
    IssuerKeypair::from_json(&std::fs::read_to_string(corpus().join("keys/bank.json")).unwrap()).unwrap()
}

pub fn guard(b: &CompiledBundle) -> GuardSpec {
    GuardSpec::from_json(&std::fs::read_to_string(corpus().join("guard.json")).unwrap(), b).unwrap()
}

pub fn entities(context: &str, sender: &str, service: &str) -> BTreeMap<String, String> {
    [("context", context), ("sender", sender), ("channel", "channel"), ("payload", "payload"), ("service", service)]
        .into_iter()
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect()
}

/// Every combination of the fixture contexts, senders and services.
pub fn fixture_requests() -> Vec<BTreeMap<String, String>> {
    let mut out = Vec::new();
    for c in ["context", "lateContext"] {
        for s in ["sender", "youngSender"] {
            for v in ["service", "service2"] {
                out.push(entities(c, s, v));
            }
        }
    }
    out
}

pub struct Fixture {
    pub bundle: Arc<CompiledBundle>,
    pub stub: Arc<StubUpstream>,
    pub log: Arc<DecisionLog>,
    pub clock: Arc<FixedClock>,
    pub gw: Gateway,
}

impl Fixture {
    pub fn new() -> Self {
        Self::with(trust(), corpus_claims(), Arc::new(DecisionLog::in_memory()))
    }

    pub fn with(trust: TrustConfig, claims: Vec<Claim>, log: Arc<DecisionLog>) -> Self {
        let bundle = bundle();
        let stub = Arc::new(StubUpstream::from_store("videoName", &bundle.store, "Item"));
        let clock = Arc::new(FixedClock::new(t0()));
        let gw = Gateway::new(Arc::clone(&bundle), guard(&bundle), trust, stub.clone(), clock.clone(), Arc::clone(&log))
            .with_claims(claims);
        Self { bundle, stub, log, clock, gw }
    }

    pub fn local(&self, e: &BTreeMap<String, String>) -> CallReport {
        self.gw.handle(&CallRequest::local(e.clone()))
    }

    /// An honest client's RemoteVerify request, decided with `claims` at
    /// `at`; ids are resolved to the bundle's.
    pub fn honest_remote(&self, e: &BTreeMap<String, String>, claims: &[Claim], trust: &TrustConfig, at: DateTime<Utc>) -> CallRequest {
        let bag = ClaimBag::new(claims.to_vec(), &trust.trust, &trust.keys, at);
        let prep = client_envelopes(&self.bundle, self.gw.guard(), e, &bag, at, "urn:polity:client");
        let ids = e.iter().map(|(k, v)| (k.clone(), self.bundle.resolve_entity(v).unwrap().to_string())).collect();
        CallRequest::remote(ids, prep.envelopes, self.payload())
    }

    pub fn payload(&self) -> Entity {
        self.bundle.store.entity(&self.bundle.resolve_entity("payload").unwrap()).unwrap().clone()
    }

    pub fn audit(&self) {
        audit(&self.log.records(), &self.stub.calls());
    }
}

/// Short-lived claims by the bank about daddy's relationships.
pub fn daddy_claims(kp: &IssuerKeypair, b: &CompiledBundle, from: DateTime<Utc>, validity: Duration) -> Vec<Claim> {
    let daddy = b.resolve_entity("daddy").unwrap();
    let e = b.store.entity(&daddy).unwrap();
    ["parentOf", "grants"]
        .into_iter()
        .map(|p| kp.sign(daddy.clone(), p, e.attributes[p].clone(), from, from + validity))
        .collect()
}

/// Outcome without the per-request item id: Allowed(name), Denied(slot) or
/// UpstreamError.
pub fn summary(r: &CallReport) -> String {
    match r.outcome().expect("logged") {
        Outcome::Allowed { item } => format!("Allowed({})", item.attributes["name"]),
        Outcome::Denied { slot, .. } => format!("Denied({slot})"),
        Outcome::UpstreamError { .. } => "UpstreamError".into(),
    }
}

/// No upstream call without a record whose slots all passed, exactly one
/// call per such record, and every Allowed record among them.
pub fn audit(records: &[DecisionRecord], calls: &[String]) {
    let reached: BTreeSet<&str> = records.iter().filter(|r| r.all_slots_passed()).map(|r| r.request_id()).collect();
    let mut seen = BTreeSet::new();
    for c in calls {
        assert!(reached.contains(c.as_str()), "upstream call {c} without passing slots");
        assert!(seen.insert(c.as_str()), "upstream called twice for {c}");
    }
    assert_eq!(seen, reached, "every request that passed all slots calls upstream once");
    for r in records.iter().filter(|r| r.outcome().is_allowed()) {
        assert!(seen.contains(r.request_id()));
    }
}
