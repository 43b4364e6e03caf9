//! The committed proof envelope: regeneration, round trip and tampering.
//!
//! `UPDATE_GOLDEN=1 cargo test -p polity-core --test golden` rewrites it.

use std::path::PathBuf;
use std::time::Instant;

use polity_core::claims::{Claim, ClaimBag, TrustConfig};
use polity_core::clock::timestamp;
use polity_core::{compile_paths, decide_policy, verify_bytes, CompiledBundle, ProofEnvelope, VerifyOptions};

#[path = "support/tamper.rs"]
mod tamper;

const PRODUCED_AT: &str = "2026-03-01T12:00:00.000Z";

fn corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn fixtures() -> (CompiledBundle, TrustConfig, Vec<Claim>) {
    let b = compile_paths(&[corpus().join("transaction.pol")]).unwrap();
    let trust = TrustConfig::from_json(&std::fs::read_to_string(corpus().join("trust.json")).unwrap()).unwrap();
    let claims = serde_json::from_str(&std::fs::read_to_string(corpus().join("claims.json")).unwrap()).unwrap();
    (b, trust, claims)
}

fn regenerate() -> Vec<u8> {
    let (b, trust, claims) = fixtures();
    let at = timestamp::parse(PRODUCED_AT).unwrap();
    let bag = ClaimBag::new(claims, &trust.trust, &trust.keys, at);
    let args = vec![b.resolve_entity("sender").unwrap(), b.resolve_entity("payload").unwrap()];
    let d = decide_policy(b.policy("SafeSender").unwrap(), &args, &b.store, &bag).unwrap();
    ProofEnvelope::from_decision(&d, args, &bag, at, "urn:polity:client").unwrap().to_bytes()
}

#[test]
fn golden_envelope_is_current() {
    let path = corpus().join("proofs/safe-sender.json");
    let fresh = regenerate();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &fresh).unwrap();
    }
    let committed = std::fs::read(&path).unwrap();
    assert_eq!(String::from_utf8(committed).unwrap(), String::from_utf8(fresh).unwrap());
}

#[test]
fn golden_envelope_round_trips_and_verifies() {
    let (b, trust, _) = fixtures();
    let bytes = std::fs::read(corpus().join("proofs/safe-sender.json")).unwrap();
    let env = ProofEnvelope::from_bytes(&bytes).unwrap();
    assert_eq!(env.to_bytes(), bytes);
    assert_eq!((env.rule.as_str(), env.claims.len()), ("senderPropYoung", 2));
    let at = timestamp::parse(PRODUCED_AT).unwrap();
    let pol = b.policy("SafeSender").unwrap();
    assert!(verify_bytes(pol, &bytes, &trust, at, &VerifyOptions::default()).accepted());
}

#[test]
fn every_claim_byte_flip_is_rejected() {
    let (b, trust, _) = fixtures();
    let bytes = std::fs::read(corpus().join("proofs/safe-sender.json")).unwrap();
    let started = Instant::now();
    let stats = tamper::exhaust(b.policy("SafeSender").unwrap(), &bytes, &trust, timestamp::parse(PRODUCED_AT).unwrap());
    let spans: usize = tamper::claim_spans(&ProofEnvelope::from_bytes(&bytes).unwrap(), &bytes).iter().map(|r| r.len()).sum();
    assert_eq!(stats.mutations, spans * 255);
    assert!(stats.false_accepts.is_empty(), "accepted mutations: {:?}", stats.false_accepts);
    eprintln!("{} mutations in {:?}", stats.mutations, started.elapsed());
}
