//! Guarded calls over the transaction fixtures, decided locally.

mod support;

use std::sync::Arc;

use polity_core::{Dec, Refutation, Value};
use polity_gateway::log::read_chain;
use polity_gateway::{CallError, Denial, DecisionLog, Mode, Outcome, SlotVerdict, UpstreamError};
use serde_json::json;
use support::{entities, summary, Fixture};

#[test]
fn transaction_trio() {
    let f = Fixture::new();
    let ok = f.local(&entities("context", "sender", "service"));
    let item = ok.result.as_ref().unwrap();
    assert_eq!(item.attributes["name"], Value::str("I'm PG 13"));
    assert_eq!(item.attributes["ageLimit"], Value::Nat(13));
    assert_eq!(summary(&f.local(&entities("context", "youngSender", "service"))), "Denied(sender)");
    assert_eq!(summary(&f.local(&entities("context", "sender", "service2"))), "Denied(service)");
    assert_eq!(f.stub.call_count(), 1);
    f.audit();
}

#[test]
fn allowed_record_carries_rules_and_hashes() {
    let f = Fixture::new();
    let r = f.local(&entities("context", "sender", "service"));
    let rec = r.record.unwrap();
    let rules: Vec<_> = rec.draft.slots.iter().map(|s| (s.slot.as_str(), s.verdict, s.rule.as_deref())).collect();
    assert_eq!(
        rules,
        [
            ("context", SlotVerdict::Yes, Some("contextProp")),
            ("sender", SlotVerdict::Yes, Some("senderPropYoung")),
            ("channel", SlotVerdict::Yes, Some("isHttps")),
            ("payload", SlotVerdict::Yes, Some("safePayload")),
            ("service", SlotVerdict::Yes, Some("safeService")),
        ]
    );
    assert!(rec.draft.slots.iter().all(|s| s.hash.as_ref().is_some_and(|h| h.len() == 64)));
    let resp = rec.draft.response.unwrap();
    assert_eq!((resp.verdict, resp.rule.as_deref()), (SlotVerdict::Yes, Some("safeResponse")));
}

#[test]
fn late_context_denied_first() {
    let f = Fixture::new();
    let r = f.local(&entities("lateContext", "youngSender", "service2"));
    let Err(CallError::Denied(Denial::Refuted { slot, refutation, .. })) = &r.result else { panic!("{:?}", r.result) };
    assert_eq!(slot, "context");
    // 13 <= 12 fails at the comparison itself
    assert!(matches!(**refutation, Refutation::Cmp { .. }), "{refutation:?}");
    let verdicts: Vec<_> = r.record.unwrap().draft.slots.iter().map(|s| s.verdict).collect();
    assert_eq!(verdicts[0], SlotVerdict::No);
    assert!(verdicts[1..].iter().all(|v| *v == SlotVerdict::NotEvaluated));
    assert_eq!(f.stub.call_count(), 0);
    f.audit();
}

#[test]
fn young_sender_refutation_covers_both_rules() {
    let f = Fixture::new();
    let r = f.local(&entities("context", "youngSender", "service"));
    let Err(CallError::Denied(Denial::Refuted { refutation, .. })) = r.result else { panic!() };
    let b = &f.bundle;
    let pol = b.policy("SafeSender").unwrap();
    let args = [b.resolve_entity("youngSender").unwrap(), b.resolve_entity("payload").unwrap()];
    let bag = f.gw.claim_bag(support::t0());
    let d = polity_core::decide_policy(pol, &args, &b.store, &bag).unwrap();
    assert_eq!(d.dec, Dec::No(*refutation));
    assert_eq!(d.rule_refutations(pol).len(), 2);
}

#[test]
fn wrong_item_denied_at_response() {
    let f = Fixture::new();
    f.stub.force(Some(Ok(json!({"name": "Other Movie", "ageLimit": 13}).as_object().unwrap().clone())));
    let r = f.local(&entities("context", "sender", "service"));
    let Err(CallError::Denied(d)) = &r.result else { panic!("{:?}", r.result) };
    assert_eq!(d.slot(), "response");
    let rec = r.record.as_ref().unwrap();
    assert!(rec.all_slots_passed());
    assert_eq!(rec.draft.response.as_ref().unwrap().verdict, SlotVerdict::No);
    assert!(matches!(rec.outcome(), Outcome::Denied { slot, .. } if slot == "response"));
    assert_eq!(f.stub.call_count(), 1);
    f.audit();
}

#[test]
fn upstream_failures_are_not_denials() {
    let f = Fixture::new();
    for (forced, expect) in [
        (Err(UpstreamError::Status(503)), "503"),
        (Err(UpstreamError::Transport("connection refused".into())), "refused"),
        (Ok(json!({"name": "I'm PG 13"}).as_object().unwrap().clone()), "ageLimit"),
    ] {
        f.stub.force(Some(forced));
        let r = f.local(&entities("context", "sender", "service"));
        assert!(matches!(r.result, Err(CallError::Upstream(_))), "{:?}", r.result);
        let Outcome::UpstreamError { message } = r.outcome().unwrap() else { panic!() };
        assert!(message.contains(expect), "{message}");
    }
    assert_eq!(f.stub.call_count(), 3);
    f.audit();
}

#[test]
fn every_request_is_logged_once() {
    let f = Fixture::new();
    let bad = [
        &b"not json"[..],
        br#"{"entities":{}}"#,
        br#"{"entities":{"context":"context"},"extra":1}"#,
        br#"{"entities":{"context":"nobody","sender":"sender","channel":"channel","payload":"payload","service":"service"}}"#,
        br#"{"entities":{"context":"sender","sender":"sender","channel":"channel","payload":"payload","service":"service"}}"#,
        br#"{"entities":{"context":"context","sender":"sender","channel":"channel","payload":"payload","service":"service","x":"y"}}"#,
    ];
    for (i, bytes) in bad.iter().enumerate() {
        let r = f.gw.handle_bytes(bytes);
        assert!(matches!(r.result, Err(CallError::Denied(Denial::Malformed(_)))), "{i}: {:?}", r.result);
        assert_eq!(f.log.len(), i + 1);
    }
    let kinds: Vec<Mode> = f.log.records().iter().map(|r| r.draft.mode).collect();
    assert_eq!(kinds[..3], [Mode::Unparsed, Mode::LocalDecide, Mode::Unparsed]);
    let ok = f.gw.handle_bytes(
        br#"{"entities":{"context":"context","sender":"sender","channel":"channel","payload":"payload","service":"service"}}"#,
    );
    assert!(ok.result.is_ok());
    let ids: std::collections::BTreeSet<_> = f.log.records().iter().map(|r| r.request_id().to_owned()).collect();
    assert_eq!(ids.len(), bad.len() + 1);
    f.audit();
}

#[test]
fn file_log_chain_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("decisions.log");
    {
        let f = Fixture::with(support::trust(), support::corpus_claims(), Arc::new(DecisionLog::open(&path).unwrap()));
        for e in support::fixture_requests() {
            f.local(&e);
        }
        f.audit();
    }
    let text = std::fs::read(&path).unwrap();
    let records = read_chain(text.as_slice()).unwrap();
    assert_eq!(records.len(), 8);
    assert_eq!(records.iter().filter(|r| r.outcome().is_allowed()).count(), 1);
    let f = Fixture::with(support::trust(), support::corpus_claims(), Arc::new(DecisionLog::open(&path).unwrap()));
    let r = f.local(&entities("context", "sender", "service")).record.unwrap();
    assert_eq!((r.seq, r.prev_hash.as_str()), (8, records[7].hash.as_str()));
}

#[test]
fn concurrent_requests_serialize_in_the_log() {
    let f = Arc::new(Fixture::new());
    std::thread::scope(|s| {
        for i in 0..8 {
            let f = Arc::clone(&f);
            s.spawn(move || {
                for e in support::fixture_requests().iter().cycle().skip(i).take(10) {
                    f.local(e);
                }
            });
        }
    });
    let records = f.log.records();
    assert_eq!(records.len(), 80);
    let lines: Vec<String> = records.iter().map(|r| r.to_line()).collect();
    assert_eq!(read_chain(lines.join("\n").as_bytes()).unwrap().len(), 80);
    assert_eq!(f.stub.call_count(), records.iter().filter(|r| r.outcome().is_allowed()).count());
    f.audit();
}

#[test]
fn sender_proof_cites_the_bank_claims() {
    let f = Fixture::new();
    let rec = f.local(&entities("context", "sender", "service")).record.unwrap();
    let b = &f.bundle;
    let args = [b.resolve_entity("sender").unwrap(), b.resolve_entity("payload").unwrap()];
    let d = polity_core::decide_policy(b.policy("SafeSender").unwrap(), &args, &b.store, &f.gw.claim_bag(support::t0())).unwrap();
    let Dec::Yes(p) = d.dec else { panic!() };
    assert_eq!(rec.draft.slots[1].hash.as_deref(), Some(p.hash().as_str()));
    assert_eq!(p.claim_refs().len(), 2);
}
