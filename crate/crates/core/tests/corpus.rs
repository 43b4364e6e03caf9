//! Decisions on the committed fixture bundles.

use std::path::PathBuf;

use chrono::{Duration, TimeZone, Utc};
use polity_core::claims::{ClaimBag, IssuerKeypair, KeyRing, TrustConfig, TrustEntry, TrustList};
use polity_core::eval::{filter_with_proofs, resolve_expr, Env};
use polity_core::verify::{check_proof, check_refutation, verify, VerifyOptions};
use polity_core::{compile_paths, decide_policy, AttrExpr, Builtin, CompiledBundle, Dec, EntityId, Proof, ProofEnvelope, Refutation, Value};

fn corpus(file: &str) -> CompiledBundle {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(file);
    compile_paths(&[path]).unwrap_or_else(|e| panic!("{e:?}"))
}

fn id(b: &CompiledBundle, handle: &str) -> EntityId {
    b.resolve_entity(handle).unwrap()
}

#[test]
fn good_servers_are_exactly_app_db_cache() {
    let b = corpus("servers.pol");
    let pol = b.policy("GoodServer").unwrap();
    let servers: Vec<EntityId> = ["app", "db", "cache", "ci", "busybox"].iter().map(|h| id(&b, h)).collect();
    let kept = filter_with_proofs(pol, &servers, &b.store, &ClaimBag::empty()).unwrap();
    let names: Vec<_> = kept.iter().map(|(i, _)| i.clone()).collect();
    assert_eq!(names, servers[..3]);
}

#[test]
fn server_rules_and_refutations() {
    let b = corpus("servers.pol");
    let pol = b.policy("GoodServer").unwrap();
    let claims = ClaimBag::empty();
    let rule = |h: &str| decide_policy(pol, &[id(&b, h)], &b.store, &claims).unwrap().rule;
    assert_eq!(rule("db").as_deref(), Some("goodserver"));
    assert_eq!(rule("cache").as_deref(), Some("goodserver"));
    assert_eq!(rule("app").as_deref(), Some("safeserver"));
    assert_eq!(rule("ci"), None);
    assert_eq!(rule("busybox"), None);

    let protos = b.policy("GoodProtos").unwrap();
    let d = decide_policy(protos, &[id(&b, "db")], &b.store, &claims).unwrap();
    assert!(matches!(d.dec, Dec::Yes(Proof::EmptyIntersect { .. })));
    let d = decide_policy(protos, &[id(&b, "busybox")], &b.store, &claims).unwrap();
    match d.dec {
        Dec::No(Refutation::NonEmptyIntersect { witness, index_in_a, index_in_b, .. }) => {
            assert_eq!(witness, Value::atom("Protocol", "telnet"));
            assert_eq!((index_in_a, index_in_b), (0, 0));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn every_server_decision_checks() {
    let b = corpus("servers.pol");
    let pol = b.policy("GoodServer").unwrap();
    let prop = pol.as_proposition().unwrap();
    let trust = TrustConfig { trust: TrustList::new("urn:v", []).unwrap(), keys: KeyRing::new() };
    let opts = VerifyOptions::default();
    let now = Utc::now();
    for e in b.store.entities_of_kind("Server") {
        let d = decide_policy(pol, std::slice::from_ref(&e.id), &b.store, &ClaimBag::empty()).unwrap();
        let env: Env = [("s".to_owned(), e.reference())].into();
        let report = match &d.dec {
            Dec::Yes(p) => check_proof(pol, &pol.rule(d.rule.as_deref().unwrap()).unwrap().body, p, &env, &[], &trust, now, &opts, Some(&b.store)),
            Dec::No(r) => check_refutation(pol, &prop, r, &env, &[], &trust, now, &opts, Some(&b.store)),
        };
        assert!(report.accepted(), "{}: {:?}", e.id, report.failures);
    }
}

#[test]
fn exposed_ports_of_app() {
    let b = corpus("servers.pol");
    let env: Env = [("s".to_owned(), Value::entity("Server", id(&b, "app")))].into();
    let e = AttrExpr::call(Builtin::ExposedPorts, vec![AttrExpr::attr("s", "ports")]);
    let v = resolve_expr(&e, &env, &b.store).unwrap();
    assert_eq!(v.as_list().unwrap(), [Value::entity("Port", id(&b, "p2"))]);
}

#[test]
fn sender_proof_with_claims_verifies_remotely() {
    let b = corpus("transaction.pol");
    let pol = b.policy("SafeSender").unwrap();
    let bank = IssuerKeypair::from_seed("urn:issuer:bank", [7; 32]);
    let t0 = Utc.with_ymd_and_hms(2026, 1, 1, 9, 0, 0).unwrap();
    let daddy = id(&b, "daddy");
    let attr = |h: &EntityId, a: &str| b.store.entity(h).unwrap().attributes[a].clone();
    let claims = vec![
        bank.sign(daddy.clone(), "parentOf", attr(&daddy, "parentOf"), t0, t0 + Duration::hours(1)),
        bank.sign(daddy.clone(), "grants", attr(&daddy, "grants"), t0, t0 + Duration::hours(1)),
    ];
    let trust = TrustConfig {
        trust: TrustList::new("urn:gw", [TrustEntry { issuer: "urn:issuer:bank".into(), property: "*".into() }]).unwrap(),
        keys: KeyRing::new().with(&bank),
    };
    let now = t0 + Duration::minutes(5);
    let bag = ClaimBag::new(claims, &trust.trust, &trust.keys, now);
    let args = [id(&b, "sender"), id(&b, "payload")];
    let d = decide_policy(pol, &args, &b.store, &bag).unwrap();
    assert_eq!(d.rule.as_deref(), Some("senderPropYoung"));
    match d.dec.proof().unwrap() {
        Proof::Exists { witness, .. } => assert_eq!(witness, &Value::entity("User", daddy.clone())),
        other => panic!("{other:?}"),
    }
    let env = ProofEnvelope::from_decision(&d, args.to_vec(), &bag, now, "urn:client").unwrap();
    assert_eq!(env.claims.len(), 2);
    let opts = VerifyOptions::default();
    assert!(verify(pol, &env, &trust, now, &opts).accepted());
    let late = verify(pol, &env, &trust, t0 + Duration::hours(2), &opts);
    assert!(late.has_reason("ClaimExpired") && !late.accepted());

    let young = decide_policy(pol, &[id(&b, "youngSender"), id(&b, "payload")], &b.store, &bag).unwrap();
    assert!(!young.dec.is_yes());
}
