//! Independent checking of proofs and refutations.
//!
//! The verifier holds its own copy of the policy and never consults an
//! entity store: it checks tree shape against the policy, recomputes leaf
//! facts from the evidenced values, and checks every cited claim's
//! signature, trust and validity window.

use std::cell::RefCell;
use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::claims::{verify_claim, window_status, Claim, ClaimStatus, TrustConfig};
use crate::envelope::ProofEnvelope;
use crate::eval::Env;
use crate::model::{EntityStore, EnumDecl};
use crate::policy::{
    intersect, AttrExpr, Builtin, Domain, Proposition, TypedPolicy, NETWORK_PUBLIC_ATTR, PORT_NETWORK_ATTR,
};
use crate::proof::{Case, Evidence, Proof, Refutation, Side};
use crate::value::{EntityId, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail")]
pub enum FailureReason {
    /// A node kind, side, witness or case list that does not fit the policy.
    ShapeMismatch(String),
    /// A recomputed leaf fact does not hold on the evidenced values.
    LeafRecheckFailed(String),
    /// Evidence that does not match the policy literal, the variable binding
    /// or a pinned local value.
    EvidenceMismatch(String),
    SignatureInvalid,
    UntrustedIssuer(String),
    ClaimExpired,
    ClaimNotYetValid,
    DanglingClaimRef(String),
    /// The cited claim is about another subject or property or value.
    ClaimMismatch(String),
    /// A literal value where the verifier requires a claim.
    UnbackedAttribute(String),
    /// `producedAt` is too far from the verification clock.
    StaleEnvelope(String),
    Malformed(String),
}

impl FailureReason {
    pub fn name(&self) -> &'static str {
        match self {
            FailureReason::ShapeMismatch(_) => "ShapeMismatch",
            FailureReason::LeafRecheckFailed(_) => "LeafRecheckFailed",
            FailureReason::EvidenceMismatch(_) => "EvidenceMismatch",
            FailureReason::SignatureInvalid => "SignatureInvalid",
            FailureReason::UntrustedIssuer(_) => "UntrustedIssuer",
            FailureReason::ClaimExpired => "ClaimExpired",
            FailureReason::ClaimNotYetValid => "ClaimNotYetValid",
            FailureReason::DanglingClaimRef(_) => "DanglingClaimRef",
            FailureReason::ClaimMismatch(_) => "ClaimMismatch",
            FailureReason::UnbackedAttribute(_) => "UnbackedAttribute",
            FailureReason::StaleEnvelope(_) => "StaleEnvelope",
            FailureReason::Malformed(_) => "Malformed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub path: String,
    #[serde(flatten)]
    pub reason: FailureReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Accepted,
    Rejected,
}

/// `Accepted` exactly when `failures` is empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub verdict: Verdict,
    pub failures: Vec<Failure>,
}

impl VerifyReport {
    fn from_failures(failures: Vec<Failure>) -> Self {
        let verdict = if failures.is_empty() { Verdict::Accepted } else { Verdict::Rejected };
        Self { verdict, failures }
    }

    pub fn rejected(path: impl Into<String>, reason: FailureReason) -> Self {
        Self::from_failures(vec![Failure { path: path.into(), reason }])
    }

    pub fn accepted(&self) -> bool {
        self.verdict == Verdict::Accepted
    }

    pub fn has_reason(&self, name: &str) -> bool {
        self.failures.iter().any(|f| f.reason.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyOptions {
    /// Largest accepted distance between `producedAt` and the verifier clock.
    pub max_skew: Duration,
    /// `Kind.attribute` pairs whose evidence must be a claim.
    pub required_claims: Vec<String>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { max_skew: Duration::seconds(300), required_claims: Vec::new() }
    }
}

/// Local knowledge a verifier may optionally hold, used to audit literal
/// evidence and the completeness of entity-domain case lists.
pub trait EvidencePin {
    /// Whether literal evidence about `subject` is audited at all.
    fn pins(&self, _subject: &EntityId) -> bool {
        true
    }
    fn attribute(&self, subject: &EntityId, attr: &str) -> Option<Value>;
    fn domain(&self, kind: &str) -> Option<Vec<Value>>;
}

impl EvidencePin for EntityStore {
    fn attribute(&self, subject: &EntityId, attr: &str) -> Option<Value> {
        self.entity(subject)?.attributes.get(attr).cloned()
    }

    fn domain(&self, kind: &str) -> Option<Vec<Value>> {
        self.decls().schema(kind)?;
        Some(self.entities_of_kind(kind).map(|e| e.reference()).collect())
    }
}

/// Verifies an envelope against the verifier's own copy of the policy.
pub fn verify(pol: &TypedPolicy, env: &ProofEnvelope, trust: &TrustConfig, clock: DateTime<Utc>, opts: &VerifyOptions) -> VerifyReport {
    verify_pinned(pol, env, trust, clock, opts, None)
}

/// Parses and verifies; malformed input is rejected, never an error.
pub fn verify_bytes(pol: &TypedPolicy, bytes: &[u8], trust: &TrustConfig, clock: DateTime<Utc>, opts: &VerifyOptions) -> VerifyReport {
    match ProofEnvelope::from_bytes(bytes) {
        Ok(env) => verify(pol, &env, trust, clock, opts),
        Err(e) => VerifyReport::rejected("", FailureReason::Malformed(e.to_string())),
    }
}

pub fn verify_pinned(
    pol: &TypedPolicy,
    env: &ProofEnvelope,
    trust: &TrustConfig,
    clock: DateTime<Utc>,
    opts: &VerifyOptions,
    pin: Option<&dyn EvidencePin>,
) -> VerifyReport {
    let mut failures = Vec::new();
    let fail = |failures: &mut Vec<Failure>, path: &str, reason| failures.push(Failure { path: path.into(), reason });
    if env.policy != pol.name {
        fail(
            &mut failures,
            "policy",
            FailureReason::ShapeMismatch(format!("envelope is for `{}`, expected `{}`", env.policy, pol.name)),
        );
        return VerifyReport::from_failures(failures);
    }
    let Some(rule) = pol.rule(&env.rule) else {
        fail(&mut failures, "rule", FailureReason::ShapeMismatch(format!("no rule `{}` in `{}`", env.rule, pol.name)));
        return VerifyReport::from_failures(failures);
    };
    if env.produced_at > clock + opts.max_skew || clock - env.produced_at > opts.max_skew {
        fail(
            &mut failures,
            "producedAt",
            FailureReason::StaleEnvelope(format!(
                "produced at {} but verified at {}; allowed skew {}s",
                crate::clock::timestamp::format(&env.produced_at),
                crate::clock::timestamp::format(&clock),
                opts.max_skew.num_seconds()
            )),
        );
    }
    let bindings = match bind_params(pol, &env.args) {
        Ok(b) => b,
        Err(reason) => {
            fail(&mut failures, "args", reason);
            return VerifyReport::from_failures(failures);
        }
    };
    let mut checker = Checker::new(pol, &env.claims, trust, clock, Some(env.produced_at), opts, pin);
    failures.append(&mut checker.failures);
    checker.proof(&rule.body, &env.proof, &bindings, "proof");
    failures.append(&mut checker.failures);
    VerifyReport::from_failures(failures)
}

/// Binds parameters to the envelope's argument ids, with the kinds the
/// policy declares.
pub fn bind_params(pol: &TypedPolicy, args: &[EntityId]) -> Result<Env, FailureReason> {
    if args.len() != pol.params.len() {
        return Err(FailureReason::ShapeMismatch(format!(
            "`{}` takes {} argument(s), envelope has {}",
            pol.name,
            pol.params.len(),
            args.len()
        )));
    }
    Ok(pol.params.iter().zip(args).map(|(p, id)| (p.name.clone(), Value::entity(p.kind.clone(), id.clone()))).collect())
}

/// Checks a proof of `prop` under `bindings`, outside any envelope.
#[allow(clippy::too_many_arguments)]
pub fn check_proof(
    pol: &TypedPolicy,
    prop: &Proposition,
    proof: &Proof,
    bindings: &Env,
    claims: &[Claim],
    trust: &TrustConfig,
    clock: DateTime<Utc>,
    opts: &VerifyOptions,
    pin: Option<&dyn EvidencePin>,
) -> VerifyReport {
    let mut c = Checker::new(pol, claims, trust, clock, None, opts, pin);
    c.proof(prop, proof, bindings, "proof");
    VerifyReport::from_failures(c.failures)
}

/// Checks a refutation of `prop` under `bindings`.
#[allow(clippy::too_many_arguments)]
pub fn check_refutation(
    pol: &TypedPolicy,
    prop: &Proposition,
    refutation: &Refutation,
    bindings: &Env,
    claims: &[Claim],
    trust: &TrustConfig,
    clock: DateTime<Utc>,
    opts: &VerifyOptions,
    pin: Option<&dyn EvidencePin>,
) -> VerifyReport {
    let mut c = Checker::new(pol, claims, trust, clock, None, opts, pin);
    c.refutation(prop, refutation, bindings, "refutation");
    VerifyReport::from_failures(c.failures)
}

struct Checker<'a> {
    enums: &'a BTreeMap<String, EnumDecl>,
    claims: BTreeMap<String, &'a Claim>,
    trust: &'a TrustConfig,
    clock: DateTime<Utc>,
    produced_at: Option<DateTime<Utc>>,
    opts: &'a VerifyOptions,
    pin: Option<&'a dyn EvidencePin>,
    status: RefCell<BTreeMap<String, Option<FailureReason>>>,
    failures: Vec<Failure>,
}

fn join(path: &str, seg: &str) -> String {
    format!("{path}.{seg}")
}

impl<'a> Checker<'a> {
    fn new(
        pol: &'a TypedPolicy,
        claims: &'a [Claim],
        trust: &'a TrustConfig,
        clock: DateTime<Utc>,
        produced_at: Option<DateTime<Utc>>,
        opts: &'a VerifyOptions,
        pin: Option<&'a dyn EvidencePin>,
    ) -> Self {
        let mut failures = Vec::new();
        let mut map = BTreeMap::new();
        for (i, c) in claims.iter().enumerate() {
            if map.insert(c.content_hash(), c).is_some() {
                failures.push(Failure {
                    path: format!("claims[{i}]"),
                    reason: FailureReason::Malformed("duplicate claim".into()),
                });
            }
        }
        Self {
            enums: &pol.enums,
            claims: map,
            trust,
            clock,
            produced_at,
            opts,
            pin,
            status: RefCell::new(BTreeMap::new()),
            failures,
        }
    }

    fn fail(&mut self, path: String, reason: FailureReason) {
        self.failures.push(Failure { path, reason });
    }

    fn shape(&mut self, path: &str, what: String) {
        self.fail(path.to_owned(), FailureReason::ShapeMismatch(what));
    }

    fn proof(&mut self, prop: &Proposition, proof: &Proof, env: &Env, path: &str) {
        match (prop, proof) {
            (Proposition::Cmp { lhs, op, rhs }, Proof::Cmp { op: pop, lhs: el, rhs: er }) => {
                if op != pop {
                    return self.shape(path, format!("operator {} where the policy has {}", pop.symbol(), op.symbol()));
                }
                let (Some(a), Some(b)) = (self.expr(lhs, el, env, &join(path, "lhs")), self.expr(rhs, er, env, &join(path, "rhs")))
                else {
                    return;
                };
                if op.apply(&a, &b) != Some(true) {
                    self.fail(path.to_owned(), FailureReason::LeafRecheckFailed(format!("{a} {} {b} does not hold", op.symbol())));
                }
            }
            (Proposition::Member { elem, set }, Proof::Member { index, elem: ee, set: es }) => {
                let (Some(e), Some(s)) = (self.expr(elem, ee, env, &join(path, "elem")), self.expr(set, es, env, &join(path, "set")))
                else {
                    return;
                };
                match s.as_list() {
                    Some(items) if items.get(*index) == Some(&e) => {}
                    Some(_) => self.fail(
                        path.to_owned(),
                        FailureReason::LeafRecheckFailed(format!("element {index} of {s} is not {e}")),
                    ),
                    None => self.fail(path.to_owned(), FailureReason::LeafRecheckFailed(format!("{s} is not a list"))),
                }
            }
            (Proposition::EmptyIntersect { a, b }, Proof::EmptyIntersect { a: ea, b: eb }) => {
                let (Some(x), Some(y)) = (self.expr(a, ea, env, &join(path, "a")), self.expr(b, eb, env, &join(path, "b")))
                else {
                    return;
                };
                match (x.as_list(), y.as_list()) {
                    (Some(xs), Some(ys)) if intersect(xs, ys).is_empty() => {}
                    _ => self.fail(
                        path.to_owned(),
                        FailureReason::LeafRecheckFailed(format!("{x} and {y} are not disjoint lists")),
                    ),
                }
            }
            (Proposition::And { left, right }, Proof::And { left: pl, right: pr }) => {
                self.proof(left, pl, env, &join(path, "left"));
                self.proof(right, pr, env, &join(path, "right"));
            }
            (Proposition::Or { left, right }, Proof::Or { side, sub }) => {
                let target = if *side == Side::Inj1 { left } else { right };
                self.proof(target, sub, env, &join(path, "sub"));
            }
            (Proposition::Not { sub }, Proof::Not { sub: r }) => self.refutation(sub, r, env, &join(path, "sub")),
            (Proposition::Exists { var, domain, body }, Proof::Exists { witness, sub }) => {
                if self.in_domain(domain, witness, &join(path, "witness")) {
                    let mut inner = env.clone();
                    inner.insert(var.clone(), witness.clone());
                    self.proof(body, sub, &inner, &join(path, "sub"));
                }
            }
            (Proposition::Forall { var, domain, body }, Proof::Forall { cases }) => {
                if self.covers(domain, cases.iter().map(|c| &c.element), path) {
                    for (i, Case { element, sub }) in cases.iter().enumerate() {
                        let mut inner = env.clone();
                        inner.insert(var.clone(), element.clone());
                        self.proof(body, sub, &inner, &join(path, &format!("cases[{i}]")));
                    }
                }
            }
            _ => self.shape(path, format!("proof node `{}` does not prove `{}`", proof_kind(proof), prop_kind(prop))),
        }
    }

    fn refutation(&mut self, prop: &Proposition, refut: &Refutation, env: &Env, path: &str) {
        match (prop, refut) {
            (Proposition::Cmp { lhs, op, rhs }, Refutation::Cmp { op: rop, lhs: el, rhs: er }) => {
                if op != rop {
                    return self.shape(path, format!("operator {} where the policy has {}", rop.symbol(), op.symbol()));
                }
                let (Some(a), Some(b)) = (self.expr(lhs, el, env, &join(path, "lhs")), self.expr(rhs, er, env, &join(path, "rhs")))
                else {
                    return;
                };
                if op.apply(&a, &b) != Some(false) {
                    self.fail(path.to_owned(), FailureReason::LeafRecheckFailed(format!("{a} {} {b} does not fail", op.symbol())));
                }
            }
            (Proposition::Member { elem, set }, Refutation::Member { elem: ee, set: es }) => {
                let (Some(e), Some(s)) = (self.expr(elem, ee, env, &join(path, "elem")), self.expr(set, es, env, &join(path, "set")))
                else {
                    return;
                };
                match s.as_list() {
                    Some(items) if !items.contains(&e) => {}
                    _ => self.fail(path.to_owned(), FailureReason::LeafRecheckFailed(format!("{e} is in {s}"))),
                }
            }
            (
                Proposition::EmptyIntersect { a, b },
                Refutation::NonEmptyIntersect { witness, index_in_a, index_in_b, a: ea, b: eb },
            ) => {
                let (Some(x), Some(y)) = (self.expr(a, ea, env, &join(path, "a")), self.expr(b, eb, env, &join(path, "b")))
                else {
                    return;
                };
                let xa = x.as_list().and_then(|l| l.get(*index_in_a));
                let yb = y.as_list().and_then(|l| l.get(*index_in_b));
                if xa != Some(witness) || yb != Some(witness) {
                    self.fail(
                        path.to_owned(),
                        FailureReason::LeafRecheckFailed(format!(
                            "{witness} is not at index {index_in_a} of {x} and index {index_in_b} of {y}"
                        )),
                    );
                }
            }
            (Proposition::And { left, right }, Refutation::And { side, sub }) => {
                let target = if *side == Side::Inj1 { left } else { right };
                self.refutation(target, sub, env, &join(path, "sub"));
            }
            (Proposition::Or { left, right }, Refutation::Or { left: rl, right: rr }) => {
                self.refutation(left, rl, env, &join(path, "left"));
                self.refutation(right, rr, env, &join(path, "right"));
            }
            (Proposition::Not { sub }, Refutation::Not { sub: p }) => self.proof(sub, p, env, &join(path, "sub")),
            (Proposition::Exists { var, domain, body }, Refutation::Exists { cases }) => {
                if self.covers(domain, cases.iter().map(|c| &c.element), path) {
                    for (i, Case { element, sub }) in cases.iter().enumerate() {
                        let mut inner = env.clone();
                        inner.insert(var.clone(), element.clone());
                        self.refutation(body, sub, &inner, &join(path, &format!("cases[{i}]")));
                    }
                }
            }
            (Proposition::Forall { var, domain, body }, Refutation::Forall { witness, sub }) => {
                if self.in_domain(domain, witness, &join(path, "witness")) {
                    let mut inner = env.clone();
                    inner.insert(var.clone(), witness.clone());
                    self.refutation(body, sub, &inner, &join(path, "sub"));
                }
            }
            _ => self.shape(path, format!("refutation node `{}` does not refute `{}`", refut_kind(refut), prop_kind(prop))),
        }
    }

    fn in_domain(&mut self, domain: &Domain, v: &Value, path: &str) -> bool {
        let ok = match domain {
            Domain::Enum(name) => match v {
                Value::Enum { name: n, atom } => n == name && self.enums.get(name).is_some_and(|d| d.contains(atom)),
                _ => false,
            },
            Domain::Entities(kind) => match v {
                Value::Ref { kind: k, .. } if k == kind => match self.pin.and_then(|p| p.domain(kind)) {
                    Some(all) => all.contains(v),
                    None => true,
                },
                _ => false,
            },
        };
        if !ok {
            self.shape(path, format!("{v} is not in the domain `{}`", domain.name()));
        }
        ok
    }

    /// Case elements must enumerate the domain in its canonical order. For
    /// entity domains without a pin only distinctness, order and kind can be
    /// checked.
    fn covers<'v>(&mut self, domain: &Domain, elements: impl Iterator<Item = &'v Value>, path: &str) -> bool {
        let got: Vec<&Value> = elements.collect();
        let expected: Option<Vec<Value>> = match domain {
            Domain::Enum(name) => match self.enums.get(name) {
                Some(d) => Some(d.atoms().collect()),
                None => {
                    self.shape(path, format!("the verifier's policy does not declare `{name}`"));
                    return false;
                }
            },
            Domain::Entities(kind) => self.pin.and_then(|p| p.domain(kind)),
        };
        let ok = match (&expected, domain) {
            (Some(all), _) => got.len() == all.len() && got.iter().zip(all).all(|(g, a)| *g == a),
            (None, Domain::Entities(kind)) => {
                let ids: Option<Vec<&EntityId>> = got
                    .iter()
                    .map(|v| match v {
                        Value::Ref { kind: k, id } if k == kind => Some(id),
                        _ => None,
                    })
                    .collect();
                ids.is_some_and(|ids| ids.windows(2).all(|w| w[0] < w[1]))
            }
            (None, Domain::Enum(_)) => false,
        };
        if !ok {
            self.shape(path, format!("cases do not enumerate the domain `{}`", domain.name()));
        }
        ok
    }

    /// Checks evidence for an expression, returning the value it establishes.
    fn expr(&mut self, e: &AttrExpr, ev: &Evidence, env: &Env, path: &str) -> Option<Value> {
        match e {
            AttrExpr::Literal { value } => match ev {
                Evidence::Literal { value: v, .. } if v == value => Some(v.clone()),
                _ => {
                    self.fail(path.to_owned(), FailureReason::EvidenceMismatch(format!("expected the literal {value}")));
                    None
                }
            },
            AttrExpr::Var { name } => {
                let Some(bound) = env.get(name) else {
                    self.shape(path, format!("unbound variable `{name}`"));
                    return None;
                };
                match ev {
                    Evidence::Literal { value, .. } if value == bound => Some(value.clone()),
                    _ => {
                        self.fail(path.to_owned(), FailureReason::EvidenceMismatch(format!("`{name}` is bound to {bound}")));
                        None
                    }
                }
            }
            AttrExpr::Attr { var, path: attr } => {
                let Some(subject) = env.get(var).cloned() else {
                    self.shape(path, format!("unbound variable `{var}`"));
                    return None;
                };
                self.attribute(&subject, attr, ev, path)
            }
            AttrExpr::Builtin { name, args } => {
                let Evidence::Builtin { name: en, args: eargs, lookups, value } = ev else {
                    self.shape(path, format!("expected builtin evidence for `{}`", name.name()));
                    return None;
                };
                if en != name || eargs.len() != args.len() {
                    self.shape(path, format!("expected evidence for `{}`", name.name()));
                    return None;
                }
                let mut vals = Vec::new();
                for (i, (a, ea)) in args.iter().zip(eargs).enumerate() {
                    vals.push(self.expr(a, ea, env, &join(path, &format!("args[{i}]")))?);
                }
                let computed = match name {
                    Builtin::Length => vals[0].as_list().map(|l| Value::Nat(l.len() as u64)),
                    Builtin::Intersect => match (&vals[0], vals[1].as_list()) {
                        (Value::List { elem, items }, Some(ys)) => Some(Value::list(elem.clone(), intersect(items, ys))),
                        _ => None,
                    },
                    Builtin::ExposedPorts => self.exposed(&vals[0], lookups, path),
                };
                match computed {
                    Some(c) if &c == value => Some(c),
                    Some(c) => {
                        self.fail(
                            path.to_owned(),
                            FailureReason::LeafRecheckFailed(format!("`{}` yields {c}, evidence claims {value}", name.name())),
                        );
                        None
                    }
                    None => {
                        self.fail(path.to_owned(), FailureReason::LeafRecheckFailed(format!("`{}` does not apply", name.name())));
                        None
                    }
                }
            }
        }
    }

    fn exposed(&mut self, ports: &Value, lookups: &[crate::proof::PortLookup], path: &str) -> Option<Value> {
        let Value::List { elem, items } = ports else { return None };
        if items.len() != lookups.len() {
            self.shape(path, format!("{} port lookups for {} ports", lookups.len(), items.len()));
            return None;
        }
        let mut out = Vec::new();
        for (i, (port, l)) in items.iter().zip(lookups).enumerate() {
            let lp = join(path, &format!("lookups[{i}]"));
            if port.as_entity() != Some(&l.port) {
                self.shape(&lp, format!("lookup for `{}` where the list has {port}", l.port));
                return None;
            }
            let network = self.attribute(port, PORT_NETWORK_ATTR, &l.network, &join(&lp, "network"))?;
            let public = self.attribute(&network, NETWORK_PUBLIC_ATTR, &l.public, &join(&lp, "public"))?;
            match public {
                Value::Bool(true) => out.push(port.clone()),
                Value::Bool(false) => {}
                other => {
                    self.fail(lp, FailureReason::LeafRecheckFailed(format!("`public` is {other}, not a Bool")));
                    return None;
                }
            }
        }
        Some(Value::list(elem.clone(), out))
    }

    fn attribute(&mut self, subject: &Value, attr: &str, ev: &Evidence, path: &str) -> Option<Value> {
        let Value::Ref { kind, id } = subject else {
            self.shape(path, format!("attribute `{attr}` of non-entity {subject}"));
            return None;
        };
        match ev {
            Evidence::Claim { claim_ref, value } => {
                let Some(claim) = self.claims.get(claim_ref).copied() else {
                    self.fail(path.to_owned(), FailureReason::DanglingClaimRef(claim_ref.clone()));
                    return None;
                };
                if &claim.subject != id || claim.property != attr || &claim.value != value {
                    self.fail(
                        path.to_owned(),
                        FailureReason::ClaimMismatch(format!(
                            "claim is ({}, {}, {}), leaf needs ({id}, {attr}, {value})",
                            claim.subject, claim.property, claim.value
                        )),
                    );
                    return None;
                }
                if let Some(reason) = self.claim_status(claim_ref, claim) {
                    self.fail(path.to_owned(), reason);
                    return None;
                }
                Some(value.clone())
            }
            Evidence::Literal { value, .. } => {
                let key = format!("{kind}.{attr}");
                if self.opts.required_claims.contains(&key) {
                    self.fail(path.to_owned(), FailureReason::UnbackedAttribute(format!("`{key}` of `{id}` must be claim-backed")));
                    return None;
                }
                if let Some(pin) = self.pin.filter(|p| p.pins(id)) {
                    if pin.attribute(id, attr).as_ref() != Some(value) {
                        self.fail(
                            path.to_owned(),
                            FailureReason::EvidenceMismatch(format!("`{attr}` of `{id}` is not {value} locally")),
                        );
                        return None;
                    }
                }
                Some(value.clone())
            }
            Evidence::Builtin { .. } => {
                self.shape(path, format!("builtin evidence for attribute `{attr}`"));
                None
            }
        }
    }

    /// Verification status of a cited claim, computed once per claim.
    fn claim_status(&self, hash: &str, claim: &Claim) -> Option<FailureReason> {
        if let Some(s) = self.status.borrow().get(hash) {
            return s.clone();
        }
        let now = verify_claim(claim, &self.trust.trust, &self.trust.keys, self.clock);
        let at_production = self.produced_at.map(|t| window_status(claim, t));
        let reason = match (now, at_production) {
            (ClaimStatus::Trusted, None | Some(ClaimStatus::Trusted)) => None,
            (ClaimStatus::Trusted, Some(other)) | (other, _) => Some(match other {
                ClaimStatus::BadSignature => FailureReason::SignatureInvalid,
                ClaimStatus::UntrustedIssuer(d) => FailureReason::UntrustedIssuer(d),
                ClaimStatus::Expired => FailureReason::ClaimExpired,
                ClaimStatus::NotYetValid => FailureReason::ClaimNotYetValid,
                ClaimStatus::Trusted => unreachable!("handled above"),
            }),
        };
        self.status.borrow_mut().insert(hash.to_owned(), reason.clone());
        reason
    }
}

fn prop_kind(p: &Proposition) -> &'static str {
    match p {
        Proposition::Cmp { .. } => "cmp",
        Proposition::Member { .. } => "member",
        Proposition::EmptyIntersect { .. } => "emptyintersect",
        Proposition::And { .. } => "and",
        Proposition::Or { .. } => "or",
        Proposition::Not { .. } => "not",
        Proposition::Exists { .. } => "exists",
        Proposition::Forall { .. } => "forall",
    }
}

fn proof_kind(p: &Proof) -> &'static str {
    match p {
        Proof::Cmp { .. } => "cmp",
        Proof::Member { .. } => "member",
        Proof::EmptyIntersect { .. } => "emptyintersect",
        Proof::And { .. } => "and",
        Proof::Or { .. } => "or",
        Proof::Not { .. } => "not",
        Proof::Exists { .. } => "exists",
        Proof::Forall { .. } => "forall",
    }
}

fn refut_kind(r: &Refutation) -> &'static str {
    match r {
        Refutation::Cmp { .. } => "refut-cmp",
        Refutation::Member { .. } => "refut-member",
        Refutation::NonEmptyIntersect { .. } => "refut-emptyintersect",
        Refutation::And { .. } => "refut-and",
        Refutation::Or { .. } => "refut-or",
        Refutation::Not { .. } => "refut-not",
        Refutation::Exists { .. } => "refut-exists",
        Refutation::Forall { .. } => "refut-forall",
    }
}
