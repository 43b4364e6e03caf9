//! Guarded calls: decide or verify every slot, call upstream only under a
//! complete set of passing slots, then check the response.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use polity_core::claims::{Claim, ClaimBag, ClaimSource, TrustConfig};
use polity_core::clock::Clock;
use polity_core::verify::verify_pinned;
use polity_core::{
    CompiledBundle, Dec, Entity, EntityId, EntityStore, EvidencePin, Failure, FailureReason, ProofEnvelope,
    Refutation, Tag, Value, VerifyOptions, VerifyReport,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value as Json};
use sha2::{Digest, Sha256};
use thiserror::Error;
use uuid::Uuid;

use crate::guard::{GuardSpec, RESPONSE_ROLE};
use crate::log::{DecisionLog, DecisionRecord, LogError, Mode, Outcome, RecordDraft, SlotRecord, SlotVerdict};
use crate::upstream::{CallPermit, Upstream, UpstreamError};

/// Slot name used in denials of requests that never reached a slot.
pub const REQUEST_SLOT: &str = "request";
/// Slot name used in denials by the response policy.
pub const RESPONSE_SLOT: &str = "response";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct CallRequest {
    /// Role name to entity handle or id.
    pub entities: BTreeMap<String, String>,
    #[serde(default)]
    pub mode: CallMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum CallMode {
    /// The gateway gathers evidence from its own store and claims.
    #[default]
    LocalDecide,
    /// The caller supplies one envelope per slot, plus the request entity
    /// that is forwarded upstream.
    RemoteVerify { envelopes: BTreeMap<String, ProofEnvelope>, request: Entity },
}

impl CallRequest {
    pub fn local(entities: BTreeMap<String, String>) -> Self {
        Self { entities, mode: CallMode::LocalDecide }
    }

    pub fn remote(entities: BTreeMap<String, String>, envelopes: BTreeMap<String, ProofEnvelope>, request: Entity) -> Self {
        Self { entities, mode: CallMode::RemoteVerify { envelopes, request } }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Denial {
    Refuted { slot: String, policy: String, refutation: Box<Refutation> },
    Rejected { slot: String, report: Box<VerifyReport> },
    EnvelopeSlotMissing { slot: String },
    /// The slot could not be evaluated.
    Error { slot: String, message: String },
    /// The request was unusable before any slot ran.
    Malformed(String),
}

impl Denial {
    pub fn slot(&self) -> &str {
        match self {
            Denial::Refuted { slot, .. }
            | Denial::Rejected { slot, .. }
            | Denial::EnvelopeSlotMissing { slot }
            | Denial::Error { slot, .. } => slot,
            Denial::Malformed(_) => REQUEST_SLOT,
        }
    }

    pub fn reason(&self) -> String {
        match self {
            Denial::Refuted { policy, .. } => format!("{policy} refuted"),
            Denial::Rejected { report, .. } => {
                let mut names: Vec<&str> = report.failures.iter().map(|f| f.reason.name()).collect();
                names.dedup();
                names.join(",")
            }
            Denial::EnvelopeSlotMissing { .. } => "EnvelopeSlotMissing".into(),
            Denial::Error { message, .. } | Denial::Malformed(message) => message.clone(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CallError {
    #[error("denied at `{}`: {}", .0.slot(), .0.reason())]
    Denied(Denial),
    #[error(transparent)]
    Upstream(#[from] UpstreamError),
    /// The decision could not be logged, so the result is withheld.
    #[error(transparent)]
    Log(#[from] LogError),
}

/// What a call produced, together with its log record.
#[derive(Debug)]
pub struct CallReport {
    pub record: Option<DecisionRecord>,
    pub result: Result<Entity, CallError>,
}

impl CallReport {
    pub fn outcome(&self) -> Option<&Outcome> {
        self.record.as_ref().map(|r| r.outcome())
    }
}

/// Pins the request entity that travels with a RemoteVerify call, so literal
/// evidence about it must match what is forwarded upstream.
struct RequestPin<'a>(&'a Entity);

impl EvidencePin for RequestPin<'_> {
    fn pins(&self, subject: &EntityId) -> bool {
        subject == &self.0.id
    }

    fn attribute(&self, _subject: &EntityId, attr: &str) -> Option<Value> {
        self.0.attributes.get(attr).cloned()
    }

    fn domain(&self, _kind: &str) -> Option<Vec<Value>> {
        None
    }
}

/// A claim source and the (subject, properties) queries to put to it on
/// every LocalDecide request.
pub struct ClaimFeed {
    pub source: Box<dyn ClaimSource + Send + Sync>,
    pub queries: Vec<(EntityId, Vec<String>)>,
}

pub struct Gateway {
    bundle: Arc<CompiledBundle>,
    guard: GuardSpec,
    trust: TrustConfig,
    claims: Vec<Claim>,
    feeds: Vec<ClaimFeed>,
    upstream: Arc<dyn Upstream>,
    clock: Arc<dyn Clock>,
    log: Arc<DecisionLog>,
    opts: VerifyOptions,
}

impl Gateway {
    pub fn new(
        bundle: Arc<CompiledBundle>,
        guard: GuardSpec,
        trust: TrustConfig,
        upstream: Arc<dyn Upstream>,
        clock: Arc<dyn Clock>,
        log: Arc<DecisionLog>,
    ) -> Self {
        Self { bundle, guard, trust, claims: Vec::new(), feeds: Vec::new(), upstream, clock, log, opts: VerifyOptions::default() }
    }

    /// Claims consulted by every LocalDecide request.
    pub fn with_claims(mut self, claims: Vec<Claim>) -> Self {
        self.claims = claims;
        self
    }

    pub fn with_feed(mut self, feed: ClaimFeed) -> Self {
        self.feeds.push(feed);
        self
    }

    pub fn with_options(mut self, opts: VerifyOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn bundle(&self) -> &CompiledBundle {
        &self.bundle
    }

    pub fn guard(&self) -> &GuardSpec {
        &self.guard
    }

    pub fn log(&self) -> &DecisionLog {
        &self.log
    }

    pub fn clock(&self) -> &dyn Clock {
        self.clock.as_ref()
    }

    /// The claim bag a LocalDecide request sees at `now`.
    pub fn claim_bag(&self, now: DateTime<Utc>) -> ClaimBag {
        let mut claims = self.claims.clone();
        for feed in &self.feeds {
            for (subject, props) in &feed.queries {
                match feed.source.fetch_claims(subject, props) {
                    Ok(mut got) => claims.append(&mut got),
                    Err(e) => tracing::warn!(subject = %subject, error = %e, "claim source failed"),
                }
            }
        }
        ClaimBag::new(claims, &self.trust.trust, &self.trust.keys, now)
    }

    pub fn handle(&self, req: &CallRequest) -> CallReport {
        match &req.mode {
            CallMode::LocalDecide => self.pre_call(&req.entities),
            CallMode::RemoteVerify { envelopes, request } => self.safe_call(&req.entities, envelopes, request),
        }
    }

    /// Parses and handles a request; unparseable input is denied and
    /// logged like any other request.
    pub fn handle_bytes(&self, bytes: &[u8]) -> CallReport {
        match serde_json::from_slice::<CallRequest>(bytes) {
            Ok(req) => self.handle(&req),
            Err(e) => self.unparsed(bytes, format!("unparseable request: {e}")),
        }
    }

    /// As [`Gateway::handle_bytes`], but a request in another mode than
    /// `mode` is denied as malformed.
    pub fn handle_bytes_as(&self, bytes: &[u8], mode: Mode) -> CallReport {
        match serde_json::from_slice::<CallRequest>(bytes) {
            Ok(req) => {
                let got = match req.mode {
                    CallMode::LocalDecide => Mode::LocalDecide,
                    CallMode::RemoteVerify { .. } => Mode::RemoteVerify,
                };
                if got == mode {
                    self.handle(&req)
                } else {
                    self.unparsed(bytes, format!("expected a {mode:?} request, got {got:?}"))
                }
            }
            Err(e) => self.unparsed(bytes, format!("unparseable request: {e}")),
        }
    }

    fn unparsed(&self, bytes: &[u8], message: String) -> CallReport {
        let raw: String = String::from_utf8_lossy(bytes).chars().take(4096).collect();
        self.finish(new_id(), Mode::Unparsed, json!({ "raw": raw }), Vec::new(), Err(Denial::Malformed(message)))
    }

    /// Decides every slot locally, in guard order.
    pub fn pre_call(&self, entities: &BTreeMap<String, String>) -> CallReport {
        let id = new_id();
        let request_json = json!({ "entities": entities });
        let now = self.clock.now();
        let args = match self.resolve_local(entities) {
            Ok(a) => a,
            Err(d) => return self.finish(id, Mode::LocalDecide, request_json, self.unevaluated(&BTreeMap::new(), 0), Err(d)),
        };
        let bag = self.claim_bag(now);
        let store = &self.bundle.store;
        let mut slots = Vec::new();
        for (i, slot) in self.guard.slots().iter().enumerate() {
            let slot_args = slot_args(&slot.args, &args);
            let pol = self.bundle.policy(&slot.policy).expect("guard policies exist");
            let (record, denial) = match polity_core::decide_policy(pol, &slot_args, store, &bag) {
                Ok(d) => match d.dec {
                    Dec::Yes(p) => (slot_record(slot, slot_args, SlotVerdict::Yes, d.rule, Some(p.hash())), None),
                    Dec::No(r) => (
                        slot_record(slot, slot_args, SlotVerdict::No, None, Some(r.hash())),
                        Some(Denial::Refuted { slot: slot.name.clone(), policy: slot.policy.clone(), refutation: Box::new(r) }),
                    ),
                },
                Err(e) => {
                    let mut rec = slot_record(slot, slot_args, SlotVerdict::Error, None, None);
                    rec.detail = Some(e.to_string());
                    (rec, Some(Denial::Error { slot: slot.name.clone(), message: e.to_string() }))
                }
            };
            slots.push(record);
            if let Some(d) = denial {
                slots.extend(self.unevaluated(&args, i + 1));
                return self.finish(id, Mode::LocalDecide, request_json, slots, Err(d));
            }
        }
        let request = store.entity(&args[self.guard.request_role()]).expect("resolved").clone();
        let permit = CallPermit::grant(&id, self.guard.slots().len(), &slots, &request);
        self.complete(id, Mode::LocalDecide, request_json, slots, permit, store.clone(), &args)
    }

    /// Verifies one caller-supplied envelope per slot, without consulting
    /// the gateway's store or claims.
    pub fn safe_call(
        &self,
        entities: &BTreeMap<String, String>,
        envelopes: &BTreeMap<String, ProofEnvelope>,
        request: &Entity,
    ) -> CallReport {
        let id = new_id();
        let hashes: BTreeMap<&String, String> =
            envelopes.iter().map(|(k, e)| (k, hex::encode(Sha256::digest(e.to_bytes())))).collect();
        let request_json = json!({ "entities": entities, "envelopes": hashes, "request": request });
        let now = self.clock.now();
        let (args, store) = match self.resolve_remote(entities, envelopes, request) {
            Ok(a) => a,
            Err(d) => return self.finish(id, Mode::RemoteVerify, request_json, self.unevaluated(&BTreeMap::new(), 0), Err(d)),
        };
        let pin = RequestPin(request);
        let mut slots = Vec::new();
        for (i, slot) in self.guard.slots().iter().enumerate() {
            let slot_args = slot_args(&slot.args, &args);
            let pol = self.bundle.policy(&slot.policy).expect("guard policies exist");
            let (record, denial) = match envelopes.get(&slot.name) {
                None => (
                    slot_record(slot, slot_args, SlotVerdict::Missing, None, None),
                    Some(Denial::EnvelopeSlotMissing { slot: slot.name.clone() }),
                ),
                Some(env) => {
                    let report = if env.args != slot_args {
                        VerifyReport::rejected(
                            "args",
                            FailureReason::ShapeMismatch(format!(
                                "envelope is about {:?}, the request binds {:?}",
                                env.args.iter().map(EntityId::as_str).collect::<Vec<_>>(),
                                slot_args.iter().map(EntityId::as_str).collect::<Vec<_>>()
                            )),
                        )
                    } else {
                        verify_pinned(pol, env, &self.trust, now, &self.opts, Some(&pin))
                    };
                    if report.accepted() {
                        let rec = slot_record(slot, slot_args, SlotVerdict::Accepted, Some(env.rule.clone()), Some(env.proof.hash()));
                        (rec, None)
                    } else {
                        let mut rec = slot_record(slot, slot_args, SlotVerdict::Rejected, None, Some(env.proof.hash()));
                        rec.failures = report.failures.clone();
                        (rec, Some(Denial::Rejected { slot: slot.name.clone(), report: Box::new(report) }))
                    }
                }
            };
            slots.push(record);
            if let Some(d) = denial {
                slots.extend(self.unevaluated(&args, i + 1));
                return self.finish(id, Mode::RemoteVerify, request_json, slots, Err(d));
            }
        }
        let permit = CallPermit::grant(&id, self.guard.slots().len(), &slots, request);
        self.complete(id, Mode::RemoteVerify, request_json, slots, permit, store, &args)
    }

    /// Calls upstream under the permit, then decides the response policy
    /// against `store` extended with the returned item.
    #[allow(clippy::too_many_arguments)]
    fn complete(
        &self,
        id: String,
        mode: Mode,
        request_json: Json,
        slots: Vec<SlotRecord>,
        permit: Option<CallPermit>,
        store: EntityStore,
        args: &BTreeMap<String, EntityId>,
    ) -> CallReport {
        let Some(permit) = permit else {
            let d = Denial::Error { slot: REQUEST_SLOT.into(), message: "slots incomplete".into() };
            return self.finish(id, mode, request_json, slots, Err(d));
        };
        let response = match self.upstream.call(&permit) {
            Ok(r) => r,
            Err(e) => return self.finish_upstream(id, mode, request_json, slots, e),
        };
        let item_id = EntityId::new(format!("urn:polity:response:{id}"));
        let item = match item_entity(&store, self.guard.response_kind(), item_id.clone(), &response) {
            Ok(item) => item,
            Err(e) => return self.finish_upstream(id, mode, request_json, slots, e),
        };
        let check = self.guard.response();
        let mut response_args = Vec::new();
        for role in &check.args {
            if role == RESPONSE_ROLE {
                response_args.push(item_id.clone());
            } else {
                response_args.push(args[role].clone());
            }
        }
        let pol = self.bundle.policy(&check.policy).expect("guard policies exist");
        let decision = store
            .with_entity(item.clone())
            .map_err(|errs| errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))
            .and_then(|s| polity_core::decide_policy(pol, &response_args, &s, &ClaimBag::empty()).map_err(|e| e.to_string()));
        let mk = |verdict, rule, hash| SlotRecord {
            slot: RESPONSE_SLOT.into(),
            policy: check.policy.clone(),
            args: response_args.clone(),
            verdict,
            rule,
            hash,
            failures: Vec::new(),
            detail: None,
        };
        let (response_record, result) = match decision {
            Ok(d) => match d.dec {
                Dec::Yes(p) => (mk(SlotVerdict::Yes, d.rule, Some(p.hash())), Ok(item)),
                Dec::No(r) => (
                    mk(SlotVerdict::No, None, Some(r.hash())),
                    Err(Denial::Refuted { slot: RESPONSE_SLOT.into(), policy: check.policy.clone(), refutation: Box::new(r) }),
                ),
            },
            Err(message) => {
                let mut rec = mk(SlotVerdict::Error, None, None);
                rec.detail = Some(message.clone());
                (rec, Err(Denial::Error { slot: RESPONSE_SLOT.into(), message }))
            }
        };
        let outcome = match &result {
            Ok(item) => Outcome::Allowed { item: item.clone() },
            Err(d) => Outcome::Denied { slot: d.slot().to_owned(), reason: d.reason() },
        };
        let draft = RecordDraft { request_id: id, mode, request: request_json, slots, response: Some(response_record), outcome };
        self.append(draft, result.map_err(CallError::Denied))
    }

    fn finish(&self, id: String, mode: Mode, request: Json, slots: Vec<SlotRecord>, result: Result<Entity, Denial>) -> CallReport {
        let outcome = match &result {
            Ok(item) => Outcome::Allowed { item: item.clone() },
            Err(d) => Outcome::Denied { slot: d.slot().to_owned(), reason: d.reason() },
        };
        let draft = RecordDraft { request_id: id, mode, request, slots, response: None, outcome };
        self.append(draft, result.map_err(CallError::Denied))
    }

    fn finish_upstream(&self, id: String, mode: Mode, request: Json, slots: Vec<SlotRecord>, e: UpstreamError) -> CallReport {
        let outcome = Outcome::UpstreamError { message: e.to_string() };
        let draft = RecordDraft { request_id: id, mode, request, slots, response: None, outcome };
        self.append(draft, Err(CallError::Upstream(e)))
    }

    fn append(&self, draft: RecordDraft, result: Result<Entity, CallError>) -> CallReport {
        match self.log.append(draft, self.clock.now()) {
            Ok(record) => CallReport { record: Some(record), result },
            Err(e) => {
                tracing::error!(error = %e, "decision log append failed");
                CallReport { record: None, result: Err(CallError::Log(e)) }
            }
        }
    }

    /// `NotEvaluated` records for the slots from `from` on.
    fn unevaluated(&self, args: &BTreeMap<String, EntityId>, from: usize) -> Vec<SlotRecord> {
        self.guard.slots()[from..]
            .iter()
            .map(|s| {
                let a = if args.is_empty() { Vec::new() } else { slot_args(&s.args, args) };
                slot_record(s, a, SlotVerdict::NotEvaluated, None, None)
            })
            .collect()
    }

    fn check_roles(&self, entities: &BTreeMap<String, String>) -> Result<(), Denial> {
        for role in self.guard.roles().keys() {
            if !entities.contains_key(role) {
                return Err(Denial::Malformed(format!("no entity given for role `{role}`")));
            }
        }
        if let Some(extra) = entities.keys().find(|k| !self.guard.roles().contains_key(*k)) {
            return Err(Denial::Malformed(format!("unknown role `{extra}`")));
        }
        Ok(())
    }

    fn resolve_local(&self, entities: &BTreeMap<String, String>) -> Result<BTreeMap<String, EntityId>, Denial> {
        self.check_roles(entities)?;
        let mut out = BTreeMap::new();
        for (role, kind) in self.guard.roles() {
            let name = &entities[role];
            let id = self
                .bundle
                .resolve_entity(name)
                .ok_or_else(|| Denial::Malformed(format!("unknown entity `{name}` for role `{role}`")))?;
            let found = &self.bundle.store.entity(&id).expect("resolved").kind;
            if found != kind {
                return Err(Denial::Malformed(format!("role `{role}` needs a {kind}, `{name}` is a {found}")));
            }
            out.insert(role.clone(), id);
        }
        Ok(out)
    }

    /// Role ids are taken verbatim. The request entity must carry the id
    /// bound to the request role and conform to its schema; it becomes the
    /// only entity the response check can see besides the item.
    fn resolve_remote(
        &self,
        entities: &BTreeMap<String, String>,
        envelopes: &BTreeMap<String, ProofEnvelope>,
        request: &Entity,
    ) -> Result<(BTreeMap<String, EntityId>, EntityStore), Denial> {
        self.check_roles(entities)?;
        if let Some(extra) = envelopes.keys().find(|k| self.guard.slot(k).is_none()) {
            return Err(Denial::Malformed(format!("envelope for unknown slot `{extra}`")));
        }
        let args: BTreeMap<String, EntityId> = entities.iter().map(|(r, id)| (r.clone(), EntityId::new(id.clone()))).collect();
        let role = self.guard.request_role();
        let kind = &self.guard.roles()[role];
        if request.id != args[role] || &request.kind != kind {
            return Err(Denial::Malformed(format!("request entity must be the {kind} `{}`", args[role])));
        }
        if let Some(other) = self.guard.response().args.iter().find(|r| *r != RESPONSE_ROLE && *r != role) {
            return Err(Denial::Malformed(format!("the response check needs role `{other}`, which a remote call does not carry")));
        }
        let store = EntityStore::empty(self.bundle.store.decls().clone())
            .with_entity(request.clone())
            .map_err(|errs| Denial::Malformed(errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")))?;
        Ok((args, store))
    }
}

fn new_id() -> String {
    Uuid::new_v4().to_string()
}

fn slot_args(roles: &[String], args: &BTreeMap<String, EntityId>) -> Vec<EntityId> {
    roles.iter().map(|r| args[r].clone()).collect()
}

fn slot_record(slot: &crate::guard::Slot, args: Vec<EntityId>, verdict: SlotVerdict, rule: Option<String>, hash: Option<String>) -> SlotRecord {
    SlotRecord {
        slot: slot.name.clone(),
        policy: slot.policy.clone(),
        args,
        verdict,
        rule,
        hash,
        failures: Vec::<Failure>::new(),
        detail: None,
    }
}

/// Builds the response entity from the upstream's JSON object. Every
/// schema attribute must be present with a scalar of the declared type;
/// other fields are ignored.
pub fn item_entity(store: &EntityStore, kind: &str, id: EntityId, json: &Map<String, Json>) -> Result<Entity, UpstreamError> {
    let schema = store
        .decls()
        .schema(kind)
        .ok_or_else(|| UpstreamError::Malformed(format!("no schema `{kind}`")))?;
    let mut item = Entity::new(id, kind);
    for (attr, tag) in &schema.attributes {
        let got = json.get(attr);
        let v = match (tag, got) {
            (Tag::Str, Some(Json::String(s))) => Value::Str(s.clone()),
            (Tag::Nat, Some(Json::Number(n))) if n.is_u64() => Value::Nat(n.as_u64().expect("checked")),
            (Tag::Bool, Some(Json::Bool(b))) => Value::Bool(*b),
            _ => return Err(UpstreamError::Malformed(format!("`{attr}` must be a {tag}, got {got:?}"))),
        };
        item.attributes.insert(attr.clone(), v);
    }
    Ok(item)
}

/// A client's side of a RemoteVerify call: decide each slot in order
/// against the client's own store and claims and envelope every proof.
/// Stops at the first slot that does not hold, returning its name.
pub struct ClientPrep {
    pub envelopes: BTreeMap<String, ProofEnvelope>,
    pub failed: Option<String>,
}

pub fn client_envelopes(
    bundle: &CompiledBundle,
    guard: &GuardSpec,
    entities: &BTreeMap<String, String>,
    claims: &ClaimBag,
    at: DateTime<Utc>,
    producer: &str,
) -> ClientPrep {
    let mut envelopes = BTreeMap::new();
    for slot in guard.slots() {
        let args: Option<Vec<EntityId>> = slot.args.iter().map(|r| bundle.resolve_entity(entities.get(r)?)).collect();
        let env = args.and_then(|args| {
            let d = polity_core::decide_policy(bundle.policy(&slot.policy)?, &args, &bundle.store, claims).ok()?;
            ProofEnvelope::from_decision(&d, args, claims, at, producer).ok()
        });
        match env {
            Some(env) => {
                envelopes.insert(slot.name.clone(), env);
            }
            None => return ClientPrep { envelopes, failed: Some(slot.name.clone()) },
        }
    }
    ClientPrep { envelopes, failed: None }
}
