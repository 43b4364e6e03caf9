//! The decision procedure: every closed proposition over a finite store is
//! decided with a proof or a refutation.

use std::cell::Cell;
use std::collections::BTreeMap;

use thiserror::Error;

use crate::claims::ClaimBag;
use crate::model::EntityStore;
use crate::policy::{intersect, AttrExpr, Builtin, Domain, Proposition, TypedPolicy, NETWORK_PUBLIC_ATTR, PORT_NETWORK_ATTR};
use crate::proof::{Case, Dec, Evidence, PortLookup, Proof, Refutation, Side};
use crate::value::{EntityId, Tag, Value};

/// Variable bindings: entity references or enumeration atoms.
pub type Env = BTreeMap<String, Value>;

pub const DEFAULT_STEP_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("reference to missing entity `{0}`")]
    DanglingEntityRef(EntityId),
    #[error("entity `{entity}` has no attribute `{attr}` in the store or in trusted claims")]
    MissingAttribute { entity: EntityId, attr: String },
    #[error("type mismatch: {0}")]
    TagMismatch(String),
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("unknown quantifier domain `{0}`")]
    UnknownDomain(String),
    #[error("evaluation exceeded the step budget of {0}")]
    StepBudgetExceeded(u64),
    #[error("policy `{policy}` takes {expected} argument(s), {found} given")]
    ArityMismatch { policy: String, expected: usize, found: usize },
    #[error("policy `{0}` has no rules")]
    EmptyPolicy(String),
    #[error("argument `{param}` must be a {expected}, `{id}` is a {found}")]
    KindMismatch { param: String, id: EntityId, expected: String, found: String },
}

/// Evaluates propositions against one store snapshot and claim bag.
pub struct Evaluator<'a> {
    store: &'a EntityStore,
    claims: &'a ClaimBag,
    budget: u64,
    steps: Cell<u64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(store: &'a EntityStore, claims: &'a ClaimBag) -> Self {
        Self { store, claims, budget: DEFAULT_STEP_BUDGET, steps: Cell::new(0) }
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    /// Steps taken so far (one per proposition node visited).
    pub fn steps(&self) -> u64 {
        self.steps.get()
    }

    fn tick(&self) -> Result<(), EvalError> {
        let n = self.steps.get() + 1;
        if n > self.budget {
            return Err(EvalError::StepBudgetExceeded(self.budget));
        }
        self.steps.set(n);
        Ok(())
    }

    pub fn decide(&self, p: &Proposition, env: &Env) -> Result<Dec, EvalError> {
        self.tick()?;
        Ok(match p {
            Proposition::Cmp { lhs, op, rhs } => {
                let l = self.evidence(lhs, env)?;
                let r = self.evidence(rhs, env)?;
                match op.apply(l.value(), r.value()) {
                    Some(true) => Dec::Yes(Proof::Cmp { op: *op, lhs: l, rhs: r }),
                    Some(false) => Dec::No(Refutation::Cmp { op: *op, lhs: l, rhs: r }),
                    None => {
                        return Err(EvalError::TagMismatch(format!(
                            "`{}` does not apply to {} and {}",
                            op.symbol(),
                            l.value().tag(),
                            r.value().tag()
                        )))
                    }
                }
            }
            Proposition::Member { elem, set } => {
                let e = self.evidence(elem, env)?;
                let s = self.evidence(set, env)?;
                let items = list(s.value())?;
                match items.iter().position(|x| x == e.value()) {
                    Some(index) => Dec::Yes(Proof::Member { index, elem: e, set: s }),
                    None => Dec::No(Refutation::Member { elem: e, set: s }),
                }
            }
            Proposition::EmptyIntersect { a, b } => {
                let ea = self.evidence(a, env)?;
                let eb = self.evidence(b, env)?;
                let (xs, ys) = (list(ea.value())?, list(eb.value())?);
                let hit = xs.iter().enumerate().find_map(|(i, x)| ys.iter().position(|y| y == x).map(|j| (i, j)));
                match hit {
                    None => Dec::Yes(Proof::EmptyIntersect { a: ea, b: eb }),
                    Some((i, j)) => Dec::No(Refutation::NonEmptyIntersect {
                        witness: xs[i].clone(),
                        index_in_a: i,
                        index_in_b: j,
                        a: ea,
                        b: eb,
                    }),
                }
            }
            Proposition::And { left, right } => match self.decide(left, env)? {
                Dec::No(r) => Dec::No(Refutation::And { side: Side::Inj1, sub: Box::new(r) }),
                Dec::Yes(pl) => match self.decide(right, env)? {
                    Dec::No(r) => Dec::No(Refutation::And { side: Side::Inj2, sub: Box::new(r) }),
                    Dec::Yes(pr) => Dec::Yes(Proof::And { left: Box::new(pl), right: Box::new(pr) }),
                },
            },
            Proposition::Or { left, right } => match self.decide(left, env)? {
                Dec::Yes(p) => Dec::Yes(Proof::Or { side: Side::Inj1, sub: Box::new(p) }),
                Dec::No(rl) => match self.decide(right, env)? {
                    Dec::Yes(p) => Dec::Yes(Proof::Or { side: Side::Inj2, sub: Box::new(p) }),
                    Dec::No(rr) => Dec::No(Refutation::Or { left: Box::new(rl), right: Box::new(rr) }),
                },
            },
            Proposition::Not { sub } => match self.decide(sub, env)? {
                Dec::Yes(p) => Dec::No(Refutation::Not { sub: Box::new(p) }),
                Dec::No(r) => Dec::Yes(Proof::Not { sub: Box::new(r) }),
            },
            Proposition::Exists { var, domain, body } => {
                let mut cases = Vec::new();
                let mut inner = env.clone();
                for element in self.domain(domain)? {
                    inner.insert(var.clone(), element.clone());
                    match self.decide(body, &inner)? {
                        Dec::Yes(p) => return Ok(Dec::Yes(Proof::Exists { witness: element, sub: Box::new(p) })),
                        Dec::No(r) => cases.push(Case { element, sub: r }),
                    }
                }
                Dec::No(Refutation::Exists { cases })
            }
            Proposition::Forall { var, domain, body } => {
                let mut cases = Vec::new();
                let mut inner = env.clone();
                for element in self.domain(domain)? {
                    inner.insert(var.clone(), element.clone());
                    match self.decide(body, &inner)? {
                        Dec::Yes(p) => cases.push(Case { element, sub: p }),
                        Dec::No(r) => return Ok(Dec::No(Refutation::Forall { witness: element, sub: Box::new(r) })),
                    }
                }
                Dec::Yes(Proof::Forall { cases })
            }
        })
    }

    /// Elements of a quantifier domain: entities id-lexicographic, atoms in
    /// declaration order.
    pub fn domain(&self, domain: &Domain) -> Result<Vec<Value>, EvalError> {
        match domain {
            Domain::Entities(kind) => {
                if self.store.decls().schema(kind).is_none() {
                    return Err(EvalError::UnknownDomain(kind.clone()));
                }
                Ok(self.store.entities_of_kind(kind).map(|e| e.reference()).collect())
            }
            Domain::Enum(name) => match self.store.decls().enum_decl(name) {
                Some(decl) => Ok(decl.atoms().collect()),
                None => Err(EvalError::UnknownDomain(name.clone())),
            },
        }
    }

    /// Evaluates an attribute expression, recording where its value came from.
    pub fn evidence(&self, e: &AttrExpr, env: &Env) -> Result<Evidence, EvalError> {
        match e {
            AttrExpr::Literal { value } => Ok(Evidence::Literal { value: value.clone(), expr: e.to_string() }),
            AttrExpr::Var { name } => {
                let value = env.get(name).ok_or_else(|| EvalError::UnboundVariable(name.clone()))?;
                Ok(Evidence::Literal { value: value.clone(), expr: name.clone() })
            }
            AttrExpr::Attr { var, path } => {
                let subject = env.get(var).ok_or_else(|| EvalError::UnboundVariable(var.clone()))?;
                self.attribute(subject, path, e.to_string())
            }
            AttrExpr::Builtin { name, args } => {
                let args = args.iter().map(|a| self.evidence(a, env)).collect::<Result<Vec<_>, _>>()?;
                let mut lookups = Vec::new();
                let value = match name {
                    Builtin::Length => Value::Nat(list(args[0].value())?.len() as u64),
                    Builtin::Intersect => {
                        let elem = match args[0].value() {
                            Value::List { elem, .. } => elem.clone(),
                            other => return Err(EvalError::TagMismatch(format!("intersect of {}", other.tag()))),
                        };
                        Value::list(elem, intersect(list(args[0].value())?, list(args[1].value())?))
                    }
                    Builtin::ExposedPorts => {
                        let (elem, ports) = match args[0].value() {
                            Value::List { elem, items } => (elem.clone(), items.clone()),
                            other => return Err(EvalError::TagMismatch(format!("exposedPorts of {}", other.tag()))),
                        };
                        let mut exposed = Vec::new();
                        for port in ports {
                            let network = self.attribute(&port, PORT_NETWORK_ATTR, format!("{port}.{PORT_NETWORK_ATTR}"))?;
                            let net = network.value().clone();
                            let public = self.attribute(&net, NETWORK_PUBLIC_ATTR, format!("{net}.{NETWORK_PUBLIC_ATTR}"))?;
                            let is_public = public
                                .value()
                                .as_bool()
                                .ok_or_else(|| EvalError::TagMismatch(format!("`{NETWORK_PUBLIC_ATTR}` must be Bool")))?;
                            let id = port.as_entity().cloned().ok_or_else(|| {
                                EvalError::TagMismatch(format!("exposedPorts expects entity references, got {}", port.tag()))
                            })?;
                            lookups.push(PortLookup { port: id, network, public });
                            if is_public {
                                exposed.push(port);
                            }
                        }
                        Value::list(elem, exposed)
                    }
                };
                Ok(Evidence::Builtin { name: *name, args, lookups, value })
            }
        }
    }

    /// The attribute of an entity: a trusted claim if one exists, otherwise
    /// the store value.
    fn attribute(&self, subject: &Value, attr: &str, expr: String) -> Result<Evidence, EvalError> {
        let Value::Ref { id, .. } = subject else {
            return Err(EvalError::TagMismatch(format!("attribute `{attr}` of non-entity {}", subject.tag())));
        };
        let entity = self.store.entity(id).ok_or_else(|| EvalError::DanglingEntityRef(id.clone()))?;
        let expected = self.store.decls().schema(&entity.kind).and_then(|s| s.attribute(attr));
        if let Some((claim, hash)) = self.claims.trusted(id, attr) {
            if let Some(tag) = expected {
                if !self.store.decls().conforms(&claim.value, tag) {
                    return Err(EvalError::TagMismatch(format!(
                        "claim {hash} gives `{attr}` of `{id}` a {} value, schema says {tag}",
                        claim.value.tag()
                    )));
                }
            }
            return Ok(Evidence::Claim { claim_ref: hash.to_owned(), value: claim.value.clone() });
        }
        match entity.attributes.get(attr) {
            Some(v) => Ok(Evidence::Literal { value: v.clone(), expr }),
            None => Err(EvalError::MissingAttribute { entity: id.clone(), attr: attr.to_owned() }),
        }
    }

    pub fn decide_policy(&self, pol: &TypedPolicy, args: &[EntityId]) -> Result<PolicyDecision, EvalError> {
        let env = bind_args(pol, args, self.store)?;
        let mut refutations = Vec::new();
        for rule in &pol.rules {
            match self.decide(&rule.body, &env)? {
                Dec::Yes(p) => {
                    return Ok(PolicyDecision { policy: pol.name.clone(), rule: Some(rule.name.clone()), dec: Dec::Yes(p) })
                }
                Dec::No(r) => refutations.push(r),
            }
        }
        // nest to match `TypedPolicy::as_proposition`
        let mut it = refutations.into_iter().rev();
        let last = it.next().ok_or_else(|| EvalError::EmptyPolicy(pol.name.clone()))?;
        let all = it.fold(last, |acc, r| Refutation::Or { left: Box::new(r), right: Box::new(acc) });
        Ok(PolicyDecision { policy: pol.name.clone(), rule: None, dec: Dec::No(all) })
    }
}

fn list(v: &Value) -> Result<&[Value], EvalError> {
    v.as_list().ok_or_else(|| EvalError::TagMismatch(format!("expected a list, found {}", v.tag())))
}

/// Binds policy parameters to entity references, checking arity and kinds.
pub fn bind_args(pol: &TypedPolicy, args: &[EntityId], store: &EntityStore) -> Result<Env, EvalError> {
    if args.len() != pol.params.len() {
        return Err(EvalError::ArityMismatch { policy: pol.name.clone(), expected: pol.params.len(), found: args.len() });
    }
    let mut env = Env::new();
    for (param, id) in pol.params.iter().zip(args) {
        let entity = store.entity(id).ok_or_else(|| EvalError::DanglingEntityRef(id.clone()))?;
        if entity.kind != param.kind {
            return Err(EvalError::KindMismatch {
                param: param.name.clone(),
                id: id.clone(),
                expected: param.kind.clone(),
                found: entity.kind.clone(),
            });
        }
        env.insert(param.name.clone(), entity.reference());
    }
    Ok(env)
}

/// The outcome of deciding a whole policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyDecision {
    pub policy: String,
    /// The first rule that held, for a `Yes`.
    pub rule: Option<String>,
    /// For a `No`: the refutation of every rule, nested as in
    /// [`TypedPolicy::as_proposition`].
    pub dec: Dec,
}

impl PolicyDecision {
    /// Per-rule refutations of a denial, in rule order.
    pub fn rule_refutations(&self, pol: &TypedPolicy) -> Vec<(String, Refutation)> {
        let Dec::No(r) = &self.dec else { return Vec::new() };
        let mut out = Vec::new();
        let mut cur = r;
        for (i, rule) in pol.rules.iter().enumerate() {
            if i + 1 == pol.rules.len() {
                out.push((rule.name.clone(), cur.clone()));
                break;
            }
            match cur {
                Refutation::Or { left, right } => {
                    out.push((rule.name.clone(), (**left).clone()));
                    cur = right;
                }
                _ => break,
            }
        }
        out
    }
}

pub fn decide(p: &Proposition, env: &Env, store: &EntityStore, claims: &ClaimBag) -> Result<Dec, EvalError> {
    Evaluator::new(store, claims).decide(p, env)
}

pub fn decide_policy(
    pol: &TypedPolicy,
    args: &[EntityId],
    store: &EntityStore,
    claims: &ClaimBag,
) -> Result<PolicyDecision, EvalError> {
    Evaluator::new(store, claims).decide_policy(pol, args)
}

/// The value of an attribute expression against the store alone.
pub fn resolve_expr(e: &AttrExpr, env: &Env, store: &EntityStore) -> Result<Value, EvalError> {
    let claims = ClaimBag::empty();
    Evaluator::new(store, &claims).evidence(e, env).map(|ev| ev.value().clone())
}

/// The entities, in input order, for which a one-parameter policy holds,
/// each with its proof.
pub fn filter_with_proofs(
    pol: &TypedPolicy,
    ids: &[EntityId],
    store: &EntityStore,
    claims: &ClaimBag,
) -> Result<Vec<(EntityId, Proof)>, EvalError> {
    let ev = Evaluator::new(store, claims);
    let mut out = Vec::new();
    for id in ids {
        if let PolicyDecision { dec: Dec::Yes(p), .. } = ev.decide_policy(pol, std::slice::from_ref(id))? {
            out.push((id.clone(), p));
        }
    }
    Ok(out)
}

/// Tag of the value a domain yields.
pub fn domain_tag(domain: &Domain) -> Tag {
    match domain {
        Domain::Entities(k) => Tag::Ref(k.clone()),
        Domain::Enum(e) => Tag::Enum(e.clone()),
    }
}
