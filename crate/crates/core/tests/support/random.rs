//! Seeded random (policy, store, claims) instances and an independent
//! truth-table oracle for them.
//!
//! The oracle evaluates propositions directly from the store and the
//! trusted claims, without the evaluator or the verifier.

#![allow(dead_code)]

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, TimeZone, Utc};
use polity_core::claims::{Claim, ClaimBag, IssuerKeypair, KeyRing, TrustConfig, TrustEntry, TrustList};
use polity_core::eval::Env;
use polity_core::policy::{intersect, Param, TypedRule};
use polity_core::{
    AttrExpr, Builtin, CmpOp, Declarations, Domain, Entity, EntitySchema, EntityStore, EnumDecl, Proposition, Tag,
    TypedPolicy, Value,
};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

pub const COLORS: [&str; 3] = ["red", "green", "blue"];
pub const GOOD_ISSUER: &str = "urn:issuer:good";
pub const EVIL_ISSUER: &str = "urn:issuer:evil";

pub struct Instance {
    pub store: EntityStore,
    pub claims: Vec<Claim>,
    pub trust: TrustConfig,
    pub now: DateTime<Utc>,
    pub policy: TypedPolicy,
    pub env: Env,
    pub arg: polity_core::EntityId,
}

impl Instance {
    pub fn prop(&self) -> &Proposition {
        &self.policy.rules[0].body
    }

    pub fn bag(&self) -> ClaimBag {
        ClaimBag::new(self.claims.clone(), &self.trust.trust, &self.trust.keys, self.now)
    }
}

fn color_tag() -> Tag {
    Tag::Enum("Color".into())
}

pub fn color(c: &str) -> Value {
    Value::atom("Color", c)
}

pub fn decls() -> Declarations {
    let color = EnumDecl::new("Color", COLORS.iter().map(|c| c.to_string()).collect()).unwrap();
    let node = EntitySchema::new(
        "Node",
        [
            ("n".to_string(), Tag::Nat),
            ("flag".to_string(), Tag::Bool),
            ("name".to_string(), Tag::Str),
            ("color".to_string(), color_tag()),
            ("colors".to_string(), Tag::list_of(color_tag())),
            ("ports".to_string(), Tag::list_of(Tag::Ref("Port".into()))),
        ],
    );
    let net = EntitySchema::new("Net", [("public".to_string(), Tag::Bool)]);
    let port = EntitySchema::new("Port", [("network".to_string(), Tag::Ref("Net".into()))]);
    Declarations::new([color], [node, net, port]).unwrap()
}

struct Gen<'a> {
    rng: &'a mut StdRng,
    fresh: usize,
}

impl Gen<'_> {
    fn colors_lit(&mut self) -> Value {
        let n = self.rng.gen_range(0..=3);
        let items = (0..n).map(|_| color(COLORS.choose(self.rng).unwrap())).collect();
        Value::list(color_tag(), items)
    }

    fn nat(&mut self) -> u64 {
        self.rng.gen_range(0..4)
    }

    fn name(&mut self) -> String {
        ["a", "b"].choose(self.rng).unwrap().to_string()
    }

    fn node_var(&mut self, nodes: &[String]) -> String {
        nodes.choose(self.rng).unwrap().clone()
    }

    fn colors_expr(&mut self, nodes: &[String], nested: bool) -> AttrExpr {
        match self.rng.gen_range(0..if nested { 3 } else { 2 }) {
            0 => AttrExpr::lit(self.colors_lit()),
            1 => AttrExpr::attr(self.node_var(nodes), "colors"),
            _ => AttrExpr::call(Builtin::Intersect, vec![self.colors_expr(nodes, false), self.colors_expr(nodes, false)]),
        }
    }

    fn nat_expr(&mut self, nodes: &[String]) -> AttrExpr {
        match self.rng.gen_range(0..4) {
            0 => AttrExpr::lit(Value::Nat(self.nat())),
            1 => AttrExpr::attr(self.node_var(nodes), "n"),
            2 => AttrExpr::call(Builtin::Length, vec![self.colors_expr(nodes, true)]),
            _ => AttrExpr::call(
                Builtin::Length,
                vec![AttrExpr::call(Builtin::ExposedPorts, vec![AttrExpr::attr(self.node_var(nodes), "ports")])],
            ),
        }
    }

    fn color_expr(&mut self, nodes: &[String], colors: &[String]) -> AttrExpr {
        match self.rng.gen_range(0..3) {
            0 => AttrExpr::lit(color(COLORS.choose(self.rng).unwrap())),
            1 => AttrExpr::attr(self.node_var(nodes), "color"),
            _ => match colors.choose(self.rng) {
                Some(c) => AttrExpr::var(c.clone()),
                None => AttrExpr::attr(self.node_var(nodes), "color"),
            },
        }
    }

    fn eq_op(&mut self) -> CmpOp {
        if self.rng.gen_bool(0.5) {
            CmpOp::Eq
        } else {
            CmpOp::Ne
        }
    }

    fn leaf(&mut self, nodes: &[String], colors: &[String]) -> Proposition {
        match self.rng.gen_range(0..9) {
            0 | 1 => {
                let op = *CmpOp::ALL.choose(self.rng).unwrap();
                Proposition::cmp(self.nat_expr(nodes), op, self.nat_expr(nodes))
            }
            2 => {
                let b = AttrExpr::lit(Value::Bool(self.rng.gen_bool(0.5)));
                let op = self.eq_op();
                Proposition::cmp(AttrExpr::attr(self.node_var(nodes), "flag"), op, b)
            }
            3 => {
                let op = self.eq_op();
                let lit = AttrExpr::lit(Value::str(self.name()));
                Proposition::cmp(AttrExpr::attr(self.node_var(nodes), "name"), op, lit)
            }
            4 => {
                let op = self.eq_op();
                Proposition::cmp(self.color_expr(nodes, colors), op, self.color_expr(nodes, colors))
            }
            5 => {
                let op = self.eq_op();
                Proposition::cmp(AttrExpr::var(self.node_var(nodes)), op, AttrExpr::var(self.node_var(nodes)))
            }
            6 => {
                let op = self.eq_op();
                Proposition::cmp(self.colors_expr(nodes, true), op, self.colors_expr(nodes, true))
            }
            7 => Proposition::Member { elem: self.color_expr(nodes, colors), set: self.colors_expr(nodes, true) },
            _ => Proposition::EmptyIntersect { a: self.colors_expr(nodes, true), b: self.colors_expr(nodes, true) },
        }
    }

    /// A proposition of depth at most `depth` over the variables in scope.
    fn prop(&mut self, depth: usize, nodes: &mut Vec<String>, colors: &mut Vec<String>) -> Proposition {
        if depth <= 1 || self.rng.gen_bool(0.25) {
            return self.leaf(nodes, colors);
        }
        match self.rng.gen_range(0..5) {
            0 => Proposition::and(self.prop(depth - 1, nodes, colors), self.prop(depth - 1, nodes, colors)),
            1 => Proposition::or(self.prop(depth - 1, nodes, colors), self.prop(depth - 1, nodes, colors)),
            2 => Proposition::not(self.prop(depth - 1, nodes, colors)),
            k => {
                self.fresh += 1;
                let over_nodes = self.rng.gen_bool(0.6);
                let var = format!("{}{}", if over_nodes { "y" } else { "c" }, self.fresh);
                let (domain, scope) = if over_nodes {
                    (Domain::Entities("Node".into()), &mut *nodes)
                } else {
                    (Domain::Enum("Color".into()), &mut *colors)
                };
                scope.push(var.clone());
                let body = self.prop(depth - 1, nodes, colors);
                if over_nodes {
                    nodes.pop();
                } else {
                    colors.pop();
                }
                if k == 3 {
                    Proposition::exists(var, domain, body)
                } else {
                    Proposition::forall(var, domain, body)
                }
            }
        }
    }
}

fn node_id(i: usize) -> polity_core::EntityId {
    format!("urn:node:{i}").into()
}

/// One instance: at most four entities, proposition depth at most four.
pub fn instance(seed: u64) -> Instance {
    let mut rng = StdRng::seed_from_u64(seed);
    let with_ports = rng.gen_bool(0.5);
    let node_count = if with_ports { rng.gen_range(1..=2) } else { rng.gen_range(1..=4) };
    let mut g = Gen { rng: &mut rng, fresh: 0 };

    let mut entities = Vec::new();
    let net = Value::entity("Net", "urn:net");
    let port = Value::entity("Port", "urn:port");
    if with_ports {
        entities.push(Entity::new("urn:net", "Net").with("public", Value::Bool(g.rng.gen_bool(0.5))));
        entities.push(Entity::new("urn:port", "Port").with("network", net.clone()));
    }
    for i in 0..node_count {
        let ports = if with_ports && g.rng.gen_bool(0.6) { vec![port.clone()] } else { vec![] };
        let e = Entity::new(node_id(i), "Node")
            .with("n", Value::Nat(g.nat()))
            .with("flag", Value::Bool(g.rng.gen_bool(0.5)))
            .with("name", Value::str(g.name()))
            .with("color", color(COLORS.choose(g.rng).unwrap()))
            .with("colors", g.colors_lit())
            .with("ports", Value::list(Tag::Ref("Port".into()), ports));
        entities.push(e);
    }
    let store = EntityStore::build(decls(), entities).unwrap();

    let good = IssuerKeypair::from_seed(GOOD_ISSUER, [1; 32]);
    let evil = IssuerKeypair::from_seed(EVIL_ISSUER, [2; 32]);
    let now = Utc.with_ymd_and_hms(2026, 3, 1, 12, 0, 0).unwrap();
    let t0 = now - Duration::minutes(10);
    let mut claims = Vec::new();
    let mut subjects: Vec<(polity_core::EntityId, &str)> = Vec::new();
    for i in 0..node_count {
        for attr in ["n", "flag", "color", "colors"] {
            subjects.push((node_id(i), attr));
        }
    }
    if with_ports {
        subjects.push(("urn:net".into(), "public"));
        subjects.push(("urn:port".into(), "network"));
    }
    for (subject, attr) in subjects {
        let value = |g: &mut Gen| match attr {
            "n" => Value::Nat(g.nat()),
            "flag" | "public" => Value::Bool(g.rng.gen_bool(0.5)),
            "color" => color(COLORS.choose(g.rng).unwrap()),
            "colors" => g.colors_lit(),
            _ => net.clone(),
        };
        let roll = g.rng.gen_range(0..20);
        if roll < 5 {
            claims.push(good.sign(subject.clone(), attr, value(&mut g), t0, t0 + Duration::hours(1)));
        } else if roll < 8 {
            claims.push(evil.sign(subject.clone(), attr, value(&mut g), t0, t0 + Duration::hours(1)));
        } else if roll < 10 {
            claims.push(good.sign(subject.clone(), attr, value(&mut g), t0 - Duration::hours(2), t0 - Duration::hours(1)));
        }
    }
    let trust = TrustConfig {
        trust: TrustList::new("urn:verifier", [TrustEntry { issuer: GOOD_ISSUER.into(), property: "*".into() }]).unwrap(),
        keys: KeyRing::new().with(&good).with(&evil),
    };

    let mut nodes = vec!["x".to_string()];
    let depth = g.rng.gen_range(1..=4);
    let body = g.prop(depth, &mut nodes, &mut Vec::new());
    let arg = node_id(g.rng.gen_range(0..node_count));
    let enums: BTreeMap<String, EnumDecl> = store.decls().enums.clone();
    let policy = TypedPolicy {
        name: "P".into(),
        params: vec![Param { name: "x".into(), kind: "Node".into() }],
        rules: vec![TypedRule { name: "r".into(), body }],
        enums,
    };
    let env: Env = [("x".to_string(), Value::entity("Node", arg.clone()))].into();
    Instance { store, claims, trust, now, policy, env, arg }
}

/// Truth-table oracle: enumerates every quantifier assignment.
pub struct Oracle<'a> {
    inst: &'a Instance,
    trusted: BTreeMap<(String, String), Value>,
}

impl<'a> Oracle<'a> {
    pub fn new(inst: &'a Instance) -> Self {
        // generation gives each (subject, attribute) at most one claim from the trusted issuer
        let trusted = inst
            .claims
            .iter()
            .filter(|c| c.issuer == GOOD_ISSUER && c.issued_at <= inst.now && inst.now < c.expires_at)
            .map(|c| ((c.subject.to_string(), c.property.clone()), c.value.clone()))
            .collect();
        Self { inst, trusted }
    }

    fn attr(&self, subject: &Value, attr: &str) -> Value {
        let Value::Ref { id, .. } = subject else { panic!("attribute of non-entity") };
        if let Some(v) = self.trusted.get(&(id.to_string(), attr.to_string())) {
            return v.clone();
        }
        self.inst.store.entity(id).unwrap().attributes[attr].clone()
    }

    fn value(&self, e: &AttrExpr, env: &Env) -> Value {
        match e {
            AttrExpr::Literal { value } => value.clone(),
            AttrExpr::Var { name } => env[name].clone(),
            AttrExpr::Attr { var, path } => self.attr(&env[var], path),
            AttrExpr::Builtin { name, args } => {
                let vals: Vec<Value> = args.iter().map(|a| self.value(a, env)).collect();
                match name {
                    Builtin::Length => Value::Nat(vals[0].as_list().unwrap().len() as u64),
                    Builtin::Intersect => {
                        let Value::List { elem, items } = &vals[0] else { panic!() };
                        let keep = vals[1].as_list().unwrap();
                        Value::list(elem.clone(), items.iter().filter(|i| keep.contains(i)).cloned().collect())
                    }
                    Builtin::ExposedPorts => {
                        let Value::List { elem, items } = &vals[0] else { panic!() };
                        let public = |p: &Value| self.attr(&self.attr(p, "network"), "public") == Value::Bool(true);
                        Value::list(elem.clone(), items.iter().filter(|p| public(p)).cloned().collect())
                    }
                }
            }
        }
    }

    fn domain(&self, d: &Domain) -> Vec<Value> {
        match d {
            Domain::Entities(kind) => {
                let mut v: Vec<_> =
                    self.inst.store.entities().filter(|e| &e.kind == kind).map(|e| e.reference()).collect();
                v.sort();
                v
            }
            Domain::Enum(_) => COLORS.iter().map(|c| color(c)).collect(),
        }
    }

    pub fn truth(&self, p: &Proposition, env: &Env) -> bool {
        match p {
            Proposition::Cmp { lhs, op, rhs } => {
                let (a, b) = (self.value(lhs, env), self.value(rhs, env));
                match op {
                    CmpOp::Eq => a == b,
                    CmpOp::Ne => a != b,
                    _ => {
                        let (x, y) = (a.as_nat().unwrap(), b.as_nat().unwrap());
                        match op {
                            CmpOp::Le => x <= y,
                            CmpOp::Lt => x < y,
                            CmpOp::Ge => x >= y,
                            _ => x > y,
                        }
                    }
                }
            }
            Proposition::Member { elem, set } => self.value(set, env).as_list().unwrap().contains(&self.value(elem, env)),
            Proposition::EmptyIntersect { a, b } => {
                let (x, y) = (self.value(a, env), self.value(b, env));
                intersect(x.as_list().unwrap(), y.as_list().unwrap()).is_empty()
            }
            Proposition::And { left, right } => self.truth(left, env) & self.truth(right, env),
            Proposition::Or { left, right } => self.truth(left, env) | self.truth(right, env),
            Proposition::Not { sub } => !self.truth(sub, env),
            Proposition::Exists { var, domain, body } | Proposition::Forall { var, domain, body } => {
                let results: Vec<bool> = self
                    .domain(domain)
                    .into_iter()
                    .map(|v| {
                        let mut inner = env.clone();
                        inner.insert(var.clone(), v);
                        self.truth(body, &inner)
                    })
                    .collect();
                if matches!(p, Proposition::Exists { .. }) {
                    results.contains(&true)
                } else {
                    !results.contains(&false)
                }
            }
        }
    }
}

/// Flips one randomly chosen scalar somewhere in a JSON tree.
pub fn mutate_json(v: &mut serde_json::Value, rng: &mut StdRng) -> bool {
    let mut slots = Vec::new();
    collect_paths(v, &mut Vec::new(), &mut slots);
    let Some(path) = slots.choose(rng).cloned() else { return false };
    let mut cur = v;
    for step in &path {
        cur = match step {
            Step::Key(k) => cur.get_mut(k.as_str()).unwrap(),
            Step::Index(i) => cur.get_mut(*i).unwrap(),
        };
    }
    match cur {
        serde_json::Value::Bool(b) => *b = !*b,
        serde_json::Value::Number(n) => {
            let x = n.as_u64().unwrap_or(0);
            *cur = serde_json::json!(if rng.gen_bool(0.5) { x + 1 } else { x.saturating_sub(1) });
        }
        serde_json::Value::String(s) => {
            let swaps: [(&str, &str); 8] = [
                ("inj1", "inj2"),
                ("inj2", "inj1"),
                ("red", "green"),
                ("green", "blue"),
                ("blue", "red"),
                ("urn:node:0", "urn:node:1"),
                ("urn:node:1", "urn:node:0"),
                ("a", "b"),
            ];
            match swaps.iter().find(|(from, _)| from == s) {
                Some((_, to)) => *s = to.to_string(),
                None => s.push('x'),
            }
        }
        serde_json::Value::Array(items) if !items.is_empty() => {
            if rng.gen_bool(0.5) {
                items.remove(rng.gen_range(0..items.len()));
            } else {
                items.reverse();
            }
        }
        _ => return false,
    }
    true
}

#[derive(Clone)]
enum Step {
    Key(String),
    Index(usize),
}

fn collect_paths(v: &serde_json::Value, at: &mut Vec<Step>, out: &mut Vec<Vec<Step>>) {
    match v {
        serde_json::Value::Object(m) => {
            for (k, child) in m {
                at.push(Step::Key(k.clone()));
                collect_paths(child, at, out);
                at.pop();
            }
        }
        serde_json::Value::Array(items) => {
            out.push(at.clone());
            for (i, child) in items.iter().enumerate() {
                at.push(Step::Index(i));
                collect_paths(child, at, out);
                at.pop();
            }
        }
        _ => out.push(at.clone()),
    }
}
