//! Bidirectional type checking from surface syntax to typed propositions.
//!
//! Identifiers resolve in order: bound variable, constant, entity handle,
//! enumeration atom. Policy references are inlined with capture-avoiding
//! renaming; recursion among policies is rejected.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::dsl::ast::{Expr, Formula, Literal, PolicyItem};
use crate::model::{Declarations, EnumDecl};
use crate::policy::{
    AttrExpr, Builtin, Domain, Param, Proposition, TypedPolicy, TypedRule, NETWORK_PUBLIC_ATTR,
    PORT_NETWORK_ATTR,
};
use crate::value::{EntityId, Tag, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeErrorKind {
    #[error("kind `{kind}` has no attribute `{attr}`")]
    UnknownAttribute { kind: String, attr: String },
    #[error("expected {expected}, found {found}")]
    TagMismatch { expected: String, found: String },
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
    #[error("`{0}` is not a finite domain")]
    NonFiniteDomain(String),
    #[error("unknown builtin `{0}`")]
    UnknownBuiltin(String),
    #[error("unknown kind `{0}`")]
    UnknownKind(String),
    #[error("unknown enumeration atom `{enum_name}::{atom}`")]
    UnknownAtom { enum_name: String, atom: String },
    #[error("atom `{atom}` belongs to several enumerations: {enums:?}")]
    AmbiguousAtom { atom: String, enums: Vec<String> },
    #[error("unknown policy `{0}`")]
    UnknownPolicy(String),
    #[error("`{name}` takes {expected} argument(s), {found} given")]
    ArityMismatch { name: String, expected: usize, found: usize },
    #[error("policy reference cycle: {}", .0.join(" -> "))]
    RecursivePolicy(Vec<String>),
    #[error("policy arguments must be variables bound to entities")]
    BadPolicyArgument,
    #[error("referenced policy `{0}` does not type check")]
    InvalidReference(String),
    #[error("policy has no rules")]
    EmptyPolicy,
    #[error("duplicate name `{0}`")]
    Duplicate(String),
}

/// A located type error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeError {
    pub policy: String,
    pub rule: String,
    /// Dotted path from the rule body to the offending node.
    pub path: String,
    pub kind: TypeErrorKind,
}

impl fmt::Display for TypeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.rule.is_empty() {
            write!(f, "policy {}: {}", self.policy, self.kind)
        } else {
            write!(f, "policy {}, rule {}, at {}: {}", self.policy, self.rule, self.path, self.kind)
        }
    }
}

impl std::error::Error for TypeError {}

/// Everything a policy body may refer to.
#[derive(Debug, Default)]
pub struct Scope {
    pub decls: Declarations,
    pub consts: BTreeMap<String, Value>,
    pub handles: BTreeMap<String, Value>,
    pub policies: BTreeMap<String, PolicyItem>,
    /// Referenced policies already checked; a failure keeps the cycle error, if any.
    checked: RefCell<BTreeMap<String, Result<TypedPolicy, Option<TypeErrorKind>>>>,
}

impl Scope {
    pub fn new(decls: Declarations) -> Self {
        Self { decls, ..Default::default() }
    }

    pub fn with_policies(mut self, policies: impl IntoIterator<Item = PolicyItem>) -> Self {
        for p in policies {
            self.policies.insert(p.name.clone(), p);
        }
        self
    }

    /// Resolves a surface literal against an optional expected tag.
    pub fn literal(&self, lit: &Literal, expected: Option<&Tag>) -> Result<Value, TypeErrorKind> {
        let value = match lit {
            Literal::Nat(n) => Value::Nat(*n),
            Literal::Str(s) => Value::Str(s.clone()),
            Literal::Bool(b) => Value::Bool(*b),
            Literal::Atom { enum_name, atom } => {
                let decl = self.decls.enum_decl(enum_name).ok_or_else(|| TypeErrorKind::UnknownKind(enum_name.clone()))?;
                if !decl.contains(atom) {
                    return Err(TypeErrorKind::UnknownAtom { enum_name: enum_name.clone(), atom: atom.clone() });
                }
                Value::atom(enum_name.clone(), atom.clone())
            }
            Literal::Ident(name) => self.global(name, expected)?,
            Literal::List(items) => {
                let elem = match expected {
                    Some(Tag::List(elem)) => Some(elem.as_ref().clone()),
                    Some(other) => {
                        return Err(TypeErrorKind::TagMismatch { expected: other.to_string(), found: "a list".into() })
                    }
                    None => None,
                };
                let mut values = Vec::with_capacity(items.len());
                let mut elem = elem;
                for item in items {
                    let v = self.literal(item, elem.as_ref())?;
                    if elem.is_none() {
                        elem = Some(v.tag());
                    }
                    values.push(v);
                }
                let elem = elem.ok_or_else(|| TypeErrorKind::TagMismatch {
                    expected: "a list with known element type".into(),
                    found: "[]".into(),
                })?;
                Value::list(elem, values)
            }
        };
        if let Some(exp) = expected {
            if &value.tag() != exp {
                return Err(mismatch(exp, &value.tag()));
            }
        }
        Ok(value)
    }

    /// Resolves a name that is not a bound variable.
    fn global(&self, name: &str, expected: Option<&Tag>) -> Result<Value, TypeErrorKind> {
        if let Some(v) = self.consts.get(name) {
            return Ok(v.clone());
        }
        if let Some(v) = self.handles.get(name) {
            return Ok(v.clone());
        }
        if let Some(Tag::Enum(e)) = expected {
            if self.decls.enum_decl(e).is_some_and(|d| d.contains(name)) {
                return Ok(Value::atom(e.clone(), name));
            }
        }
        let owners: Vec<&EnumDecl> = self.decls.enums.values().filter(|d| d.contains(name)).collect();
        match owners.as_slice() {
            [] => Err(TypeErrorKind::UnboundVariable(name.to_owned())),
            [d] => Ok(Value::atom(d.name.clone(), name)),
            many => Err(TypeErrorKind::AmbiguousAtom {
                atom: name.to_owned(),
                enums: many.iter().map(|d| d.name.clone()).collect(),
            }),
        }
    }

    pub fn resolve_type(&self, ty: &crate::dsl::ast::TypeExpr) -> Result<Tag, TypeErrorKind> {
        use crate::dsl::ast::TypeExpr;
        Ok(match ty {
            TypeExpr::Nat => Tag::Nat,
            TypeExpr::Str => Tag::Str,
            TypeExpr::Bool => Tag::Bool,
            TypeExpr::List(inner) => Tag::list_of(self.resolve_type(inner)?),
            TypeExpr::Named(n) if self.decls.enum_decl(n).is_some() => Tag::Enum(n.clone()),
            TypeExpr::Named(n) if self.decls.schema(n).is_some() => Tag::Ref(n.clone()),
            TypeExpr::Named(n) => return Err(TypeErrorKind::UnknownKind(n.clone())),
        })
    }

    /// Type checks one policy, inlining the policies it references.
    pub fn typecheck(&self, policy: &PolicyItem) -> Result<TypedPolicy, Vec<TypeError>> {
        self.typecheck_inner(policy, &mut vec![policy.name.clone()])
    }

    fn typecheck_inner(&self, policy: &PolicyItem, stack: &mut Vec<String>) -> Result<TypedPolicy, Vec<TypeError>> {
        let mut errors = Vec::new();
        let err = |rule: &str, path: &str, kind| TypeError {
            policy: policy.name.clone(),
            rule: rule.to_owned(),
            path: path.to_owned(),
            kind,
        };
        let mut env = BTreeMap::new();
        let mut params = Vec::new();
        for (name, kind) in &policy.params {
            if self.decls.schema(kind).is_none() {
                errors.push(err("", "", TypeErrorKind::UnknownKind(kind.clone())));
            }
            if env.insert(name.clone(), Tag::Ref(kind.clone())).is_some() {
                errors.push(err("", "", TypeErrorKind::Duplicate(name.clone())));
            }
            params.push(Param { name: name.clone(), kind: kind.clone() });
        }
        if policy.rules.is_empty() {
            errors.push(err("", "", TypeErrorKind::EmptyPolicy));
        }
        let mut rules = Vec::new();
        let mut names = BTreeSet::new();
        for rule in &policy.rules {
            if !names.insert(&rule.name) {
                errors.push(err(&rule.name, "", TypeErrorKind::Duplicate(rule.name.clone())));
            }
            let mut cx = RuleCx { scope: self, stack, errors: Vec::new() };
            let body = cx.formula(&rule.body, &env, "body");
            for (path, kind) in cx.errors {
                errors.push(err(&rule.name, &path, kind));
            }
            if let Some(body) = body {
                rules.push(TypedRule { name: rule.name.clone(), body });
            }
        }
        if !errors.is_empty() {
            return Err(errors);
        }
        let mut enums = BTreeMap::new();
        for r in &rules {
            r.body.visit(&mut |p| {
                if let Proposition::Exists { domain: Domain::Enum(e), .. } | Proposition::Forall { domain: Domain::Enum(e), .. } = p {
                    if let Some(d) = self.decls.enum_decl(e) {
                        enums.insert(e.clone(), d.clone());
                    }
                }
            });
        }
        Ok(TypedPolicy { name: policy.name.clone(), params, rules, enums })
    }

    /// The typed version of a named policy, memoized; `None` if it fails.
    fn referenced(&self, name: &str, stack: &mut Vec<String>) -> Result<Option<TypedPolicy>, TypeErrorKind> {
        if let Some(pos) = stack.iter().position(|s| s == name) {
            let mut cycle = stack[pos..].to_vec();
            cycle.push(name.to_owned());
            return Err(TypeErrorKind::RecursivePolicy(cycle));
        }
        if let Some(done) = self.checked.borrow().get(name) {
            return match done {
                Ok(t) => Ok(Some(t.clone())),
                Err(None) => Ok(None),
                Err(Some(cycle)) => Err(cycle.clone()),
            };
        }
        let item = self.policies.get(name).ok_or_else(|| TypeErrorKind::UnknownPolicy(name.to_owned()))?;
        stack.push(name.to_owned());
        let result = self.typecheck_inner(item, stack);
        stack.pop();
        // a cycle found below this reference is reported here as well
        let memo = result.map_err(|errs| {
            errs.into_iter().map(|e| e.kind).find(|k| matches!(k, TypeErrorKind::RecursivePolicy(_)))
        });
        self.checked.borrow_mut().insert(name.to_owned(), memo.clone());
        match memo {
            Ok(t) => Ok(Some(t)),
            Err(None) => Ok(None),
            Err(Some(cycle)) => Err(cycle),
        }
    }
}

fn mismatch(expected: &Tag, found: &Tag) -> TypeErrorKind {
    TypeErrorKind::TagMismatch { expected: expected.to_string(), found: found.to_string() }
}

/// True for expressions whose type can only be checked, not inferred.
fn needs_hint(e: &Expr) -> bool {
    matches!(e, Expr::Lit(Literal::List(items)) if items.is_empty())
}

struct RuleCx<'a> {
    scope: &'a Scope,
    stack: &'a mut Vec<String>,
    errors: Vec<(String, TypeErrorKind)>,
}

type Env = BTreeMap<String, Tag>;

fn join(path: &str, seg: &str) -> String {
    format!("{path}.{seg}")
}

impl RuleCx<'_> {
    fn fail<T>(&mut self, path: String, kind: TypeErrorKind) -> Option<T> {
        self.errors.push((path, kind));
        None
    }

    fn formula(&mut self, f: &Formula, env: &Env, path: &str) -> Option<Proposition> {
        match f {
            Formula::Cmp { lhs, op, rhs } => {
                let (l, r) = self.pair(lhs, rhs, env, path, "lhs", "rhs")?;
                if l.1 != r.1 {
                    return self.fail(join(path, "rhs"), mismatch(&l.1, &r.1));
                }
                if op.is_ordering() && l.1 != Tag::Nat {
                    return self.fail(join(path, "lhs"), mismatch(&Tag::Nat, &l.1));
                }
                Some(Proposition::cmp(l.0, *op, r.0))
            }
            Formula::In { elem, set } => {
                let (e, s) = if needs_hint(set) {
                    let e = self.expr(elem, env, None, &join(path, "elem"))?;
                    let s = self.expr(set, env, Some(&Tag::list_of(e.1.clone())), &join(path, "set"))?;
                    (e, s)
                } else {
                    let s = self.expr(set, env, None, &join(path, "set"))?;
                    let Some(elem_tag) = s.1.element().cloned() else {
                        return self.fail(join(path, "set"), TypeErrorKind::TagMismatch {
                            expected: "a list".into(),
                            found: s.1.to_string(),
                        });
                    };
                    let e = self.expr(elem, env, Some(&elem_tag), &join(path, "elem"))?;
                    (e, s)
                };
                if Tag::list_of(e.1.clone()) != s.1 {
                    return self.fail(join(path, "elem"), mismatch(s.1.element().unwrap_or(&s.1), &e.1));
                }
                Some(Proposition::Member { elem: e.0, set: s.0 })
            }
            Formula::Disjoint { a, b } => {
                let (x, y) = self.pair(a, b, env, path, "a", "b")?;
                if x.1.element().is_none() {
                    return self.fail(join(path, "a"), TypeErrorKind::TagMismatch {
                        expected: "a list".into(),
                        found: x.1.to_string(),
                    });
                }
                if x.1 != y.1 {
                    return self.fail(join(path, "b"), mismatch(&x.1, &y.1));
                }
                Some(Proposition::EmptyIntersect { a: x.0, b: y.0 })
            }
            Formula::And(l, r) => {
                let l = self.formula(l, env, &join(path, "left"));
                let r = self.formula(r, env, &join(path, "right"));
                Some(Proposition::and(l?, r?))
            }
            Formula::Or(l, r) => {
                let l = self.formula(l, env, &join(path, "left"));
                let r = self.formula(r, env, &join(path, "right"));
                Some(Proposition::or(l?, r?))
            }
            Formula::Not(sub) => Some(Proposition::not(self.formula(sub, env, &join(path, "sub"))?)),
            Formula::Exists { var, domain, body } | Formula::Forall { var, domain, body } => {
                let (dom, tag) = match self.domain(domain) {
                    Ok(d) => d,
                    Err(kind) => return self.fail(join(path, "domain"), kind),
                };
                let mut inner = env.clone();
                inner.insert(var.clone(), tag);
                let body = self.formula(body, &inner, &join(path, "body"))?;
                Some(if matches!(f, Formula::Exists { .. }) {
                    Proposition::exists(var.clone(), dom, body)
                } else {
                    Proposition::forall(var.clone(), dom, body)
                })
            }
            Formula::Apply { policy, args } => self.apply(policy, args, env, path),
        }
    }

    fn domain(&self, name: &str) -> Result<(Domain, Tag), TypeErrorKind> {
        let decls = &self.scope.decls;
        if decls.schema(name).is_some() {
            Ok((Domain::Entities(name.to_owned()), Tag::Ref(name.to_owned())))
        } else if decls.enum_decl(name).is_some() {
            Ok((Domain::Enum(name.to_owned()), Tag::Enum(name.to_owned())))
        } else if matches!(name, "Nat" | "Str" | "Bool") {
            Err(TypeErrorKind::NonFiniteDomain(name.to_owned()))
        } else {
            Err(TypeErrorKind::UnknownKind(name.to_owned()))
        }
    }

    /// Infers two operands that must share a type, checking the one that
    /// needs a hint against the other.
    fn pair(
        &mut self,
        a: &Expr,
        b: &Expr,
        env: &Env,
        path: &str,
        sa: &str,
        sb: &str,
    ) -> Option<((AttrExpr, Tag), (AttrExpr, Tag))> {
        if needs_hint(a) && !needs_hint(b) {
            let y = self.expr(b, env, None, &join(path, sb))?;
            let x = self.expr(a, env, Some(&y.1), &join(path, sa))?;
            Some((x, y))
        } else {
            let x = self.expr(a, env, None, &join(path, sa));
            let hint = x.as_ref().map(|x| x.1.clone());
            let y = self.expr(b, env, hint.as_ref(), &join(path, sb));
            Some((x?, y?))
        }
    }

    fn expr(&mut self, e: &Expr, env: &Env, hint: Option<&Tag>, path: &str) -> Option<(AttrExpr, Tag)> {
        match e {
            Expr::Lit(lit) => match self.scope.literal(lit, hint) {
                Ok(v) => {
                    let tag = v.tag();
                    Some((AttrExpr::lit(v), tag))
                }
                Err(TypeErrorKind::TagMismatch { .. }) if hint.is_some() => {
                    // report the literal's own type where it has one
                    match self.scope.literal(lit, None) {
                        Ok(v) => self.fail(path.to_owned(), mismatch(hint.unwrap(), &v.tag())),
                        Err(kind) => self.fail(path.to_owned(), kind),
                    }
                }
                Err(kind) => self.fail(path.to_owned(), kind),
            },
            Expr::Var(name) => {
                if let Some(tag) = env.get(name) {
                    return Some((AttrExpr::var(name.clone()), tag.clone()));
                }
                match self.scope.global(name, hint) {
                    Ok(v) => {
                        let tag = v.tag();
                        Some((AttrExpr::lit(v), tag))
                    }
                    Err(kind) => self.fail(path.to_owned(), kind),
                }
            }
            Expr::Attr { var, path: attr } => {
                let kind = match env.get(var) {
                    Some(Tag::Ref(kind)) => kind.clone(),
                    Some(other) => {
                        return self.fail(path.to_owned(), TypeErrorKind::TagMismatch {
                            expected: "an entity".into(),
                            found: other.to_string(),
                        })
                    }
                    None => return self.fail(path.to_owned(), TypeErrorKind::UnboundVariable(var.clone())),
                };
                let tag = self.scope.decls.schema(&kind).and_then(|s| s.attribute(attr)).cloned();
                match tag {
                    Some(tag) => Some((AttrExpr::attr(var.clone(), attr.clone()), tag)),
                    None => self.fail(path.to_owned(), TypeErrorKind::UnknownAttribute { kind, attr: attr.clone() }),
                }
            }
            Expr::Call { name, args } => {
                let Some(builtin) = Builtin::from_name(name) else {
                    return self.fail(path.to_owned(), TypeErrorKind::UnknownBuiltin(name.clone()));
                };
                if args.len() != builtin.arity() {
                    return self.fail(path.to_owned(), TypeErrorKind::ArityMismatch {
                        name: name.clone(),
                        expected: builtin.arity(),
                        found: args.len(),
                    });
                }
                let arg_path = |i: usize| join(path, &format!("args[{i}]"));
                match builtin {
                    Builtin::Length => {
                        let a = self.expr(&args[0], env, None, &arg_path(0))?;
                        if a.1.element().is_none() {
                            return self.fail(arg_path(0), TypeErrorKind::TagMismatch {
                                expected: "a list".into(),
                                found: a.1.to_string(),
                            });
                        }
                        Some((AttrExpr::call(builtin, vec![a.0]), Tag::Nat))
                    }
                    Builtin::Intersect => {
                        let (x, y) = self.pair(&args[0], &args[1], env, path, "args[0]", "args[1]")?;
                        if x.1.element().is_none() {
                            return self.fail(arg_path(0), TypeErrorKind::TagMismatch {
                                expected: "a list".into(),
                                found: x.1.to_string(),
                            });
                        }
                        if x.1 != y.1 {
                            return self.fail(arg_path(1), mismatch(&x.1, &y.1));
                        }
                        let tag = x.1.clone();
                        Some((AttrExpr::call(builtin, vec![x.0, y.0]), tag))
                    }
                    Builtin::ExposedPorts => {
                        let a = self.expr(&args[0], env, hint, &arg_path(0))?;
                        if !self.is_port_list(&a.1) {
                            return self.fail(arg_path(0), TypeErrorKind::TagMismatch {
                                expected: format!(
                                    "a list of entities with `{PORT_NETWORK_ATTR}` referring to entities with `{NETWORK_PUBLIC_ATTR}: Bool`"
                                ),
                                found: a.1.to_string(),
                            });
                        }
                        let tag = a.1.clone();
                        Some((AttrExpr::call(builtin, vec![a.0]), tag))
                    }
                }
            }
        }
    }

    fn is_port_list(&self, tag: &Tag) -> bool {
        let decls = &self.scope.decls;
        let Some(Tag::Ref(port)) = tag.element() else { return false };
        let Some(Tag::Ref(network)) = decls.schema(port).and_then(|s| s.attribute(PORT_NETWORK_ATTR)) else {
            return false;
        };
        decls.schema(network).and_then(|s| s.attribute(NETWORK_PUBLIC_ATTR)) == Some(&Tag::Bool)
    }

    fn apply(&mut self, name: &str, args: &[Expr], env: &Env, path: &str) -> Option<Proposition> {
        let typed = match self.scope.referenced(name, self.stack) {
            Ok(Some(t)) => t,
            Ok(None) => return self.fail(path.to_owned(), TypeErrorKind::InvalidReference(name.to_owned())),
            Err(kind) => return self.fail(path.to_owned(), kind),
        };
        if args.len() != typed.params.len() {
            return self.fail(path.to_owned(), TypeErrorKind::ArityMismatch {
                name: name.to_owned(),
                expected: typed.params.len(),
                found: args.len(),
            });
        }
        let mut actuals = Vec::new();
        for (i, (arg, param)) in args.iter().zip(&typed.params).enumerate() {
            let p = join(path, &format!("args[{i}]"));
            let Expr::Var(v) = arg else {
                return self.fail(p, TypeErrorKind::BadPolicyArgument);
            };
            match env.get(v) {
                Some(Tag::Ref(kind)) if *kind == param.kind => actuals.push(v.clone()),
                Some(other) => return self.fail(p, mismatch(&Tag::Ref(param.kind.clone()), other)),
                None => return self.fail(p, TypeErrorKind::BadPolicyArgument),
            }
        }
        let mut body = typed.as_proposition()?;
        let avoid: BTreeSet<String> = env.keys().cloned().chain(actuals.iter().cloned()).collect();
        freshen_binders(&mut body, &avoid);
        // two phases so that swapped arguments do not collide
        for (i, param) in typed.params.iter().enumerate() {
            body.rename_free(&param.name, &format!("#{i}"));
        }
        for (i, actual) in actuals.iter().enumerate() {
            body.rename_free(&format!("#{i}"), actual);
        }
        Some(body)
    }
}

/// Renames every quantifier binder that collides with `avoid` to a fresh
/// name of the form `var_N`.
fn freshen_binders(p: &mut Proposition, avoid: &BTreeSet<String>) {
    let mut taken = avoid.clone();
    taken.extend(p.bound_vars());
    taken.extend(p.free_vars());
    freshen_rec(p, avoid, &mut taken);
}

fn freshen_rec(p: &mut Proposition, avoid: &BTreeSet<String>, taken: &mut BTreeSet<String>) {
    match p {
        Proposition::And { left, right } | Proposition::Or { left, right } => {
            freshen_rec(left, avoid, taken);
            freshen_rec(right, avoid, taken);
        }
        Proposition::Not { sub } => freshen_rec(sub, avoid, taken),
        Proposition::Exists { var, .. } | Proposition::Forall { var, .. } => {
            if avoid.contains(var.as_str()) {
                let base = var.clone();
                let fresh = (1..).map(|n| format!("{base}_{n}")).find(|c| !taken.contains(c)).unwrap();
                taken.insert(fresh.clone());
                p.rename_binder(&fresh);
            }
            if let Proposition::Exists { body, .. } | Proposition::Forall { body, .. } = p {
                freshen_rec(body, avoid, taken);
            }
        }
        _ => {}
    }
}

/// Resolves an entity handle or id reference to its id.
pub fn handle_id(scope: &Scope, handle: &str) -> Option<EntityId> {
    scope.handles.get(handle).and_then(|v| v.as_entity().cloned())
}
