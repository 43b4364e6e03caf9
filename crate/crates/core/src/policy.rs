//! Typed policy AST: propositions over attribute expressions.
//!
//! Values of these types are produced by the type checker; every literal is
//! a resolved [`Value`] and every policy reference has been inlined.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::EnumDecl;
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CmpOp {
    Eq,
    #[serde(rename = "neq")]
    Ne,
    Le,
    Lt,
    Ge,
    Gt,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [CmpOp::Eq, CmpOp::Ne, CmpOp::Le, CmpOp::Lt, CmpOp::Ge, CmpOp::Gt];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Le => "<=",
            CmpOp::Lt => "<",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        }
    }

    pub fn is_ordering(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Ne)
    }

    /// Applies the operator. Orderings are only defined on naturals; `None`
    /// signals operands the operator does not apply to.
    pub fn apply(self, lhs: &Value, rhs: &Value) -> Option<bool> {
        match self {
            CmpOp::Eq => Some(lhs == rhs),
            CmpOp::Ne => Some(lhs != rhs),
            _ => {
                let (a, b) = (lhs.as_nat()?, rhs.as_nat()?);
                Some(match self {
                    CmpOp::Le => a <= b,
                    CmpOp::Lt => a < b,
                    CmpOp::Ge => a >= b,
                    CmpOp::Gt => a > b,
                    CmpOp::Eq | CmpOp::Ne => unreachable!(),
                })
            }
        }
    }
}

/// Closed registry of builtin functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Builtin {
    #[serde(rename = "length")]
    Length,
    /// Ports whose `network` attribute points at a network with `public = true`.
    #[serde(rename = "exposedPorts")]
    ExposedPorts,
    #[serde(rename = "intersect")]
    Intersect,
}

impl Builtin {
    pub const ALL: [Builtin; 3] = [Builtin::Length, Builtin::ExposedPorts, Builtin::Intersect];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Length => "length",
            Builtin::ExposedPorts => "exposedPorts",
            Builtin::Intersect => "intersect",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.name() == name)
    }

    pub fn arity(self) -> usize {
        match self {
            Builtin::Length | Builtin::ExposedPorts => 1,
            Builtin::Intersect => 2,
        }
    }
}

/// Attribute names `exposedPorts` follows: port → network → public flag.
pub const PORT_NETWORK_ATTR: &str = "network";
pub const NETWORK_PUBLIC_ATTR: &str = "public";

/// Elements of `a` that also occur in `b`, in `a`'s order, keeping duplicates of `a`.
pub fn intersect(a: &[Value], b: &[Value]) -> Vec<Value> {
    a.iter().filter(|x| b.contains(x)).cloned().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "expr", rename_all = "lowercase")]
pub enum AttrExpr {
    Literal { value: Value },
    Attr { var: String, path: String },
    Builtin { name: Builtin, args: Vec<AttrExpr> },
    Var { name: String },
}

impl AttrExpr {
    pub fn lit(value: Value) -> Self {
        AttrExpr::Literal { value }
    }

    pub fn attr(var: impl Into<String>, path: impl Into<String>) -> Self {
        AttrExpr::Attr { var: var.into(), path: path.into() }
    }

    pub fn var(name: impl Into<String>) -> Self {
        AttrExpr::Var { name: name.into() }
    }

    pub fn call(name: Builtin, args: Vec<AttrExpr>) -> Self {
        AttrExpr::Builtin { name, args }
    }

    pub fn free_vars_into(&self, out: &mut BTreeSet<String>) {
        match self {
            AttrExpr::Literal { .. } => {}
            AttrExpr::Attr { var, .. } => {
                out.insert(var.clone());
            }
            AttrExpr::Var { name } => {
                out.insert(name.clone());
            }
            AttrExpr::Builtin { args, .. } => args.iter().for_each(|a| a.free_vars_into(out)),
        }
    }

    fn rename(&mut self, from: &str, to: &str) {
        match self {
            AttrExpr::Literal { .. } => {}
            AttrExpr::Attr { var, .. } | AttrExpr::Var { name: var } => {
                if var == from {
                    *var = to.to_owned();
                }
            }
            AttrExpr::Builtin { args, .. } => args.iter_mut().for_each(|a| a.rename(from, to)),
        }
    }
}

impl fmt::Display for AttrExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrExpr::Literal { value } => write!(f, "{value}"),
            AttrExpr::Attr { var, path } => write!(f, "{var}.{path}"),
            AttrExpr::Var { name } => f.write_str(name),
            AttrExpr::Builtin { name, args } => {
                write!(f, "{}(", name.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// A finite quantifier domain.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    /// All entities of a kind in the store, id-lexicographic.
    Entities(String),
    /// Members of an enumeration, declaration order.
    Enum(String),
}

impl Domain {
    pub fn name(&self) -> &str {
        match self {
            Domain::Entities(n) | Domain::Enum(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "prop", rename_all = "lowercase")]
pub enum Proposition {
    Cmp { lhs: AttrExpr, op: CmpOp, rhs: AttrExpr },
    Member { elem: AttrExpr, set: AttrExpr },
    EmptyIntersect { a: AttrExpr, b: AttrExpr },
    And { left: Box<Proposition>, right: Box<Proposition> },
    Or { left: Box<Proposition>, right: Box<Proposition> },
    Not { sub: Box<Proposition> },
    Exists { var: String, domain: Domain, body: Box<Proposition> },
    Forall { var: String, domain: Domain, body: Box<Proposition> },
}

impl Proposition {
    pub fn cmp(lhs: AttrExpr, op: CmpOp, rhs: AttrExpr) -> Self {
        Proposition::Cmp { lhs, op, rhs }
    }

    pub fn and(left: Proposition, right: Proposition) -> Self {
        Proposition::And { left: Box::new(left), right: Box::new(right) }
    }

    pub fn or(left: Proposition, right: Proposition) -> Self {
        Proposition::Or { left: Box::new(left), right: Box::new(right) }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(sub: Proposition) -> Self {
        Proposition::Not { sub: Box::new(sub) }
    }

    pub fn exists(var: impl Into<String>, domain: Domain, body: Proposition) -> Self {
        Proposition::Exists { var: var.into(), domain, body: Box::new(body) }
    }

    pub fn forall(var: impl Into<String>, domain: Domain, body: Proposition) -> Self {
        Proposition::Forall { var: var.into(), domain, body: Box::new(body) }
    }

    /// Variables occurring free in the proposition.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.free_vars_into(&mut out);
        out
    }

    fn free_vars_into(&self, out: &mut BTreeSet<String>) {
        match self {
            Proposition::Cmp { lhs, rhs, .. } => {
                lhs.free_vars_into(out);
                rhs.free_vars_into(out);
            }
            Proposition::Member { elem: a, set: b } | Proposition::EmptyIntersect { a, b } => {
                a.free_vars_into(out);
                b.free_vars_into(out);
            }
            Proposition::And { left, right } | Proposition::Or { left, right } => {
                left.free_vars_into(out);
                right.free_vars_into(out);
            }
            Proposition::Not { sub } => sub.free_vars_into(out),
            Proposition::Exists { var, body, .. } | Proposition::Forall { var, body, .. } => {
                let mut inner = body.free_vars();
                inner.remove(var);
                out.extend(inner);
            }
        }
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        match self {
            Proposition::Cmp { .. } | Proposition::Member { .. } | Proposition::EmptyIntersect { .. } => 1,
            Proposition::And { left, right } | Proposition::Or { left, right } => 1 + left.size() + right.size(),
            Proposition::Not { sub } => 1 + sub.size(),
            Proposition::Exists { body, .. } | Proposition::Forall { body, .. } => 1 + body.size(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Proposition::Cmp { .. } | Proposition::Member { .. } | Proposition::EmptyIntersect { .. } => 1,
            Proposition::And { left, right } | Proposition::Or { left, right } => 1 + left.depth().max(right.depth()),
            Proposition::Not { sub } => 1 + sub.depth(),
            Proposition::Exists { body, .. } | Proposition::Forall { body, .. } => 1 + body.depth(),
        }
    }

    /// Maximum nesting of quantifiers.
    pub fn quantifier_depth(&self) -> usize {
        match self {
            Proposition::Cmp { .. } | Proposition::Member { .. } | Proposition::EmptyIntersect { .. } => 0,
            Proposition::And { left, right } | Proposition::Or { left, right } => {
                left.quantifier_depth().max(right.quantifier_depth())
            }
            Proposition::Not { sub } => sub.quantifier_depth(),
            Proposition::Exists { body, .. } | Proposition::Forall { body, .. } => 1 + body.quantifier_depth(),
        }
    }

    /// Variables bound by quantifiers anywhere inside.
    pub fn bound_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |p| {
            if let Proposition::Exists { var, .. } | Proposition::Forall { var, .. } = p {
                out.insert(var.clone());
            }
        });
        out
    }

    pub fn visit(&self, f: &mut impl FnMut(&Proposition)) {
        f(self);
        match self {
            Proposition::And { left, right } | Proposition::Or { left, right } => {
                left.visit(f);
                right.visit(f);
            }
            Proposition::Not { sub } => sub.visit(f),
            Proposition::Exists { body, .. } | Proposition::Forall { body, .. } => body.visit(f),
            _ => {}
        }
    }

    /// Renames free occurrences of `from` to `to`. The caller guarantees `to`
    /// is not captured by a quantifier inside.
    pub fn rename_free(&mut self, from: &str, to: &str) {
        match self {
            Proposition::Cmp { lhs, rhs, .. } => {
                lhs.rename(from, to);
                rhs.rename(from, to);
            }
            Proposition::Member { elem: a, set: b } | Proposition::EmptyIntersect { a, b } => {
                a.rename(from, to);
                b.rename(from, to);
            }
            Proposition::And { left, right } | Proposition::Or { left, right } => {
                left.rename_free(from, to);
                right.rename_free(from, to);
            }
            Proposition::Not { sub } => sub.rename_free(from, to),
            Proposition::Exists { var, body, .. } | Proposition::Forall { var, body, .. } => {
                if var != from {
                    body.rename_free(from, to);
                }
            }
        }
    }

    /// Renames the quantifier-bound variable at this node.
    pub fn rename_binder(&mut self, to: &str) {
        if let Proposition::Exists { var, body, .. } | Proposition::Forall { var, body, .. } = self {
            let from = std::mem::replace(var, to.to_owned());
            body.rename_free(&from, to);
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, prec: u8) -> fmt::Result {
        // 0: top, 1: or operand, 2: and operand, 3: not operand
        let own = match self {
            Proposition::Or { .. } => 1,
            Proposition::And { .. } => 2,
            Proposition::Not { .. } => 3,
            Proposition::Exists { .. } | Proposition::Forall { .. } => 0,
            _ => 4,
        };
        let paren = own < prec || (own == 0 && prec > 0);
        if paren {
            f.write_str("(")?;
        }
        match self {
            Proposition::Cmp { lhs, op, rhs } => write!(f, "{lhs} {} {rhs}", op.symbol())?,
            Proposition::Member { elem, set } => write!(f, "{elem} in {set}")?,
            Proposition::EmptyIntersect { a, b } => write!(f, "{a} disjoint {b}")?,
            Proposition::And { left, right } => {
                left.fmt_prec(f, 2)?;
                f.write_str(" and ")?;
                right.fmt_prec(f, 3)?;
            }
            Proposition::Or { left, right } => {
                left.fmt_prec(f, 1)?;
                f.write_str(" or ")?;
                right.fmt_prec(f, 2)?;
            }
            Proposition::Not { sub } => {
                f.write_str("not ")?;
                sub.fmt_prec(f, 3)?;
            }
            Proposition::Exists { var, domain, body } => {
                write!(f, "exists {var}: {} . ", domain.name())?;
                body.fmt_prec(f, 0)?;
            }
            Proposition::Forall { var, domain, body } => {
                write!(f, "forall {var}: {} . ", domain.name())?;
                body.fmt_prec(f, 0)?;
            }
        }
        if paren {
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Proposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    /// Entity kind of the argument.
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypedRule {
    pub name: String,
    pub body: Proposition,
}

/// A type-checked policy: holds iff some rule body holds.
///
/// Carries the enumerations its quantifiers range over so that a verifier
/// holding only the policy can check enumeration-domain proofs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypedPolicy {
    pub name: String,
    pub params: Vec<Param>,
    pub rules: Vec<TypedRule>,
    pub enums: BTreeMap<String, EnumDecl>,
}

impl TypedPolicy {
    pub fn rule(&self, name: &str) -> Option<&TypedRule> {
        self.rules.iter().find(|r| r.name == name)
    }

    /// The whole policy as one proposition: rule bodies joined by a
    /// right-nested `or` in declaration order.
    pub fn as_proposition(&self) -> Option<Proposition> {
        let mut bodies = self.rules.iter().rev().map(|r| r.body.clone());
        let last = bodies.next()?;
        Some(bodies.fold(last, |acc, body| Proposition::or(body, acc)))
    }
}
