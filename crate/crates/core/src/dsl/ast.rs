//! Surface syntax tree of `.pol` files, exactly as written.

use crate::policy::CmpOp;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bundle {
    pub enums: Vec<EnumItem>,
    pub schemas: Vec<SchemaItem>,
    pub consts: Vec<ConstItem>,
    pub entities: Vec<EntityItem>,
    pub policies: Vec<PolicyItem>,
}

impl Bundle {
    pub fn is_empty(&self) -> bool {
        self.enums.is_empty()
            && self.schemas.is_empty()
            && self.consts.is_empty()
            && self.entities.is_empty()
            && self.policies.is_empty()
    }

    /// Concatenates another bundle's declarations onto this one.
    pub fn extend(&mut self, other: Bundle) {
        self.enums.extend(other.enums);
        self.schemas.extend(other.schemas);
        self.consts.extend(other.consts);
        self.entities.extend(other.entities);
        self.policies.extend(other.policies);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnumItem {
    pub name: String,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaItem {
    pub kind: String,
    pub fields: Vec<(String, TypeExpr)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeExpr {
    Nat,
    Str,
    Bool,
    /// An enumeration or an entity kind.
    Named(String),
    List(Box<TypeExpr>),
}

/// `let name: type = literal;`
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstItem {
    pub name: String,
    pub ty: TypeExpr,
    pub value: Literal,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityItem {
    pub handle: String,
    pub kind: String,
    /// Explicit URI; defaults to `urn:polity:<handle>`.
    pub id: Option<String>,
    pub attrs: Vec<(String, Literal)>,
}

impl EntityItem {
    pub fn resolved_id(&self) -> String {
        self.id.clone().unwrap_or_else(|| default_entity_id(&self.handle))
    }
}

pub fn default_entity_id(handle: &str) -> String {
    format!("urn:polity:{handle}")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Literal {
    Nat(u64),
    Str(String),
    Bool(bool),
    /// `Enum::atom`
    Atom { enum_name: String, atom: String },
    /// Bare identifier: an enum atom, entity handle or constant, resolved by type.
    Ident(String),
    List(Vec<Literal>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyItem {
    pub name: String,
    pub params: Vec<(String, String)>,
    pub rules: Vec<RuleItem>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleItem {
    pub name: String,
    pub body: Formula,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    /// A literal other than a bare identifier (those parse as [`Expr::Var`]).
    Lit(Literal),
    Var(String),
    Attr { var: String, path: String },
    Call { name: String, args: Vec<Expr> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Formula {
    Cmp { lhs: Expr, op: CmpOp, rhs: Expr },
    In { elem: Expr, set: Expr },
    Disjoint { a: Expr, b: Expr },
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Not(Box<Formula>),
    Exists { var: String, domain: String, body: Box<Formula> },
    Forall { var: String, domain: String, body: Box<Formula> },
    /// Reference to another policy, inlined during type checking.
    Apply { policy: String, args: Vec<Expr> },
}
