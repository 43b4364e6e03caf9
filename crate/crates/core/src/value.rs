//! The attribute universe every proposition compares over.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Globally unique entity identifier (a URI).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(String);

impl EntityId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<String> for EntityId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

impl From<&str> for EntityId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// Type tag of an [`Value`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tag {
    Nat,
    Str,
    Bool,
    /// Atom of the named enumeration.
    Enum(String),
    /// Reference to an entity of the named kind.
    Ref(String),
    List(Box<Tag>),
}

impl Tag {
    pub fn list_of(elem: Tag) -> Self {
        Tag::List(Box::new(elem))
    }

    pub fn element(&self) -> Option<&Tag> {
        match self {
            Tag::List(elem) => Some(elem),
            _ => None,
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Nat => f.write_str("Nat"),
            Tag::Str => f.write_str("Str"),
            Tag::Bool => f.write_str("Bool"),
            Tag::Enum(name) | Tag::Ref(name) => f.write_str(name),
            Tag::List(elem) => write!(f, "[{elem}]"),
        }
    }
}

/// A tagged attribute value.
///
/// Serialized as `{"tag": .., "payload": ..}`; structured payloads carry their
/// enumeration, kind or element tag alongside the data.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "tag", content = "payload", rename_all = "lowercase")]
pub enum Value {
    Nat(u64),
    Str(String),
    Bool(bool),
    Enum { name: String, atom: String },
    Ref { kind: String, id: EntityId },
    List { elem: Tag, items: Vec<Value> },
}

impl Value {
    pub fn atom(name: impl Into<String>, atom: impl Into<String>) -> Self {
        Value::Enum { name: name.into(), atom: atom.into() }
    }

    pub fn entity(kind: impl Into<String>, id: impl Into<EntityId>) -> Self {
        Value::Ref { kind: kind.into(), id: id.into() }
    }

    pub fn str(s: impl Into<String>) -> Self {
        Value::Str(s.into())
    }

    pub fn list(elem: Tag, items: Vec<Value>) -> Self {
        Value::List { elem, items }
    }

    pub fn tag(&self) -> Tag {
        match self {
            Value::Nat(_) => Tag::Nat,
            Value::Str(_) => Tag::Str,
            Value::Bool(_) => Tag::Bool,
            Value::Enum { name, .. } => Tag::Enum(name.clone()),
            Value::Ref { kind, .. } => Tag::Ref(kind.clone()),
            Value::List { elem, .. } => Tag::list_of(elem.clone()),
        }
    }

    /// Lists are homogeneous in their element tag, recursively.
    pub fn is_homogeneous(&self) -> bool {
        match self {
            Value::List { elem, items } => {
                items.iter().all(|item| &item.tag() == elem && item.is_homogeneous())
            }
            _ => true,
        }
    }

    pub fn as_nat(&self) -> Option<u64> {
        match self {
            Value::Nat(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Value]> {
        match self {
            Value::List { items, .. } => Some(items),
            _ => None,
        }
    }

    pub fn as_entity(&self) -> Option<&EntityId> {
        match self {
            Value::Ref { id, .. } => Some(id),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Nat(n) => write!(f, "{n}"),
            Value::Str(s) => write!(f, "{s:?}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Enum { name, atom } => write!(f, "{name}::{atom}"),
            Value::Ref { id, .. } => write!(f, "<{id}>"),
            Value::List { items, .. } => {
                f.write_str("[")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str("]")
            }
        }
    }
}
