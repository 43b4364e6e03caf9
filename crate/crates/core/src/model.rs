//! Enumerations, entity schemas, entities and the immutable entity store.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::value::{EntityId, Tag, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("enumeration `{0}` has no members")]
    EmptyEnum(String),
    #[error("enumeration `{name}` declares `{atom}` twice")]
    DuplicateAtom { name: String, atom: String },
    #[error("duplicate declaration of `{0}`")]
    DuplicateDeclaration(String),
    #[error("unknown entity kind `{0}`")]
    UnknownKind(String),
    #[error("unknown enumeration `{0}`")]
    UnknownEnum(String),
    #[error("entity `{id}` of kind `{kind}` has no attribute `{attr}` in its schema")]
    UnknownAttribute { id: EntityId, kind: String, attr: String },
    #[error("entity `{id}` attribute `{attr}`: expected {expected}, found {found}")]
    AttributeTag { id: EntityId, attr: String, expected: Tag, found: Tag },
    #[error("entity `{id}` attribute `{attr}`: `{atom}` is not a member of `{name}`")]
    UndeclaredAtom { id: EntityId, attr: String, name: String, atom: String },
    #[error("entity `{id}` attribute `{attr}` refers to missing entity `{target}`")]
    DanglingRef { id: EntityId, attr: String, target: EntityId },
    #[error("entity `{id}` attribute `{attr}` refers to `{target}` as {expected} but it is {found}")]
    RefKind { id: EntityId, attr: String, target: EntityId, expected: String, found: String },
    #[error("duplicate entity id `{0}`")]
    DuplicateEntity(EntityId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumDecl {
    pub name: String,
    /// Declaration order matters: it is the enumeration order of quantifiers.
    pub members: Vec<String>,
}

impl EnumDecl {
    pub fn new(name: impl Into<String>, members: Vec<String>) -> Result<Self, ModelError> {
        let name = name.into();
        if members.is_empty() {
            return Err(ModelError::EmptyEnum(name));
        }
        let mut seen = BTreeSet::new();
        for m in &members {
            if !seen.insert(m) {
                return Err(ModelError::DuplicateAtom { name, atom: m.clone() });
            }
        }
        Ok(Self { name, members })
    }

    pub fn contains(&self, atom: &str) -> bool {
        self.members.iter().any(|m| m == atom)
    }

    pub fn atoms(&self) -> impl Iterator<Item = Value> + '_ {
        self.members.iter().map(move |m| Value::atom(self.name.clone(), m.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySchema {
    pub kind: String,
    pub attributes: BTreeMap<String, Tag>,
}

impl EntitySchema {
    pub fn new(kind: impl Into<String>, attributes: impl IntoIterator<Item = (String, Tag)>) -> Self {
        Self { kind: kind.into(), attributes: attributes.into_iter().collect() }
    }

    pub fn attribute(&self, name: &str) -> Option<&Tag> {
        self.attributes.get(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: EntityId,
    pub kind: String,
    pub attributes: BTreeMap<String, Value>,
}

impl Entity {
    pub fn new(id: impl Into<EntityId>, kind: impl Into<String>) -> Self {
        Self { id: id.into(), kind: kind.into(), attributes: BTreeMap::new() }
    }

    pub fn with(mut self, attr: impl Into<String>, value: Value) -> Self {
        self.attributes.insert(attr.into(), value);
        self
    }

    pub fn reference(&self) -> Value {
        Value::Ref { kind: self.kind.clone(), id: self.id.clone() }
    }
}

/// Declarations shared by stores and type checking.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Declarations {
    pub enums: BTreeMap<String, EnumDecl>,
    pub schemas: BTreeMap<String, EntitySchema>,
}

impl Declarations {
    pub fn new(
        enums: impl IntoIterator<Item = EnumDecl>,
        schemas: impl IntoIterator<Item = EntitySchema>,
    ) -> Result<Self, ModelError> {
        let mut decls = Declarations::default();
        for e in enums {
            if decls.enums.contains_key(&e.name) {
                return Err(ModelError::DuplicateDeclaration(e.name));
            }
            decls.enums.insert(e.name.clone(), e);
        }
        for s in schemas {
            if decls.schemas.contains_key(&s.kind) || decls.enums.contains_key(&s.kind) {
                return Err(ModelError::DuplicateDeclaration(s.kind));
            }
            decls.schemas.insert(s.kind.clone(), s);
        }
        Ok(decls)
    }

    pub fn enum_decl(&self, name: &str) -> Option<&EnumDecl> {
        self.enums.get(name)
    }

    pub fn schema(&self, kind: &str) -> Option<&EntitySchema> {
        self.schemas.get(kind)
    }

    /// Checks the value against the tag without following references.
    pub fn conforms(&self, value: &Value, tag: &Tag) -> bool {
        match (value, tag) {
            (Value::Nat(_), Tag::Nat) | (Value::Str(_), Tag::Str) | (Value::Bool(_), Tag::Bool) => true,
            (Value::Enum { name, atom }, Tag::Enum(expected)) => {
                name == expected && self.enums.get(name).is_some_and(|e| e.contains(atom))
            }
            (Value::Ref { kind, .. }, Tag::Ref(expected)) => kind == expected,
            (Value::List { elem, items }, Tag::List(expected)) => {
                elem == expected.as_ref() && items.iter().all(|i| self.conforms(i, expected))
            }
            _ => false,
        }
    }
}

/// An immutable snapshot of entities together with their declarations.
///
/// Updates produce a new store; existing snapshots are never mutated, so a
/// store can be shared across concurrent decisions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityStore {
    decls: Arc<Declarations>,
    entities: Arc<BTreeMap<EntityId, Entity>>,
}

impl EntityStore {
    pub fn empty(decls: Declarations) -> Self {
        Self { decls: Arc::new(decls), entities: Arc::new(BTreeMap::new()) }
    }

    /// Builds a store, checking every entity against its schema and the
    /// referential integrity of every reference.
    pub fn build(decls: Declarations, entities: impl IntoIterator<Item = Entity>) -> Result<Self, Vec<ModelError>> {
        let mut map = BTreeMap::new();
        let mut errors = Vec::new();
        for e in entities {
            if map.contains_key(&e.id) {
                errors.push(ModelError::DuplicateEntity(e.id.clone()));
                continue;
            }
            map.insert(e.id.clone(), e);
        }
        for e in map.values() {
            check_entity(&decls, &map, e, &mut errors);
        }
        if errors.is_empty() {
            Ok(Self { decls: Arc::new(decls), entities: Arc::new(map) })
        } else {
            Err(errors)
        }
    }

    /// Returns a new store version containing `entity` in addition to (or in
    /// place of) the current contents.
    pub fn with_entity(&self, entity: Entity) -> Result<Self, Vec<ModelError>> {
        let mut map = (*self.entities).clone();
        map.insert(entity.id.clone(), entity.clone());
        let mut errors = Vec::new();
        check_entity(&self.decls, &map, &entity, &mut errors);
        if errors.is_empty() {
            Ok(Self { decls: Arc::clone(&self.decls), entities: Arc::new(map) })
        } else {
            Err(errors)
        }
    }

    pub fn decls(&self) -> &Declarations {
        &self.decls
    }

    pub fn entity(&self, id: &EntityId) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    /// Entities of one kind in id-lexicographic order.
    pub fn entities_of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a Entity> + 'a {
        self.entities.values().filter(move |e| e.kind == kind)
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }
}

fn check_entity(
    decls: &Declarations,
    all: &BTreeMap<EntityId, Entity>,
    e: &Entity,
    errors: &mut Vec<ModelError>,
) {
    let Some(schema) = decls.schema(&e.kind) else {
        errors.push(ModelError::UnknownKind(e.kind.clone()));
        return;
    };
    for (attr, value) in &e.attributes {
        let Some(tag) = schema.attribute(attr) else {
            errors.push(ModelError::UnknownAttribute { id: e.id.clone(), kind: e.kind.clone(), attr: attr.clone() });
            continue;
        };
        check_value(decls, all, e, attr, value, tag, errors);
    }
}

fn check_value(
    decls: &Declarations,
    all: &BTreeMap<EntityId, Entity>,
    e: &Entity,
    attr: &str,
    value: &Value,
    tag: &Tag,
    errors: &mut Vec<ModelError>,
) {
    match (value, tag) {
        (Value::Enum { name, atom }, Tag::Enum(expected)) if name == expected => match decls.enum_decl(name) {
            Some(decl) if decl.contains(atom) => {}
            Some(_) => errors.push(ModelError::UndeclaredAtom {
                id: e.id.clone(),
                attr: attr.to_owned(),
                name: name.clone(),
                atom: atom.clone(),
            }),
            None => errors.push(ModelError::UnknownEnum(name.clone())),
        },
        (Value::Ref { kind, id }, Tag::Ref(expected)) if kind == expected => match all.get(id) {
            Some(target) if &target.kind == kind => {}
            Some(target) => errors.push(ModelError::RefKind {
                id: e.id.clone(),
                attr: attr.to_owned(),
                target: id.clone(),
                expected: kind.clone(),
                found: target.kind.clone(),
            }),
            None => errors.push(ModelError::DanglingRef { id: e.id.clone(), attr: attr.to_owned(), target: id.clone() }),
        },
        (Value::List { elem, items }, Tag::List(expected)) if elem == expected.as_ref() => {
            for item in items {
                check_value(decls, all, e, attr, item, expected, errors);
            }
        }
        (Value::Nat(_), Tag::Nat) | (Value::Str(_), Tag::Str) | (Value::Bool(_), Tag::Bool) => {}
        _ => errors.push(ModelError::AttributeTag {
            id: e.id.clone(),
            attr: attr.to_owned(),
            expected: tag.clone(),
            found: value.tag(),
        }),
    }
}
