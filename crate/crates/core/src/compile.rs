//! Turns parsed bundles into an entity store and type-checked policies.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::dsl::{self, ast::Bundle, ParseError, SourceFile};
use crate::model::{Declarations, EntitySchema, EntityStore, EnumDecl, Entity, ModelError};
use crate::policy::TypedPolicy;
use crate::typecheck::{Scope, TypeError, TypeErrorKind};
use crate::value::{EntityId, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CompileError {
    Io { path: String, message: String },
    Parse { path: String, error: ParseError },
    Model(ModelError),
    /// A problem in a declaration outside policy bodies.
    Item { item: String, kind: TypeErrorKind },
    Type(TypeError),
}

impl fmt::Display for CompileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompileError::Io { path, message } => write!(f, "{path}: {message}"),
            CompileError::Parse { path, error } => write!(f, "{path}:{error}"),
            CompileError::Model(e) => write!(f, "{e}"),
            CompileError::Item { item, kind } => write!(f, "{item}: {kind}"),
            CompileError::Type(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CompileError {}

/// A checked bundle: the entity store plus every policy, typed and inlined.
#[derive(Debug, Clone)]
pub struct CompiledBundle {
    pub store: EntityStore,
    pub consts: BTreeMap<String, Value>,
    /// Entity handle to id.
    pub handles: BTreeMap<String, EntityId>,
    pub policies: BTreeMap<String, TypedPolicy>,
}

impl CompiledBundle {
    pub fn policy(&self, name: &str) -> Option<&TypedPolicy> {
        self.policies.get(name)
    }

    /// Resolves an entity by handle or by id.
    pub fn resolve_entity(&self, name: &str) -> Option<EntityId> {
        if let Some(id) = self.handles.get(name) {
            return Some(id.clone());
        }
        let id = EntityId::new(name);
        self.store.entity(&id).map(|_| id)
    }
}

/// Parses and compiles source files as one bundle.
pub fn compile_sources(sources: &[SourceFile]) -> Result<CompiledBundle, Vec<CompileError>> {
    let mut bundle = Bundle::default();
    let mut errors = Vec::new();
    for src in sources {
        match dsl::parse(src) {
            Ok(b) => bundle.extend(b),
            Err(errs) => {
                errors.extend(errs.into_iter().map(|error| CompileError::Parse { path: src.path.clone(), error }))
            }
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    compile(&bundle)
}

/// Loads `.pol` files; a directory contributes its `.pol` files in name order.
pub fn load_sources(paths: &[impl AsRef<Path>]) -> Result<Vec<SourceFile>, Vec<CompileError>> {
    let mut files = Vec::new();
    let mut errors = Vec::new();
    let io_err = |p: &Path, e: std::io::Error| CompileError::Io { path: p.display().to_string(), message: e.to_string() };
    for path in paths {
        let path = path.as_ref();
        if path.is_dir() {
            match std::fs::read_dir(path) {
                Ok(entries) => {
                    let mut pols: Vec<_> = entries
                        .filter_map(|e| e.ok().map(|e| e.path()))
                        .filter(|p| p.extension().is_some_and(|x| x == "pol"))
                        .collect();
                    pols.sort();
                    files.extend(pols);
                }
                Err(e) => errors.push(io_err(path, e)),
            }
        } else {
            files.push(path.to_path_buf());
        }
    }
    let mut sources = Vec::new();
    for f in files {
        match SourceFile::read(&f) {
            Ok(s) => sources.push(s),
            Err(e) => errors.push(io_err(&f, e)),
        }
    }
    if errors.is_empty() {
        Ok(sources)
    } else {
        Err(errors)
    }
}

pub fn compile_paths(paths: &[impl AsRef<Path>]) -> Result<CompiledBundle, Vec<CompileError>> {
    compile_sources(&load_sources(paths)?)
}

pub fn compile(bundle: &Bundle) -> Result<CompiledBundle, Vec<CompileError>> {
    let mut errors = Vec::new();
    let item = |item: String, kind| CompileError::Item { item, kind };

    let mut enums = Vec::new();
    for e in &bundle.enums {
        match EnumDecl::new(e.name.clone(), e.members.clone()) {
            Ok(d) => enums.push(d),
            Err(err) => errors.push(CompileError::Model(err)),
        }
    }
    // schema attribute types may name kinds declared later, so register names first
    let mut scope = Scope::new(Declarations::new(enums.clone(), []).unwrap_or_default());
    let placeholder: Vec<EntitySchema> =
        bundle.schemas.iter().map(|s| EntitySchema::new(s.kind.clone(), [])).collect();
    for s in &placeholder {
        scope.decls.schemas.entry(s.kind.clone()).or_insert_with(|| s.clone());
    }
    let mut schemas = Vec::new();
    for s in &bundle.schemas {
        let mut attrs = BTreeMap::new();
        for (name, ty) in &s.fields {
            match scope.resolve_type(ty) {
                Ok(tag) => {
                    if attrs.insert(name.clone(), tag).is_some() {
                        errors.push(item(format!("schema {}", s.kind), TypeErrorKind::Duplicate(name.clone())));
                    }
                }
                Err(kind) => errors.push(item(format!("schema {}.{name}", s.kind), kind)),
            }
        }
        schemas.push(EntitySchema { kind: s.kind.clone(), attributes: attrs });
    }
    let decls = match Declarations::new(enums, schemas) {
        Ok(d) => d,
        Err(e) => {
            errors.push(CompileError::Model(e));
            return Err(errors);
        }
    };
    scope.decls = decls;

    let mut handles = BTreeMap::new();
    for e in &bundle.entities {
        let value = Value::entity(e.kind.clone(), e.resolved_id());
        if scope.handles.insert(e.handle.clone(), value).is_some() {
            errors.push(item(format!("entity {}", e.handle), TypeErrorKind::Duplicate(e.handle.clone())));
        }
        handles.insert(e.handle.clone(), EntityId::new(e.resolved_id()));
    }

    for c in &bundle.consts {
        let what = format!("let {}", c.name);
        if scope.consts.contains_key(&c.name) || scope.handles.contains_key(&c.name) {
            errors.push(item(what, TypeErrorKind::Duplicate(c.name.clone())));
            continue;
        }
        match scope.resolve_type(&c.ty).and_then(|tag| scope.literal(&c.value, Some(&tag))) {
            Ok(v) => {
                scope.consts.insert(c.name.clone(), v);
            }
            Err(kind) => errors.push(item(what, kind)),
        }
    }

    let mut entities = Vec::new();
    for e in &bundle.entities {
        let mut entity = Entity::new(e.resolved_id(), e.kind.clone());
        let Some(schema) = scope.decls.schema(&e.kind) else {
            errors.push(item(format!("entity {}", e.handle), TypeErrorKind::UnknownKind(e.kind.clone())));
            continue;
        };
        for (attr, lit) in &e.attrs {
            let what = format!("entity {}.{attr}", e.handle);
            let Some(tag) = schema.attribute(attr) else {
                errors.push(item(
                    what,
                    TypeErrorKind::UnknownAttribute { kind: e.kind.clone(), attr: attr.clone() },
                ));
                continue;
            };
            if entity.attributes.contains_key(attr) {
                errors.push(item(what, TypeErrorKind::Duplicate(attr.clone())));
                continue;
            }
            match scope.literal(lit, Some(tag)) {
                Ok(v) => {
                    entity.attributes.insert(attr.clone(), v);
                }
                Err(kind) => errors.push(item(what, kind)),
            }
        }
        entities.push(entity);
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    let store = match EntityStore::build(scope.decls.clone(), entities) {
        Ok(s) => s,
        Err(errs) => return Err(errs.into_iter().map(CompileError::Model).collect()),
    };

    let mut seen = BTreeMap::new();
    for p in &bundle.policies {
        if seen.insert(p.name.clone(), ()).is_some() {
            errors.push(item(format!("policy {}", p.name), TypeErrorKind::Duplicate(p.name.clone())));
        }
    }
    let scope = scope.with_policies(bundle.policies.iter().cloned());
    let mut policies = BTreeMap::new();
    for p in &bundle.policies {
        match scope.typecheck(p) {
            Ok(t) => {
                policies.insert(p.name.clone(), t);
            }
            Err(errs) => errors.extend(errs.into_iter().map(CompileError::Type)),
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    Ok(CompiledBundle { store, consts: scope.consts, handles, policies })
}
