//! Guard specifications: which policies a call must satisfy, in order.

use std::collections::{BTreeMap, BTreeSet};

use polity_core::{CompiledBundle, TypedPolicy};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Role name bound to the item the upstream returns.
pub const RESPONSE_ROLE: &str = "response";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Slot {
    pub name: String,
    pub policy: String,
    /// Request roles bound to the policy parameters, positionally.
    pub args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseCheck {
    pub policy: String,
    /// Roles for the policy parameters; exactly one is [`RESPONSE_ROLE`].
    pub args: Vec<String>,
}

/// File form of a guard, as written in `guard.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuardFile {
    pub slots: Vec<Slot>,
    /// The role whose entity is forwarded upstream.
    pub request: String,
    pub response: ResponseCheck,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GuardError {
    #[error("cannot parse guard: {0}")]
    Parse(String),
    #[error("guard has no slots")]
    NoSlots,
    #[error("duplicate slot `{0}`")]
    DuplicateSlot(String),
    #[error("unknown policy `{0}`")]
    UnknownPolicy(String),
    #[error("policy `{policy}` takes {expected} arguments, slot binds {found}")]
    Arity { policy: String, expected: usize, found: usize },
    #[error("role `{role}` is bound as both `{first}` and `{second}`")]
    RoleKind { role: String, first: String, second: String },
    #[error("role `{0}` is reserved for the upstream response")]
    ReservedRole(String),
    #[error("response policy must bind `{RESPONSE_ROLE}` exactly once")]
    ResponseBinding,
    #[error("role `{0}` is not bound by any slot")]
    UnboundRole(String),
}

/// A guard checked against a bundle: every policy exists, arities match and
/// each role has one entity kind across all slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuardSpec {
    file: GuardFile,
    roles: BTreeMap<String, String>,
    response_kind: String,
}

impl GuardSpec {
    pub fn from_json(text: &str, bundle: &CompiledBundle) -> Result<Self, GuardError> {
        let file: GuardFile = serde_json::from_str(text).map_err(|e| GuardError::Parse(e.to_string()))?;
        Self::new(file, bundle)
    }

    pub fn new(file: GuardFile, bundle: &CompiledBundle) -> Result<Self, GuardError> {
        if file.slots.is_empty() {
            return Err(GuardError::NoSlots);
        }
        let mut names = BTreeSet::new();
        let mut roles: BTreeMap<String, String> = BTreeMap::new();
        for slot in &file.slots {
            if !names.insert(slot.name.as_str()) {
                return Err(GuardError::DuplicateSlot(slot.name.clone()));
            }
            let pol = policy(bundle, &slot.policy, slot.args.len())?;
            for (role, param) in slot.args.iter().zip(&pol.params) {
                if role == RESPONSE_ROLE {
                    return Err(GuardError::ReservedRole(role.clone()));
                }
                bind_role(&mut roles, role, &param.kind)?;
            }
        }
        let pol = policy(bundle, &file.response.policy, file.response.args.len())?;
        if file.response.args.iter().filter(|r| *r == RESPONSE_ROLE).count() != 1 {
            return Err(GuardError::ResponseBinding);
        }
        let mut response_kind = String::new();
        for (role, param) in file.response.args.iter().zip(&pol.params) {
            if role == RESPONSE_ROLE {
                response_kind = param.kind.clone();
            } else if !roles.contains_key(role) {
                return Err(GuardError::UnboundRole(role.clone()));
            } else {
                bind_role(&mut roles, role, &param.kind)?;
            }
        }
        if !roles.contains_key(&file.request) {
            return Err(GuardError::UnboundRole(file.request.clone()));
        }
        Ok(Self { file, roles, response_kind })
    }

    pub fn slots(&self) -> &[Slot] {
        &self.file.slots
    }

    pub fn slot(&self, name: &str) -> Option<&Slot> {
        self.file.slots.iter().find(|s| s.name == name)
    }

    pub fn response(&self) -> &ResponseCheck {
        &self.file.response
    }

    pub fn request_role(&self) -> &str {
        &self.file.request
    }

    /// Role name to the entity kind it must have.
    pub fn roles(&self) -> &BTreeMap<String, String> {
        &self.roles
    }

    /// Entity kind of the upstream response.
    pub fn response_kind(&self) -> &str {
        &self.response_kind
    }

    pub fn file(&self) -> &GuardFile {
        &self.file
    }
}

fn policy<'b>(bundle: &'b CompiledBundle, name: &str, found: usize) -> Result<&'b TypedPolicy, GuardError> {
    let pol = bundle.policy(name).ok_or_else(|| GuardError::UnknownPolicy(name.to_owned()))?;
    if pol.params.len() != found {
        return Err(GuardError::Arity { policy: name.to_owned(), expected: pol.params.len(), found });
    }
    Ok(pol)
}

fn bind_role(roles: &mut BTreeMap<String, String>, role: &str, kind: &str) -> Result<(), GuardError> {
    match roles.get(role) {
        Some(k) if k != kind => {
            Err(GuardError::RoleKind { role: role.to_owned(), first: k.clone(), second: kind.to_owned() })
        }
        Some(_) => Ok(()),
        None => {
            roles.insert(role.to_owned(), kind.to_owned());
            Ok(())
        }
    }
}
