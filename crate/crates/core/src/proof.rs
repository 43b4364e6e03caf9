//! Proof and refutation trees.
//!
//! Each node mirrors one proposition constructor. Leaves carry evidence for
//! the attribute expressions they compare: either the literal value used or a
//! reference to the signed claim that supplied it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::canonical::to_canonical_bytes;
use crate::policy::{Builtin, CmpOp};
use crate::value::{EntityId, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "ev", rename_all = "lowercase", deny_unknown_fields)]
pub enum Evidence {
    /// A value taken from the policy text, a variable binding or the local store.
    Literal { value: Value, expr: String },
    /// A value vouched for by the claim with this content hash.
    Claim {
        #[serde(rename = "claimRef")]
        claim_ref: String,
        value: Value,
    },
    /// A builtin applied to evidenced arguments.
    Builtin {
        name: Builtin,
        args: Vec<Evidence>,
        /// For `exposedPorts`: the network and public-flag evidence of each input port.
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        lookups: Vec<PortLookup>,
        value: Value,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortLookup {
    pub port: EntityId,
    pub network: Evidence,
    pub public: Evidence,
}

impl Evidence {
    pub fn value(&self) -> &Value {
        match self {
            Evidence::Literal { value, .. } | Evidence::Claim { value, .. } | Evidence::Builtin { value, .. } => value,
        }
    }

    fn claim_refs_into(&self, out: &mut BTreeSet<String>) {
        match self {
            Evidence::Literal { .. } => {}
            Evidence::Claim { claim_ref, .. } => {
                out.insert(claim_ref.clone());
            }
            Evidence::Builtin { args, lookups, .. } => {
                args.iter().for_each(|a| a.claim_refs_into(out));
                for l in lookups {
                    l.network.claim_refs_into(out);
                    l.public.claim_refs_into(out);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Inj1,
    Inj2,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case<T> {
    pub element: Value,
    pub sub: T,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "node", deny_unknown_fields)]
pub enum Proof {
    #[serde(rename = "cmp")]
    Cmp { op: CmpOp, lhs: Evidence, rhs: Evidence },
    /// `set[index] == elem`.
    #[serde(rename = "member")]
    Member { index: usize, elem: Evidence, set: Evidence },
    #[serde(rename = "emptyintersect")]
    EmptyIntersect { a: Evidence, b: Evidence },
    #[serde(rename = "and")]
    And { left: Box<Proof>, right: Box<Proof> },
    #[serde(rename = "or")]
    Or { side: Side, sub: Box<Proof> },
    #[serde(rename = "not")]
    Not { sub: Box<Refutation> },
    #[serde(rename = "exists")]
    Exists { witness: Value, sub: Box<Proof> },
    /// One case per domain element, in domain order.
    #[serde(rename = "forall")]
    Forall { cases: Vec<Case<Proof>> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "node", deny_unknown_fields)]
pub enum Refutation {
    #[serde(rename = "refut-cmp")]
    Cmp { op: CmpOp, lhs: Evidence, rhs: Evidence },
    /// The element differs from every member of the evidenced set.
    #[serde(rename = "refut-member")]
    Member { elem: Evidence, set: Evidence },
    /// `a[indexInA] == witness == b[indexInB]`.
    #[serde(rename = "refut-emptyintersect")]
    NonEmptyIntersect {
        witness: Value,
        #[serde(rename = "indexInA")]
        index_in_a: usize,
        #[serde(rename = "indexInB")]
        index_in_b: usize,
        a: Evidence,
        b: Evidence,
    },
    #[serde(rename = "refut-and")]
    And { side: Side, sub: Box<Refutation> },
    #[serde(rename = "refut-or")]
    Or { left: Box<Refutation>, right: Box<Refutation> },
    #[serde(rename = "refut-not")]
    Not { sub: Box<Proof> },
    #[serde(rename = "refut-exists")]
    Exists { cases: Vec<Case<Refutation>> },
    #[serde(rename = "refut-forall")]
    Forall { witness: Value, sub: Box<Refutation> },
}

/// A decision: exactly one of a proof or a refutation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dec {
    Yes(Proof),
    No(Refutation),
}

impl Dec {
    pub fn is_yes(&self) -> bool {
        matches!(self, Dec::Yes(_))
    }

    pub fn proof(&self) -> Option<&Proof> {
        match self {
            Dec::Yes(p) => Some(p),
            Dec::No(_) => None,
        }
    }

    pub fn refutation(&self) -> Option<&Refutation> {
        match self {
            Dec::No(r) => Some(r),
            Dec::Yes(_) => None,
        }
    }

    /// Hex SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(to_canonical_bytes(self)))
    }

    pub fn claim_refs(&self) -> BTreeSet<String> {
        match self {
            Dec::Yes(p) => p.claim_refs(),
            Dec::No(r) => r.claim_refs(),
        }
    }
}

impl Proof {
    /// Every claim reference cited anywhere in the tree.
    pub fn claim_refs(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.claim_refs_into(&mut out);
        out
    }

    fn claim_refs_into(&self, out: &mut BTreeSet<String>) {
        match self {
            Proof::Cmp { lhs: a, rhs: b, .. } | Proof::Member { elem: a, set: b, .. } | Proof::EmptyIntersect { a, b } => {
                a.claim_refs_into(out);
                b.claim_refs_into(out);
            }
            Proof::And { left, right } => {
                left.claim_refs_into(out);
                right.claim_refs_into(out);
            }
            Proof::Or { sub, .. } | Proof::Exists { sub, .. } => sub.claim_refs_into(out),
            Proof::Not { sub } => sub.claim_refs_into(out),
            Proof::Forall { cases } => cases.iter().for_each(|c| c.sub.claim_refs_into(out)),
        }
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(to_canonical_bytes(self)))
    }
}

impl Refutation {
    pub fn claim_refs(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.claim_refs_into(&mut out);
        out
    }

    fn claim_refs_into(&self, out: &mut BTreeSet<String>) {
        match self {
            Refutation::Cmp { lhs: a, rhs: b, .. }
            | Refutation::Member { elem: a, set: b }
            | Refutation::NonEmptyIntersect { a, b, .. } => {
                a.claim_refs_into(out);
                b.claim_refs_into(out);
            }
            Refutation::And { sub, .. } | Refutation::Forall { sub, .. } => sub.claim_refs_into(out),
            Refutation::Or { left, right } => {
                left.claim_refs_into(out);
                right.claim_refs_into(out);
            }
            Refutation::Not { sub } => sub.claim_refs_into(out),
            Refutation::Exists { cases } => cases.iter().for_each(|c| c.sub.claim_refs_into(out)),
        }
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(to_canonical_bytes(self)))
    }
}
