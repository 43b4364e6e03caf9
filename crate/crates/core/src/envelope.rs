//! Proof envelopes: a proof plus the signed claims its leaves cite.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canonical::to_canonical_bytes;
use crate::claims::{Claim, ClaimBag};
use crate::clock::timestamp;
use crate::eval::PolicyDecision;
use crate::proof::{Dec, Proof};
use crate::value::EntityId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvelopeError {
    #[error("claim reference {0} does not resolve to a claim in the envelope")]
    DanglingClaimRef(String),
    #[error("claim {0} appears more than once")]
    DuplicateClaim(String),
    #[error("only affirmative decisions can be enveloped")]
    NotAProof,
    #[error("malformed envelope: {0}")]
    Malformed(String),
}

/// Wire form: canonical JSON with exactly the fields
/// `policy, rule, args, proof, claims, producedAt, producer`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, try_from = "RawEnvelope")]
pub struct ProofEnvelope {
    pub policy: String,
    pub rule: String,
    pub args: Vec<EntityId>,
    pub proof: Proof,
    pub claims: Vec<Claim>,
    #[serde(with = "timestamp")]
    pub produced_at: DateTime<Utc>,
    pub producer: String,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct RawEnvelope {
    policy: String,
    rule: String,
    args: Vec<EntityId>,
    proof: Proof,
    claims: Vec<Claim>,
    #[serde(with = "timestamp")]
    produced_at: DateTime<Utc>,
    producer: String,
}

impl TryFrom<RawEnvelope> for ProofEnvelope {
    type Error = EnvelopeError;

    fn try_from(r: RawEnvelope) -> Result<Self, EnvelopeError> {
        ProofEnvelope::new(r.policy, r.rule, r.args, r.proof, r.claims, r.produced_at, r.producer)
    }
}

impl ProofEnvelope {
    /// Checks that every claim reference in the proof resolves to exactly one
    /// claim.
    pub fn new(
        policy: String,
        rule: String,
        args: Vec<EntityId>,
        proof: Proof,
        claims: Vec<Claim>,
        produced_at: DateTime<Utc>,
        producer: String,
    ) -> Result<Self, EnvelopeError> {
        let env = Self { policy, rule, args, proof, claims, produced_at, producer };
        env.check_refs()?;
        Ok(env)
    }

    pub fn check_refs(&self) -> Result<(), EnvelopeError> {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for c in &self.claims {
            *counts.entry(c.content_hash()).or_default() += 1;
        }
        if let Some((h, _)) = counts.iter().find(|(_, &n)| n > 1) {
            return Err(EnvelopeError::DuplicateClaim(h.clone()));
        }
        for r in self.proof.claim_refs() {
            if !counts.contains_key(&r) {
                return Err(EnvelopeError::DanglingClaimRef(r));
            }
        }
        Ok(())
    }

    /// Packs an affirmative decision with the claims its proof cites.
    pub fn from_decision(
        decision: &PolicyDecision,
        args: Vec<EntityId>,
        claims: &ClaimBag,
        produced_at: DateTime<Utc>,
        producer: impl Into<String>,
    ) -> Result<Self, EnvelopeError> {
        let (Dec::Yes(proof), Some(rule)) = (&decision.dec, &decision.rule) else {
            return Err(EnvelopeError::NotAProof);
        };
        let mut cited = Vec::new();
        for r in proof.claim_refs() {
            let c = claims.by_ref(&r).ok_or_else(|| EnvelopeError::DanglingClaimRef(r.clone()))?;
            cited.push(c.clone());
        }
        Self::new(decision.policy.clone(), rule.clone(), args, proof.clone(), cited, produced_at, producer.into())
    }

    /// Canonical bytes; equal envelopes give equal bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        to_canonical_bytes(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EnvelopeError> {
        serde_json::from_slice(bytes).map_err(|e| EnvelopeError::Malformed(e.to_string()))
    }
}
