//! Signed subject-property-value claims, trust lists and claim servers.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use chrono::{DateTime, Duration, Utc};
use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::canonical::to_canonical_bytes;
use crate::clock::{timestamp, Clock};
use crate::model::EntityStore;
use crate::value::{EntityId, Value};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Claim {
    pub issuer: String,
    pub subject: EntityId,
    pub property: String,
    pub value: Value,
    #[serde(with = "timestamp")]
    pub issued_at: DateTime<Utc>,
    #[serde(with = "timestamp")]
    pub expires_at: DateTime<Utc>,
    /// Base64 Ed25519 signature over [`Claim::signing_bytes`].
    #[serde(with = "strict_sig")]
    pub sig: [u8; 64],
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Unsigned<'a> {
    issuer: &'a str,
    subject: &'a EntityId,
    property: &'a str,
    value: &'a Value,
    #[serde(with = "timestamp")]
    issued_at: &'a DateTime<Utc>,
    #[serde(with = "timestamp")]
    expires_at: &'a DateTime<Utc>,
}

impl Claim {
    /// Canonical JSON of every field except the signature.
    pub fn signing_bytes(&self) -> Vec<u8> {
        to_canonical_bytes(&Unsigned {
            issuer: &self.issuer,
            subject: &self.subject,
            property: &self.property,
            value: &self.value,
            issued_at: &self.issued_at,
            expires_at: &self.expires_at,
        })
    }

    /// Hex SHA-256 of the signing bytes: the claim reference cited by proofs.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.signing_bytes()))
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        to_canonical_bytes(self)
    }

    pub fn signature_valid(&self, key: &VerifyingKey) -> bool {
        key.verify_strict(&self.signing_bytes(), &Signature::from_bytes(&self.sig)).is_ok()
    }

    pub fn in_window(&self, at: DateTime<Utc>) -> bool {
        self.issued_at <= at && at < self.expires_at
    }
}

mod strict_sig {
    use super::*;

    pub fn serialize<S: Serializer>(sig: &[u8; 64], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&B64.encode(sig))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 64], D::Error> {
        let text = String::deserialize(d)?;
        let bytes = B64.decode(&text).map_err(de::Error::custom)?;
        if B64.encode(&bytes) != text {
            return Err(de::Error::custom("signature is not canonical base64"));
        }
        bytes.try_into().map_err(|_| de::Error::custom("signature must be 64 bytes"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClaimError {
    #[error("validity must be positive")]
    InvalidValidity,
    #[error("unauthorized")]
    Unauthorized,
    #[error("claim source unavailable: {0}")]
    Unavailable(String),
    #[error("duplicate trust entry ({issuer}, {property})")]
    DuplicateTrustEntry { issuer: String, property: String },
    #[error("bad key material: {0}")]
    BadKey(String),
}

/// An issuer identity with its signing key (development and tests only).
#[derive(Clone)]
pub struct IssuerKeypair {
    pub issuer: String,
    signing: SigningKey,
}

impl std::fmt::Debug for IssuerKeypair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IssuerKeypair").field("issuer", &self.issuer).finish_non_exhaustive()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct KeyFile {
    issuer: String,
    public_key: String,
    secret_key: String,
}

impl IssuerKeypair {
    pub fn from_seed(issuer: impl Into<String>, seed: [u8; 32]) -> Self {
        Self { issuer: issuer.into(), signing: SigningKey::from_bytes(&seed) }
    }

    pub fn generate(issuer: impl Into<String>) -> Self {
        Self::from_seed(issuer, rand::random())
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        self.signing.verifying_key()
    }

    pub fn public_key_bytes(&self) -> [u8; 32] {
        self.verifying_key().to_bytes()
    }

    pub fn public_key_b64(&self) -> String {
        B64.encode(self.public_key_bytes())
    }

    pub fn to_json(&self) -> String {
        let file = KeyFile {
            issuer: self.issuer.clone(),
            public_key: self.public_key_b64(),
            secret_key: B64.encode(self.signing.to_bytes()),
        };
        serde_json::to_string_pretty(&file).expect("key file serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ClaimError> {
        let file: KeyFile = serde_json::from_str(text).map_err(|e| ClaimError::BadKey(e.to_string()))?;
        let secret: [u8; 32] = B64
            .decode(&file.secret_key)
            .map_err(|e| ClaimError::BadKey(e.to_string()))?
            .try_into()
            .map_err(|_| ClaimError::BadKey("secret key must be 32 bytes".into()))?;
        let kp = Self::from_seed(file.issuer, secret);
        if kp.public_key_b64() != file.public_key {
            return Err(ClaimError::BadKey("public key does not match secret key".into()));
        }
        Ok(kp)
    }

    /// Signs a claim valid for `validity` from the clock's current instant.
    pub fn issue(
        &self,
        subject: EntityId,
        property: impl Into<String>,
        value: Value,
        validity: Duration,
        clock: &dyn Clock,
    ) -> Result<Claim, ClaimError> {
        if validity <= Duration::zero() {
            return Err(ClaimError::InvalidValidity);
        }
        let issued_at = clock.now();
        Ok(self.sign(subject, property, value, issued_at, issued_at + validity))
    }

    /// Signs a claim with an explicit window.
    pub fn sign(
        &self,
        subject: EntityId,
        property: impl Into<String>,
        value: Value,
        issued_at: DateTime<Utc>,
        expires_at: DateTime<Utc>,
    ) -> Claim {
        let mut claim = Claim {
            issuer: self.issuer.clone(),
            subject,
            property: property.into(),
            value,
            issued_at,
            expires_at,
            sig: [0; 64],
        };
        claim.sig = self.signing.sign(&claim.signing_bytes()).to_bytes();
        claim
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrustEntry {
    pub issuer: String,
    /// An attribute name, or `*` for any.
    pub property: String,
}

/// The (issuer, property) pairs a verifier accepts claims for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrustList {
    pub owner: String,
    entries: Vec<TrustEntry>,
}

impl TrustList {
    pub fn new(owner: impl Into<String>, entries: impl IntoIterator<Item = TrustEntry>) -> Result<Self, ClaimError> {
        let mut list = Self { owner: owner.into(), entries: Vec::new() };
        for e in entries {
            list.add(e)?;
        }
        Ok(list)
    }

    pub fn add(&mut self, entry: TrustEntry) -> Result<(), ClaimError> {
        if self.entries.contains(&entry) {
            return Err(ClaimError::DuplicateTrustEntry { issuer: entry.issuer, property: entry.property });
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[TrustEntry] {
        &self.entries
    }

    pub fn trusts(&self, issuer: &str, property: &str) -> bool {
        self.entries.iter().any(|e| e.issuer == issuer && (e.property == "*" || e.property == property))
    }
}

impl<'de> Deserialize<'de> for TrustList {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            owner: String,
            entries: Vec<TrustEntry>,
        }
        let raw = Raw::deserialize(d)?;
        TrustList::new(raw.owner, raw.entries).map_err(de::Error::custom)
    }
}

/// Published issuer public keys.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyRing {
    keys: BTreeMap<String, VerifyingKey>,
}

impl KeyRing {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, issuer: impl Into<String>, key: VerifyingKey) {
        self.keys.insert(issuer.into(), key);
    }

    pub fn with(mut self, kp: &IssuerKeypair) -> Self {
        self.insert(kp.issuer.clone(), kp.verifying_key());
        self
    }

    pub fn get(&self, issuer: &str) -> Option<&VerifyingKey> {
        self.keys.get(issuer)
    }
}

impl Serialize for KeyRing {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let encoded: BTreeMap<&String, String> = self.keys.iter().map(|(k, v)| (k, B64.encode(v.to_bytes()))).collect();
        encoded.serialize(s)
    }
}

impl<'de> Deserialize<'de> for KeyRing {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = BTreeMap::<String, String>::deserialize(d)?;
        let mut ring = KeyRing::new();
        for (issuer, b64) in raw {
            let bytes: [u8; 32] = B64
                .decode(&b64)
                .map_err(de::Error::custom)?
                .try_into()
                .map_err(|_| de::Error::custom("public key must be 32 bytes"))?;
            let key = VerifyingKey::from_bytes(&bytes).map_err(de::Error::custom)?;
            ring.insert(issuer, key);
        }
        Ok(ring)
    }
}

/// A verifier's trust configuration: which issuers it trusts, for what, and
/// their keys. File form: `{"owner", "entries", "keys"}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrustConfig {
    pub trust: TrustList,
    pub keys: KeyRing,
}

#[derive(Serialize, Deserialize)]
struct TrustFile {
    owner: String,
    entries: Vec<TrustEntry>,
    keys: KeyRing,
}

impl TrustConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let file: TrustFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
        let trust = TrustList::new(file.owner, file.entries).map_err(|e| e.to_string())?;
        Ok(Self { trust, keys: file.keys })
    }

    pub fn to_json(&self) -> String {
        let file = TrustFile { owner: self.trust.owner.clone(), entries: self.trust.entries.clone(), keys: self.keys.clone() };
        serde_json::to_string_pretty(&file).expect("trust file serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "camelCase")]
pub enum ClaimStatus {
    Trusted,
    UntrustedIssuer(String),
    BadSignature,
    Expired,
    NotYetValid,
}

impl ClaimStatus {
    pub fn is_trusted(&self) -> bool {
        matches!(self, ClaimStatus::Trusted)
    }
}

/// Trusted iff the issuer key is known, the signature verifies, the issuer is
/// trusted for the property and `issuedAt <= now < expiresAt`.
pub fn verify_claim(claim: &Claim, trust: &TrustList, keys: &KeyRing, now: DateTime<Utc>) -> ClaimStatus {
    let Some(key) = keys.get(&claim.issuer) else {
        return ClaimStatus::UntrustedIssuer(format!("no published key for issuer `{}`", claim.issuer));
    };
    if !claim.signature_valid(key) {
        return ClaimStatus::BadSignature;
    }
    if !trust.trusts(&claim.issuer, &claim.property) {
        return ClaimStatus::UntrustedIssuer(format!(
            "`{}` is not trusted for `{}` by `{}`",
            claim.issuer, claim.property, trust.owner
        ));
    }
    window_status(claim, now)
}

/// Validity-window part of [`verify_claim`].
pub fn window_status(claim: &Claim, now: DateTime<Utc>) -> ClaimStatus {
    if now < claim.issued_at {
        ClaimStatus::NotYetValid
    } else if now >= claim.expires_at {
        ClaimStatus::Expired
    } else {
        ClaimStatus::Trusted
    }
}

/// Claims indexed by (subject, property), each with its verification status
/// at the bag's reference instant.
#[derive(Debug, Clone, Default)]
pub struct ClaimBag {
    claims: Vec<(Claim, String, ClaimStatus)>,
    index: BTreeMap<(EntityId, String), Vec<usize>>,
    by_hash: BTreeMap<String, usize>,
}

impl ClaimBag {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(
        claims: impl IntoIterator<Item = Claim>,
        trust: &TrustList,
        keys: &KeyRing,
        now: DateTime<Utc>,
    ) -> Self {
        let mut bag = Self::default();
        for c in claims {
            let status = verify_claim(&c, trust, keys, now);
            bag.insert(c, status);
        }
        bag
    }

    /// Inserts a claim with an already-computed status. Identical claims are
    /// stored once.
    pub fn insert(&mut self, claim: Claim, status: ClaimStatus) {
        let hash = claim.content_hash();
        if self.by_hash.contains_key(&hash) {
            return;
        }
        let i = self.claims.len();
        self.index.entry((claim.subject.clone(), claim.property.clone())).or_default().push(i);
        self.by_hash.insert(hash.clone(), i);
        self.claims.push((claim, hash, status));
    }

    pub fn len(&self) -> usize {
        self.claims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.claims.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Claim, &ClaimStatus)> {
        self.claims.iter().map(|(c, _, s)| (c, s))
    }

    /// Every claim inserted for the key, in insertion order.
    pub fn lookup(&self, subject: &EntityId, property: &str) -> Vec<&Claim> {
        self.index
            .get(&(subject.clone(), property.to_owned()))
            .map(|ix| ix.iter().map(|&i| &self.claims[i].0).collect())
            .unwrap_or_default()
    }

    /// The trusted claim for the key: latest `issuedAt`, ties broken by the
    /// smallest content hash.
    pub fn trusted(&self, subject: &EntityId, property: &str) -> Option<(&Claim, &str)> {
        let ix = self.index.get(&(subject.clone(), property.to_owned()))?;
        ix.iter()
            .map(|&i| &self.claims[i])
            .filter(|(_, _, s)| s.is_trusted())
            .max_by(|a, b| a.0.issued_at.cmp(&b.0.issued_at).then_with(|| b.1.cmp(&a.1)))
            .map(|(c, h, _)| (c, h.as_str()))
    }

    pub fn by_ref(&self, hash: &str) -> Option<&Claim> {
        self.by_hash.get(hash).map(|&i| &self.claims[i].0)
    }

    pub fn status(&self, hash: &str) -> Option<&ClaimStatus> {
        self.by_hash.get(hash).map(|&i| &self.claims[i].2)
    }
}

/// Anything that can answer claim queries.
pub trait ClaimSource {
    fn fetch_claims(&self, subject: &EntityId, properties: &[String]) -> Result<Vec<Claim>, ClaimError>;
}

/// Keeps only the claims for the requested (subject, property) pairs.
pub fn retain_requested(claims: Vec<Claim>, subject: &EntityId, properties: &[String]) -> Vec<Claim> {
    claims.into_iter().filter(|c| &c.subject == subject && properties.contains(&c.property)).collect()
}

/// Issues claims about the attributes of entities it holds, to callers that
/// present one of its bearer tokens.
pub struct ClaimServer {
    keypair: IssuerKeypair,
    store: EntityStore,
    validity: Duration,
    tokens: BTreeSet<String>,
    clock: Arc<dyn Clock>,
}

impl ClaimServer {
    pub fn new(
        keypair: IssuerKeypair,
        store: EntityStore,
        validity: Duration,
        tokens: impl IntoIterator<Item = String>,
        clock: Arc<dyn Clock>,
    ) -> Self {
        Self { keypair, store, validity, tokens: tokens.into_iter().collect(), clock }
    }

    pub fn issuer(&self) -> &str {
        &self.keypair.issuer
    }

    pub fn authorized(&self, token: &str) -> bool {
        self.tokens.contains(token)
    }

    /// One claim per requested property the subject has; unknown subjects
    /// and properties yield nothing.
    pub fn query(&self, token: &str, subject: &EntityId, properties: &[String]) -> Result<Vec<Claim>, ClaimError> {
        if !self.authorized(token) {
            return Err(ClaimError::Unauthorized);
        }
        let Some(entity) = self.store.entity(subject) else {
            return Ok(Vec::new());
        };
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for p in properties {
            if !seen.insert(p) {
                continue;
            }
            if let Some(v) = entity.attributes.get(p) {
                out.push(self.keypair.issue(subject.clone(), p.clone(), v.clone(), self.validity, self.clock.as_ref())?);
            }
        }
        Ok(out)
    }
}

/// In-process client for a [`ClaimServer`].
pub struct LocalClaimClient {
    pub server: Arc<ClaimServer>,
    pub token: String,
}

impl ClaimSource for LocalClaimClient {
    fn fetch_claims(&self, subject: &EntityId, properties: &[String]) -> Result<Vec<Claim>, ClaimError> {
        let claims = self.server.query(&self.token, subject, properties)?;
        Ok(retain_requested(claims, subject, properties))
    }
}
