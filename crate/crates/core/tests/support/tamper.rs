//! Byte-flip harness over the claims embedded in an envelope.

use std::ops::Range;

use chrono::{DateTime, Utc};
use polity_core::claims::TrustConfig;
use polity_core::{verify_bytes, ProofEnvelope, TypedPolicy, VerifyOptions};

pub struct TamperStats {
    pub mutations: usize,
    pub false_accepts: Vec<(usize, u8)>,
}

/// Byte ranges of each claim's canonical form inside the envelope bytes.
pub fn claim_spans(env: &ProofEnvelope, bytes: &[u8]) -> Vec<Range<usize>> {
    env.claims
        .iter()
        .map(|c| {
            let needle = c.canonical_bytes();
            let start = bytes
                .windows(needle.len())
                .position(|w| w == needle.as_slice())
                .expect("claims appear verbatim in canonical envelopes");
            start..start + needle.len()
        })
        .collect()
}

/// Replaces every byte of every claim with each of the 255 other byte
/// values and verifies the result at `clock`.
pub fn exhaust(pol: &TypedPolicy, bytes: &[u8], trust: &TrustConfig, clock: DateTime<Utc>) -> TamperStats {
    let env = ProofEnvelope::from_bytes(bytes).expect("golden envelope parses");
    let opts = VerifyOptions::default();
    assert!(verify_bytes(pol, bytes, trust, clock, &opts).accepted(), "unmodified envelope must verify");
    let mut stats = TamperStats { mutations: 0, false_accepts: Vec::new() };
    let mut buf = bytes.to_vec();
    for span in claim_spans(&env, bytes) {
        for i in span {
            let orig = buf[i];
            for b in (0..=255u8).filter(|&b| b != orig) {
                buf[i] = b;
                stats.mutations += 1;
                if verify_bytes(pol, &buf, trust, clock, &opts).accepted() {
                    stats.false_accepts.push((i, b));
                }
            }
            buf[i] = orig;
        }
    }
    stats
}
