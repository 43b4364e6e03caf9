//! Guarded calls: every downstream request is made only under proofs that
//! the required policies hold, and every decision is logged.

pub mod claims_http;
pub mod config;
pub mod guard;
pub mod log;
pub mod runtime;
pub mod server;
pub mod upstream;

pub use guard::{GuardError, GuardFile, GuardSpec, ResponseCheck, Slot, RESPONSE_ROLE};
pub use log::{DecisionLog, DecisionRecord, Mode, Outcome, SlotRecord, SlotVerdict};
pub use runtime::{client_envelopes, CallError, CallMode, CallReport, CallRequest, ClientPrep, Denial, Gateway};
pub use upstream::{CallPermit, HttpUpstream, StubUpstream, Upstream, UpstreamError};
