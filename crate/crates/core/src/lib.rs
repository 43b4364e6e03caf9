//! Proof-carrying attribute-based access control.
//!
//! Policies are propositions over entity attributes. Deciding a policy yields
//! either a proof or a refutation; a proof packed in an envelope together with
//! the signed claims it cites can be checked by a party that has no access to
//! the entity store.

pub mod analyzer;
pub mod canonical;
pub mod claims;
pub mod clock;
pub mod compile;
pub mod dsl;
pub mod envelope;
pub mod eval;
pub mod model;
pub mod policy;
pub mod proof;
pub mod typecheck;
pub mod value;
pub mod verify;

pub use compile::{compile, compile_paths, compile_sources, CompileError, CompiledBundle};
pub use envelope::{EnvelopeError, ProofEnvelope};
pub use eval::{decide, decide_policy, EvalError, Evaluator, PolicyDecision};
pub use model::{Declarations, Entity, EntitySchema, EntityStore, EnumDecl, ModelError};
pub use policy::{AttrExpr, Builtin, CmpOp, Domain, Param, Proposition, TypedPolicy, TypedRule};
pub use proof::{Case, Dec, Evidence, Proof, Refutation, Side};
pub use value::{EntityId, Tag, Value};
pub use verify::{verify, verify_bytes, EvidencePin, Failure, FailureReason, Verdict, VerifyOptions, VerifyReport};
