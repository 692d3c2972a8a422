//! Admission control over finite labeled transition systems.
//!
//! A governed agent proposes actions; a decision function answers `Allow`,
//! `Refuse` or `Escalate`; an uncontrollable environment may move the state at
//! any point the construction leaves open. This crate models the atomic
//! boundary (decision and commit in one indivisible arc) and the split
//! boundary (a recorded decision, later executed), and checks both
//! exhaustively, stochastically and under live thread contention.

pub mod atomic;
pub mod decision;
pub mod explore;
pub mod harness;
pub mod model;
pub mod scenario;
pub mod scenarios;
pub mod split;

pub use atomic::{
    atomic_step, live_admit_and_commit, resolve_atomic, AtomicOutcome, ExtendedState, PendingRequest, ProtocolError,
    VersionedStateCell,
};
pub use decision::{
    check_consistency, check_nontriviality, derive_decision_from_adm, AssumptionVerdict, Condition,
    ConsistencyVerdict, ConsistencyViolation, DecisionTable, Disposition, TransitionFunctionTable, Verdict,
};
pub use explore::{Boundary, Construction, Explorer, SupervisorPolicy};
pub use harness::HarnessError;
pub use model::{
    check_preservation, validate_trace, ActionKind, ActionLabel, AdmissibilityTable, AgentId, AttrId, EnvId,
    PreservationVerdict, StateActionTable, StateId, Trace, TraceStep, TransitionTable, ValueId, Violation,
};
pub use scenario::{PartitionDescriptor, ScenarioBuilder, ScenarioError, ScenarioSpec};
pub use split::{
    resolve_split, split_dec, split_dec_augmented, split_env, split_exec, ExternalStateSpec, PreservationEvent,
    RecordedDecision, SplitError, SplitState,
};
