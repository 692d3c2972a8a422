//! The atomic decision boundary: one arc computes the disposition and the
//! successor together. Also holds the escalation-extended state, atomic
//! supervisor resolution, and a versioned compare-and-commit cell that realizes
//! indivisibility for live concurrent runs.

use std::collections::BTreeSet;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decision::{Disposition, Verdict};
use crate::model::{ActionLabel, AgentId, EnvId, StateId};
use crate::scenario::ScenarioSpec;

/// A suspended request: the state it was escalated from and the action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PendingRequest {
    pub origin: StateId,
    pub action: AgentId,
}

/// Base state paired with the set of pending requests.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ExtendedState {
    pub base: StateId,
    pub pending: BTreeSet<PendingRequest>,
}

impl ExtendedState {
    pub fn new(base: StateId) -> Self {
        ExtendedState {
            base,
            pending: BTreeSet::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicOutcome {
    pub disposition: Disposition,
    pub next: ExtendedState,
}

/// `F(s, a)`: disposition `D(s, a)` and the successor it determines.
pub fn atomic_step(scenario: &ScenarioSpec, current: &ExtendedState, action: AgentId) -> AtomicOutcome {
    let disposition = *scenario.decision.get(current.base, action);
    apply_disposition(scenario, current, action, disposition)
}

/// Successor shape for a given disposition:
/// `Allow` fires `T` and keeps the pending set, `Refuse` changes nothing,
/// `Escalate` keeps the base and adds `(base, action)` to the pending set.
pub fn apply_disposition(
    scenario: &ScenarioSpec,
    current: &ExtendedState,
    action: AgentId,
    disposition: Disposition,
) -> AtomicOutcome {
    let next = match disposition {
        Disposition::Allow => ExtendedState {
            base: *scenario.transition.get(current.base, action),
            pending: current.pending.clone(),
        },
        Disposition::Refuse => current.clone(),
        Disposition::Escalate => {
            let mut pending = current.pending.clone();
            pending.insert(PendingRequest {
                origin: current.base,
                action,
            });
            ExtendedState {
                base: current.base,
                pending,
            }
        }
    };
    AtomicOutcome { disposition, next }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("resolution of a request not in the pending set: (state {}, action {})", .request.origin.0, .request.action.0)]
pub struct ProtocolError {
    pub request: PendingRequest,
}

/// Atomic supervisor resolution against the state current at resolution
/// time. `Allow` fires `T(current.base, a)`; `Refuse` leaves the base alone.
/// Either way the request leaves the pending set.
pub fn resolve_atomic(
    scenario: &ScenarioSpec,
    current: &ExtendedState,
    request: PendingRequest,
    verdict: Verdict,
) -> Result<ExtendedState, ProtocolError> {
    if !current.pending.contains(&request) {
        return Err(ProtocolError { request });
    }
    let mut pending = current.pending.clone();
    pending.remove(&request);
    let base = match verdict {
        Verdict::Allow => *scenario.transition.get(current.base, request.action),
        Verdict::Refuse => current.base,
    };
    Ok(ExtendedState { base, pending })
}

/// States that expose a base component environment moves can rewrite.
pub trait BaseState: Clone {
    fn base(&self) -> StateId;
    fn with_base(&self, base: StateId) -> Self;
}

impl BaseState for ExtendedState {
    fn base(&self) -> StateId {
        self.base
    }

    fn with_base(&self, base: StateId) -> Self {
        ExtendedState {
            base,
            pending: self.pending.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Versioned<S> {
    pub state: S,
    pub version: u64,
}

/// One successful commit, in version order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommitRecord<S> {
    pub version: u64,
    pub label: ActionLabel,
    pub state: S,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("stale version {expected}, cell is at {actual}")]
pub struct StaleVersion {
    pub expected: u64,
    pub actual: u64,
}

/// Shared state with a monotone version. The only mutation is a commit
/// conditioned on the version the caller read.
#[derive(Debug)]
pub struct VersionedStateCell<S> {
    current: RwLock<Arc<Versioned<S>>>,
    history: Mutex<Vec<CommitRecord<S>>>,
}

impl<S: Clone> VersionedStateCell<S> {
    pub fn new(state: S) -> Self {
        VersionedStateCell {
            current: RwLock::new(Arc::new(Versioned { state, version: 0 })),
            history: Mutex::new(Vec::new()),
        }
    }

    pub fn load(&self) -> Arc<Versioned<S>> {
        self.current.read().unwrap().clone()
    }

    /// Installs `next` iff the cell is still at `expected`. Returns the new
    /// version.
    pub fn compare_and_commit(&self, expected: u64, next: S, label: ActionLabel) -> Result<u64, StaleVersion> {
        let mut guard = self.current.write().unwrap();
        if guard.version != expected {
            return Err(StaleVersion {
                expected,
                actual: guard.version,
            });
        }
        let version = expected + 1;
        // recorded under the write lock so history order is version order
        self.history.lock().unwrap().push(CommitRecord {
            version,
            label,
            state: next.clone(),
        });
        *guard = Arc::new(Versioned { state: next, version });
        Ok(version)
    }

    pub fn history(&self) -> Vec<CommitRecord<S>> {
        self.history.lock().unwrap().clone()
    }
}

pub const DEFAULT_RETRY_BUDGET: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CommitOptions {
    pub retry_budget: usize,
    /// Forced pause between reading the snapshot and committing.
    pub pause: Option<Duration>,
}

impl Default for CommitOptions {
    fn default() -> Self {
        CommitOptions {
            retry_budget: DEFAULT_RETRY_BUDGET,
            pause: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum AdmitError {
    #[error("gave up after {attempts} conflicting commit attempts")]
    Starved { attempts: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Committed<T> {
    pub value: T,
    pub version: u64,
    pub retries: usize,
}

/// Optimistic read-compute-commit loop shared by every live operation.
/// `compute` sees a snapshot and returns the label, the next state and a
/// caller value; nothing is committed if it returns `None`.
pub fn commit_with_retry<S: Clone, T>(
    cell: &VersionedStateCell<S>,
    options: &CommitOptions,
    mut compute: impl FnMut(&S) -> Option<(ActionLabel, S, T)>,
) -> Result<Option<Committed<T>>, AdmitError> {
    for attempt in 0..options.retry_budget.max(1) {
        let snapshot = cell.load();
        let Some((label, next, value)) = compute(&snapshot.state) else {
            return Ok(None);
        };
        if let Some(pause) = options.pause {
            std::thread::sleep(pause);
        }
        if let Ok(version) = cell.compare_and_commit(snapshot.version, next, label) {
            return Ok(Some(Committed {
                value,
                version,
                retries: attempt,
            }));
        }
    }
    Err(AdmitError::Starved {
        attempts: options.retry_budget.max(1),
    })
}

/// A live admission: the state the decision was evaluated in and the outcome
/// committed on top of it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Admission {
    pub decided_in: StateId,
    pub outcome: AtomicOutcome,
}

/// Decides and commits against the same snapshot. On a version conflict the
/// decision is recomputed from the fresh state.
pub fn live_admit_and_commit(
    cell: &VersionedStateCell<ExtendedState>,
    scenario: &ScenarioSpec,
    action: AgentId,
    options: &CommitOptions,
) -> Result<Committed<Admission>, AdmitError> {
    commit_with_retry(cell, options, |current| {
        let outcome = atomic_step(scenario, current, action);
        let label = ActionLabel::Agent {
            action,
            disposition: outcome.disposition,
        };
        let next = outcome.next.clone();
        Some((
            label,
            next,
            Admission {
                decided_in: current.base,
                outcome,
            },
        ))
    })
    .map(|c| c.expect("admission always produces a commit"))
}

/// Fires the first declared row of `env` from the current base, if any.
pub fn live_env_commit<S: BaseState>(
    cell: &VersionedStateCell<S>,
    scenario: &ScenarioSpec,
    env: EnvId,
    options: &CommitOptions,
) -> Result<Option<Committed<StateId>>, AdmitError> {
    commit_with_retry(cell, options, |current| {
        let target = scenario
            .env_successors(current.base())
            .find(|(e, _)| *e == env)
            .map(|(_, t)| t)?;
        Some((ActionLabel::Env { action: env }, current.with_base(target), target))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::builtin;

    #[test]
    fn allow_fires_transition_and_keeps_pending() {
        let sc = builtin("filelock").unwrap();
        let write = sc.agent_named("write(f)").unwrap();
        let out = atomic_step(&sc, &ExtendedState::new(sc.initial), write);
        assert_eq!(out.disposition, Disposition::Allow);
        assert_eq!(sc.describe_state(out.next.base), "s1{locked=none, quota=1}");
        assert!(out.next.pending.is_empty());
    }

    #[test]
    fn locked_file_is_refused_unchanged() {
        let sc = builtin("filelock").unwrap();
        let write = sc.agent_named("write(f)").unwrap();
        let current = ExtendedState::new(sc.state_named("s3").unwrap());
        let out = atomic_step(&sc, &current, write);
        assert_eq!(out.disposition, Disposition::Refuse);
        assert_eq!(out.next, current);
    }

    #[test]
    fn escalation_records_origin_and_keeps_base() {
        let sc = builtin("filelock-escalate").unwrap();
        let write = sc.agent_named("write(f)").unwrap();
        let s1 = sc.state_named("s1").unwrap();
        let out = atomic_step(&sc, &ExtendedState::new(s1), write);
        assert_eq!(out.disposition, Disposition::Escalate);
        assert_eq!(out.next.base, s1);
        assert_eq!(
            out.next.pending.iter().copied().collect::<Vec<_>>(),
            vec![PendingRequest {
                origin: s1,
                action: write
            }]
        );
        // a second identical escalation collapses into the same entry
        let again = atomic_step(&sc, &out.next, write);
        assert_eq!(again.next, out.next);
    }

    #[test]
    fn resolution_uses_state_at_resolution_time() {
        let sc = builtin("filelock").unwrap();
        let write = sc.agent_named("write(f)").unwrap();
        let s0 = sc.initial;
        let st = sc.state_named("s1").unwrap();
        let req = PendingRequest {
            origin: s0,
            action: write,
        };
        let current = ExtendedState {
            base: st,
            pending: [req].into(),
        };
        let refused = resolve_atomic(&sc, &current, req, Verdict::Refuse).unwrap();
        assert_eq!(refused, ExtendedState::new(st));
        let allowed = resolve_atomic(&sc, &current, req, Verdict::Allow).unwrap();
        assert_eq!(allowed, ExtendedState::new(*sc.transition.get(st, write)));
        assert_ne!(allowed.base, *sc.transition.get(s0, write));
    }

    #[test]
    fn resolving_unknown_request_is_protocol_error() {
        let sc = builtin("filelock").unwrap();
        let req = PendingRequest {
            origin: sc.initial,
            action: AgentId(0),
        };
        let current = ExtendedState::new(sc.initial);
        assert_eq!(
            resolve_atomic(&sc, &current, req, Verdict::Allow),
            Err(ProtocolError { request: req })
        );
    }

    #[test]
    fn live_admission_on_fresh_cell_matches_pure_step() {
        let sc = builtin("filelock").unwrap();
        let write = sc.agent_named("write(f)").unwrap();
        let cell = VersionedStateCell::new(ExtendedState::new(sc.initial));
        let got = live_admit_and_commit(&cell, &sc, write, &CommitOptions::default()).unwrap();
        assert_eq!(got.value.outcome, atomic_step(&sc, &ExtendedState::new(sc.initial), write));
        assert_eq!(got.value.decided_in, sc.initial);
        assert_eq!(got.version, 1);
        assert_eq!(got.retries, 0);
        assert_eq!(cell.load().state, got.value.outcome.next);
    }

    #[test]
    fn stale_commit_never_takes_effect() {
        let cell = VersionedStateCell::new(ExtendedState::new(StateId(0)));
        let label = ActionLabel::Env { action: EnvId(0) };
        assert_eq!(cell.compare_and_commit(0, ExtendedState::new(StateId(1)), label), Ok(1));
        assert!(cell.compare_and_commit(0, ExtendedState::new(StateId(2)), label).is_err());
        assert_eq!(cell.load().state.base, StateId(1));
        assert_eq!(cell.history().len(), 1);
    }

    #[test]
    fn interleaved_env_commit_forces_recomputation() {
        let sc = builtin("filelock").unwrap();
        let write = sc.agent_named("write(f)").unwrap();
        let lock = sc.env_named("lock(f)").unwrap();
        let cell = VersionedStateCell::new(ExtendedState::new(sc.initial));
        let mut injected = false;
        // the environment commits between the first read and the first commit
        let got = commit_with_retry(&cell, &CommitOptions::default(), |current| {
            if !injected {
                injected = true;
                live_env_commit(&cell, &sc, lock, &CommitOptions::default()).unwrap();
            }
            let out = atomic_step(&sc, current, write);
            Some((
                ActionLabel::Agent {
                    action: write,
                    disposition: out.disposition,
                },
                out.next.clone(),
                out,
            ))
        })
        .unwrap()
        .unwrap();
        assert_eq!(got.retries, 1);
        assert_eq!(got.value.disposition, Disposition::Refuse);
        assert_eq!(cell.load().state.base, sc.state_named("s3").unwrap());
    }

    #[test]
    fn exhausted_budget_reports_starvation() {
        let cell = VersionedStateCell::new(ExtendedState::new(StateId(0)));
        let opts = CommitOptions {
            retry_budget: 3,
            pause: None,
        };
        let res: Result<Option<Committed<()>>, _> = commit_with_retry(&cell, &opts, |s| {
            // someone else always wins the race
            let v = cell.load().version;
            cell.compare_and_commit(v, s.clone(), ActionLabel::Env { action: EnvId(0) })
                .unwrap();
            Some((ActionLabel::Env { action: EnvId(0) }, s.clone(), ()))
        });
        assert_eq!(res, Err(AdmitError::Starved { attempts: 3 }));
    }
}
