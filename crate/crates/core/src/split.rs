//! Split evaluation: a decision arc records a disposition, environment arcs
//! may fire, and a later execution arc applies `T` to whatever base state
//! then holds.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atomic::{BaseState, PendingRequest, ProtocolError};
use crate::decision::{Disposition, Verdict};
use crate::model::{AgentId, EnvId, StateId, ValueId};
use crate::scenario::{ScenarioError, ScenarioSpec};

/// Who produced a recorded disposition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DecisionSource {
    Policy,
    Supervisor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RecordedDecision {
    pub action: AgentId,
    pub disposition: Disposition,
    pub evaluated_in: StateId,
    pub source: DecisionSource,
    /// Set once a re-evaluation arc has refreshed the record.
    pub rechecked: bool,
}

/// Base state, at most one outstanding recorded decision, and the pending
/// set.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SplitState {
    pub base: StateId,
    pub recorded: Option<RecordedDecision>,
    pub pending: BTreeSet<PendingRequest>,
}

impl SplitState {
    pub fn new(base: StateId) -> Self {
        SplitState {
            base,
            recorded: None,
            pending: BTreeSet::new(),
        }
    }
}

impl BaseState for SplitState {
    fn base(&self) -> StateId {
        self.base
    }

    fn with_base(&self, base: StateId) -> Self {
        SplitState {
            base,
            ..self.clone()
        }
    }
}

/// What happened to admissibility when an execution arc fired.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PreservationEvent {
    /// `T` fired in a state where the action is admissible.
    Admissible,
    /// `T` fired in a state where the action is not admissible.
    Violated,
    /// The recorded disposition did not allow firing.
    NoFire,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SplitError {
    #[error("a decision is already outstanding")]
    OutstandingDecision,
    #[error("no recorded decision to execute")]
    NoRecordedDecision,
    #[error("no declared environment transition ({state}, {env}) -> {target}", state = .state.0, env = .env.0, target = .target.0)]
    UndeclaredEnv {
        state: StateId,
        env: EnvId,
        target: StateId,
    },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Finite external store read by an enriched decision function
/// `D′ : S × A × E → Disposition`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalStateSpec {
    pub values: Vec<String>,
    /// Store value that mirrors each base state; the store is written
    /// through to this value whenever `T` commits.
    pub read: Vec<ValueId>,
    /// `D′`, indexed `[state][action][value]`.
    pub decision: Vec<Disposition>,
    pub agents: usize,
    /// Total value maps for environment actions that also write the store.
    pub effects: BTreeMap<EnvId, Vec<ValueId>>,
}

impl ExternalStateSpec {
    pub fn read(&self, state: StateId) -> ValueId {
        self.read[state.index()]
    }

    pub fn decide(&self, state: StateId, action: AgentId, value: ValueId) -> Disposition {
        self.decision[(state.index() * self.agents + action.index()) * self.values.len() + value.index()]
    }

    /// Store value after `env` fires; unchanged if `env` has no coupled
    /// effect.
    pub fn after_env(&self, env: EnvId, value: ValueId) -> ValueId {
        self.effects
            .get(&env)
            .map_or(value, |map| map[value.index()])
    }

    pub fn value_name(&self, value: ValueId) -> &str {
        &self.values[value.index()]
    }

    pub(crate) fn validate(&self, states: usize, agents: usize, envs: usize) -> Result<(), ScenarioError> {
        let nv = self.values.len();
        let ok = nv > 0
            && self.agents == agents
            && self.read.len() == states
            && self.read.iter().all(|v| v.index() < nv)
            && self.decision.len() == states * agents * nv
            && self
                .effects
                .iter()
                .all(|(e, map)| e.index() < envs && map.len() == nv && map.iter().all(|v| v.index() < nv));
        if ok {
            Ok(())
        } else {
            Err(ScenarioError::Invalid("malformed external store block".into()))
        }
    }
}

fn record(current: &SplitState, action: AgentId, disposition: Disposition) -> SplitState {
    let mut next = current.clone();
    if disposition == Disposition::Escalate {
        next.pending.insert(PendingRequest {
            origin: current.base,
            action,
        });
        next.recorded = None;
    } else {
        next.recorded = Some(RecordedDecision {
            action,
            disposition,
            evaluated_in: current.base,
            source: DecisionSource::Policy,
            rechecked: false,
        });
    }
    next
}

/// Decision arc: records `D(base, action)` without touching the base. An
/// `Escalate` goes straight to the pending set instead of being recorded.
pub fn split_dec(scenario: &ScenarioSpec, current: &SplitState, action: AgentId) -> Result<SplitState, SplitError> {
    if current.recorded.is_some() {
        return Err(SplitError::OutstandingDecision);
    }
    Ok(record(current, action, *scenario.decision.get(current.base, action)))
}

/// Decision arc with an enriched decision function reading the external
/// store value `observed`. Structurally identical to [`split_dec`].
pub fn split_dec_augmented(
    current: &SplitState,
    action: AgentId,
    external: &ExternalStateSpec,
    observed: ValueId,
) -> Result<SplitState, SplitError> {
    if current.recorded.is_some() {
        return Err(SplitError::OutstandingDecision);
    }
    Ok(record(current, action, external.decide(current.base, action, observed)))
}

/// Environment arc. The recorded decision and pending set ride along
/// untouched.
pub fn split_env(
    scenario: &ScenarioSpec,
    current: &SplitState,
    env: EnvId,
    target: StateId,
) -> Result<SplitState, SplitError> {
    if !scenario.env_successors(current.base).any(|r| r == (env, target)) {
        return Err(SplitError::UndeclaredEnv {
            state: current.base,
            env,
            target,
        });
    }
    Ok(current.with_base(target))
}

/// Execution arc. An `Allow` record fires `T` against the current base and
/// reports whether that base admits the action.
pub fn split_exec(scenario: &ScenarioSpec, current: &SplitState) -> Result<(SplitState, PreservationEvent), SplitError> {
    let rec = current.recorded.ok_or(SplitError::NoRecordedDecision)?;
    let mut next = current.clone();
    next.recorded = None;
    match rec.disposition {
        Disposition::Allow => {
            let admissible = *scenario.adm.get(current.base, rec.action);
            next.base = *scenario.transition.get(current.base, rec.action);
            let event = if admissible {
                PreservationEvent::Admissible
            } else {
                PreservationEvent::Violated
            };
            Ok((next, event))
        }
        // Escalate never reaches the record; see `record`.
        Disposition::Refuse | Disposition::Escalate => Ok((next, PreservationEvent::NoFire)),
    }
}

/// Split supervisor resolution: removes the request and records the verdict
/// in one arc. A later [`split_exec`] applies it to whatever base then holds.
pub fn resolve_split(
    current: &SplitState,
    request: PendingRequest,
    verdict: Verdict,
) -> Result<SplitState, SplitError> {
    if !current.pending.contains(&request) {
        return Err(ProtocolError { request }.into());
    }
    if current.recorded.is_some() {
        return Err(SplitError::OutstandingDecision);
    }
    let mut next = current.clone();
    next.pending.remove(&request);
    next.recorded = Some(RecordedDecision {
        action: request.action,
        disposition: verdict.into(),
        evaluated_in: current.base,
        source: DecisionSource::Supervisor,
        rechecked: false,
    });
    Ok(next)
}
