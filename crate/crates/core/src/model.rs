//! Labeled transition system substrate.
//!
//! States and actions are indices into a scenario's finite tables. A [`Trace`]
//! is an alternating sequence `s0 a1 s1 ... an sn`; step indices are 1-based so
//! that step `i` is the arc from `s(i-1)` to `s(i)`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decision::{Disposition, Verdict};

macro_rules! index_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(
            Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl From<usize> for $name {
            fn from(i: usize) -> Self {
                Self(i as u32)
            }
        }
    };
}

index_newtype!(
    /// Index into a scenario's state table.
    StateId
);
index_newtype!(
    /// Index into a scenario's agent (governed) action list.
    AgentId
);
index_newtype!(
    /// Index into a scenario's environment action list.
    EnvId
);
index_newtype!(
    /// Index into a scenario's attribute declarations.
    AttrId
);
index_newtype!(
    /// Index into an external store's value domain.
    ValueId
);

/// Coarse classification of an arc, in enumeration order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActionKind {
    Agent,
    Env,
    Dec,
    Exec,
    Resolve,
}

/// Label of one arc in a constructed LTS.
///
/// The derived ordering (variant, then action index, then payload) is the
/// deterministic enumeration order. Scenario action lists are kept sorted by
/// name, so index order is name order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionLabel {
    /// One indivisible admission arc: the disposition and the successor are
    /// produced together. Commits `T` iff the disposition is `Allow`.
    Agent {
        action: AgentId,
        disposition: Disposition,
    },
    /// Uncontrollable environment move.
    Env { action: EnvId },
    /// Split decision: records a disposition, never commits `T`.
    Dec {
        action: AgentId,
        disposition: Disposition,
    },
    /// Split execution of a recorded disposition. Commits `T` iff `Allow`.
    Exec {
        action: AgentId,
        disposition: Disposition,
    },
    /// Supervisor resolution of a pending request. An atomic resolution with
    /// an `Allow` verdict commits `T` in the same arc; a split resolution only
    /// records the verdict for a later `Exec`.
    Resolve {
        action: AgentId,
        origin: StateId,
        verdict: Verdict,
        atomic: bool,
    },
}

impl ActionLabel {
    /// Smallest label in the derived order.
    pub const MIN: ActionLabel = ActionLabel::Agent {
        action: AgentId(0),
        disposition: Disposition::Allow,
    };

    pub fn kind(&self) -> ActionKind {
        match self {
            ActionLabel::Agent { .. } => ActionKind::Agent,
            ActionLabel::Env { .. } => ActionKind::Env,
            ActionLabel::Dec { .. } => ActionKind::Dec,
            ActionLabel::Exec { .. } => ActionKind::Exec,
            ActionLabel::Resolve { .. } => ActionKind::Resolve,
        }
    }

    /// The governed action this arc concerns, if any.
    pub fn agent_action(&self) -> Option<AgentId> {
        match *self {
            ActionLabel::Agent { action, .. }
            | ActionLabel::Dec { action, .. }
            | ActionLabel::Exec { action, .. }
            | ActionLabel::Resolve { action, .. } => Some(action),
            ActionLabel::Env { .. } => None,
        }
    }

    /// True iff firing this arc applies the transition function `T`.
    pub fn commits(&self) -> bool {
        match *self {
            ActionLabel::Agent { disposition, .. } | ActionLabel::Exec { disposition, .. } => {
                disposition == Disposition::Allow
            }
            ActionLabel::Resolve {
                verdict, atomic, ..
            } => atomic && verdict == Verdict::Allow,
            ActionLabel::Env { .. } | ActionLabel::Dec { .. } => false,
        }
    }
}

/// One arc of a trace: the label and the base state it lands in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TraceStep {
    pub label: ActionLabel,
    pub target: StateId,
}

/// Finite alternating sequence of base states and labels.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Trace {
    pub initial: StateId,
    pub steps: Vec<TraceStep>,
}

impl Trace {
    pub fn new(initial: StateId) -> Self {
        Trace {
            initial,
            steps: Vec::new(),
        }
    }

    pub fn push(&mut self, label: ActionLabel, target: StateId) {
        self.steps.push(TraceStep { label, target });
    }

    /// Number of transitions.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// State `s_i`, for `i` in `0..=len()`.
    pub fn state(&self, i: usize) -> StateId {
        if i == 0 {
            self.initial
        } else {
            self.steps[i - 1].target
        }
    }

    /// Label `a_i`, for `i` in `1..=len()`.
    pub fn label(&self, i: usize) -> ActionLabel {
        self.steps[i - 1].label
    }

    pub fn prefix(&self, len: usize) -> Trace {
        Trace {
            initial: self.initial,
            steps: self.steps[..len].to_vec(),
        }
    }

    pub fn kinds(&self) -> Vec<ActionKind> {
        self.steps.iter().map(|s| s.label.kind()).collect()
    }
}

/// Dense table over `S × A`, total by construction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateActionTable<T> {
    states: usize,
    actions: usize,
    cells: Vec<T>,
}

impl<T: Clone> StateActionTable<T> {
    pub fn filled(states: usize, actions: usize, value: T) -> Self {
        StateActionTable {
            states,
            actions,
            cells: vec![value; states * actions],
        }
    }

    pub fn from_fn(states: usize, actions: usize, mut f: impl FnMut(StateId, AgentId) -> T) -> Self {
        let mut cells = Vec::with_capacity(states * actions);
        for s in 0..states {
            for a in 0..actions {
                cells.push(f(StateId::from(s), AgentId::from(a)));
            }
        }
        StateActionTable {
            states,
            actions,
            cells,
        }
    }

    pub fn get(&self, state: StateId, action: AgentId) -> &T {
        &self.cells[state.index() * self.actions + action.index()]
    }

    pub fn set(&mut self, state: StateId, action: AgentId, value: T) {
        self.cells[state.index() * self.actions + action.index()] = value;
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn same_domain<U>(&self, other: &StateActionTable<U>) -> bool {
        self.states == other.states && self.actions == other.actions
    }

    pub fn iter(&self) -> impl Iterator<Item = (StateId, AgentId, &T)> + '_ {
        let actions = self.actions;
        self.cells.iter().enumerate().map(move |(i, v)| {
            (
                StateId::from(i / actions.max(1)),
                AgentId::from(i % actions.max(1)),
                v,
            )
        })
    }
}

/// `Adm : S × A → bool`.
pub type AdmissibilityTable = StateActionTable<bool>;

/// A finite transition relation over base states.
///
/// Rows are kept in `(source, label, target)` order, which is also the
/// enumeration order used by the explorer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionTable {
    states: usize,
    agents: usize,
    envs: usize,
    rows: BTreeSet<(StateId, ActionLabel, StateId)>,
}

impl TransitionTable {
    pub fn new(states: usize, agents: usize, envs: usize) -> Self {
        TransitionTable {
            states,
            agents,
            envs,
            rows: BTreeSet::new(),
        }
    }

    pub fn insert(&mut self, source: StateId, label: ActionLabel, target: StateId) -> bool {
        self.rows.insert((source, label, target))
    }

    pub fn contains(&self, source: StateId, label: ActionLabel, target: StateId) -> bool {
        self.rows.contains(&(source, label, target))
    }

    /// Rows leaving `source`, in enumeration order.
    pub fn from_state(&self, source: StateId) -> impl Iterator<Item = (ActionLabel, StateId)> + '_ {
        self.rows
            .range((source, ActionLabel::MIN, StateId(0))..)
            .take_while(move |(s, _, _)| *s == source)
            .map(|(_, l, t)| (*l, *t))
    }

    pub fn rows(&self) -> impl Iterator<Item = &(StateId, ActionLabel, StateId)> {
        self.rows.iter()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn declares_state(&self, s: StateId) -> bool {
        s.index() < self.states
    }

    fn declares_label(&self, label: &ActionLabel) -> bool {
        match *label {
            ActionLabel::Env { action } => action.index() < self.envs,
            ActionLabel::Resolve { action, origin, .. } => {
                action.index() < self.agents && self.declares_state(origin)
            }
            other => other
                .agent_action()
                .is_some_and(|a| a.index() < self.agents),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("trace position {index}: undeclared state {state}")]
    UndeclaredState { index: usize, state: u32 },
    #[error("trace step {index}: undeclared action label {label:?}")]
    UndeclaredLabel { index: usize, label: ActionLabel },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceValidity {
    Valid,
    /// Step `index` (1-based) is not a row of the governing table.
    InvalidStep { index: usize },
}

impl TraceValidity {
    pub fn is_valid(&self) -> bool {
        matches!(self, TraceValidity::Valid)
    }
}

/// Checks that every consecutive triple of `trace` is a declared transition.
pub fn validate_trace(trace: &Trace, table: &TransitionTable) -> Result<TraceValidity, TraceError> {
    if !table.declares_state(trace.initial) {
        return Err(TraceError::UndeclaredState {
            index: 0,
            state: trace.initial.0,
        });
    }
    for (i, step) in trace.steps.iter().enumerate() {
        if !table.declares_label(&step.label) {
            return Err(TraceError::UndeclaredLabel {
                index: i + 1,
                label: step.label,
            });
        }
        if !table.declares_state(step.target) {
            return Err(TraceError::UndeclaredState {
                index: i + 1,
                state: step.target.0,
            });
        }
    }
    for i in 1..=trace.len() {
        if !table.contains(trace.state(i - 1), trace.label(i), trace.state(i)) {
            return Ok(TraceValidity::InvalidStep { index: i });
        }
    }
    Ok(TraceValidity::Valid)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Violation {
    /// 1-based step index of the committing arc.
    pub index: usize,
    /// State in which `T` fired.
    pub state: StateId,
    pub action: AgentId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PreservationVerdict {
    Preserved,
    Violated(Violation),
}

impl PreservationVerdict {
    pub fn violation(&self) -> Option<Violation> {
        match self {
            PreservationVerdict::Preserved => None,
            PreservationVerdict::Violated(v) => Some(*v),
        }
    }
}

/// Reports the first arc that commits `T` in a state where the action is not
/// admissible. Decision, environment and non-committing arcs never violate.
pub fn check_preservation(trace: &Trace, adm: &AdmissibilityTable) -> PreservationVerdict {
    for i in 1..=trace.len() {
        let label = trace.label(i);
        if !label.commits() {
            continue;
        }
        let action = label.agent_action().expect("committing arcs carry an agent action");
        let state = trace.state(i - 1);
        if !*adm.get(state, action) {
            return PreservationVerdict::Violated(Violation {
                index: i,
                state,
                action,
            });
        }
    }
    PreservationVerdict::Preserved
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}
