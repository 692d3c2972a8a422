//! Finite, fully tabulated scenarios and the builder that produces them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decision::{derive_decision_from_adm, DecisionTable, Disposition, TransitionFunctionTable};
use crate::model::{
    ActionLabel, AdmissibilityTable, AgentId, AttrId, EnvId, StateId, TransitionTable, ValueId,
};
use crate::split::ExternalStateSpec;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub values: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDef {
    pub name: String,
    /// Value index per attribute, in attribute declaration order.
    pub values: Vec<u32>,
}

/// Split of the state attributes into a locally fused part and a global part,
/// together with the attributes admissibility is taken to read.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionDescriptor {
    pub local: Vec<AttrId>,
    pub global: Vec<AttrId>,
    pub adm_dependency: Vec<AttrId>,
}

impl PartitionDescriptor {
    pub fn all_local(attrs: usize) -> Self {
        let all: Vec<AttrId> = (0..attrs).map(AttrId::from).collect();
        PartitionDescriptor {
            local: all.clone(),
            global: Vec::new(),
            adm_dependency: all,
        }
    }

    pub fn all_global(attrs: usize) -> Self {
        let all: Vec<AttrId> = (0..attrs).map(AttrId::from).collect();
        PartitionDescriptor {
            local: Vec::new(),
            global: all.clone(),
            adm_dependency: all,
        }
    }

    /// `local ∪ global` must be every attribute, with no overlap.
    pub fn validate(&self, attrs: usize) -> Result<(), ScenarioError> {
        let local: BTreeSet<_> = self.local.iter().copied().collect();
        let global: BTreeSet<_> = self.global.iter().copied().collect();
        if let Some(a) = local.intersection(&global).next() {
            return Err(ScenarioError::Partition(format!(
                "attribute {} is both local and global",
                a.0
            )));
        }
        let covered = local.len() + global.len();
        let in_range = local
            .iter()
            .chain(global.iter())
            .chain(self.adm_dependency.iter())
            .all(|a| a.index() < attrs);
        if !in_range || covered != attrs {
            return Err(ScenarioError::Partition(format!(
                "local and global attributes must cover all {attrs} attributes exactly"
            )));
        }
        Ok(())
    }

    pub fn reads_global(&self) -> bool {
        self.adm_dependency.iter().any(|a| self.global.contains(a))
    }
}

/// A finite scenario: states, actions, admissibility, decision and
/// transition tables, environment moves, and the optional external store
/// and partition blocks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub attributes: Vec<Attribute>,
    pub states: Vec<StateDef>,
    /// Sorted by name.
    pub agent_actions: Vec<String>,
    /// Sorted by name.
    pub env_actions: Vec<String>,
    pub env_transitions: TransitionTable,
    pub adm: AdmissibilityTable,
    pub decision: DecisionTable,
    pub transition: TransitionFunctionTable,
    pub initial: StateId,
    pub external: Option<ExternalStateSpec>,
    pub partition: Option<PartitionDescriptor>,
}

impl ScenarioSpec {
    pub fn state_ids(&self) -> impl Iterator<Item = StateId> {
        (0..self.states.len()).map(StateId::from)
    }

    pub fn agent_ids(&self) -> impl Iterator<Item = AgentId> {
        (0..self.agent_actions.len()).map(AgentId::from)
    }

    pub fn env_ids(&self) -> impl Iterator<Item = EnvId> {
        (0..self.env_actions.len()).map(EnvId::from)
    }

    /// Environment rows leaving `state`, ordered by action name then target.
    pub fn env_successors(&self, state: StateId) -> impl Iterator<Item = (EnvId, StateId)> + '_ {
        self.env_transitions.from_state(state).filter_map(|(label, t)| match label {
            ActionLabel::Env { action } => Some((action, t)),
            _ => None,
        })
    }

    pub fn state_named(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|s| s.name == name).map(StateId::from)
    }

    pub fn agent_named(&self, name: &str) -> Option<AgentId> {
        self.agent_actions.iter().position(|a| a == name).map(AgentId::from)
    }

    pub fn env_named(&self, name: &str) -> Option<EnvId> {
        self.env_actions.iter().position(|a| a == name).map(EnvId::from)
    }

    pub fn attr_named(&self, name: &str) -> Option<AttrId> {
        self.attributes.iter().position(|a| a.name == name).map(AttrId::from)
    }

    pub fn value(&self, state: StateId, attr: AttrId) -> u32 {
        self.states[state.index()].values[attr.index()]
    }

    pub fn value_name(&self, state: StateId, attr: AttrId) -> &str {
        &self.attributes[attr.index()].values[self.value(state, attr) as usize]
    }

    pub fn state_name(&self, state: StateId) -> &str {
        &self.states[state.index()].name
    }

    pub fn agent_name(&self, action: AgentId) -> &str {
        &self.agent_actions[action.index()]
    }

    pub fn env_name(&self, action: EnvId) -> &str {
        &self.env_actions[action.index()]
    }

    /// `s0{locked=none, quota=0}`
    pub fn describe_state(&self, state: StateId) -> String {
        let attrs: Vec<String> = self
            .attributes
            .iter()
            .enumerate()
            .map(|(i, a)| format!("{}={}", a.name, self.value_name(state, AttrId::from(i))))
            .collect();
        format!("{}{{{}}}", self.state_name(state), attrs.join(", "))
    }

    pub fn render_label(&self, label: &ActionLabel) -> String {
        match *label {
            ActionLabel::Agent {
                action,
                disposition,
            } => format!("F({}) = {}", self.agent_name(action), disposition),
            ActionLabel::Env { action } => format!("env {}", self.env_name(action)),
            ActionLabel::Dec {
                action,
                disposition,
            } => format!("dec({}) records {}", self.agent_name(action), disposition),
            ActionLabel::Exec {
                action,
                disposition,
            } => format!("exec({}) [recorded {}]", self.agent_name(action), disposition),
            ActionLabel::Resolve {
                action,
                origin,
                verdict,
                atomic,
            } => format!(
                "{} resolve({}, {}) = {}",
                if atomic { "atomic" } else { "split" },
                self.state_name(origin),
                self.agent_name(action),
                verdict
            ),
        }
    }

    /// The state whose attribute values are `values`, if declared.
    pub fn state_with_values(&self, values: &[u32]) -> Option<StateId> {
        self.states
            .iter()
            .position(|s| s.values == values)
            .map(StateId::from)
    }

    /// Default exploration bound: state count plus two.
    pub fn default_depth(&self) -> usize {
        self.states.len() + 2
    }

    /// Re-checks the structural invariants a loaded scenario must satisfy.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let n = self.states.len();
        let a = self.agent_actions.len();
        if n == 0 {
            return Err(ScenarioError::Invalid("scenario declares no states".into()));
        }
        if self.initial.index() >= n {
            return Err(ScenarioError::Invalid("initial state undeclared".into()));
        }
        for name in &self.agent_actions {
            if self.env_actions.contains(name) {
                return Err(ScenarioError::Overlap(name.clone()));
            }
        }
        for (what, ok) in [
            ("adm", self.adm.states() == n && self.adm.actions() == a),
            ("decide", self.decision.states() == n && self.decision.actions() == a),
            ("trans", self.transition.states() == n && self.transition.actions() == a),
        ] {
            if !ok {
                return Err(ScenarioError::Invalid(format!("{what} table does not cover S x A")));
            }
        }
        if self.transition.iter().any(|(_, _, t)| t.index() >= n) {
            return Err(ScenarioError::Invalid("trans row targets undeclared state".into()));
        }
        for &(s, label, t) in self.env_transitions.rows() {
            let ok = s.index() < n
                && t.index() < n
                && matches!(label, ActionLabel::Env { action } if action.index() < self.env_actions.len());
            if !ok {
                return Err(ScenarioError::Invalid("malformed env transition row".into()));
            }
        }
        for st in &self.states {
            if st.values.len() != self.attributes.len()
                || st
                    .values
                    .iter()
                    .zip(&self.attributes)
                    .any(|(&v, attr)| v as usize >= attr.values.len())
            {
                return Err(ScenarioError::Invalid(format!("state {} has malformed attributes", st.name)));
            }
        }
        if let Some(ext) = &self.external {
            ext.validate(n, a, self.env_actions.len())?;
        }
        if let Some(p) = &self.partition {
            p.validate(self.attributes.len())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{table} table is not total; missing rows: {}", format_missing(.missing))]
    Totality {
        table: &'static str,
        missing: Vec<String>,
    },
    #[error("action `{0}` is declared both as agent and environment action")]
    Overlap(String),
    #[error("duplicate {what} `{name}`")]
    Duplicate { what: &'static str, name: String },
    #[error("undeclared {what} `{name}`")]
    Undeclared { what: &'static str, name: String },
    #[error("ill-formed partition: {0}")]
    Partition(String),
    #[error("unknown builtin scenario `{0}`")]
    UnknownBuiltin(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("cannot read scenario file {path}: {message}")]
    Io { path: String, message: String },
}

fn format_missing(missing: &[String]) -> String {
    const SHOWN: usize = 8;
    let mut s = missing.iter().take(SHOWN).cloned().collect::<Vec<_>>().join(", ");
    if missing.len() > SHOWN {
        s.push_str(&format!(", ... ({} total)", missing.len()));
    }
    s
}

/// Read-only view of one state's attribute values, used by the tabulating
/// builder helpers.
#[derive(Clone, Copy)]
pub struct StateView<'a> {
    attributes: &'a [Attribute],
    state: &'a StateDef,
}

impl<'a> StateView<'a> {
    pub fn name(&self) -> &'a str {
        &self.state.name
    }

    /// Value of attribute `attr`.
    ///
    /// # Panics
    /// If `attr` is not declared.
    pub fn get(&self, attr: &str) -> &'a str {
        let i = self
            .attributes
            .iter()
            .position(|a| a.name == attr)
            .unwrap_or_else(|| panic!("undeclared attribute {attr}"));
        &self.attributes[i].values[self.state.values[i] as usize]
    }
}

#[derive(Clone, Debug, Default)]
struct ExternalDraft {
    values: Vec<String>,
    read: BTreeMap<String, String>,
    decision: BTreeMap<(String, String, String), Disposition>,
    effects: BTreeMap<(String, String), String>,
}

/// Name-keyed accumulator for scenario tables. Both the builtin library and
/// the file loader go through it, so totality and disjointness are checked in
/// one place.
#[derive(Clone, Debug, Default)]
pub struct ScenarioBuilder {
    name: String,
    attributes: Vec<Attribute>,
    states: Vec<StateDef>,
    agents: Vec<String>,
    envs: Vec<String>,
    initial: Option<String>,
    adm: BTreeMap<(String, String), bool>,
    decision: BTreeMap<(String, String), Disposition>,
    decide_from_adm: Option<Vec<(String, String)>>,
    transition: BTreeMap<(String, String), String>,
    env_rows: BTreeSet<(String, String, String)>,
    external: Option<ExternalDraft>,
    partition: Option<[Vec<String>; 3]>,
}

impl ScenarioBuilder {
    pub fn new(name: impl Into<String>) -> Self {
        ScenarioBuilder {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn has_attr(&self, name: &str) -> bool {
        self.attributes.iter().any(|a| a.name == name)
    }

    pub fn has_state(&self, name: &str) -> bool {
        self.states.iter().any(|s| s.name == name)
    }

    pub fn has_agent(&self, name: &str) -> bool {
        self.agents.iter().any(|a| a == name)
    }

    pub fn has_env(&self, name: &str) -> bool {
        self.envs.iter().any(|a| a == name)
    }

    pub fn has_external_value(&self, name: &str) -> bool {
        self.external
            .as_ref()
            .is_some_and(|e| e.values.iter().any(|v| v == name))
    }

    pub fn attr_has_value(&self, attr: &str, value: &str) -> bool {
        self.attributes
            .iter()
            .find(|a| a.name == attr)
            .is_some_and(|a| a.values.iter().any(|v| v == value))
    }

    pub fn attr(&mut self, name: &str, values: &[&str]) -> Result<&mut Self, ScenarioError> {
        if self.has_attr(name) {
            return Err(ScenarioError::Duplicate {
                what: "attribute",
                name: name.into(),
            });
        }
        let mut seen = BTreeSet::new();
        for v in values {
            if !seen.insert(*v) {
                return Err(ScenarioError::Duplicate {
                    what: "attribute value",
                    name: format!("{name}={v}"),
                });
            }
        }
        if values.is_empty() {
            return Err(ScenarioError::Invalid(format!("attribute {name} has no values")));
        }
        self.attributes.push(Attribute {
            name: name.into(),
            values: values.iter().map(|v| v.to_string()).collect(),
        });
        Ok(self)
    }

    /// Declares one state from `attr=value` assignments; every attribute must
    /// be assigned.
    pub fn state(&mut self, name: &str, assignments: &[(&str, &str)]) -> Result<&mut Self, ScenarioError> {
        if self.has_state(name) {
            return Err(ScenarioError::Duplicate {
                what: "state",
                name: name.into(),
            });
        }
        let mut values = vec![None; self.attributes.len()];
        for (attr, value) in assignments {
            let i = self
                .attributes
                .iter()
                .position(|a| a.name == *attr)
                .ok_or_else(|| ScenarioError::Undeclared {
                    what: "attribute",
                    name: attr.to_string(),
                })?;
            let v = self.attributes[i]
                .values
                .iter()
                .position(|x| x == value)
                .ok_or_else(|| ScenarioError::Undeclared {
                    what: "attribute value",
                    name: format!("{attr}={value}"),
                })?;
            values[i] = Some(v as u32);
        }
        let values: Option<Vec<u32>> = values.into_iter().collect();
        let values = values.ok_or_else(|| {
            ScenarioError::Invalid(format!("state {name} does not assign every attribute"))
        })?;
        if self.states.iter().any(|s| s.values == values) {
            return Err(ScenarioError::Duplicate {
                what: "state valuation",
                name: name.into(),
            });
        }
        self.states.push(StateDef {
            name: name.into(),
            values,
        });
        Ok(self)
    }

    /// Declares every combination of attribute values as a state, named
    /// `s0, s1, ...` with the first attribute varying slowest.
    pub fn product_states(&mut self) -> Result<&mut Self, ScenarioError> {
        if !self.states.is_empty() {
            return Err(ScenarioError::Invalid(
                "product states cannot be combined with explicit states".into(),
            ));
        }
        let mut combos: Vec<Vec<u32>> = vec![Vec::new()];
        for attr in &self.attributes {
            combos = combos
                .into_iter()
                .flat_map(|prefix| {
                    (0..attr.values.len() as u32).map(move |v| {
                        let mut p = prefix.clone();
                        p.push(v);
                        p
                    })
                })
                .collect();
        }
        self.states = combos
            .into_iter()
            .enumerate()
            .map(|(i, values)| StateDef {
                name: format!("s{i}"),
                values,
            })
            .collect();
        Ok(self)
    }

    pub fn agent(&mut self, name: &str) -> Result<&mut Self, ScenarioError> {
        if self.has_agent(name) {
            return Err(ScenarioError::Duplicate {
                what: "agent action",
                name: name.into(),
            });
        }
        if self.has_env(name) {
            return Err(ScenarioError::Overlap(name.into()));
        }
        self.agents.push(name.into());
        Ok(self)
    }

    pub fn env(&mut self, name: &str) -> Result<&mut Self, ScenarioError> {
        if self.has_env(name) {
            return Err(ScenarioError::Duplicate {
                what: "environment action",
                name: name.into(),
            });
        }
        if self.has_agent(name) {
            return Err(ScenarioError::Overlap(name.into()));
        }
        self.envs.push(name.into());
        Ok(self)
    }

    pub fn initial(&mut self, state: &str) -> &mut Self {
        self.initial = Some(state.into());
        self
    }

    pub fn adm(&mut self, state: &str, action: &str, value: bool) -> Result<&mut Self, ScenarioError> {
        insert_unique(&mut self.adm, (state.into(), action.into()), value, "adm row")?;
        Ok(self)
    }

    pub fn decide(&mut self, state: &str, action: &str, d: Disposition) -> Result<&mut Self, ScenarioError> {
        insert_unique(&mut self.decision, (state.into(), action.into()), d, "decide row")?;
        Ok(self)
    }

    /// Derive the decision table from `adm`, escalating in states that match
    /// every `attr=value` condition (no escalation when empty).
    pub fn decide_from_adm(&mut self, escalate_when: &[(&str, &str)]) -> &mut Self {
        self.decide_from_adm = Some(
            escalate_when
                .iter()
                .map(|(a, v)| (a.to_string(), v.to_string()))
                .collect(),
        );
        self
    }

    pub fn trans(&mut self, state: &str, action: &str, target: &str) -> Result<&mut Self, ScenarioError> {
        insert_unique(
            &mut self.transition,
            (state.into(), action.into()),
            target.to_string(),
            "trans row",
        )?;
        Ok(self)
    }

    pub fn env_trans(&mut self, state: &str, env: &str, target: &str) -> Result<&mut Self, ScenarioError> {
        if !self.env_rows.insert((state.into(), env.into(), target.into())) {
            return Err(ScenarioError::Duplicate {
                what: "envtrans row",
                name: format!("{state} {env} {target}"),
            });
        }
        Ok(self)
    }

    pub fn external_values(&mut self, values: &[&str]) -> Result<&mut Self, ScenarioError> {
        if self.external.is_some() {
            return Err(ScenarioError::Duplicate {
                what: "external block",
                name: "external".into(),
            });
        }
        self.external = Some(ExternalDraft {
            values: values.iter().map(|v| v.to_string()).collect(),
            ..Default::default()
        });
        Ok(self)
    }

    fn external_mut(&mut self) -> Result<&mut ExternalDraft, ScenarioError> {
        self.external
            .as_mut()
            .ok_or_else(|| ScenarioError::Invalid("external rows before `external` declaration".into()))
    }

    pub fn ext_read(&mut self, state: &str, value: &str) -> Result<&mut Self, ScenarioError> {
        let ext = self.external_mut()?;
        insert_unique(&mut ext.read, state.into(), value.to_string(), "extread row")?;
        Ok(self)
    }

    pub fn ext_decide(
        &mut self,
        state: &str,
        action: &str,
        value: &str,
        d: Disposition,
    ) -> Result<&mut Self, ScenarioError> {
        let ext = self.external_mut()?;
        insert_unique(
            &mut ext.decision,
            (state.into(), action.into(), value.into()),
            d,
            "extdecide row",
        )?;
        Ok(self)
    }

    pub fn ext_effect(&mut self, env: &str, from: &str, to: &str) -> Result<&mut Self, ScenarioError> {
        let ext = self.external_mut()?;
        insert_unique(&mut ext.effects, (env.into(), from.into()), to.to_string(), "exteffect row")?;
        Ok(self)
    }

    pub fn partition(&mut self, local: &[&str], global: &[&str], adm: &[&str]) -> &mut Self {
        let own = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        self.partition = Some([own(local), own(global), own(adm)]);
        self
    }

    /// Sets one part (`0` local, `1` global, `2` adm) of the partition block.
    pub fn partition_part(&mut self, part: usize, attrs: Vec<String>) -> &mut Self {
        let p = self.partition.get_or_insert_with(Default::default);
        p[part] = attrs;
        self
    }

    pub fn state_views(&self) -> Vec<StateView<'_>> {
        self.states
            .iter()
            .map(|state| StateView {
                attributes: &self.attributes,
                state,
            })
            .collect()
    }

    fn state_with(&self, base: &StateDef, updates: &[(&str, &str)]) -> Result<String, ScenarioError> {
        let mut values = base.values.clone();
        for (attr, value) in updates {
            let i = self
                .attributes
                .iter()
                .position(|a| a.name == *attr)
                .ok_or_else(|| ScenarioError::Undeclared {
                    what: "attribute",
                    name: attr.to_string(),
                })?;
            values[i] = self.attributes[i]
                .values
                .iter()
                .position(|v| v == value)
                .ok_or_else(|| ScenarioError::Undeclared {
                    what: "attribute value",
                    name: format!("{attr}={value}"),
                })? as u32;
        }
        self.states
            .iter()
            .find(|s| s.values == values)
            .map(|s| s.name.clone())
            .ok_or_else(|| ScenarioError::Invalid(format!("no state matches update {updates:?} of {}", base.name)))
    }

    /// Fills `Adm(·, action)` from a predicate over state attributes.
    pub fn tabulate_adm(&mut self, action: &str, f: impl Fn(StateView<'_>) -> bool) -> Result<&mut Self, ScenarioError> {
        let rows: Vec<(String, bool)> = self
            .state_views()
            .into_iter()
            .map(|v| (v.name().to_string(), f(v)))
            .collect();
        for (s, ok) in rows {
            self.adm(&s, action, ok)?;
        }
        Ok(self)
    }

    /// Fills `T(·, action)` from attribute updates applied to each state.
    pub fn tabulate_trans<'u>(
        &mut self,
        action: &str,
        f: impl Fn(StateView<'_>) -> Vec<(&'u str, String)>,
    ) -> Result<&mut Self, ScenarioError> {
        let mut rows = Vec::new();
        for state in &self.states {
            let view = StateView {
                attributes: &self.attributes,
                state,
            };
            let updates = f(view);
            let updates: Vec<(&str, &str)> = updates.iter().map(|(a, v)| (*a, v.as_str())).collect();
            rows.push((state.name.clone(), self.state_with(state, &updates)?));
        }
        for (s, t) in rows {
            self.trans(&s, action, &t)?;
        }
        Ok(self)
    }

    /// Adds an environment row from every state for which `f` yields updates.
    pub fn tabulate_env<'u>(
        &mut self,
        env: &str,
        f: impl Fn(StateView<'_>) -> Option<Vec<(&'u str, String)>>,
    ) -> Result<&mut Self, ScenarioError> {
        let mut rows = Vec::new();
        for state in &self.states {
            let view = StateView {
                attributes: &self.attributes,
                state,
            };
            if let Some(updates) = f(view) {
                let updates: Vec<(&str, &str)> = updates.iter().map(|(a, v)| (*a, v.as_str())).collect();
                rows.push((state.name.clone(), self.state_with(state, &updates)?));
            }
        }
        for (s, t) in rows {
            self.env_trans(&s, env, &t)?;
        }
        Ok(self)
    }

    pub fn build(&self) -> Result<ScenarioSpec, ScenarioError> {
        let mut agent_actions = self.agents.clone();
        agent_actions.sort();
        let mut env_actions = self.envs.clone();
        env_actions.sort();
        let n = self.states.len();
        let na = agent_actions.len();
        if n == 0 {
            return Err(ScenarioError::Invalid("scenario declares no states".into()));
        }

        let state_idx = |name: &str| -> Result<StateId, ScenarioError> {
            self.states
                .iter()
                .position(|s| s.name == name)
                .map(StateId::from)
                .ok_or_else(|| ScenarioError::Undeclared {
                    what: "state",
                    name: name.into(),
                })
        };
        let agent_idx = |name: &str| -> Result<AgentId, ScenarioError> {
            agent_actions
                .iter()
                .position(|a| a == name)
                .map(AgentId::from)
                .ok_or_else(|| ScenarioError::Undeclared {
                    what: "agent action",
                    name: name.into(),
                })
        };
        let env_idx = |name: &str| -> Result<EnvId, ScenarioError> {
            env_actions
                .iter()
                .position(|a| a == name)
                .map(EnvId::from)
                .ok_or_else(|| ScenarioError::Undeclared {
                    what: "environment action",
                    name: name.into(),
                })
        };

        let initial = state_idx(
            self.initial
                .as_deref()
                .ok_or_else(|| ScenarioError::Invalid("no initial state declared".into()))?,
        )?;

        fn tabulate<T: Clone>(
            table: &'static str,
            n: usize,
            na: usize,
            rows: impl Iterator<Item = Result<(StateId, AgentId, T), ScenarioError>>,
            states: &[StateDef],
            agents: &[String],
        ) -> Result<crate::model::StateActionTable<T>, ScenarioError> {
            let mut cells: Vec<Option<T>> = vec![None; n * na];
            for row in rows {
                let (s, a, v) = row?;
                cells[s.index() * na + a.index()] = Some(v);
            }
            let missing: Vec<String> = cells
                .iter()
                .enumerate()
                .filter(|(_, c)| c.is_none())
                .map(|(i, _)| format!("({}, {})", states[i / na].name, agents[i % na]))
                .collect();
            if !missing.is_empty() {
                return Err(ScenarioError::Totality { table, missing });
            }
            Ok(crate::model::StateActionTable::from_fn(n, na, |s, a| {
                cells[s.index() * na + a.index()].clone().unwrap()
            }))
        }

        let adm = tabulate(
            "adm",
            n,
            na,
            self.adm
                .iter()
                .map(|((s, a), v)| Ok((state_idx(s)?, agent_idx(a)?, *v))),
            &self.states,
            &agent_actions,
        )?;

        let decision = match &self.decide_from_adm {
            Some(conds) => {
                if !self.decision.is_empty() {
                    return Err(ScenarioError::Invalid(
                        "explicit decide rows cannot be combined with decide-from-adm".into(),
                    ));
                }
                let mut resolved = Vec::new();
                for (attr, value) in conds {
                    let i = self
                        .attributes
                        .iter()
                        .position(|a| &a.name == attr)
                        .ok_or_else(|| ScenarioError::Undeclared {
                            what: "attribute",
                            name: attr.clone(),
                        })?;
                    let v = self.attributes[i]
                        .values
                        .iter()
                        .position(|x| x == value)
                        .ok_or_else(|| ScenarioError::Undeclared {
                            what: "attribute value",
                            name: format!("{attr}={value}"),
                        })?;
                    resolved.push((i, v as u32));
                }
                let states = &self.states;
                derive_decision_from_adm(&adm, |s, _| {
                    !resolved.is_empty()
                        && resolved
                            .iter()
                            .all(|&(i, v)| states[s.index()].values[i] == v)
                })
            }
            None => tabulate(
                "decide",
                n,
                na,
                self.decision
                    .iter()
                    .map(|((s, a), v)| Ok((state_idx(s)?, agent_idx(a)?, *v))),
                &self.states,
                &agent_actions,
            )?,
        };

        let transition = tabulate(
            "trans",
            n,
            na,
            self.transition
                .iter()
                .map(|((s, a), t)| Ok((state_idx(s)?, agent_idx(a)?, state_idx(t)?))),
            &self.states,
            &agent_actions,
        )?;

        let mut env_transitions = TransitionTable::new(n, na, env_actions.len());
        for (s, e, t) in &self.env_rows {
            env_transitions.insert(
                state_idx(s)?,
                ActionLabel::Env { action: env_idx(e)? },
                state_idx(t)?,
            );
        }

        let external = match &self.external {
            None => None,
            Some(draft) => {
                let nv = draft.values.len();
                if nv == 0 {
                    return Err(ScenarioError::Invalid("external store declares no values".into()));
                }
                let value_idx = |name: &str| -> Result<ValueId, ScenarioError> {
                    draft
                        .values
                        .iter()
                        .position(|v| v == name)
                        .map(ValueId::from)
                        .ok_or_else(|| ScenarioError::Undeclared {
                            what: "external value",
                            name: name.into(),
                        })
                };
                let mut read = vec![None; n];
                for (s, v) in &draft.read {
                    read[state_idx(s)?.index()] = Some(value_idx(v)?);
                }
                let missing: Vec<String> = read
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| r.is_none())
                    .map(|(i, _)| self.states[i].name.clone())
                    .collect();
                if !missing.is_empty() {
                    return Err(ScenarioError::Totality {
                        table: "extread",
                        missing,
                    });
                }
                let mut cells = vec![None; n * na * nv];
                for ((s, a, v), d) in &draft.decision {
                    let i = (state_idx(s)?.index() * na + agent_idx(a)?.index()) * nv + value_idx(v)?.index();
                    cells[i] = Some(*d);
                }
                let missing: Vec<String> = cells
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.is_none())
                    .map(|(i, _)| {
                        format!(
                            "({}, {}, {})",
                            self.states[i / (na * nv)].name,
                            agent_actions[(i / nv) % na],
                            draft.values[i % nv]
                        )
                    })
                    .collect();
                if !missing.is_empty() {
                    return Err(ScenarioError::Totality {
                        table: "extdecide",
                        missing,
                    });
                }
                let mut effects: BTreeMap<EnvId, Vec<ValueId>> = BTreeMap::new();
                for ((e, from), to) in &draft.effects {
                    let e = env_idx(e)?;
                    let map = effects
                        .entry(e)
                        .or_insert_with(|| (0..nv).map(ValueId::from).collect());
                    map[value_idx(from)?.index()] = value_idx(to)?;
                }
                Some(ExternalStateSpec {
                    values: draft.values.clone(),
                    read: read.into_iter().map(Option::unwrap).collect(),
                    decision: cells.into_iter().map(Option::unwrap).collect(),
                    agents: na,
                    effects,
                })
            }
        };

        let partition = match &self.partition {
            None => None,
            Some([local, global, adm_dep]) => {
                let resolve = |names: &Vec<String>| -> Result<Vec<AttrId>, ScenarioError> {
                    names
                        .iter()
                        .map(|n| {
                            self.attributes
                                .iter()
                                .position(|a| &a.name == n)
                                .map(AttrId::from)
                                .ok_or_else(|| ScenarioError::Undeclared {
                                    what: "attribute",
                                    name: n.clone(),
                                })
                        })
                        .collect()
                };
                Some(PartitionDescriptor {
                    local: resolve(local)?,
                    global: resolve(global)?,
                    adm_dependency: resolve(adm_dep)?,
                })
            }
        };

        let spec = ScenarioSpec {
            name: self.name.clone(),
            attributes: self.attributes.clone(),
            states: self.states.clone(),
            agent_actions,
            env_actions,
            env_transitions,
            adm,
            decision,
            transition,
            initial,
            external,
            partition,
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn insert_unique<K: Ord + fmt::Debug, V>(
    map: &mut BTreeMap<K, V>,
    key: K,
    value: V,
    what: &'static str,
) -> Result<(), ScenarioError> {
    if map.contains_key(&key) {
        return Err(ScenarioError::Duplicate {
            what,
            name: format!("{key:?}"),
        });
    }
    map.insert(key, value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ScenarioBuilder {
        let mut b = ScenarioBuilder::new("tiny");
        b.attr("flag", &["off", "on"]).unwrap();
        b.product_states().unwrap();
        b.agent("go").unwrap();
        b.env("flip").unwrap();
        b.initial("s0");
        b
    }

    #[test]
    fn missing_adm_row_is_named() {
        let mut b = tiny();
        b.adm("s0", "go", true).unwrap();
        b.decide_from_adm(&[]);
        b.trans("s0", "go", "s0").unwrap();
        b.trans("s1", "go", "s1").unwrap();
        match b.build() {
            Err(ScenarioError::Totality { table, missing }) => {
                assert_eq!(table, "adm");
                assert_eq!(missing, vec!["(s1, go)".to_string()]);
            }
            other => panic!("expected totality error, got {other:?}"),
        }
    }

    #[test]
    fn agent_and_env_names_must_be_disjoint() {
        let mut b = tiny();
        assert_eq!(b.env("go").unwrap_err(), ScenarioError::Overlap("go".into()));
        assert_eq!(b.agent("flip").unwrap_err(), ScenarioError::Overlap("flip".into()));
    }

    #[test]
    fn partition_must_cover_and_be_disjoint() {
        let p = PartitionDescriptor {
            local: vec![AttrId(0)],
            global: vec![AttrId(0)],
            adm_dependency: vec![],
        };
        assert!(p.validate(1).is_err());
        let p = PartitionDescriptor {
            local: vec![AttrId(0)],
            global: vec![],
            adm_dependency: vec![],
        };
        assert!(p.validate(2).is_err());
        assert!(PartitionDescriptor::all_global(2).validate(2).is_ok());
    }

    #[test]
    fn product_states_vary_last_attribute_fastest() {
        let mut b = ScenarioBuilder::new("p");
        b.attr("a", &["x", "y"]).unwrap();
        b.attr("b", &["0", "1", "2"]).unwrap();
        b.product_states().unwrap();
        let names: Vec<_> = b.state_views().iter().map(|v| format!("{}{}", v.get("a"), v.get("b"))).collect();
        assert_eq!(names, ["x0", "x1", "x2", "y0", "y1", "y2"]);
    }
}
