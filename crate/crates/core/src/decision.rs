//! Dispositions, decision/transition function tables, and the checks that
//! relate a decision table to the admissibility predicate.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AdmissibilityTable, AgentId, EnvId, StateActionTable, StateId};
use crate::scenario::ScenarioSpec;

/// Three-valued decision outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Disposition {
    Allow,
    Refuse,
    Escalate,
}

impl Disposition {
    pub const ALL: [Disposition; 3] = [Disposition::Allow, Disposition::Refuse, Disposition::Escalate];

    pub fn as_str(self) -> &'static str {
        match self {
            Disposition::Allow => "allow",
            Disposition::Refuse => "refuse",
            Disposition::Escalate => "escalate",
        }
    }

    pub fn parse(s: &str) -> Option<Disposition> {
        match s {
            "allow" => Some(Disposition::Allow),
            "refuse" => Some(Disposition::Refuse),
            "escalate" => Some(Disposition::Escalate),
            _ => None,
        }
    }
}

impl fmt::Display for Disposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Disposition::Allow => "Allow",
            Disposition::Refuse => "Refuse",
            Disposition::Escalate => "Escalate",
        };
        f.write_str(s)
    }
}

/// A supervisor's resolution verdict. Resolution never escalates again.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Allow,
    Refuse,
}

impl From<Verdict> for Disposition {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Allow => Disposition::Allow,
            Verdict::Refuse => Disposition::Refuse,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Disposition::from(*self).fmt(f)
    }
}

/// `D : S × A → Disposition`.
pub type DecisionTable = StateActionTable<Disposition>;

/// `T : S × A → S`.
pub type TransitionFunctionTable = StateActionTable<StateId>;

/// The four implications a decision table must satisfy against `Adm`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    /// `Allow ⇒ Adm`
    I,
    /// `Refuse ⇒ ¬Adm`
    II,
    /// `Adm ⇒ ≠ Refuse`
    III,
    /// `¬Adm ⇒ ≠ Allow`
    IV,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Condition::I => "(i)",
            Condition::II => "(ii)",
            Condition::III => "(iii)",
            Condition::IV => "(iv)",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyViolation {
    pub condition: Condition,
    pub state: StateId,
    pub action: AgentId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConsistencyVerdict {
    Consistent,
    Inconsistent(Vec<ConsistencyViolation>),
}

impl ConsistencyVerdict {
    pub fn is_consistent(&self) -> bool {
        matches!(self, ConsistencyVerdict::Consistent)
    }

    pub fn violations(&self) -> &[ConsistencyViolation] {
        match self {
            ConsistencyVerdict::Consistent => &[],
            ConsistencyVerdict::Inconsistent(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("decision table is {decision_states}x{decision_actions} but admissibility table is {adm_states}x{adm_actions}")]
pub struct DomainMismatch {
    pub decision_states: usize,
    pub decision_actions: usize,
    pub adm_states: usize,
    pub adm_actions: usize,
}

/// Checks conditions (i)–(iv) cell by cell. Every failed implication is
/// reported separately, so a single bad cell yields two entries.
pub fn check_consistency(
    decision: &DecisionTable,
    adm: &AdmissibilityTable,
) -> Result<ConsistencyVerdict, DomainMismatch> {
    if !decision.same_domain(adm) {
        return Err(DomainMismatch {
            decision_states: decision.states(),
            decision_actions: decision.actions(),
            adm_states: adm.states(),
            adm_actions: adm.actions(),
        });
    }
    let mut violations = Vec::new();
    for (state, action, &d) in decision.iter() {
        let admissible = *adm.get(state, action);
        let mut flag = |condition| {
            violations.push(ConsistencyViolation {
                condition,
                state,
                action,
            })
        };
        if d == Disposition::Allow && !admissible {
            flag(Condition::I);
        }
        if d == Disposition::Refuse && admissible {
            flag(Condition::II);
        }
        if admissible && d == Disposition::Refuse {
            flag(Condition::III);
        }
        if !admissible && d == Disposition::Allow {
            flag(Condition::IV);
        }
    }
    if violations.is_empty() {
        Ok(ConsistencyVerdict::Consistent)
    } else {
        Ok(ConsistencyVerdict::Inconsistent(violations))
    }
}

/// Builds `D` from `Adm`: `Escalate` where `escalate_on` holds, otherwise
/// `Allow` iff admissible.
pub fn derive_decision_from_adm(
    adm: &AdmissibilityTable,
    mut escalate_on: impl FnMut(StateId, AgentId) -> bool,
) -> DecisionTable {
    DecisionTable::from_fn(adm.states(), adm.actions(), |s, a| {
        if escalate_on(s, a) {
            Disposition::Escalate
        } else if *adm.get(s, a) {
            Disposition::Allow
        } else {
            Disposition::Refuse
        }
    })
}

/// Outcome of the non-triviality check, with witnesses for each half.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssumptionVerdict {
    /// Some `(s, a)` with `Adm(s, a)` and `D(s, a) = Allow`.
    pub grant: Option<(StateId, AgentId)>,
    /// Some `(s, a, e)` with `s --e--> s*` and `¬Adm(s*, a)`.
    pub disruption: Option<(StateId, AgentId, EnvId)>,
}

impl AssumptionVerdict {
    pub fn passes(&self) -> bool {
        self.grant.is_some() && self.disruption.is_some()
    }

    /// Human-readable reason for failure, `None` when the check passes.
    pub fn failure_reason(&self) -> Option<String> {
        match (self.grant.is_some(), self.disruption.is_some()) {
            (true, true) => None,
            (false, true) => Some(
                "non-triviality unmet: (i) no admissible action is allowed without escalation"
                    .to_string(),
            ),
            (true, false) => Some(
                "non-triviality unmet: (ii) no environment action makes an action inadmissible"
                    .to_string(),
            ),
            (false, false) => Some(
                "non-triviality unmet: neither (i) an allowed admissible action nor (ii) a disrupting environment action exists"
                    .to_string(),
            ),
        }
    }
}

/// Searches for witnesses of both non-triviality conditions, in state, then
/// action, then environment-row order.
pub fn check_nontriviality(scenario: &ScenarioSpec) -> AssumptionVerdict {
    let grant = scenario
        .adm
        .iter()
        .find(|&(s, a, &ok)| ok && *scenario.decision.get(s, a) == Disposition::Allow)
        .map(|(s, a, _)| (s, a));

    let mut disruption = None;
    'outer: for s in scenario.state_ids() {
        for a in scenario.agent_ids() {
            for (e, target) in scenario.env_successors(s) {
                if !*scenario.adm.get(target, a) {
                    disruption = Some((s, a, e));
                    break 'outer;
                }
            }
        }
    }
    AssumptionVerdict { grant, disruption }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::builtin;

    fn filelock() -> ScenarioSpec {
        builtin("filelock").unwrap()
    }

    #[test]
    fn canonical_table_is_consistent() {
        let sc = filelock();
        let d = derive_decision_from_adm(&sc.adm, |_, _| false);
        assert_eq!(d, sc.decision);
        assert!(check_consistency(&d, &sc.adm).unwrap().is_consistent());
    }

    #[test]
    fn allow_on_inadmissible_cell_violates_iv() {
        let sc = filelock();
        let mut d = sc.decision.clone();
        let locked = sc.state_named("s3").unwrap();
        d.set(locked, AgentId(0), Disposition::Allow);
        let verdict = check_consistency(&d, &sc.adm).unwrap();
        let conds: Vec<_> = verdict.violations().iter().map(|v| v.condition).collect();
        assert!(conds.contains(&Condition::IV));
        assert_eq!(conds, vec![Condition::I, Condition::IV]);
    }

    #[test]
    fn escalate_everywhere_is_consistent() {
        let sc = filelock();
        let d = DecisionTable::filled(sc.states.len(), 1, Disposition::Escalate);
        assert!(check_consistency(&d, &sc.adm).unwrap().is_consistent());
    }

    #[test]
    fn mismatched_domains_are_rejected() {
        let sc = filelock();
        let d = DecisionTable::filled(2, 1, Disposition::Refuse);
        assert!(check_consistency(&d, &sc.adm).is_err());
    }

    #[test]
    fn filelock_satisfies_nontriviality() {
        let sc = filelock();
        let v = check_nontriviality(&sc);
        assert!(v.passes());
        let write = sc.agent_named("write(f)").unwrap();
        let lock = sc.env_named("lock(f)").unwrap();
        assert_eq!(v.grant, Some((sc.initial, write)));
        assert_eq!(v.disruption, Some((sc.initial, write, lock)));
    }

    #[test]
    fn escalate_only_fails_grant() {
        let mut sc = filelock();
        sc.decision = DecisionTable::filled(sc.states.len(), 1, Disposition::Escalate);
        let v = check_nontriviality(&sc);
        assert!(v.grant.is_none());
        assert!(v.disruption.is_some());
        assert!(!v.passes());
    }

    #[test]
    fn state_independent_adm_fails_disruption() {
        let mut sc = filelock();
        sc.adm = AdmissibilityTable::filled(sc.states.len(), 1, true);
        sc.decision = derive_decision_from_adm(&sc.adm, |_, _| false);
        let v = check_nontriviality(&sc);
        assert!(v.grant.is_some());
        assert!(v.disruption.is_none());
        assert!(v.failure_reason().unwrap().contains("(ii)"));
    }

    #[test]
    fn escalate_predicate_marks_exactly_quota_one() {
        let sc = filelock();
        let quota = sc.attr_named("quota").unwrap();
        let d = derive_decision_from_adm(&sc.adm, |s, _| sc.value_name(s, quota) == "1");
        // Independent scan of the generated table.
        for s in sc.state_ids() {
            let expect_escalate = sc.value_name(s, quota) == "1";
            assert_eq!(*d.get(s, AgentId(0)) == Disposition::Escalate, expect_escalate);
        }
        assert!(check_consistency(&d, &sc.adm).unwrap().is_consistent());
    }

    #[test]
    fn single_state_table_has_one_row() {
        let adm = AdmissibilityTable::filled(1, 1, true);
        let d = derive_decision_from_adm(&adm, |_, _| false);
        assert_eq!(d.iter().count(), 1);
        assert_eq!(*d.get(StateId(0), AgentId(0)), Disposition::Allow);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn derived_tables_are_always_consistent(
                (states, actions, adm_bits, esc_bits) in (1usize..6, 1usize..4).prop_flat_map(|(s, a)| {
                    (Just(s), Just(a),
                     proptest::collection::vec(any::<bool>(), s * a),
                     proptest::collection::vec(any::<bool>(), s * a))
                })
            ) {
                let adm = AdmissibilityTable::from_fn(states, actions, |s, a| adm_bits[s.index() * actions + a.index()]);
                let d = derive_decision_from_adm(&adm, |s, a| esc_bits[s.index() * actions + a.index()]);
                let verdict = check_consistency(&d, &adm).unwrap();
                prop_assert!(verdict.is_consistent());
                for (s, a, &disp) in d.iter() {
                    if disp != Disposition::Escalate {
                        prop_assert_eq!(disp == Disposition::Allow, *adm.get(s, a));
                    }
                }
                // idempotent
                prop_assert_eq!(check_consistency(&d, &adm).unwrap(), verdict);
            }
        }
    }
}
