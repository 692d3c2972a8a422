//! Partial atomicity: the boundary fuses the local attributes with the
//! decision, while global attributes stay open to the environment between
//! `dec` and `exec`. A scenario is atomic under a partition iff admissibility
//! reads nothing the environment can change in that window.

use serde::{Deserialize, Serialize};

use crate::decision::{derive_decision_from_adm, Disposition};
use crate::explore::{Boundary, Construction, Explorer};
use crate::model::{AdmissibilityTable, AttrId, Trace, Violation};
use crate::scenario::{PartitionDescriptor, ScenarioSpec};

use super::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtomicityClass {
    Atomic,
    PartiallyAtomic,
    Split,
}

impl AtomicityClass {
    pub fn as_str(self) -> &'static str {
        match self {
            AtomicityClass::Atomic => "atomic",
            AtomicityClass::PartiallyAtomic => "partially-atomic",
            AtomicityClass::Split => "split",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub scenario: String,
    pub class: AtomicityClass,
    pub partition: PartitionDescriptor,
    pub depth: usize,
    /// Shortest violation through the unfused window, if one exists.
    pub witness: Option<(Trace, Violation)>,
}

/// Restricts `Adm` to the attributes in `dependency`: every other attribute
/// is pinned to its value in the initial state.
pub fn project_admissibility(sc: &ScenarioSpec, dependency: &[AttrId]) -> Result<AdmissibilityTable, HarnessError> {
    let init = &sc.states[sc.initial.index()].values;
    let mut pinned = Vec::with_capacity(sc.states.len());
    for s in sc.state_ids() {
        let values: Vec<u32> = (0..sc.attributes.len())
            .map(|i| {
                if dependency.contains(&AttrId::from(i)) {
                    sc.value(s, AttrId::from(i))
                } else {
                    init[i]
                }
            })
            .collect();
        let p = sc.state_with_values(&values).ok_or_else(|| {
            HarnessError::Invalid(format!(
                "no declared state matches {} with non-dependency attributes pinned",
                sc.state_name(s)
            ))
        })?;
        pinned.push(p);
    }
    Ok(AdmissibilityTable::from_fn(sc.states.len(), sc.agent_actions.len(), |s, a| {
        *sc.adm.get(pinned[s.index()], a)
    }))
}

/// Classifies `sc` under `partition` (falling back to the scenario's own).
/// With a split primary boundary, environment rows touching a local
/// attribute cannot fire between `dec` and `exec`.
pub fn classify_partial_atomicity(
    sc: &ScenarioSpec,
    partition: Option<&PartitionDescriptor>,
    primary: Boundary,
    depth: usize,
) -> Result<Classification, HarnessError> {
    let partition = partition
        .or(sc.partition.as_ref())
        .ok_or_else(|| HarnessError::MissingPartition(sc.name.clone()))?
        .clone();
    partition.validate(sc.attributes.len())?;

    let mut projected = sc.clone();
    projected.adm = project_admissibility(sc, &partition.adm_dependency)?;
    projected.decision = derive_decision_from_adm(&projected.adm, |s, a| {
        *sc.decision.get(s, a) == Disposition::Escalate
    });

    let construction = match primary {
        Boundary::Atomic => Construction::atomic(),
        Boundary::Split => Construction::split().with_fused(partition.local.clone()),
    };
    let witness = Explorer::new(&projected, construction)?.find_witness(depth).witness;
    let class = match (&witness, partition.local.is_empty()) {
        (None, _) => AtomicityClass::Atomic,
        (Some(_), true) => AtomicityClass::Split,
        (Some(_), false) => AtomicityClass::PartiallyAtomic,
    };
    Ok(Classification {
        scenario: sc.name.clone(),
        class,
        partition,
        depth,
        witness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::builtin;

    #[test]
    fn k8s_reads_global_quota() {
        let sc = builtin("k8s-quota").unwrap();
        let c = classify_partial_atomicity(&sc, None, Boundary::Split, sc.default_depth()).unwrap();
        assert_eq!(c.class, AtomicityClass::PartiallyAtomic);
        let (trace, v) = c.witness.unwrap();
        assert_eq!(v.index, trace.len());
    }

    #[test]
    fn k8s_local_dependency_is_atomic() {
        let sc = builtin("k8s-quota").unwrap();
        let spec = sc.attr_named("spec").unwrap();
        let mut p = sc.partition.clone().unwrap();
        p.adm_dependency = vec![spec];
        let c = classify_partial_atomicity(&sc, Some(&p), Boundary::Split, sc.default_depth()).unwrap();
        assert_eq!(c.class, AtomicityClass::Atomic);
    }

    #[test]
    fn all_global_partition_is_split() {
        let sc = builtin("filelock").unwrap();
        let c = classify_partial_atomicity(&sc, None, Boundary::Split, sc.default_depth()).unwrap();
        assert_eq!(c.class, AtomicityClass::Split);
    }

    #[test]
    fn atomic_primary_is_atomic() {
        let sc = builtin("k8s-quota").unwrap();
        let c = classify_partial_atomicity(&sc, None, Boundary::Atomic, sc.default_depth()).unwrap();
        assert_eq!(c.class, AtomicityClass::Atomic);
    }

    #[test]
    fn missing_partition_is_reported() {
        let mut sc = builtin("k8s-quota").unwrap();
        sc.partition = None;
        assert_eq!(
            classify_partial_atomicity(&sc, None, Boundary::Split, 4),
            Err(HarnessError::MissingPartition("k8s-quota".into()))
        );
    }

    #[test]
    fn projection_onto_everything_is_identity() {
        let sc = builtin("k8s-quota").unwrap();
        let all: Vec<_> = (0..sc.attributes.len()).map(AttrId::from).collect();
        assert_eq!(project_admissibility(&sc, &all).unwrap(), sc.adm);
    }
}
