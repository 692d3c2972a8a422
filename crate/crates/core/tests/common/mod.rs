#![allow(dead_code)]

use adb_core::{ScenarioBuilder, ScenarioSpec};
use proptest::prelude::*;

/// Raw material for a random single-attribute scenario.
#[derive(Clone, Debug)]
pub struct RandomScenario {
    pub states: usize,
    pub agents: usize,
    pub envs: usize,
    pub adm: Vec<bool>,
    pub escalate: Vec<bool>,
    pub trans: Vec<usize>,
    pub env_rows: Vec<(usize, usize, usize)>,
    pub initial: usize,
}

pub fn random_scenario() -> impl Strategy<Value = RandomScenario> {
    (1usize..=5, 1usize..=3, 1usize..=2).prop_flat_map(|(n, a, e)| {
        (
            proptest::collection::vec(any::<bool>(), n * a),
            proptest::collection::vec(prop::bool::weighted(0.15), n * a),
            proptest::collection::vec(0..n, n * a),
            proptest::collection::vec((0..n, 0..e, 0..n), 0..=2 * n),
            0..n,
        )
            .prop_map(move |(adm, escalate, trans, env_rows, initial)| RandomScenario {
                states: n,
                agents: a,
                envs: e,
                adm,
                escalate,
                trans,
                env_rows,
                initial,
            })
    })
}

impl RandomScenario {
    pub fn build(&self) -> ScenarioSpec {
        let mut b = ScenarioBuilder::new("random");
        let values: Vec<String> = (0..self.states).map(|i| format!("v{i}")).collect();
        let refs: Vec<&str> = values.iter().map(String::as_str).collect();
        b.attr("x", &refs).unwrap();
        b.product_states().unwrap();
        let agents: Vec<String> = (0..self.agents).map(|i| format!("act{i}")).collect();
        let envs: Vec<String> = (0..self.envs).map(|i| format!("env{i}")).collect();
        for a in &agents {
            b.agent(a).unwrap();
        }
        for e in &envs {
            b.env(e).unwrap();
        }
        b.initial(&format!("s{}", self.initial));
        for s in 0..self.states {
            for (ai, a) in agents.iter().enumerate() {
                let i = s * self.agents + ai;
                let st = format!("s{s}");
                b.adm(&st, a, self.adm[i]).unwrap();
                let d = if self.escalate[i] {
                    adb_core::Disposition::Escalate
                } else if self.adm[i] {
                    adb_core::Disposition::Allow
                } else {
                    adb_core::Disposition::Refuse
                };
                b.decide(&st, a, d).unwrap();
                b.trans(&st, a, &format!("s{}", self.trans[i])).unwrap();
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for &(s, e, t) in &self.env_rows {
            if seen.insert((s, e, t)) {
                b.env_trans(&format!("s{s}"), &envs[e], &format!("s{t}")).unwrap();
            }
        }
        b.build().unwrap()
    }
}
