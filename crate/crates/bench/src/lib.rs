//! Fixtures shared by the kernel benchmarks.

use adb_core::scenarios::builtin;
use adb_core::{AgentId, ScenarioSpec};

/// A builtin scenario together with its first agent action.
pub struct Fixture {
    pub scenario: ScenarioSpec,
    pub action: AgentId,
}

/// Loads a builtin by name; panics on an unknown name.
pub fn fixture(name: &str) -> Fixture {
    let scenario = builtin(name).unwrap_or_else(|e| panic!("{name}: {e}"));
    let action = scenario.agent_ids().next().expect("scenario has an agent action");
    Fixture { scenario, action }
}
