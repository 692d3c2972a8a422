//! Report types shared by every harness entry point, and their human
//! rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::explore::Boundary;
use crate::model::{AgentId, Trace, Violation};
use crate::scenario::ScenarioSpec;

/// Which construction a report describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportMode {
    Split,
    Atomic,
    /// Atomic admission with split supervisor resolution.
    SplitResolution,
    /// Atomic admission with atomic supervisor resolution.
    AtomicResolution,
    /// Split admission deciding over the external store.
    ExternalSplit,
    /// Atomic admission deciding over the external store.
    ExternalFused,
}

impl ReportMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ReportMode::Split => "split",
            ReportMode::Atomic => "atomic",
            ReportMode::SplitResolution => "split-resolution",
            ReportMode::AtomicResolution => "atomic-resolution",
            ReportMode::ExternalSplit => "external-split",
            ReportMode::ExternalFused => "external-fused",
        }
    }

    /// Split constructions are expected to admit a witness; atomic ones are
    /// expected to admit none.
    pub fn expects_witness(self) -> bool {
        matches!(
            self,
            ReportMode::Split | ReportMode::SplitResolution | ReportMode::ExternalSplit
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Witness { trace: Trace, violation: Violation },
    AbsentUpTo { depth: usize, traces_explored: u64 },
    Inconclusive { reason: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub scenario: String,
    pub mode: ReportMode,
    pub depth: usize,
    pub outcome: Outcome,
}

impl WitnessReport {
    /// `Some(true)` when the outcome is the one the mode predicts, `None`
    /// when inconclusive.
    pub fn matches_expectation(&self) -> Option<bool> {
        match self.outcome {
            Outcome::Witness { .. } => Some(self.mode.expects_witness()),
            Outcome::AbsentUpTo { .. } => Some(!self.mode.expects_witness()),
            Outcome::Inconclusive { .. } => None,
        }
    }

    pub fn witness(&self) -> Option<(&Trace, &Violation)> {
        match &self.outcome {
            Outcome::Witness { trace, violation } => Some((trace, violation)),
            _ => None,
        }
    }
}

/// Counters from a stochastic or live run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViolationStats {
    pub mode: Option<Boundary>,
    pub trials: u64,
    /// `T` fired where the action was inadmissible.
    pub violations: u64,
    /// `T` fired where the action was admissible.
    pub admissible: u64,
    pub refused: u64,
    pub escalated: u64,
    /// Recorded decisions that did not fire at execution.
    pub no_fire: u64,
    /// Operations abandoned after exhausting the retry budget.
    pub starved: u64,
    /// Commit attempts lost to a concurrent commit.
    pub retries: u64,
    pub env_commits: u64,
    /// Every recorded history, replayed through the pure step functions,
    /// reproduced the observed counts.
    pub replay_ok: bool,
}

fn adm_suffix(sc: &ScenarioSpec, trace: &Trace, i: usize, action: AgentId) -> String {
    format!(
        "Adm({}) = {}",
        sc.agent_name(action),
        sc.adm.get(trace.state(i), action)
    )
}

/// Multi-line human rendering of one report.
pub fn render_report(sc: &ScenarioSpec, report: &WitnessReport) -> String {
    let mut out = String::new();
    let head = format!("{} [{}]", report.scenario, report.mode.as_str());
    match &report.outcome {
        Outcome::Witness { trace, violation } => {
            let _ = writeln!(
                out,
                "{head}: violation witness of length {} (bound {})",
                trace.len(),
                report.depth
            );
            let action = violation.action;
            let _ = writeln!(out, "  {:<40} {}", sc.describe_state(trace.initial), adm_suffix(sc, trace, 0, action));
            for i in 1..=trace.len() {
                let marker = if i == violation.index {
                    "   <- T fires where the action is inadmissible"
                } else {
                    ""
                };
                let _ = writeln!(out, "  {i}. {}{marker}", sc.render_label(&trace.label(i)));
                let _ = writeln!(
                    out,
                    "  {:<40} {}",
                    sc.describe_state(trace.state(i)),
                    adm_suffix(sc, trace, i, action)
                );
            }
        }
        Outcome::AbsentUpTo {
            depth,
            traces_explored,
        } => {
            let _ = writeln!(
                out,
                "{head}: no violation in any trace up to depth {depth} ({traces_explored} traces)"
            );
        }
        Outcome::Inconclusive { reason } => {
            let _ = writeln!(out, "{head}: inconclusive: {reason}");
        }
    }
    out
}

/// One-line rendering of run counters.
pub fn render_stats(stats: &ViolationStats) -> String {
    let mode = match stats.mode {
        Some(Boundary::Atomic) => "atomic",
        Some(Boundary::Split) => "split",
        None => "-",
    };
    format!(
        "{mode}: {} violations in {} trials (admissible {}, refused {}, escalated {}, no-fire {}, starved {}, retries {}, env commits {}, replay {})",
        stats.violations,
        stats.trials,
        stats.admissible,
        stats.refused,
        stats.escalated,
        stats.no_fire,
        stats.starved,
        stats.retries,
        stats.env_commits,
        if stats.replay_ok { "ok" } else { "MISMATCH" }
    )
}
