//! Bounded exhaustive checks comparing a split construction against its
//! atomic counterpart.

use crate::decision::check_nontriviality;
use crate::explore::{Boundary, Construction, Explorer};
use crate::scenario::ScenarioSpec;

use super::report::{Outcome, ReportMode, WitnessReport};

fn search(sc: &ScenarioSpec, construction: Construction, mode: ReportMode, depth: usize) -> WitnessReport {
    let outcome = match Explorer::new(sc, construction) {
        Err(e) => Outcome::Inconclusive { reason: e.to_string() },
        Ok(ex) => match ex.find_witness(depth).witness {
            Some((trace, violation)) => Outcome::Witness { trace, violation },
            None => Outcome::AbsentUpTo {
                depth,
                traces_explored: u64::try_from(ex.count_traces(depth)).unwrap_or(u64::MAX),
            },
        },
    };
    WitnessReport {
        scenario: sc.name.clone(),
        mode,
        depth,
        outcome,
    }
}

fn inconclusive(sc: &ScenarioSpec, mode: ReportMode, depth: usize, reason: &str) -> WitnessReport {
    WitnessReport {
        scenario: sc.name.clone(),
        mode,
        depth,
        outcome: Outcome::Inconclusive {
            reason: reason.to_string(),
        },
    }
}

/// Split admission versus atomic admission. Returns `(split, atomic)`.
/// Both are inconclusive when the scenario is trivially safe.
pub fn verify_theorem(sc: &ScenarioSpec, depth: usize) -> (WitnessReport, WitnessReport) {
    if let Some(reason) = check_nontriviality(sc).failure_reason() {
        return (
            inconclusive(sc, ReportMode::Split, depth, &reason),
            inconclusive(sc, ReportMode::Atomic, depth, &reason),
        );
    }
    (
        search(sc, Construction::split(), ReportMode::Split, depth),
        search(sc, Construction::atomic(), ReportMode::Atomic, depth),
    )
}

/// Atomic admission with split versus atomic supervisor resolution.
/// Returns `(split resolution, atomic resolution)`.
pub fn verify_escalation_closure(sc: &ScenarioSpec, depth: usize) -> (WitnessReport, WitnessReport) {
    let split_res = Construction::atomic().with_resolution(Boundary::Split);
    let atomic_res = Construction::atomic();
    let reason = match check_nontriviality(sc).failure_reason() {
        Some(r) => Some(r),
        None => match Explorer::new(sc, atomic_res.clone()).map(|ex| ex.first_pending_depth()) {
            Ok(None) => Some("resolution unreachable: no reachable state escalates".to_string()),
            Ok(Some(k)) if depth < k + 1 => Some(format!("resolution unreachable at depth {depth}")),
            Ok(Some(_)) => None,
            Err(e) => Some(e.to_string()),
        },
    };
    if let Some(reason) = reason {
        return (
            inconclusive(sc, ReportMode::SplitResolution, depth, &reason),
            inconclusive(sc, ReportMode::AtomicResolution, depth, &reason),
        );
    }
    (
        search(sc, split_res, ReportMode::SplitResolution, depth),
        search(sc, atomic_res, ReportMode::AtomicResolution, depth),
    )
}

/// Split versus atomic admission when the decision reads an external store.
/// Returns `(split, fused)`.
pub fn verify_external_state(sc: &ScenarioSpec, depth: usize) -> (WitnessReport, WitnessReport) {
    let reason = if sc.external.is_none() {
        Some(format!("scenario `{}` declares no external store", sc.name))
    } else {
        check_nontriviality(sc).failure_reason()
    };
    if let Some(reason) = reason {
        return (
            inconclusive(sc, ReportMode::ExternalSplit, depth, &reason),
            inconclusive(sc, ReportMode::ExternalFused, depth, &reason),
        );
    }
    (
        search(sc, Construction::split().with_external(), ReportMode::ExternalSplit, depth),
        search(sc, Construction::atomic().with_external(), ReportMode::ExternalFused, depth),
    )
}
