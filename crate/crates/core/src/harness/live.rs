//! Live concurrent races. Each trial gets a fresh versioned cell; an agent
//! thread and environment threads start on a shared barrier and contend for
//! it. Afterwards every cell history is replayed through the pure step
//! functions and the preservation checker.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Barrier;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::atomic::{
    atomic_step, commit_with_retry, live_admit_and_commit, live_env_commit, BaseState, CommitOptions,
    CommitRecord, ExtendedState, VersionedStateCell,
};
use crate::decision::Disposition;
use crate::explore::Boundary;
use crate::model::{check_preservation, ActionLabel, Trace};
use crate::scenario::ScenarioSpec;
use crate::split::{split_dec, split_env, split_exec, PreservationEvent, SplitState};

use super::report::ViolationStats;
use super::HarnessError;

/// Pause forced into the window the construction leaves open.
pub const DEFAULT_PAUSE: Duration = Duration::from_micros(20);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LiveConfig {
    pub trials: u64,
    /// Threads contending per trial: one agent plus `workers - 1`
    /// environment threads.
    pub workers: usize,
    pub seed: u64,
    /// Pause between `dec` and `exec` (split) or between computing and
    /// committing (atomic).
    pub pause: Option<Duration>,
}

impl Default for LiveConfig {
    fn default() -> Self {
        LiveConfig {
            trials: 10_000,
            workers: 2,
            seed: 0,
            pause: Some(DEFAULT_PAUSE),
        }
    }
}

#[derive(Default)]
struct Counters {
    violations: AtomicU64,
    admissible: AtomicU64,
    refused: AtomicU64,
    escalated: AtomicU64,
    no_fire: AtomicU64,
    starved: AtomicU64,
    retries: AtomicU64,
    env_commits: AtomicU64,
}

impl Counters {
    fn bump(c: &AtomicU64, n: u64) {
        c.fetch_add(n, Ordering::Relaxed);
    }

    fn snapshot(&self, mode: Boundary, trials: u64, replay_ok: bool) -> ViolationStats {
        let get = |c: &AtomicU64| c.load(Ordering::Relaxed);
        ViolationStats {
            mode: Some(mode),
            trials,
            violations: get(&self.violations),
            admissible: get(&self.admissible),
            refused: get(&self.refused),
            escalated: get(&self.escalated),
            no_fire: get(&self.no_fire),
            starved: get(&self.starved),
            retries: get(&self.retries),
            env_commits: get(&self.env_commits),
            replay_ok,
        }
    }
}

fn env_worker<S: BaseState>(
    sc: &ScenarioSpec,
    cells: &[VersionedStateCell<S>],
    barrier: &Barrier,
    seed: u64,
    counters: &Counters,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = CommitOptions::default();
    for cell in cells {
        barrier.wait();
        std::thread::yield_now();
        let base = cell.load().state.base();
        let rows: Vec<_> = sc.env_successors(base).collect();
        let Some(&(env, _)) = rows.choose(&mut rng) else {
            continue;
        };
        match live_env_commit(cell, sc, env, &opts) {
            Ok(Some(c)) => {
                Counters::bump(&counters.env_commits, 1);
                Counters::bump(&counters.retries, c.retries as u64);
            }
            Ok(None) => {}
            Err(_) => Counters::bump(&counters.starved, 1),
        }
    }
}

fn env_seed(seed: u64, k: usize) -> u64 {
    seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(k as u64 + 1))
}

/// Runs the agent side of every split trial; returns, per trial, whether the
/// execution arc violated admissibility.
fn split_agent(
    sc: &ScenarioSpec,
    cells: &[VersionedStateCell<SplitState>],
    barrier: &Barrier,
    cfg: &LiveConfig,
    counters: &Counters,
) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let agents: Vec<_> = sc.agent_ids().collect();
    let opts = CommitOptions::default();
    let mut violated = vec![false; cells.len()];
    for (i, cell) in cells.iter().enumerate() {
        barrier.wait();
        let a = *agents.choose(&mut rng).unwrap();
        let dec = commit_with_retry(cell, &opts, |st| {
            let next = split_dec(sc, st, a).ok()?;
            let d = next.recorded.map_or(Disposition::Escalate, |r| r.disposition);
            Some((ActionLabel::Dec { action: a, disposition: d }, next, d))
        });
        let d = match dec {
            Ok(Some(c)) => {
                Counters::bump(&counters.retries, c.retries as u64);
                c.value
            }
            Ok(None) => continue,
            Err(_) => {
                Counters::bump(&counters.starved, 1);
                continue;
            }
        };
        if d == Disposition::Escalate {
            Counters::bump(&counters.escalated, 1);
            continue;
        }
        if let Some(p) = cfg.pause {
            std::thread::sleep(p);
        }
        let exec = commit_with_retry(cell, &opts, |st| {
            let (next, ev) = split_exec(sc, st).ok()?;
            Some((ActionLabel::Exec { action: a, disposition: d }, next, ev))
        });
        match exec {
            Ok(Some(c)) => {
                Counters::bump(&counters.retries, c.retries as u64);
                match c.value {
                    PreservationEvent::Admissible => Counters::bump(&counters.admissible, 1),
                    PreservationEvent::Violated => {
                        Counters::bump(&counters.violations, 1);
                        violated[i] = true;
                    }
                    PreservationEvent::NoFire => {
                        Counters::bump(&counters.no_fire, 1);
                        Counters::bump(&counters.refused, 1);
                    }
                }
            }
            Ok(None) => {}
            Err(_) => Counters::bump(&counters.starved, 1),
        }
    }
    violated
}

fn atomic_agent(
    sc: &ScenarioSpec,
    cells: &[VersionedStateCell<ExtendedState>],
    barrier: &Barrier,
    cfg: &LiveConfig,
    counters: &Counters,
) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let agents: Vec<_> = sc.agent_ids().collect();
    let opts = CommitOptions {
        pause: cfg.pause,
        ..CommitOptions::default()
    };
    let mut violated = vec![false; cells.len()];
    for (i, cell) in cells.iter().enumerate() {
        barrier.wait();
        let a = *agents.choose(&mut rng).unwrap();
        match live_admit_and_commit(cell, sc, a, &opts) {
            Ok(c) => {
                Counters::bump(&counters.retries, c.retries as u64);
                let counter = match c.value.outcome.disposition {
                    Disposition::Allow if *sc.adm.get(c.value.decided_in, a) => &counters.admissible,
                    Disposition::Allow => {
                        violated[i] = true;
                        &counters.violations
                    }
                    Disposition::Refuse => &counters.refused,
                    Disposition::Escalate => &counters.escalated,
                };
                Counters::bump(counter, 1);
            }
            Err(_) => Counters::bump(&counters.starved, 1),
        }
    }
    violated
}

/// Re-derives every committed state from its predecessor with the pure step
/// functions. `None` if any recorded state disagrees.
fn replay_split(sc: &ScenarioSpec, history: &[CommitRecord<SplitState>]) -> Option<Trace> {
    let mut trace = Trace::new(sc.initial);
    let mut cur = SplitState::new(sc.initial);
    for rec in history {
        let next = match rec.label {
            ActionLabel::Dec { action, .. } => split_dec(sc, &cur, action).ok()?,
            ActionLabel::Exec { .. } => split_exec(sc, &cur).ok()?.0,
            ActionLabel::Env { action } => split_env(sc, &cur, action, rec.state.base).ok()?,
            _ => return None,
        };
        if next != rec.state {
            return None;
        }
        trace.push(rec.label, next.base);
        cur = next;
    }
    Some(trace)
}

fn replay_atomic(sc: &ScenarioSpec, history: &[CommitRecord<ExtendedState>]) -> Option<Trace> {
    let mut trace = Trace::new(sc.initial);
    let mut cur = ExtendedState::new(sc.initial);
    for rec in history {
        let next = match rec.label {
            ActionLabel::Agent { action, disposition } => {
                let out = atomic_step(sc, &cur, action);
                (out.disposition == disposition).then_some(out.next)?
            }
            ActionLabel::Env { action } => {
                sc.env_successors(cur.base).any(|r| r == (action, rec.state.base)).then_some(())?;
                cur.with_base(rec.state.base)
            }
            _ => return None,
        };
        if next != rec.state {
            return None;
        }
        trace.push(rec.label, next.base);
        cur = next;
    }
    Some(trace)
}

fn replay_matches(sc: &ScenarioSpec, trace: Option<Trace>, violated: bool) -> bool {
    trace.is_some_and(|t| check_preservation(&t, &sc.adm).violation().is_some() == violated)
}

/// Runs `cfg.trials` independent races and replays every history.
pub fn run_live_race(sc: &ScenarioSpec, mode: Boundary, cfg: &LiveConfig) -> Result<ViolationStats, HarnessError> {
    if cfg.workers == 0 {
        return Err(HarnessError::Invalid("at least one worker is required".into()));
    }
    if sc.agent_actions.is_empty() {
        return Err(HarnessError::Invalid("scenario declares no agent actions".into()));
    }
    let n = usize::try_from(cfg.trials).map_err(|_| HarnessError::Invalid("too many trials".into()))?;
    let counters = Counters::default();
    let barrier = Barrier::new(cfg.workers);

    let replay_ok = match mode {
        Boundary::Split => {
            let cells: Vec<_> = (0..n).map(|_| VersionedStateCell::new(SplitState::new(sc.initial))).collect();
            let violated = std::thread::scope(|scope| {
                for k in 1..cfg.workers {
                    let (cells, barrier, counters) = (&cells, &barrier, &counters);
                    scope.spawn(move || env_worker(sc, cells, barrier, env_seed(cfg.seed, k), counters));
                }
                split_agent(sc, &cells, &barrier, cfg, &counters)
            });
            cells
                .iter()
                .zip(violated)
                .all(|(c, v)| replay_matches(sc, replay_split(sc, &c.history()), v))
        }
        Boundary::Atomic => {
            let cells: Vec<_> = (0..n)
                .map(|_| VersionedStateCell::new(ExtendedState::new(sc.initial)))
                .collect();
            let violated = std::thread::scope(|scope| {
                for k in 1..cfg.workers {
                    let (cells, barrier, counters) = (&cells, &barrier, &counters);
                    scope.spawn(move || env_worker(sc, cells, barrier, env_seed(cfg.seed, k), counters));
                }
                atomic_agent(sc, &cells, &barrier, cfg, &counters)
            });
            cells
                .iter()
                .zip(violated)
                .all(|(c, v)| replay_matches(sc, replay_atomic(sc, &c.history()), v))
        }
    };
    Ok(counters.snapshot(mode, cfg.trials, replay_ok))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::builtin;

    fn race(mode: Boundary, workers: usize) -> ViolationStats {
        let sc = builtin("filelock").unwrap();
        let cfg = LiveConfig {
            trials: 300,
            workers,
            seed: 11,
            pause: Some(DEFAULT_PAUSE),
        };
        run_live_race(&sc, mode, &cfg).unwrap()
    }

    #[test]
    fn atomic_race_never_violates() {
        let s = race(Boundary::Atomic, 2);
        assert_eq!(s.violations, 0);
        assert!(s.replay_ok);
        assert_eq!(s.admissible + s.refused + s.escalated + s.starved, 300);
    }

    #[test]
    fn lone_agent_never_violates() {
        let s = race(Boundary::Split, 1);
        assert_eq!(s.violations, 0);
        assert_eq!(s.admissible, 300);
        assert_eq!(s.env_commits, 0);
        assert!(s.replay_ok);
    }

    #[test]
    fn split_race_replays_cleanly() {
        let s = race(Boundary::Split, 2);
        assert!(s.replay_ok);
        assert_eq!(s.env_commits, 300);
        assert_eq!(s.violations + s.admissible + s.no_fire + s.starved, 300);
    }

    #[test]
    fn zero_workers_rejected() {
        let sc = builtin("filelock").unwrap();
        let cfg = LiveConfig {
            workers: 0,
            ..LiveConfig::default()
        };
        assert!(run_live_race(&sc, Boundary::Split, &cfg).is_err());
    }
}
