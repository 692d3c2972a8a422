//! Seeded Monte-Carlo runs: each trial submits one request from the initial
//! state, and the environment fires with probability `p` at the one point
//! the construction leaves open.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::atomic::{atomic_step, ExtendedState};
use crate::decision::Disposition;
use crate::explore::Boundary;
use crate::model::{check_preservation, ActionLabel, Trace};
use crate::scenario::ScenarioSpec;
use crate::split::{split_dec, split_env, split_exec, PreservationEvent, SplitState};

use super::report::ViolationStats;
use super::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StochasticConfig {
    pub trials: u64,
    /// Probability that the environment fires once per trial.
    pub p: f64,
    pub seed: u64,
}

pub fn validate_probability(p: f64) -> Result<(), HarnessError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(HarnessError::InvalidProbability(p))
    }
}

/// Split trials fire the environment between `dec` and `exec`; atomic trials
/// fire it after the single admission arc, which can never interleave.
pub fn run_stochastic(sc: &ScenarioSpec, mode: Boundary, cfg: &StochasticConfig) -> Result<ViolationStats, HarnessError> {
    validate_probability(cfg.p)?;
    if sc.agent_actions.is_empty() {
        return Err(HarnessError::Invalid("scenario declares no agent actions".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut stats = ViolationStats {
        mode: Some(mode),
        trials: cfg.trials,
        replay_ok: true,
        ..Default::default()
    };
    let agents: Vec<_> = sc.agent_ids().collect();
    for _ in 0..cfg.trials {
        let a = *agents.choose(&mut rng).unwrap();
        // one uniform draw per trial couples runs at different `p` on the same seed
        let fire = rng.gen::<f64>() < cfg.p;
        let rows: Vec<_> = sc.env_successors(sc.initial).collect();
        let pick = rows.choose(&mut rng).copied();
        let env = if fire { pick } else { None };
        let mut trace = Trace::new(sc.initial);
        let violated = match mode {
            Boundary::Split => {
                let mut st = split_dec(sc, &SplitState::new(sc.initial), a).expect("fresh state");
                let d = *sc.decision.get(sc.initial, a);
                trace.push(ActionLabel::Dec { action: a, disposition: d }, st.base);
                if d == Disposition::Escalate {
                    stats.escalated += 1;
                    false
                } else {
                    if let Some((e, t)) = env {
                        st = split_env(sc, &st, e, t).expect("declared row");
                        trace.push(ActionLabel::Env { action: e }, t);
                        stats.env_commits += 1;
                    }
                    let (next, ev) = split_exec(sc, &st).expect("record present");
                    trace.push(ActionLabel::Exec { action: a, disposition: d }, next.base);
                    match ev {
                        PreservationEvent::Admissible => stats.admissible += 1,
                        PreservationEvent::Violated => stats.violations += 1,
                        PreservationEvent::NoFire => {
                            stats.no_fire += 1;
                            stats.refused += 1;
                        }
                    }
                    ev == PreservationEvent::Violated
                }
            }
            Boundary::Atomic => {
                let out = atomic_step(sc, &ExtendedState::new(sc.initial), a);
                trace.push(
                    ActionLabel::Agent {
                        action: a,
                        disposition: out.disposition,
                    },
                    out.next.base,
                );
                let violated = match out.disposition {
                    Disposition::Allow if *sc.adm.get(sc.initial, a) => {
                        stats.admissible += 1;
                        false
                    }
                    Disposition::Allow => {
                        stats.violations += 1;
                        true
                    }
                    Disposition::Refuse => {
                        stats.refused += 1;
                        false
                    }
                    Disposition::Escalate => {
                        stats.escalated += 1;
                        false
                    }
                };
                // the environment can only act once the admission arc is done
                let after: Vec<_> = sc.env_successors(out.next.base).collect();
                if let (true, Some((e, t))) = (fire, after.choose(&mut rng)) {
                    trace.push(ActionLabel::Env { action: *e }, *t);
                    stats.env_commits += 1;
                }
                violated
            }
        };
        if check_preservation(&trace, &sc.adm).violation().is_some() != violated {
            stats.replay_ok = false;
        }
    }
    Ok(stats)
}
