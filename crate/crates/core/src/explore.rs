//! Exhaustive exploration of the labeled transition system a construction
//! induces over a scenario: successor generation, bounded trace enumeration,
//! minimal witness search, trace counting and reachable diameter.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atomic::{apply_disposition, resolve_atomic, ExtendedState};
use crate::decision::{Disposition, Verdict};
use crate::model::{ActionLabel, AttrId, Trace, ValueId, Violation};
use crate::scenario::ScenarioSpec;
use crate::split::{
    resolve_split, split_dec, split_dec_augmented, split_env, split_exec, DecisionSource, SplitState,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Atomic,
    Split,
}

/// How the supervisor answers an escalated request.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupervisorPolicy {
    /// `Allow` iff the action is admissible in the state current at
    /// resolution time.
    CheckAdmissibility,
    RefuseAll,
}

/// Which arcs the explored system offers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Construction {
    /// Agent admission: one `F` arc, or a `dec`/`exec` pair.
    pub primary: Boundary,
    /// Supervisor resolution of pending requests.
    pub resolution: Boundary,
    /// Environment rows that change any of these attributes cannot fire while
    /// a recorded decision is outstanding.
    pub fused_attrs: Vec<AttrId>,
    /// Decide with the scenario's enriched decision function over its
    /// external store.
    pub external: bool,
    /// Offer a re-evaluation arc between a policy `dec` and its `exec`.
    pub recheck_before_exec: bool,
    pub supervisor: SupervisorPolicy,
}

impl Construction {
    pub fn atomic() -> Self {
        Construction {
            primary: Boundary::Atomic,
            resolution: Boundary::Atomic,
            fused_attrs: Vec::new(),
            external: false,
            recheck_before_exec: false,
            supervisor: SupervisorPolicy::CheckAdmissibility,
        }
    }

    pub fn split() -> Self {
        Construction {
            primary: Boundary::Split,
            resolution: Boundary::Split,
            ..Construction::atomic()
        }
    }

    pub fn with_resolution(mut self, resolution: Boundary) -> Self {
        self.resolution = resolution;
        self
    }

    pub fn with_external(mut self) -> Self {
        self.external = true;
        self
    }

    pub fn with_fused(mut self, attrs: Vec<AttrId>) -> Self {
        self.fused_attrs = attrs;
        self
    }

    pub fn with_recheck(mut self) -> Self {
        self.recheck_before_exec = true;
        self
    }

    pub fn with_supervisor(mut self, supervisor: SupervisorPolicy) -> Self {
        self.supervisor = supervisor;
        self
    }
}

/// One node of the explored system: the split state (base, outstanding
/// record, pending set) and, in external mode, the store value.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Configuration {
    pub state: SplitState,
    pub external: Option<ValueId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Successor {
    pub label: ActionLabel,
    pub next: Configuration,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExploreError {
    #[error("scenario `{0}` declares no external store")]
    MissingExternal(String),
    #[error("trace enumeration exceeded its cap after {partial} traces")]
    Overflow { partial: usize },
}

/// Default cap on enumerated traces.
pub const DEFAULT_TRACE_CAP: usize = 2_000_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WitnessSearch {
    /// Shortest violating trace, if any, with its violation.
    pub witness: Option<(Trace, Violation)>,
    /// Distinct configurations visited.
    pub configurations: usize,
}

pub struct Explorer<'a> {
    scenario: &'a ScenarioSpec,
    construction: Construction,
}

impl<'a> Explorer<'a> {
    pub fn new(scenario: &'a ScenarioSpec, construction: Construction) -> Result<Self, ExploreError> {
        if construction.external && scenario.external.is_none() {
            return Err(ExploreError::MissingExternal(scenario.name.clone()));
        }
        Ok(Explorer {
            scenario,
            construction,
        })
    }

    pub fn scenario(&self) -> &'a ScenarioSpec {
        self.scenario
    }

    pub fn construction(&self) -> &Construction {
        &self.construction
    }

    pub fn initial(&self) -> Configuration {
        let sc = self.scenario;
        Configuration {
            state: SplitState::new(sc.initial),
            external: self.store().map(|ext| ext.read(sc.initial)),
        }
    }

    fn store(&self) -> Option<&'a crate::split::ExternalStateSpec> {
        if self.construction.external {
            self.scenario.external.as_ref()
        } else {
            None
        }
    }

    /// Store value after an arc: written through on commit, rewritten by
    /// coupled environment effects, otherwise unchanged.
    fn next_store(&self, cfg: &Configuration, label: &ActionLabel, next_base: crate::model::StateId) -> Option<ValueId> {
        let ext = self.store()?;
        let v = cfg.external.expect("external mode carries a store value");
        Some(match *label {
            ActionLabel::Env { action } => ext.after_env(action, v),
            l if l.commits() => ext.read(next_base),
            _ => v,
        })
    }

    fn disposition(&self, cfg: &Configuration, action: crate::model::AgentId) -> Disposition {
        match (self.store(), cfg.external) {
            (Some(ext), Some(v)) => ext.decide(cfg.state.base, action, v),
            _ => *self.scenario.decision.get(cfg.state.base, action),
        }
    }

    fn supervisor_verdict(&self, cfg: &Configuration, action: crate::model::AgentId) -> Verdict {
        match self.construction.supervisor {
            SupervisorPolicy::CheckAdmissibility if *self.scenario.adm.get(cfg.state.base, action) => Verdict::Allow,
            _ => Verdict::Refuse,
        }
    }

    fn env_blocked(&self, cfg: &Configuration, target: crate::model::StateId) -> bool {
        cfg.state.recorded.is_some()
            && self
                .construction
                .fused_attrs
                .iter()
                .any(|&a| self.scenario.value(cfg.state.base, a) != self.scenario.value(target, a))
    }

    /// Outgoing arcs in label order, ties broken by successor.
    pub fn successors(&self, cfg: &Configuration) -> Vec<Successor> {
        let sc = self.scenario;
        let st = &cfg.state;
        let mut out = Vec::new();
        let mut push = |label: ActionLabel, state: SplitState| {
            let external = self.next_store(cfg, &label, state.base);
            out.push(Successor {
                label,
                next: Configuration { state, external },
            });
        };

        match self.construction.primary {
            Boundary::Atomic => {
                for a in sc.agent_ids() {
                    let d = self.disposition(cfg, a);
                    let ext = ExtendedState {
                        base: st.base,
                        pending: st.pending.clone(),
                    };
                    let o = apply_disposition(sc, &ext, a, d);
                    push(
                        ActionLabel::Agent {
                            action: a,
                            disposition: d,
                        },
                        SplitState {
                            base: o.next.base,
                            recorded: st.recorded,
                            pending: o.next.pending,
                        },
                    );
                }
            }
            Boundary::Split if st.recorded.is_none() => {
                for a in sc.agent_ids() {
                    let next = match (self.store(), cfg.external) {
                        (Some(ext), Some(v)) => split_dec_augmented(st, a, ext, v),
                        _ => split_dec(sc, st, a),
                    }
                    .expect("no outstanding record");
                    push(
                        ActionLabel::Dec {
                            action: a,
                            disposition: self.disposition(cfg, a),
                        },
                        next,
                    );
                }
            }
            Boundary::Split => {}
        }

        if let Some(rec) = st.recorded {
            let needs_recheck =
                self.construction.recheck_before_exec && rec.source == DecisionSource::Policy && !rec.rechecked;
            if needs_recheck {
                let d = self.disposition(cfg, rec.action);
                let mut next = st.clone();
                next.recorded = None;
                let mut next = match (self.store(), cfg.external) {
                    (Some(ext), Some(v)) => split_dec_augmented(&next, rec.action, ext, v),
                    _ => split_dec(sc, &next, rec.action),
                }
                .expect("record cleared");
                if let Some(r) = next.recorded.as_mut() {
                    r.rechecked = true;
                }
                push(
                    ActionLabel::Dec {
                        action: rec.action,
                        disposition: d,
                    },
                    next,
                );
            } else {
                let (next, _) = split_exec(sc, st).expect("record present");
                push(
                    ActionLabel::Exec {
                        action: rec.action,
                        disposition: rec.disposition,
                    },
                    next,
                );
            }
        }

        for (e, target) in sc.env_successors(st.base) {
            if self.env_blocked(cfg, target) {
                continue;
            }
            let next = split_env(sc, st, e, target).expect("declared row");
            push(ActionLabel::Env { action: e }, next);
        }

        for &req in &st.pending {
            let verdict = self.supervisor_verdict(cfg, req.action);
            let label = ActionLabel::Resolve {
                action: req.action,
                origin: req.origin,
                verdict,
                atomic: self.construction.resolution == Boundary::Atomic,
            };
            match self.construction.resolution {
                Boundary::Atomic => {
                    let ext = ExtendedState {
                        base: st.base,
                        pending: st.pending.clone(),
                    };
                    let next = resolve_atomic(sc, &ext, req, verdict).expect("request is pending");
                    push(
                        label,
                        SplitState {
                            base: next.base,
                            recorded: st.recorded,
                            pending: next.pending,
                        },
                    );
                }
                Boundary::Split if st.recorded.is_none() => {
                    push(label, resolve_split(st, req, verdict).expect("request is pending"));
                }
                Boundary::Split => {}
            }
        }

        out.sort_by(|x, y| (x.label, &x.next).cmp(&(y.label, &y.next)));
        out
    }

    /// The violation an arc from `cfg` would constitute, if any.
    pub fn violates(&self, cfg: &Configuration, label: &ActionLabel) -> bool {
        label.commits()
            && !*self
                .scenario
                .adm
                .get(cfg.state.base, label.agent_action().expect("committing arcs carry an action"))
    }

    /// Breadth-first search for a shortest trace that commits `T` in an
    /// inadmissible state, within `depth` arcs.
    pub fn find_witness(&self, depth: usize) -> WitnessSearch {
        let init = self.initial();
        // node -> (parent index, label)
        let mut nodes: Vec<(Configuration, Option<(usize, ActionLabel)>)> = vec![(init.clone(), None)];
        let mut seen: HashSet<Configuration> = HashSet::from([init]);
        let mut frontier = vec![0usize];
        for _ in 0..depth {
            let mut next_frontier = Vec::new();
            for &i in &frontier {
                let cfg = nodes[i].0.clone();
                for succ in self.successors(&cfg) {
                    if self.violates(&cfg, &succ.label) {
                        let mut trace = self.path_to(&nodes, i);
                        trace.push(succ.label, succ.next.state.base);
                        let violation = Violation {
                            index: trace.len(),
                            state: cfg.state.base,
                            action: succ.label.agent_action().unwrap(),
                        };
                        return WitnessSearch {
                            witness: Some((trace, violation)),
                            configurations: seen.len(),
                        };
                    }
                    if seen.insert(succ.next.clone()) {
                        nodes.push((succ.next, Some((i, succ.label))));
                        next_frontier.push(nodes.len() - 1);
                    }
                }
            }
            if next_frontier.is_empty() {
                break;
            }
            frontier = next_frontier;
        }
        WitnessSearch {
            witness: None,
            configurations: seen.len(),
        }
    }

    fn path_to(&self, nodes: &[(Configuration, Option<(usize, ActionLabel)>)], mut i: usize) -> Trace {
        let mut steps = Vec::new();
        while let Some((parent, label)) = nodes[i].1 {
            steps.push((label, nodes[i].0.state.base));
            i = parent;
        }
        let mut trace = Trace::new(self.scenario.initial);
        for (label, target) in steps.into_iter().rev() {
            trace.push(label, target);
        }
        trace
    }

    /// Number of traces of length at most `depth` from the initial
    /// configuration, counting the empty trace. Saturates at `u128::MAX`.
    pub fn count_traces(&self, depth: usize) -> u128 {
        let mut memo: HashMap<(Configuration, usize), u128> = HashMap::new();
        self.count_from(&self.initial(), depth, &mut memo)
    }

    fn count_from(&self, cfg: &Configuration, depth: usize, memo: &mut HashMap<(Configuration, usize), u128>) -> u128 {
        if depth == 0 {
            return 1;
        }
        if let Some(&n) = memo.get(&(cfg.clone(), depth)) {
            return n;
        }
        let mut total: u128 = 1;
        for succ in self.successors(cfg) {
            total = total.saturating_add(self.count_from(&succ.next, depth - 1, memo));
        }
        memo.insert((cfg.clone(), depth), total);
        total
    }

    /// All reachable configurations with their BFS distance from the initial
    /// configuration, in discovery order.
    pub fn reachable(&self) -> Vec<(Configuration, usize)> {
        let init = self.initial();
        let mut seen: HashSet<Configuration> = HashSet::from([init.clone()]);
        let mut order = vec![(init.clone(), 0)];
        let mut queue = VecDeque::from([(init, 0usize)]);
        while let Some((cfg, d)) = queue.pop_front() {
            for succ in self.successors(&cfg) {
                if seen.insert(succ.next.clone()) {
                    order.push((succ.next.clone(), d + 1));
                    queue.push_back((succ.next, d + 1));
                }
            }
        }
        order
    }

    /// Largest BFS distance to any reachable configuration.
    pub fn reachable_diameter(&self) -> usize {
        self.reachable().iter().map(|(_, d)| *d).max().unwrap_or(0)
    }

    /// Smallest number of arcs after which some request is pending.
    pub fn first_pending_depth(&self) -> Option<usize> {
        self.reachable()
            .into_iter()
            .find(|(c, _)| !c.state.pending.is_empty())
            .map(|(_, d)| d)
    }

    /// Depth-first enumeration of every trace of length at most `depth`,
    /// shortest prefix first, siblings in label order.
    pub fn traces(&self, depth: usize) -> TraceIter<'_, 'a> {
        self.traces_capped(depth, DEFAULT_TRACE_CAP)
    }

    pub fn traces_capped(&self, depth: usize, cap: usize) -> TraceIter<'_, 'a> {
        TraceIter {
            explorer: self,
            depth,
            cap,
            emitted: 0,
            stack: Vec::new(),
            trace: Trace::new(self.scenario.initial),
            started: false,
            done: false,
        }
    }
}

struct Frame {
    children: Vec<Successor>,
    next: usize,
}

/// Iterator returned by [`Explorer::traces`]. Yields an
/// [`ExploreError::Overflow`] once and stops if the cap is exceeded.
pub struct TraceIter<'e, 'a> {
    explorer: &'e Explorer<'a>,
    depth: usize,
    cap: usize,
    emitted: usize,
    stack: Vec<Frame>,
    trace: Trace,
    started: bool,
    done: bool,
}

impl TraceIter<'_, '_> {
    fn emit(&mut self) -> Option<Result<Trace, ExploreError>> {
        if self.emitted >= self.cap {
            self.done = true;
            return Some(Err(ExploreError::Overflow { partial: self.emitted }));
        }
        self.emitted += 1;
        Some(Ok(self.trace.clone()))
    }

    fn children(&self, cfg: &Configuration) -> Vec<Successor> {
        if self.trace.len() < self.depth {
            self.explorer.successors(cfg)
        } else {
            Vec::new()
        }
    }
}

impl Iterator for TraceIter<'_, '_> {
    type Item = Result<Trace, ExploreError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            let children = self.children(&self.explorer.initial());
            self.stack.push(Frame { children, next: 0 });
            return self.emit();
        }
        loop {
            let top = self.stack.last_mut()?;
            if top.next < top.children.len() {
                let succ = top.children[top.next].clone();
                top.next += 1;
                self.trace.push(succ.label, succ.next.state.base);
                let children = self.children(&succ.next);
                self.stack.push(Frame { children, next: 0 });
                return self.emit();
            }
            self.stack.pop();
            if !self.stack.is_empty() {
                self.trace.steps.pop();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{check_preservation, ActionKind};
    use crate::scenarios::builtin;

    #[test]
    fn split_filelock_has_length_three_witness() {
        let sc = builtin("filelock").unwrap();
        let ex = Explorer::new(&sc, Construction::split()).unwrap();
        let (trace, v) = ex.find_witness(sc.default_depth()).witness.unwrap();
        assert_eq!(trace.kinds(), vec![ActionKind::Dec, ActionKind::Env, ActionKind::Exec]);
        assert_eq!(v.index, 3);
        assert_eq!(check_preservation(&trace, &sc.adm).violation(), Some(v));
    }

    #[test]
    fn atomic_filelock_has_no_witness() {
        let sc = builtin("filelock").unwrap();
        let ex = Explorer::new(&sc, Construction::atomic()).unwrap();
        assert!(ex.find_witness(sc.default_depth()).witness.is_none());
    }

    #[test]
    fn enumeration_matches_count() {
        let sc = builtin("filelock").unwrap();
        for c in [Construction::atomic(), Construction::split()] {
            let ex = Explorer::new(&sc, c).unwrap();
            let n = ex.traces(5).collect::<Result<Vec<_>, _>>().unwrap().len();
            assert_eq!(n as u128, ex.count_traces(5));
        }
    }

    #[test]
    fn enumeration_yields_prefix_closed_set() {
        let sc = builtin("filelock").unwrap();
        let ex = Explorer::new(&sc, Construction::split()).unwrap();
        let all: HashSet<Vec<(ActionLabel, crate::model::StateId)>> = ex
            .traces(4)
            .map(|t| t.unwrap().steps.iter().map(|s| (s.label, s.target)).collect())
            .collect();
        for t in &all {
            if !t.is_empty() {
                assert!(all.contains(&t[..t.len() - 1]));
            }
        }
    }

    #[test]
    fn cap_reports_overflow_once() {
        let sc = builtin("filelock").unwrap();
        let ex = Explorer::new(&sc, Construction::split()).unwrap();
        let items: Vec<_> = ex.traces_capped(6, 10).collect();
        assert_eq!(items.len(), 11);
        assert_eq!(items.last().unwrap(), &Err(ExploreError::Overflow { partial: 10 }));
    }

    #[test]
    fn recheck_does_not_close_the_gap() {
        let sc = builtin("filelock").unwrap();
        let ex = Explorer::new(&sc, Construction::split().with_recheck()).unwrap();
        let (trace, _) = ex.find_witness(sc.default_depth()).witness.unwrap();
        assert_eq!(
            trace.kinds(),
            vec![ActionKind::Dec, ActionKind::Dec, ActionKind::Env, ActionKind::Exec]
        );
    }

    #[test]
    fn fusing_every_attribute_closes_the_gap() {
        let sc = builtin("filelock").unwrap();
        let all = (0..sc.attributes.len()).map(AttrId::from).collect();
        let ex = Explorer::new(&sc, Construction::split().with_fused(all)).unwrap();
        assert!(ex.find_witness(sc.default_depth()).witness.is_none());
    }

    #[test]
    fn external_mode_requires_store() {
        let sc = builtin("filelock").unwrap();
        assert!(matches!(
            Explorer::new(&sc, Construction::split().with_external()),
            Err(ExploreError::MissingExternal(_))
        ));
    }

    #[test]
    fn refusing_supervisor_never_commits_through_resolution() {
        let sc = builtin("filelock-escalate").unwrap();
        let c = Construction::atomic()
            .with_resolution(Boundary::Split)
            .with_supervisor(SupervisorPolicy::RefuseAll);
        let ex = Explorer::new(&sc, c).unwrap();
        for t in ex.traces(6) {
            let t = t.unwrap();
            for s in &t.steps {
                if let ActionLabel::Exec { disposition, .. } = s.label {
                    assert_eq!(disposition, Disposition::Refuse);
                }
            }
        }
    }
}
