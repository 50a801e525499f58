//! Seeded execution of machines: one enabled event per step, chosen by
//! weighted sampling; plus bounded breadth-first exploration of the
//! reachable state space.

use std::collections::{BTreeMap, HashSet};

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;
use tracing::debug;

use crate::invariants::{check_invariants, InvariantReport};
use crate::machine::{EventError, EventInstance, EventKind, Fixture, Machine};
use crate::state::{Level, NodeUniverse, WsanState};

/// Default explosion guard for exhaustive exploration.
pub const DEFAULT_MAX_EXPLORE_NODES: usize = 6;

#[derive(Debug, Clone, Copy)]
pub enum StopCondition {
    /// Run until `max_steps` free steps have been taken.
    StepsExhausted,
    /// Stop at the first state with `FailedNodeNeigh = ∅` once some
    /// RemoveNode has fired.
    RecoveryComplete,
    /// Stop at the first state satisfying the predicate.
    Custom(fn(&WsanState) -> bool),
}

#[derive(Debug, Clone)]
pub struct ScheduleConfig {
    pub seed: u64,
    pub max_steps: usize,
    pub level: Level,
    pub weights: BTreeMap<EventKind, f64>,
    pub stop: StopCondition,
    pub fixture: Option<Fixture>,
}

impl ScheduleConfig {
    /// Uniform weights over the level's event catalog.
    pub fn new(level: Level, seed: u64, max_steps: usize) -> Self {
        ScheduleConfig {
            seed,
            max_steps,
            level,
            weights: EventKind::catalog(level).map(|e| (e, 1.0)).collect(),
            stop: StopCondition::StepsExhausted,
            fixture: None,
        }
    }

    pub fn with_stop(mut self, stop: StopCondition) -> Self {
        self.stop = stop;
        self
    }

    pub fn with_weight(mut self, event: EventKind, weight: f64) -> Self {
        self.weights.insert(event, weight);
        self
    }

    pub fn weight(&self, event: EventKind) -> f64 {
        self.weights.get(&event).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some((&e, &w)) = self.weights.iter().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
            return Err(ConfigError::BadWeight { event: e, weight: w });
        }
        if self.weights.values().sum::<f64>() <= 0.0 {
            return Err(ConfigError::ZeroWeights);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("weight for {event} must be finite and non-negative, got {weight}")]
    BadWeight { event: EventKind, weight: f64 },
    #[error("event weights sum to zero")]
    ZeroWeights,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("deadlock: no event is enabled")]
    Deadlock,
    #[error("every enabled event has weight zero")]
    NoWeightedChoice,
}

/// Picks one enabled instance: an event name by weight among the names with
/// at least one enabled instance, then an instance of that name uniformly.
pub fn choose(
    enabled: &[EventInstance],
    cfg: &ScheduleConfig,
    rng: &mut ChaCha8Rng,
) -> Result<EventInstance, StepError> {
    if enabled.is_empty() {
        return Err(StepError::Deadlock);
    }
    let mut groups: BTreeMap<EventKind, Vec<&EventInstance>> = BTreeMap::new();
    for inst in enabled {
        groups.entry(inst.event).or_default().push(inst);
    }
    let kinds: Vec<(EventKind, f64)> = groups
        .keys()
        .map(|&e| (e, cfg.weight(e)))
        .filter(|&(_, w)| w > 0.0)
        .collect();
    if kinds.is_empty() {
        return Err(StepError::NoWeightedChoice);
    }
    let dist = WeightedIndex::new(kinds.iter().map(|&(_, w)| w))
        .map_err(|_| StepError::NoWeightedChoice)?;
    let kind = kinds[dist.sample(rng)].0;
    let group = &groups[&kind];
    Ok(group[rng.gen_range(0..group.len())].clone())
}

/// One scheduler step: deterministic given `(state, cfg, rng)`.
pub fn step(
    machine: &Machine<'_>,
    state: &WsanState,
    cfg: &ScheduleConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(WsanState, EventInstance), StepError> {
    let enabled = machine.enabled(state);
    let inst = choose(&enabled, cfg, rng)?;
    Ok((machine.apply_unchecked(state, &inst), inst))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub index: usize,
    /// `None` for the initialisation record.
    pub instance: Option<EventInstance>,
    pub digest: String,
    pub variant: usize,
    pub report: InvariantReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    StepsExhausted,
    RecoveryComplete,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Completed(StopReason),
    /// The step at `step` broke an invariant; the trace ends there.
    Violation { step: usize },
    /// No event was enabled after `step`.
    Deadlock { step: usize },
    /// Every enabled event had weight zero after `step`.
    Stalled { step: usize },
}

impl Outcome {
    pub fn is_healthy(&self) -> bool {
        matches!(self, Outcome::Completed(_))
    }
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub seed: u64,
    pub level: Level,
    pub steps: Vec<TraceStep>,
    pub outcome: Outcome,
    pub final_state: WsanState,
}

impl Trace {
    pub fn digests(&self) -> Vec<&str> {
        self.steps.iter().map(|s| s.digest.as_str()).collect()
    }

    pub fn violation(&self) -> Option<&InvariantReport> {
        match self.outcome {
            Outcome::Violation { step } => Some(&self.steps[step].report),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("script step {index} ({instance}): {source}")]
    Script {
        index: usize,
        instance: String,
        #[source]
        source: EventError,
    },
}

/// A transition observed during a run.
pub struct StepView<'a> {
    pub index: usize,
    pub scripted: bool,
    pub instance: &'a EventInstance,
    pub pre: &'a WsanState,
    pub post: &'a WsanState,
}

pub fn run(
    universe: &NodeUniverse,
    cfg: &ScheduleConfig,
    script: &[EventInstance],
) -> Result<Trace, RunError> {
    run_observed(universe, cfg, script, |_| {})
}

/// Runs the script prefix, then free seeded steps until the stop condition.
/// Invariants are checked after every step; a violation ends the trace.
pub fn run_observed(
    universe: &NodeUniverse,
    cfg: &ScheduleConfig,
    script: &[EventInstance],
    mut observe: impl FnMut(&StepView<'_>),
) -> Result<Trace, RunError> {
    cfg.validate()?;
    let machine = Machine::new(universe, cfg.level).with_fixture(cfg.fixture);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = machine.initialisation();
    let mut steps = vec![record(universe, 0, None, &state)];
    let mut removed_any = false;

    let finish = |steps, outcome, state| Trace {
        seed: cfg.seed,
        level: cfg.level,
        steps,
        outcome,
        final_state: state,
    };

    if !steps[0].report.is_clean() {
        return Ok(finish(steps, Outcome::Violation { step: 0 }, state));
    }

    for (i, inst) in script.iter().enumerate() {
        let next = machine.apply(&state, inst).map_err(|source| RunError::Script {
            index: i,
            instance: inst.render(universe),
            source,
        })?;
        let index = steps.len();
        observe(&StepView {
            index,
            scripted: true,
            instance: inst,
            pre: &state,
            post: &next,
        });
        removed_any |= inst.event == EventKind::RemoveNode;
        state = next;
        let rec = record(universe, index, Some(inst.clone()), &state);
        let clean = rec.report.is_clean();
        steps.push(rec);
        if !clean {
            return Ok(finish(steps, Outcome::Violation { step: index }, state));
        }
    }

    let stop_now = |state: &WsanState, removed_any: bool| match cfg.stop {
        StopCondition::StepsExhausted => None,
        StopCondition::RecoveryComplete => {
            (removed_any && !state.in_recovery()).then_some(StopReason::RecoveryComplete)
        }
        StopCondition::Custom(pred) => pred(state).then_some(StopReason::Custom),
    };

    for _ in 0..cfg.max_steps {
        if let Some(reason) = stop_now(&state, removed_any) {
            return Ok(finish(steps, Outcome::Completed(reason), state));
        }
        let last = steps.len() - 1;
        let (next, inst) = match step(&machine, &state, cfg, &mut rng) {
            Ok(x) => x,
            Err(StepError::Deadlock) => {
                return Ok(finish(steps, Outcome::Deadlock { step: last }, state))
            }
            Err(StepError::NoWeightedChoice) => {
                return Ok(finish(steps, Outcome::Stalled { step: last }, state))
            }
        };
        let index = steps.len();
        observe(&StepView {
            index,
            scripted: false,
            instance: &inst,
            pre: &state,
            post: &next,
        });
        removed_any |= inst.event == EventKind::RemoveNode;
        state = next;
        let rec = record(universe, index, Some(inst), &state);
        let clean = rec.report.is_clean();
        steps.push(rec);
        if !clean {
            debug!(step = index, "invariant violation");
            return Ok(finish(steps, Outcome::Violation { step: index }, state));
        }
    }
    let reason = stop_now(&state, removed_any).unwrap_or(StopReason::StepsExhausted);
    Ok(finish(steps, Outcome::Completed(reason), state))
}

fn record(
    universe: &NodeUniverse,
    index: usize,
    instance: Option<EventInstance>,
    state: &WsanState,
) -> TraceStep {
    TraceStep {
        index,
        instance,
        digest: state.digest(universe),
        variant: state.variant(),
        report: check_invariants(universe, state),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExploreError {
    #[error("universe has {nodes} nodes, above the exploration limit of {limit}")]
    TooLarge { nodes: usize, limit: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct ExploreOptions {
    pub max_nodes: usize,
    pub force: bool,
    pub fixture: Option<Fixture>,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions {
            max_nodes: DEFAULT_MAX_EXPLORE_NODES,
            force: false,
            fixture: None,
        }
    }
}

impl ExploreOptions {
    pub fn check(&self, universe: &NodeUniverse) -> Result<(), ExploreError> {
        if universe.len() > self.max_nodes && !self.force {
            return Err(ExploreError::TooLarge {
                nodes: universe.len(),
                limit: self.max_nodes,
            });
        }
        Ok(())
    }
}

/// Breadth-first visit of every state reachable within `depth` steps.
/// `visit` sees each distinct state once, with its enabled set and depth.
pub fn bfs(
    machine: &Machine<'_>,
    depth: usize,
    mut visit: impl FnMut(&WsanState, &[EventInstance], usize),
) -> BfsStats {
    let init = machine.initialisation();
    let mut seen: HashSet<WsanState> = HashSet::from([init.clone()]);
    let mut frontier = vec![init];
    let mut stats = BfsStats::default();
    for d in 0..=depth {
        let mut next_frontier = Vec::new();
        for state in &frontier {
            let enabled = machine.enabled(state);
            visit(state, &enabled, d);
            stats.states += 1;
            if d == depth {
                continue;
            }
            for inst in &enabled {
                stats.transitions += 1;
                let next = machine.apply_unchecked(state, inst);
                if !seen.contains(&next) {
                    seen.insert(next.clone());
                    next_frontier.push(next);
                }
            }
        }
        if d == depth {
            break;
        }
        if next_frontier.is_empty() {
            stats.exhausted = true;
            break;
        }
        stats.depth_reached = d + 1;
        frontier = next_frontier;
    }
    stats
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BfsStats {
    pub states: usize,
    pub transitions: usize,
    pub depth_reached: usize,
    /// True when the reachable state space was exhausted before `depth`.
    pub exhausted: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReachabilityReport {
    pub level: Level,
    pub nodes: usize,
    pub depth: usize,
    pub states: usize,
    pub transitions: usize,
    pub depth_reached: usize,
    pub exhausted: bool,
    pub deadlocks: usize,
    pub violations: usize,
    pub first_deadlock: Option<String>,
    pub first_violation: Option<Vec<String>>,
}

impl ReachabilityReport {
    pub fn is_clean(&self) -> bool {
        self.deadlocks == 0 && self.violations == 0
    }
}

/// Exhaustive bounded exploration: counts states, deadlocks and invariant
/// violations.
pub fn explore(
    universe: &NodeUniverse,
    level: Level,
    depth: usize,
    opts: ExploreOptions,
) -> Result<ReachabilityReport, ExploreError> {
    opts.check(universe)?;
    let machine = Machine::new(universe, level).with_fixture(opts.fixture);
    let mut deadlocks = 0;
    let mut violations = 0;
    let mut first_deadlock = None;
    let mut first_violation = None;
    let stats = bfs(&machine, depth, |state, enabled, _| {
        if enabled.is_empty() {
            deadlocks += 1;
            first_deadlock.get_or_insert_with(|| state.canonical(universe));
        }
        let report = check_invariants(universe, state);
        if !report.is_clean() {
            violations += 1;
            first_violation.get_or_insert_with(|| report.render(universe));
        }
    });
    Ok(ReachabilityReport {
        level,
        nodes: universe.len(),
        depth,
        states: stats.states,
        transitions: stats.transitions,
        depth_reached: stats.depth_reached,
        exhausted: stats.exhausted,
        deadlocks,
        violations,
        first_deadlock,
        first_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relations::NodeId;

    fn universe() -> NodeUniverse {
        NodeUniverse::with_counts(3, 1).unwrap()
    }

    #[test]
    fn zero_steps_yields_initialisation_only() {
        let u = universe();
        let trace = run(&u, &ScheduleConfig::new(Level::M0, 1, 0), &[]).unwrap();
        assert_eq!(trace.steps.len(), 1);
        assert_eq!(trace.steps[0].instance, None);
        assert_eq!(trace.outcome, Outcome::Completed(StopReason::StepsExhausted));
    }

    #[test]
    fn same_seed_same_trace() {
        let u = universe();
        for level in Level::ALL {
            let cfg = ScheduleConfig::new(level, 42, 200);
            let a = run(&u, &cfg, &[]).unwrap();
            let b = run(&u, &cfg, &[]).unwrap();
            assert_eq!(a.steps, b.steps);
            let c = run(&u, &ScheduleConfig::new(level, 43, 200), &[]).unwrap();
            assert_ne!(a.digests(), c.digests());
        }
    }

    #[test]
    fn zero_weight_event_never_chosen() {
        let u = universe();
        let cfg = ScheduleConfig::new(Level::M0, 5, 300).with_weight(EventKind::AddLink, 0.0);
        let trace = run(&u, &cfg, &[]).unwrap();
        assert!(trace.outcome.is_healthy());
        assert!(trace
            .steps
            .iter()
            .filter_map(|s| s.instance.as_ref())
            .all(|i| i.event != EventKind::AddLink));
    }

    #[test]
    fn recovery_phase_picks_recovery_event() {
        let u = universe();
        let m = Machine::new(&u, Level::M0);
        let (a1, a2, a3) = (NodeId(0), NodeId(1), NodeId(2));
        let script = [
            EventInstance::new(EventKind::AddNode, [a1]),
            EventInstance::new(EventKind::AddNode, [a2]),
            EventInstance::new(EventKind::AddNode, [a3]),
            EventInstance::new(EventKind::AddLink, [a1, a2]),
            EventInstance::new(EventKind::AddLink, [a1, a3]),
            EventInstance::new(EventKind::RemoveNode, [a1]),
        ];
        let mut s = m.initialisation();
        for inst in &script {
            s = m.apply(&s, inst).unwrap();
        }
        let cfg = ScheduleConfig::new(Level::M0, 9, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (next, inst) = step(&m, &s, &cfg, &mut rng).unwrap();
        assert!(inst.event.is_recovery());
        assert_eq!(next.variant(), 1);

        let stop = cfg.clone().with_stop(StopCondition::RecoveryComplete);
        let trace = run(&u, &stop, &script).unwrap();
        assert_eq!(trace.outcome, Outcome::Completed(StopReason::RecoveryComplete));
        assert_eq!(trace.steps.len(), script.len() + 1 + 2);
        assert_eq!(trace.final_state.variant(), 0);
    }

    #[test]
    fn script_errors_name_the_guard() {
        let u = universe();
        let a1 = NodeId(0);
        let script = [
            EventInstance::new(EventKind::AddNode, [a1]),
            EventInstance::new(EventKind::AddLink, [a1, a1]),
        ];
        let err = run(&u, &ScheduleConfig::new(Level::M0, 0, 0), &script).unwrap_err();
        match err {
            RunError::Script { index, source, .. } => {
                assert_eq!(index, 1);
                assert_eq!(source.guard(), Some("grd3"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = ScheduleConfig::new(Level::M0, 0, 1);
        for w in cfg.weights.values_mut() {
            *w = 0.0;
        }
        assert_eq!(cfg.validate(), Err(ConfigError::ZeroWeights));
        let neg = ScheduleConfig::new(Level::M0, 0, 1).with_weight(EventKind::AddNode, -1.0);
        assert!(matches!(neg.validate(), Err(ConfigError::BadWeight { .. })));
    }

    #[test]
    fn stalls_when_only_zero_weight_events_enabled() {
        let u = NodeUniverse::with_counts(1, 0).unwrap();
        let cfg = ScheduleConfig::new(Level::M0, 0, 5).with_weight(EventKind::AddNode, 0.0);
        let trace = run(&u, &cfg, &[]).unwrap();
        assert_eq!(trace.outcome, Outcome::Stalled { step: 0 });
    }

    #[test]
    fn custom_stop() {
        let u = universe();
        let cfg = ScheduleConfig::new(Level::M1, 3, 100)
            .with_stop(StopCondition::Custom(|s| s.anet.len() >= 2));
        let trace = run(&u, &cfg, &[]).unwrap();
        assert_eq!(trace.outcome, Outcome::Completed(StopReason::Custom));
        assert!(trace.final_state.anet.len() >= 2);
    }

    #[test]
    fn explore_small_universes() {
        let two = NodeUniverse::with_counts(2, 0).unwrap();
        let r = explore(&two, Level::M0, 6, ExploreOptions::default()).unwrap();
        assert!(r.is_clean(), "{r:?}");
        assert!(r.states > 1);

        let zero = explore(&two, Level::M0, 0, ExploreOptions::default()).unwrap();
        assert_eq!((zero.states, zero.transitions), (1, 0));
        assert!(zero.is_clean());

        let m2 = NodeUniverse::with_counts(3, 1).unwrap();
        let r = explore(&m2, Level::M2, 6, ExploreOptions::default()).unwrap();
        assert!(r.is_clean(), "{r:?}");
    }

    #[test]
    fn explosion_guard() {
        let big = NodeUniverse::with_counts(20, 0).unwrap();
        assert_eq!(
            explore(&big, Level::M0, 1, ExploreOptions::default()),
            Err(ExploreError::TooLarge { nodes: 20, limit: 6 })
        );
        let forced = ExploreOptions {
            force: true,
            ..Default::default()
        };
        assert!(explore(&big, Level::M0, 1, forced).is_ok());
    }
}
