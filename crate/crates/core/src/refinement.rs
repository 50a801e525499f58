//! Extensional refinement checking between adjacent machine levels.
//!
//! For every reachable concrete state and every enabled concrete instance:
//!
//! * guard strengthening: the abstract counterpart of the instance is enabled
//!   on the projected state;
//! * action consistency: projecting the concrete successor gives the abstract
//!   successor on the observed variables. New events must leave those
//!   variables unchanged.
//!
//! The observed variables are the actor statuses, `ANET`, `FailedNodeNeigh`
//! and, when the abstract level has it, `l_net` restricted to actor via-nodes.
//! Sensor statuses and sensor-via routes belong to the sensor layer alone.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::machine::{EventInstance, EventKind, Fixture, Machine};
use crate::relations::{BinRel, NodeId, TriRel};
use crate::scheduler::{bfs, ExploreError, ExploreOptions};
use crate::state::{Level, NodeUniverse, Status, WsanState};

/// A concrete level and the level it refines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum LevelPair {
    #[serde(rename = "m1-m0")]
    M1M0,
    #[serde(rename = "m2-m1")]
    M2M1,
}

impl LevelPair {
    pub const ALL: [LevelPair; 2] = [LevelPair::M1M0, LevelPair::M2M1];

    pub fn concrete(self) -> Level {
        match self {
            LevelPair::M1M0 => Level::M1,
            LevelPair::M2M1 => Level::M2,
        }
    }

    pub fn abstract_level(self) -> Level {
        match self {
            LevelPair::M1M0 => Level::M0,
            LevelPair::M2M1 => Level::M1,
        }
    }
}

impl fmt::Display for LevelPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ⊑ {}", self.concrete(), self.abstract_level())
    }
}

/// The abstract instance a concrete instance refines, or `None` for events
/// new at the concrete level (they refine `skip`).
pub fn abstract_instance(pair: LevelPair, inst: &EventInstance) -> Option<EventInstance> {
    use EventKind::*;
    let p = &inst.params;
    let mapped = |e: EventKind, params: &[NodeId]| Some(EventInstance::new(e, params.to_vec()));
    match (pair, inst.event) {
        (_, AddNode | AddLink | RemoveNode) => Some(inst.clone()),
        (LevelPair::M1M0, FaultDetRec | FaultDetRecGlobal) => mapped(FaultDetRec, &p[..2]),
        (LevelPair::M1M0, FaultDetRec2 | FaultDetRec2Global) => mapped(FaultDetRec2, &p[..2]),
        (LevelPair::M1M0, AddlNet2hopLink) => None,
        (LevelPair::M2M1, FaultDetRec | FaultDetRec2 | FaultDetRecGlobal | FaultDetRec2Global) => {
            Some(inst.clone())
        }
        (LevelPair::M2M1, AddlNet2hopLink) => Some(inst.clone()),
        (LevelPair::M2M1, FaultDetRecDirect) => mapped(FaultDetRec, &[p[0], p[1], p[2], p[1], p[0]]),
        (LevelPair::M2M1, FaultDetRec2Direct) => mapped(FaultDetRec2, p),
        (LevelPair::M2M1, AddSensorNode | AddSLink | AddSALink) => None,
        (LevelPair::M1M0, AddSensorNode | AddSLink | AddSALink | FaultDetRecDirect | FaultDetRec2Direct) => {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckKind {
    GuardStrengthening,
    ActionConsistency,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    pub pair: LevelPair,
    pub check: CheckKind,
    pub instance: String,
    pub abstract_instance: Option<String>,
    pub detail: String,
    /// Canonical rendering of the concrete pre-state.
    pub state: String,
}

impl fmt::Display for Counterexample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let check = match self.check {
            CheckKind::GuardStrengthening => "guard strengthening",
            CheckKind::ActionConsistency => "action consistency",
        };
        write!(f, "{} {check} fails for {}", self.pair, self.instance)?;
        if let Some(a) = &self.abstract_instance {
            write!(f, " (abstract {a})")?;
        }
        writeln!(f, ": {}", self.detail)?;
        write!(f, "{}", self.state)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    /// Nothing to check: the concrete instance is not enabled, or the event
    /// is new and the check does not apply.
    Vacuous,
    Fail(Box<Counterexample>),
}

impl Verdict {
    pub fn is_fail(&self) -> bool {
        matches!(self, Verdict::Fail(_))
    }
}

/// The variables shared with the abstract level, as compared by the checker.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Observed {
    actor_status: Vec<Status>,
    anet: BinRel,
    fnn: Vec<NodeId>,
    lnet: Option<TriRel>,
}

impl Observed {
    fn of(universe: &NodeUniverse, s: &WsanState, abstract_level: Level) -> Self {
        let lnet = (abstract_level >= Level::M1).then(|| {
            let mut l = s.lnet.clone();
            l.retain(|_, _, via| universe.is_actor(via));
            l
        });
        Observed {
            actor_status: universe.actors().map(|a| s.status(a)).collect(),
            anet: s.anet.clone(),
            fnn: s.failed_node_neigh.iter().copied().collect(),
            lnet,
        }
    }

    fn diff(&self, other: &Observed) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.actor_status != other.actor_status {
            out.push("Status");
        }
        if self.anet != other.anet {
            out.push("ANET");
        }
        if self.fnn != other.fnn {
            out.push("FailedNodeNeigh");
        }
        if self.lnet != other.lnet {
            out.push("l_net");
        }
        out
    }
}

/// Checks one level pair; the fixture, if any, breaks the concrete machine.
#[derive(Debug, Clone, Copy)]
pub struct RefinementChecker<'u> {
    pub pair: LevelPair,
    pub concrete: Machine<'u>,
    pub abstract_machine: Machine<'u>,
}

impl<'u> RefinementChecker<'u> {
    pub fn new(universe: &'u NodeUniverse, pair: LevelPair) -> Self {
        RefinementChecker {
            pair,
            concrete: Machine::new(universe, pair.concrete()),
            abstract_machine: Machine::new(universe, pair.abstract_level()),
        }
    }

    pub fn with_fixture(mut self, fixture: Option<Fixture>) -> Self {
        self.concrete = self.concrete.with_fixture(fixture);
        self
    }

    fn universe(&self) -> &'u NodeUniverse {
        self.concrete.universe
    }

    fn project(&self, s: &WsanState) -> WsanState {
        s.project(self.pair.abstract_level())
            .expect("concrete level is above the abstract level")
    }

    fn fail(
        &self,
        check: CheckKind,
        state: &WsanState,
        inst: &EventInstance,
        abs: Option<&EventInstance>,
        detail: String,
    ) -> Verdict {
        let u = self.universe();
        Verdict::Fail(Box::new(Counterexample {
            pair: self.pair,
            check,
            instance: inst.render(u),
            abstract_instance: abs.map(|a| a.render(u)),
            detail,
            state: state.canonical(u),
        }))
    }

    pub fn check_guard_strengthening(&self, state: &WsanState, inst: &EventInstance) -> Verdict {
        if !self.concrete.is_enabled(state, inst) {
            return Verdict::Vacuous;
        }
        let Some(abs) = abstract_instance(self.pair, inst) else {
            return Verdict::Vacuous;
        };
        match self.abstract_machine.guard(&self.project(state), &abs) {
            Ok(()) => Verdict::Pass,
            Err(e) => self.fail(
                CheckKind::GuardStrengthening,
                state,
                inst,
                Some(&abs),
                format!("abstract guard fails: {e}"),
            ),
        }
    }

    pub fn check_action_consistency(&self, state: &WsanState, inst: &EventInstance) -> Verdict {
        if !self.concrete.is_enabled(state, inst) {
            return Verdict::Vacuous;
        }
        let u = self.universe();
        let level = self.pair.abstract_level();
        let projected = self.project(state);
        let post = self.concrete.apply_unchecked(state, inst);
        let observed = Observed::of(u, &self.project(&post), level);
        let abs = abstract_instance(self.pair, inst);
        let expected = match &abs {
            Some(a) => self.abstract_machine.apply_unchecked(&projected, a),
            None => projected.clone(),
        };
        let diff = observed.diff(&Observed::of(u, &expected, level));
        if !diff.is_empty() {
            let what = if abs.is_some() {
                "differs from the abstract successor on"
            } else {
                "new event changes"
            };
            return self.fail(
                CheckKind::ActionConsistency,
                state,
                inst,
                abs.as_ref(),
                format!("{what} {}", diff.join(", ")),
            );
        }
        if self.pair == LevelPair::M2M1
            && matches!(inst.event, EventKind::FaultDetRec | EventKind::FaultDetRecDirect)
            && !self.in_update_set(&projected, inst, &post.lnet)
        {
            return self.fail(
                CheckKind::ActionConsistency,
                state,
                inst,
                abs.as_ref(),
                "l_net successor is outside the abstract update set".to_string(),
            );
        }
        Verdict::Pass
    }

    /// Whether `lnet` is one of the successors the M1 FaultDetRec(n, k, m, ·, ·)
    /// admits from `pre`, over every witness pair.
    fn in_update_set(&self, pre: &WsanState, inst: &EventInstance, lnet: &TriRel) -> bool {
        let u = self.universe();
        let (n, k, m) = (inst.params[0], inst.params[1], inst.params[2]);
        u.nodes().filter(|&v| v != m).any(|v| {
            u.nodes().filter(|&w| w != m).any(|w| {
                let witness = EventInstance::new(EventKind::FaultDetRec, [n, k, m, v, w]);
                &self.abstract_machine.apply_unchecked(pre, &witness).lnet == lnet
            })
        })
    }
}

/// Aggregated verdicts for one level pair.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PairReport {
    pub pair: Option<LevelPair>,
    pub states: usize,
    pub instances: usize,
    pub guard_checks: usize,
    pub guard_failures: usize,
    pub action_checks: usize,
    pub action_failures: usize,
    pub vacuous: usize,
    /// Up to [`MAX_COUNTEREXAMPLES`] failures, in canonical order.
    pub counterexamples: Vec<Counterexample>,
}

pub const MAX_COUNTEREXAMPLES: usize = 5;

impl PairReport {
    pub fn passed(&self) -> bool {
        self.guard_failures == 0 && self.action_failures == 0
    }

    fn record(&mut self, verdict: Verdict, check: CheckKind) {
        match verdict {
            Verdict::Vacuous => self.vacuous += 1,
            Verdict::Pass | Verdict::Fail(_) => match check {
                CheckKind::GuardStrengthening => self.guard_checks += 1,
                CheckKind::ActionConsistency => self.action_checks += 1,
            },
        }
        if let Verdict::Fail(c) = verdict {
            match check {
                CheckKind::GuardStrengthening => self.guard_failures += 1,
                CheckKind::ActionConsistency => self.action_failures += 1,
            }
            if self.counterexamples.len() < MAX_COUNTEREXAMPLES {
                self.counterexamples.push(*c);
            }
        }
    }

    fn merge(mut self, other: PairReport) -> PairReport {
        self.pair = self.pair.or(other.pair);
        self.states += other.states;
        self.instances += other.instances;
        self.guard_checks += other.guard_checks;
        self.guard_failures += other.guard_failures;
        self.action_checks += other.action_checks;
        self.action_failures += other.action_failures;
        self.vacuous += other.vacuous;
        self.counterexamples.extend(other.counterexamples);
        self.counterexamples.truncate(MAX_COUNTEREXAMPLES);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RefinementReport {
    pub actors: usize,
    pub sensors: usize,
    pub depth: usize,
    pub fixture: Option<Fixture>,
    pub pairs: Vec<PairReport>,
}

impl RefinementReport {
    pub fn passed(&self) -> bool {
        self.pairs.iter().all(PairReport::passed)
    }

    pub fn first_counterexample(&self) -> Option<&Counterexample> {
        self.pairs.iter().flat_map(|p| &p.counterexamples).next()
    }
}

/// Runs both checks over every reachable (state, enabled instance) pair of
/// the concrete machine, to `depth` steps.
pub fn sweep_pair(universe: &NodeUniverse, pair: LevelPair, depth: usize, fixture: Option<Fixture>) -> PairReport {
    let checker = RefinementChecker::new(universe, pair).with_fixture(fixture);
    let mut work: Vec<(WsanState, Vec<EventInstance>)> = Vec::new();
    bfs(&checker.concrete, depth, |s, enabled, _| {
        work.push((s.clone(), enabled.to_vec()))
    });
    // Chunks keep the merged counterexample order independent of scheduling.
    work.par_chunks(64)
        .map(|chunk| {
            let mut report = PairReport {
                pair: Some(pair),
                ..Default::default()
            };
            for (state, enabled) in chunk {
                report.states += 1;
                report.instances += enabled.len();
                for inst in enabled {
                    report.record(checker.check_guard_strengthening(state, inst), CheckKind::GuardStrengthening);
                    report.record(checker.check_action_consistency(state, inst), CheckKind::ActionConsistency);
                }
            }
            report
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(
            PairReport {
                pair: Some(pair),
                ..Default::default()
            },
            PairReport::merge,
        )
}

/// Sweeps M1 ⊑ M0 and M2 ⊑ M1.
pub fn sweep(universe: &NodeUniverse, depth: usize, opts: ExploreOptions) -> Result<RefinementReport, ExploreError> {
    opts.check(universe)?;
    Ok(RefinementReport {
        actors: universe.actors().count(),
        sensors: universe.sensors().count(),
        depth,
        fixture: opts.fixture,
        pairs: LevelPair::ALL
            .into_iter()
            .map(|pair| sweep_pair(universe, pair, depth, opts.fixture))
            .collect(),
    })
}
