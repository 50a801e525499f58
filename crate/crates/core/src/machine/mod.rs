//! Guarded events of the three machine levels.
//!
//! Every event has a guard, evaluated on the pre-state, and an action whose
//! right-hand sides also read only the pre-state (simultaneous substitution).
//! Events at a refined level either extend an abstract event or are new;
//! the mapping between them lives in [`crate::refinement`].

use std::cell::OnceCell;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::relations::{BinRel, NodeId};
use crate::state::{Level, NodeUniverse, WsanState};

mod m0;
mod m1;
mod m2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    AddNode,
    AddLink,
    RemoveNode,
    FaultDetRec,
    FaultDetRec2,
    AddlNet2hopLink,
    FaultDetRecGlobal,
    FaultDetRec2Global,
    AddSensorNode,
    AddSLink,
    AddSALink,
    FaultDetRecDirect,
    FaultDetRec2Direct,
}

impl EventKind {
    pub const ALL: [EventKind; 13] = [
        EventKind::AddNode,
        EventKind::AddLink,
        EventKind::RemoveNode,
        EventKind::FaultDetRec,
        EventKind::FaultDetRec2,
        EventKind::AddlNet2hopLink,
        EventKind::FaultDetRecGlobal,
        EventKind::FaultDetRec2Global,
        EventKind::AddSensorNode,
        EventKind::AddSLink,
        EventKind::AddSALink,
        EventKind::FaultDetRecDirect,
        EventKind::FaultDetRec2Direct,
    ];

    /// Stable name used in traces and scenario scripts.
    pub fn name(self) -> &'static str {
        match self {
            EventKind::AddNode => "AddNode",
            EventKind::AddLink => "AddLink",
            EventKind::RemoveNode => "RemoveNode",
            EventKind::FaultDetRec => "FaultDetRec",
            EventKind::FaultDetRec2 => "FaultDetRec2",
            EventKind::AddlNet2hopLink => "Addl_net2hopLink",
            EventKind::FaultDetRecGlobal => "FaultDetRecGlobal",
            EventKind::FaultDetRec2Global => "FaultDetRec2Global",
            EventKind::AddSensorNode => "AddSensorNode",
            EventKind::AddSLink => "AddSLink",
            EventKind::AddSALink => "AddSALink",
            EventKind::FaultDetRecDirect => "FaultDetRecDirect",
            EventKind::FaultDetRec2Direct => "FaultDetRec2Direct",
        }
    }

    /// Recovery events remove exactly one element of `FailedNodeNeigh`.
    pub fn is_recovery(self) -> bool {
        matches!(
            self,
            EventKind::FaultDetRec
                | EventKind::FaultDetRec2
                | EventKind::FaultDetRecGlobal
                | EventKind::FaultDetRec2Global
                | EventKind::FaultDetRecDirect
                | EventKind::FaultDetRec2Direct
        )
    }

    /// The level at which the event first appears.
    pub fn introduced_at(self) -> Level {
        match self {
            EventKind::AddNode
            | EventKind::AddLink
            | EventKind::RemoveNode
            | EventKind::FaultDetRec
            | EventKind::FaultDetRec2 => Level::M0,
            EventKind::AddlNet2hopLink
            | EventKind::FaultDetRecGlobal
            | EventKind::FaultDetRec2Global => Level::M1,
            EventKind::AddSensorNode
            | EventKind::AddSLink
            | EventKind::AddSALink
            | EventKind::FaultDetRecDirect
            | EventKind::FaultDetRec2Direct => Level::M2,
        }
    }

    pub fn in_catalog(self, level: Level) -> bool {
        self.introduced_at() <= level
    }

    /// Parameter names at `level`, or `None` if the event does not exist there.
    pub fn params(self, level: Level) -> Option<&'static [&'static str]> {
        if !self.in_catalog(level) {
            return None;
        }
        Some(match (self, level) {
            (EventKind::AddNode | EventKind::RemoveNode | EventKind::AddSensorNode, _) => &["n"],
            (EventKind::AddLink | EventKind::AddSLink | EventKind::AddSALink, _) => &["n", "m"],
            (EventKind::FaultDetRec, Level::M0) => &["n", "k"],
            (EventKind::FaultDetRec, Level::M1) => &["n", "k", "m", "v", "w"],
            (EventKind::FaultDetRec, Level::M2) => &["n", "k", "m", "x", "y"],
            (EventKind::FaultDetRec2, Level::M0) => &["n", "k"],
            (EventKind::FaultDetRec2, _) => &["n", "k", "m"],
            (EventKind::AddlNet2hopLink, _) => &["n", "m", "k"],
            (EventKind::FaultDetRecGlobal | EventKind::FaultDetRec2Global, _) => &["n", "k"],
            (EventKind::FaultDetRecDirect | EventKind::FaultDetRec2Direct, _) => &["n", "k", "m"],
        })
    }

    pub fn catalog(level: Level) -> impl Iterator<Item = EventKind> {
        EventKind::ALL.into_iter().filter(move |e| e.in_catalog(level))
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown event `{0}`")]
pub struct UnknownEvent(pub String);

impl FromStr for EventKind {
    type Err = UnknownEvent;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventKind::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| UnknownEvent(s.to_owned()))
    }
}

impl Serialize for EventKind {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for EventKind {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let name = String::deserialize(deserializer)?;
        name.parse().map_err(serde::de::Error::custom)
    }
}

/// An event name with its bound parameters.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventInstance {
    pub event: EventKind,
    pub params: Vec<NodeId>,
}

impl EventInstance {
    pub fn new(event: EventKind, params: impl Into<Vec<NodeId>>) -> Self {
        EventInstance {
            event,
            params: params.into(),
        }
    }

    pub fn render(&self, universe: &NodeUniverse) -> String {
        format!(
            "{}({})",
            self.event,
            universe.names_of(&self.params).join(",")
        )
    }
}

/// A guard conjunct that evaluated false.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unsatisfied {
    pub guard: &'static str,
    pub detail: &'static str,
}

pub(crate) fn require(cond: bool, guard: &'static str, detail: &'static str) -> Result<(), Unsatisfied> {
    if cond {
        Ok(())
    } else {
        Err(Unsatisfied { guard, detail })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EventError {
    #[error("{event} is not an event of the {level} machine")]
    NotInCatalog { event: EventKind, level: Level },
    #[error("{event} takes {expected} parameters at {level}, got {got}")]
    Arity {
        event: EventKind,
        level: Level,
        expected: usize,
        got: usize,
    },
    #[error("parameter {0} is not a node of the universe")]
    UnknownNode(NodeId),
    #[error("{event} not enabled: {guard} fails ({detail})")]
    NotEnabled {
        event: EventKind,
        guard: &'static str,
        detail: &'static str,
    },
}

impl EventError {
    pub fn guard(&self) -> Option<&'static str> {
        match self {
            EventError::NotEnabled { guard, .. } => Some(guard),
            _ => None,
        }
    }
}

/// Deliberately broken machine variants, used to show that the refinement
/// checker notices a weakened guard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fixture {
    /// Refined FaultDetRec events lose the inherited grd2 (no existing path, n ≠ k).
    DropRecoveryGrd2,
}

impl Fixture {
    pub fn name(self) -> &'static str {
        match self {
            Fixture::DropRecoveryGrd2 => "drop-recovery-grd2",
        }
    }
}

impl FromStr for Fixture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "drop-recovery-grd2" => Ok(Fixture::DropRecoveryGrd2),
            _ => Err(format!("unknown machine fixture `{s}` (known: drop-recovery-grd2)")),
        }
    }
}

/// Pre-state view shared by guard evaluation, with closures computed lazily
/// and at most once per state.
pub struct Ctx<'a> {
    pub universe: &'a NodeUniverse,
    pub state: &'a WsanState,
    pub fixture: Option<Fixture>,
    anet_closure: OnceCell<BinRel>,
    snet_closure: OnceCell<BinRel>,
}

impl<'a> Ctx<'a> {
    pub fn new(universe: &'a NodeUniverse, state: &'a WsanState, fixture: Option<Fixture>) -> Self {
        Ctx {
            universe,
            state,
            fixture,
            anet_closure: OnceCell::new(),
            snet_closure: OnceCell::new(),
        }
    }

    pub fn anet_closure(&self) -> &BinRel {
        self.anet_closure.get_or_init(|| self.state.anet.closure())
    }

    pub fn snet_closure(&self) -> &BinRel {
        self.snet_closure.get_or_init(|| self.state.snet.closure())
    }
}

/// A machine at a given level over a fixed universe.
#[derive(Debug, Clone, Copy)]
pub struct Machine<'u> {
    pub universe: &'u NodeUniverse,
    pub level: Level,
    pub fixture: Option<Fixture>,
}

impl<'u> Machine<'u> {
    pub fn new(universe: &'u NodeUniverse, level: Level) -> Self {
        Machine {
            universe,
            level,
            fixture: None,
        }
    }

    pub fn with_fixture(mut self, fixture: Option<Fixture>) -> Self {
        self.fixture = fixture;
        self
    }

    pub fn initialisation(&self) -> WsanState {
        WsanState::initial(self.universe, self.level)
    }

    pub fn ctx<'a>(&self, state: &'a WsanState) -> Ctx<'a>
    where
        'u: 'a,
    {
        debug_assert_eq!(state.level, self.level);
        Ctx::new(self.universe, state, self.fixture)
    }

    fn validate(&self, inst: &EventInstance) -> Result<(), EventError> {
        let params = inst.event.params(self.level).ok_or(EventError::NotInCatalog {
            event: inst.event,
            level: self.level,
        })?;
        if params.len() != inst.params.len() {
            return Err(EventError::Arity {
                event: inst.event,
                level: self.level,
                expected: params.len(),
                got: inst.params.len(),
            });
        }
        if let Some(&bad) = inst.params.iter().find(|&&n| !self.universe.contains(n)) {
            return Err(EventError::UnknownNode(bad));
        }
        Ok(())
    }

    /// Evaluates the full guard of `inst`, naming the first failing conjunct.
    pub fn guard_in(&self, ctx: &Ctx<'_>, inst: &EventInstance) -> Result<(), EventError> {
        self.validate(inst)?;
        let p = &inst.params;
        let result = match (self.level, inst.event) {
            (_, EventKind::AddNode) => m0::add_node_guard(ctx, p[0]),
            (_, EventKind::AddLink) => m0::add_link_guard(ctx, p[0], p[1]),
            (_, EventKind::RemoveNode) => m0::remove_node_guard(ctx, p[0]),
            (Level::M0, EventKind::FaultDetRec) => m0::fault_det_rec_guard(ctx, p[0], p[1]),
            (Level::M0, EventKind::FaultDetRec2) => m0::fault_det_rec2_guard(ctx, p[0], p[1]),
            (Level::M1, EventKind::FaultDetRec) => {
                m1::fault_det_rec_guard(ctx, p[0], p[1], p[2], p[3], p[4])
            }
            (Level::M1, EventKind::FaultDetRec2) => m1::fault_det_rec2_guard(ctx, p[0], p[1], p[2]),
            (_, EventKind::AddlNet2hopLink) => m1::add_2hop_guard(ctx, p[0], p[1], p[2]),
            (_, EventKind::FaultDetRecGlobal) => m1::fault_det_rec_global_guard(ctx, p[0], p[1]),
            (_, EventKind::FaultDetRec2Global) => m1::fault_det_rec2_global_guard(ctx, p[0], p[1]),
            (Level::M2, EventKind::FaultDetRec) => {
                m2::fault_det_rec_guard(ctx, p[0], p[1], p[2], p[3], p[4])
            }
            (Level::M2, EventKind::FaultDetRec2) => m2::fault_det_rec2_guard(ctx, p[0], p[1], p[2]),
            (_, EventKind::AddSensorNode) => m2::add_sensor_node_guard(ctx, p[0]),
            (_, EventKind::AddSLink) => m2::add_slink_guard(ctx, p[0], p[1]),
            (_, EventKind::AddSALink) => m2::add_salink_guard(ctx, p[0], p[1]),
            (_, EventKind::FaultDetRecDirect) => m2::fault_det_rec_direct_guard(ctx, p[0], p[1], p[2]),
            (_, EventKind::FaultDetRec2Direct) => m2::fault_det_rec2_direct_guard(ctx, p[0], p[1], p[2]),
        };
        result.map_err(|u| EventError::NotEnabled {
            event: inst.event,
            guard: u.guard,
            detail: u.detail,
        })
    }

    pub fn guard(&self, state: &WsanState, inst: &EventInstance) -> Result<(), EventError> {
        self.guard_in(&self.ctx(state), inst)
    }

    pub fn is_enabled(&self, state: &WsanState, inst: &EventInstance) -> bool {
        self.guard(state, inst).is_ok()
    }

    /// Applies the action of an instance already known to be enabled.
    pub fn apply_unchecked(&self, state: &WsanState, inst: &EventInstance) -> WsanState {
        let p = &inst.params;
        let mut next = state.clone();
        match (self.level, inst.event) {
            (_, EventKind::AddNode) | (_, EventKind::AddSensorNode) => m0::add_node_action(&mut next, p[0]),
            (_, EventKind::AddLink) => m0::add_link_action(state, &mut next, p[0], p[1]),
            (_, EventKind::RemoveNode) => m0::remove_node_action(state, &mut next, p[0]),
            (Level::M0, EventKind::FaultDetRec) | (_, EventKind::FaultDetRecGlobal) => {
                m0::fault_det_rec_action(state, &mut next, p[0], p[1])
            }
            (Level::M0, EventKind::FaultDetRec2) | (_, EventKind::FaultDetRec2Global) => {
                m0::fault_det_rec2_action(&mut next, p[0])
            }
            (_, EventKind::FaultDetRec) => {
                m1::fault_det_rec_action(state, &mut next, p[0], p[1], p[2], p[3], p[4])
            }
            (_, EventKind::FaultDetRecDirect) => {
                m1::fault_det_rec_action(state, &mut next, p[0], p[1], p[2], p[1], p[0])
            }
            (_, EventKind::FaultDetRec2) | (_, EventKind::FaultDetRec2Direct) => {
                m1::fault_det_rec2_action(state, &mut next, p[0], p[1], p[2])
            }
            (_, EventKind::AddlNet2hopLink) => m1::add_2hop_action(&mut next, p[0], p[1], p[2]),
            (_, EventKind::AddSLink) => {
                next.snet.insert(p[0], p[1]);
                next.snet.insert(p[1], p[0]);
            }
            (_, EventKind::AddSALink) => {
                next.sanet.insert(p[0], p[1]);
                next.sanet.insert(p[1], p[0]);
            }
        }
        next
    }

    /// Checks the guard and applies the action.
    pub fn apply(&self, state: &WsanState, inst: &EventInstance) -> Result<WsanState, EventError> {
        self.guard(state, inst)?;
        Ok(self.apply_unchecked(state, inst))
    }

    /// Every enabled instance at `state`, in canonical order.
    ///
    /// Candidates are generated from the relations rather than from the full
    /// parameter space; the guard is the final filter.
    pub fn enabled(&self, state: &WsanState) -> Vec<EventInstance> {
        let ctx = self.ctx(state);
        let mut out: Vec<EventInstance> = self
            .candidates(state)
            .into_iter()
            .filter(|inst| self.guard_in(&ctx, inst).is_ok())
            .collect();
        out.sort();
        out.dedup();
        out
    }

    fn candidates(&self, s: &WsanState) -> Vec<EventInstance> {
        let u = self.universe;
        let level = self.level;
        let mut out = Vec::new();
        let push = |out: &mut Vec<EventInstance>, e: EventKind, p: &[NodeId]| {
            out.push(EventInstance::new(e, p.to_vec()));
        };
        if s.in_recovery() {
            let fnn: Vec<NodeId> = s.failed_node_neigh.iter().copied().collect();
            for &n in &fnn {
                for &k in &fnn {
                    match level {
                        Level::M0 => {
                            push(&mut out, EventKind::FaultDetRec, &[n, k]);
                            push(&mut out, EventKind::FaultDetRec2, &[n, k]);
                        }
                        Level::M1 | Level::M2 => {
                            push(&mut out, EventKind::FaultDetRecGlobal, &[n, k]);
                            push(&mut out, EventKind::FaultDetRec2Global, &[n, k]);
                            for m in s.lnet.vias(n, k) {
                                push(&mut out, EventKind::FaultDetRec2, &[n, k, m]);
                                if level == Level::M1 {
                                    for v in u.nodes().filter(|&v| v != m) {
                                        for w in u.nodes().filter(|&w| w != m) {
                                            push(&mut out, EventKind::FaultDetRec, &[n, k, m, v, w]);
                                        }
                                    }
                                } else {
                                    push(&mut out, EventKind::FaultDetRecDirect, &[n, k, m]);
                                    push(&mut out, EventKind::FaultDetRec2Direct, &[n, k, m]);
                                    for x in s.sanet.image(n) {
                                        for y in s.sanet.image(k) {
                                            push(&mut out, EventKind::FaultDetRec, &[n, k, m, x, y]);
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        } else {
            let ok_actors: Vec<NodeId> = u.actors().filter(|&a| s.is_ok(a)).collect();
            for a in u.actors().filter(|&a| !s.is_ok(a)) {
                push(&mut out, EventKind::AddNode, &[a]);
            }
            for &a in &ok_actors {
                push(&mut out, EventKind::RemoveNode, &[a]);
                for &b in &ok_actors {
                    push(&mut out, EventKind::AddLink, &[a, b]);
                }
            }
            if level >= Level::M1 {
                for (n, m, via) in s.lnet.iter() {
                    if m != via {
                        continue;
                    }
                    for (_, k, via2) in s.lnet.from_node(m) {
                        if k == via2 {
                            push(&mut out, EventKind::AddlNet2hopLink, &[n, m, k]);
                        }
                    }
                }
            }
            if level >= Level::M2 {
                for sensor in u.sensors().filter(|&x| !s.is_ok(x)) {
                    push(&mut out, EventKind::AddSensorNode, &[sensor]);
                }
            }
        }
        // Sensor links carry no FailedNodeNeigh guard and stay enabled during recovery.
        if level >= Level::M2 {
            let ok_sensors: Vec<NodeId> = u.sensors().filter(|&x| s.is_ok(x)).collect();
            for &a in &ok_sensors {
                for &b in &ok_sensors {
                    push(&mut out, EventKind::AddSLink, &[a, b]);
                }
                for actor in u.actors().filter(|&x| s.is_ok(x)) {
                    push(&mut out, EventKind::AddSALink, &[a, actor]);
                    push(&mut out, EventKind::AddSALink, &[actor, a]);
                }
            }
        }
        out
    }
}
