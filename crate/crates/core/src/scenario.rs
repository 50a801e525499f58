//! Scenario files, trace records and scenario generators.
//!
//! A scenario names its nodes, the level it was written for, and a script of
//! forced events. Trace records are written one JSON object per line.

use std::collections::BTreeSet;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::machine::{EventInstance, EventKind, Machine};
use crate::refinement::{abstract_instance, LevelPair};
use crate::relations::{reachable_oracle, NodeId};
use crate::scheduler::Trace;
use crate::state::{Level, NodeKind, NodeUniverse, UniverseError, WsanState};

pub const SCENARIO_VERSION: u32 = 1;

/// Event name recorded for step 0 of a trace.
pub const INITIALISATION: &str = "INITIALISATION";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: u32,
    #[serde(default)]
    pub description: String,
    pub level: Level,
    pub universe: Vec<NodeEntry>,
    #[serde(default)]
    pub script: Vec<ScriptStep>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub id: String,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptStep {
    pub event: String,
    #[serde(default)]
    pub params: Vec<String>,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("malformed scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

impl ScenarioError {
    fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ScenarioError::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    /// The offending field, when the error is not a JSON syntax error.
    pub fn field(&self) -> Option<&str> {
        match self {
            ScenarioError::Invalid { field, .. } => Some(field),
            ScenarioError::Json(_) => None,
        }
    }
}

/// A validated scenario: ids resolved, script checked against the catalog.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub description: String,
    pub level: Level,
    pub universe: NodeUniverse,
    pub script: Vec<EventInstance>,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn resolve(&self) -> Result<Scenario, ScenarioError> {
        if self.version != SCENARIO_VERSION {
            return Err(ScenarioError::invalid(
                "version",
                format!("unsupported scenario version {} (expected {SCENARIO_VERSION})", self.version),
            ));
        }
        let universe = NodeUniverse::new(self.universe.iter().map(|e| (e.id.clone(), e.kind)))
            .map_err(|e| {
                let field = match &e {
                    UniverseError::Duplicate(id) => {
                        let i = self.universe.iter().rposition(|n| &n.id == id).unwrap_or(0);
                        format!("universe[{i}].id")
                    }
                    UniverseError::BlankId => {
                        let i = self.universe.iter().position(|n| n.id.trim().is_empty()).unwrap_or(0);
                        format!("universe[{i}].id")
                    }
                    UniverseError::Empty | UniverseError::NoActors => "universe".to_string(),
                };
                ScenarioError::invalid(field, e.to_string())
            })?;
        let mut script = Vec::with_capacity(self.script.len());
        for (i, step) in self.script.iter().enumerate() {
            let event = EventKind::from_str(&step.event)
                .map_err(|e| ScenarioError::invalid(format!("script[{i}].event"), e.to_string()))?;
            let arity = event.params(self.level).ok_or_else(|| {
                ScenarioError::invalid(
                    format!("script[{i}].event"),
                    format!("{event} is not an event of the {} machine", self.level),
                )
            })?;
            if arity.len() != step.params.len() {
                return Err(ScenarioError::invalid(
                    format!("script[{i}].params"),
                    format!(
                        "{event} takes {} parameters ({}) at {}, got {}",
                        arity.len(),
                        arity.join(", "),
                        self.level,
                        step.params.len()
                    ),
                ));
            }
            let params = step
                .params
                .iter()
                .enumerate()
                .map(|(j, id)| {
                    universe.lookup(id).ok_or_else(|| {
                        ScenarioError::invalid(format!("script[{i}].params[{j}]"), format!("unknown node id `{id}`"))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            script.push(EventInstance::new(event, params));
        }
        Ok(Scenario {
            description: self.description.clone(),
            level: self.level,
            universe,
            script,
        })
    }
}

impl FromStr for Scenario {
    type Err = ScenarioError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        ScenarioFile::from_json(text)?.resolve()
    }
}

impl Scenario {
    pub fn to_file(&self) -> ScenarioFile {
        let u = &self.universe;
        ScenarioFile {
            version: SCENARIO_VERSION,
            description: self.description.clone(),
            level: self.level,
            universe: u
                .entries()
                .map(|(id, kind)| NodeEntry {
                    id: id.to_string(),
                    kind,
                })
                .collect(),
            script: self
                .script
                .iter()
                .map(|inst| ScriptStep {
                    event: inst.event.name().to_string(),
                    params: u.names_of(&inst.params),
                })
                .collect(),
        }
    }

    /// The script as run by a machine at `level`.
    ///
    /// Below the scenario's level, events new at a higher level are dropped
    /// and refined events are replaced by the events they refine. Above it,
    /// the script must already use that level's parameter lists.
    pub fn script_at(&self, level: Level) -> Vec<EventInstance> {
        self.script
            .iter()
            .filter_map(|inst| {
                let mut cur = Some(inst.clone());
                let mut at = self.level;
                while at > level {
                    let pair = match at {
                        Level::M2 => LevelPair::M2M1,
                        _ => LevelPair::M1M0,
                    };
                    cur = cur.and_then(|i| abstract_instance(pair, &i));
                    at = pair.abstract_level();
                }
                cur
            })
            .collect()
    }
}

/// One line of a trace file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub event: String,
    pub params: Vec<String>,
    pub variant: usize,
    pub digest: String,
    pub violations: Vec<String>,
}

pub fn trace_records(universe: &NodeUniverse, trace: &Trace) -> Vec<TraceRecord> {
    trace
        .steps
        .iter()
        .map(|s| TraceRecord {
            step: s.index,
            event: s
                .instance
                .as_ref()
                .map_or(INITIALISATION.to_string(), |i| i.event.name().to_string()),
            params: s.instance.as_ref().map_or_else(Vec::new, |i| universe.names_of(&i.params)),
            variant: s.variant,
            digest: s.digest.clone(),
            violations: s.report.render(universe),
        })
        .collect()
}

pub fn write_trace(mut out: impl Write, records: &[TraceRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_trace(input: impl BufRead) -> Result<Vec<TraceRecord>, ScenarioError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| ScenarioError::invalid(format!("line {}", i + 1), e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// The event sequence of a trace, usable as a replay script.
pub fn replay_script(universe: &NodeUniverse, records: &[TraceRecord]) -> Result<Vec<EventInstance>, ScenarioError> {
    records
        .iter()
        .filter(|r| r.event != INITIALISATION)
        .map(|r| {
            let field = format!("step {}", r.step);
            let event = EventKind::from_str(&r.event).map_err(|e| ScenarioError::invalid(&field, e.to_string()))?;
            let params = r
                .params
                .iter()
                .map(|id| {
                    universe
                        .lookup(id)
                        .ok_or_else(|| ScenarioError::invalid(&field, format!("unknown node id `{id}`")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(EventInstance::new(event, params))
        })
        .collect()
}

/// Connected components of `ANET` among ok actors; an ok actor without
/// links is a component of its own.
pub fn actor_components(universe: &NodeUniverse, state: &WsanState) -> Vec<BTreeSet<NodeId>> {
    let closure = state.anet.closure();
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for a in universe.actors().filter(|&a| state.is_ok(a)) {
        if seen.contains(&a) {
            continue;
        }
        let mut comp: BTreeSet<NodeId> = closure.image(a);
        comp.insert(a);
        seen.extend(comp.iter().copied());
        out.push(comp);
    }
    out
}

/// Components counted with the BFS oracle, independently of `closure`.
fn oracle_component_count(universe: &NodeUniverse, state: &WsanState) -> usize {
    let ok: Vec<NodeId> = universe.actors().filter(|&a| state.is_ok(a)).collect();
    let mut roots: Vec<NodeId> = Vec::new();
    for &a in &ok {
        if !roots.iter().any(|&r| reachable_oracle(&state.anet, r, a)) {
            roots.push(a);
        }
    }
    roots.len()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenKind {
    Random,
    Star,
    Chain,
    Fig1,
}

impl FromStr for GenKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(GenKind::Random),
            "star" => Ok(GenKind::Star),
            "chain" => Ok(GenKind::Chain),
            "fig1" => Ok(GenKind::Fig1),
            _ => Err(format!("unknown scenario kind `{s}` (expected random, star, chain or fig1)")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GenParams {
    pub actors: usize,
    pub sensors: usize,
    pub level: Level,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            actors: 6,
            sensors: 0,
            level: Level::M0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("{kind} scenario needs at least {min} actors, got {got}")]
    TooFewActors { kind: &'static str, min: usize, got: usize },
    #[error("sensors require level m2")]
    SensorsBelowM2,
    #[error("generated scenario failed validation: {0}")]
    Validation(String),
}

pub fn generate(kind: GenKind, params: GenParams) -> Result<Scenario, GenError> {
    match kind {
        GenKind::Fig1 => Ok(fig1()),
        GenKind::Star => star(params),
        GenKind::Chain => chain(params),
        GenKind::Random => random(params),
    }
}

struct Builder {
    universe: NodeUniverse,
    level: Level,
    script: Vec<EventInstance>,
}

impl Builder {
    fn new(actors: usize, sensors: usize, level: Level) -> Self {
        Builder {
            universe: NodeUniverse::with_counts(actors, sensors).expect("at least one actor"),
            level,
            script: Vec::new(),
        }
    }

    fn id(&self, name: &str) -> NodeId {
        self.universe.lookup(name).expect("generated name exists")
    }

    fn push(&mut self, event: EventKind, names: &[&str]) {
        let params: Vec<NodeId> = names.iter().map(|n| self.id(n)).collect();
        self.script.push(EventInstance::new(event, params));
    }

    /// Every actor and sensor up, with the given actor links.
    fn network(&mut self, links: &[(usize, usize)]) {
        for a in self.universe.actors().collect::<Vec<_>>() {
            self.script.push(EventInstance::new(EventKind::AddNode, [a]));
        }
        for &(a, b) in links {
            self.push(EventKind::AddLink, &[&format!("A{a}"), &format!("A{b}")]);
        }
        if self.level >= Level::M2 {
            for s in self.universe.sensors().collect::<Vec<_>>() {
                self.script.push(EventInstance::new(EventKind::AddSensorNode, [s]));
            }
        }
    }

    /// Records every 2-hop route through `via` between its neighbours.
    fn two_hop_routes(&mut self, via: usize, neighbours: &[usize]) {
        if self.level < Level::M1 {
            return;
        }
        for (i, &n) in neighbours.iter().enumerate() {
            for &k in &neighbours[i + 1..] {
                self.push(
                    EventKind::AddlNet2hopLink,
                    &[&format!("A{n}"), &format!("A{via}"), &format!("A{k}")],
                );
            }
        }
    }

    fn finish(self, description: String) -> Result<Scenario, GenError> {
        let machine = Machine::new(&self.universe, self.level);
        let mut s = machine.initialisation();
        for (i, inst) in self.script.iter().enumerate() {
            s = machine
                .apply(&s, inst)
                .map_err(|e| GenError::Validation(format!("step {i}: {e}")))?;
        }
        Ok(Scenario {
            description,
            level: self.level,
            universe: self.universe,
            script: self.script,
        })
    }
}

fn check_counts(kind: &'static str, p: GenParams, min: usize) -> Result<(), GenError> {
    if p.actors < min {
        return Err(GenError::TooFewActors {
            kind,
            min,
            got: p.actors,
        });
    }
    if p.sensors > 0 && p.level < Level::M2 {
        return Err(GenError::SensorsBelowM2);
    }
    Ok(())
}

/// Sensor chain `S1 – … – Sm`, each sensor attached to one actor.
fn sensor_layer(b: &mut Builder, attach: &[usize]) {
    let m = b.universe.sensors().count();
    if b.level < Level::M2 || m == 0 {
        return;
    }
    for i in 1..m {
        b.push(EventKind::AddSLink, &[&format!("S{i}"), &format!("S{}", i + 1)]);
    }
    for (i, &a) in attach.iter().enumerate().take(m) {
        b.push(EventKind::AddSALink, &[&format!("A{a}"), &format!("S{}", i + 1)]);
    }
}

/// Hub `A1` linked to every other actor, then `A1` fails.
fn star(p: GenParams) -> Result<Scenario, GenError> {
    check_counts("star", p, 2)?;
    let mut b = Builder::new(p.actors, p.sensors, p.level);
    let leaves: Vec<usize> = (2..=p.actors).collect();
    b.network(&leaves.iter().map(|&l| (1, l)).collect::<Vec<_>>());
    b.two_hop_routes(1, &leaves);
    sensor_layer(&mut b, &leaves);
    b.push(EventKind::RemoveNode, &["A1"]);
    b.finish(format!("star: hub A1 with {} leaves; A1 fails", leaves.len()))
}

/// Path `A1 – A2 – … – An`, then the middle actor fails.
fn chain(p: GenParams) -> Result<Scenario, GenError> {
    check_counts("chain", p, 3)?;
    let mut b = Builder::new(p.actors, p.sensors, p.level);
    let links: Vec<(usize, usize)> = (1..p.actors).map(|i| (i, i + 1)).collect();
    b.network(&links);
    let mid = p.actors.div_ceil(2);
    for i in 2..p.actors {
        b.two_hop_routes(i, &[i - 1, i + 1]);
    }
    sensor_layer(&mut b, &[mid - 1, mid + 1]);
    b.push(EventKind::RemoveNode, &[&format!("A{mid}")]);
    b.finish(format!("chain of {} actors; A{mid} fails", p.actors))
}

/// Random spanning tree plus extra links, then the best-connected actor
/// fails.
fn random(p: GenParams) -> Result<Scenario, GenError> {
    check_counts("random", p, 2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let n = p.actors;
    let mut links = BTreeSet::new();
    for i in 2..=n {
        let parent = rng.gen_range(1..i);
        links.insert((parent, i));
    }
    for _ in 0..n / 2 {
        let a = rng.gen_range(1..=n);
        let c = rng.gen_range(1..=n);
        if a != c {
            links.insert((a.min(c), a.max(c)));
        }
    }
    let links: Vec<(usize, usize)> = links.into_iter().collect();
    let degree = |a: usize| links.iter().filter(|&&(x, y)| x == a || y == a).count();
    let victim = (1..=n).max_by_key(|&a| (degree(a), std::cmp::Reverse(a))).unwrap_or(1);
    let neighbours: Vec<usize> = links
        .iter()
        .filter_map(|&(x, y)| match (x == victim, y == victim) {
            (true, _) => Some(y),
            (_, true) => Some(x),
            _ => None,
        })
        .collect();

    let mut b = Builder::new(p.actors, p.sensors, p.level);
    b.network(&links);
    b.two_hop_routes(victim, &neighbours);
    let mut attach = neighbours.clone();
    attach.shuffle(&mut rng);
    sensor_layer(&mut b, &attach);
    b.push(EventKind::RemoveNode, &[&format!("A{victim}")]);
    b.finish(format!(
        "random topology of {n} actors (seed {}); A{victim} fails",
        p.seed
    ))
}

/// Partitions left behind when `A1` fails in [`fig1`].
pub const FIG1_PARTITIONS: [&[usize]; 3] = [&[2, 3, 4, 5, 6], &[7, 8, 9, 10, 11], &[12, 13, 14, 15]];

/// Fifteen actors around a cut vertex `A1`: failing `A1` leaves three
/// partitions. Sensors `S1 – … – S6` form a chain touching each partition.
pub fn fig1() -> Scenario {
    let mut b = Builder::new(15, 6, Level::M2);
    let links = [
        (1, 2),
        (1, 7),
        (1, 12),
        (2, 3),
        (3, 4),
        (2, 5),
        (5, 6),
        (7, 8),
        (8, 9),
        (9, 10),
        (10, 11),
        (12, 13),
        (13, 14),
        (12, 15),
    ];
    b.network(&links);
    b.two_hop_routes(1, &[2, 7, 12]);
    for i in 1..6 {
        b.push(EventKind::AddSLink, &[&format!("S{i}"), &format!("S{}", i + 1)]);
    }
    b.push(EventKind::AddSALink, &["A2", "S1"]);
    b.push(EventKind::AddSALink, &["A7", "S3"]);
    b.push(EventKind::AddSALink, &["A12", "S6"]);
    b.push(EventKind::RemoveNode, &["A1"]);
    let scenario = b
        .finish("Three partitions created by the failed actor A1: 15 actors, cut vertex A1 joins partitions A2–A6, A7–A11 and A12–A15; sensors S1–S6 bridge them".to_string())
        .expect("fig1 script is valid");

    // The cut must leave exactly three partitions, checked with the oracle.
    let m = Machine::new(&scenario.universe, Level::M0);
    let state = scenario
        .script_at(Level::M0)
        .iter()
        .fold(m.initialisation(), |s, i| m.apply(&s, i).expect("fig1 projects to m0"));
    assert_eq!(oracle_component_count(&scenario.universe, &state), 3);
    scenario
}
