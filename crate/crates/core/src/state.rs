//! Node universe, machine levels and the full machine state snapshot.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::relations::{BinRel, NodeId, TriRel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Sensor,
    Actor,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UniverseError {
    #[error("node universe is empty")]
    Empty,
    #[error("node universe has no actors")]
    NoActors,
    #[error("duplicate node id `{0}`")]
    Duplicate(String),
    #[error("node id must be non-empty")]
    BlankId,
}

/// The finite set of nodes, partitioned into actors and sensors.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodeUniverse {
    names: Vec<String>,
    kinds: Vec<NodeKind>,
    by_name: BTreeMap<String, NodeId>,
}

impl NodeUniverse {
    /// Builds a universe from `(name, kind)` pairs in declaration order.
    ///
    /// At least one actor is required: with no actors, no event of the
    /// initial model can ever be enabled.
    pub fn new<S: Into<String>>(
        nodes: impl IntoIterator<Item = (S, NodeKind)>,
    ) -> Result<Self, UniverseError> {
        let mut names = Vec::new();
        let mut kinds = Vec::new();
        let mut by_name = BTreeMap::new();
        for (i, (name, kind)) in nodes.into_iter().enumerate() {
            let name = name.into();
            if name.trim().is_empty() {
                return Err(UniverseError::BlankId);
            }
            if by_name.insert(name.clone(), NodeId(i as u32)).is_some() {
                return Err(UniverseError::Duplicate(name));
            }
            names.push(name);
            kinds.push(kind);
        }
        if names.is_empty() {
            return Err(UniverseError::Empty);
        }
        if !kinds.contains(&NodeKind::Actor) {
            return Err(UniverseError::NoActors);
        }
        Ok(NodeUniverse {
            names,
            kinds,
            by_name,
        })
    }

    /// Actors named `A1..=An` followed by sensors `S1..=Sm`.
    pub fn with_counts(actors: usize, sensors: usize) -> Result<Self, UniverseError> {
        let actors = (1..=actors).map(|i| (format!("A{i}"), NodeKind::Actor));
        let sensors = (1..=sensors).map(|i| (format!("S{i}"), NodeKind::Sensor));
        NodeUniverse::new(actors.chain(sensors))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + Clone {
        (0..self.names.len() as u32).map(NodeId)
    }

    pub fn actors(&self) -> impl Iterator<Item = NodeId> + Clone + '_ {
        self.nodes().filter(|&n| self.is_actor(n))
    }

    pub fn sensors(&self) -> impl Iterator<Item = NodeId> + Clone + '_ {
        self.nodes().filter(|&n| self.is_sensor(n))
    }

    pub fn contains(&self, n: NodeId) -> bool {
        n.index() < self.names.len()
    }

    pub fn kind(&self, n: NodeId) -> NodeKind {
        self.kinds[n.index()]
    }

    pub fn is_actor(&self, n: NodeId) -> bool {
        self.contains(n) && self.kinds[n.index()] == NodeKind::Actor
    }

    pub fn is_sensor(&self, n: NodeId) -> bool {
        self.contains(n) && self.kinds[n.index()] == NodeKind::Sensor
    }

    pub fn name(&self, n: NodeId) -> &str {
        &self.names[n.index()]
    }

    pub fn lookup(&self, name: &str) -> Option<NodeId> {
        self.by_name.get(name).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, NodeKind)> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.kinds.iter().copied())
    }

    pub fn names_of(&self, ids: &[NodeId]) -> Vec<String> {
        ids.iter().map(|&n| self.name(n).to_owned()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Fail,
}

/// Refinement level of a machine: initial model, first and second refinement.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    M0,
    M1,
    M2,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::M0, Level::M1, Level::M2];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::M0 => "m0",
            Level::M1 => "m1",
            Level::M2 => "m2",
        }
    }

    /// The level this one refines, if any.
    pub fn abstraction(self) -> Option<Level> {
        match self {
            Level::M0 => None,
            Level::M1 => Some(Level::M0),
            Level::M2 => Some(Level::M1),
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown level `{0}` (expected m0, m1 or m2)")]
pub struct ParseLevelError(String);

impl FromStr for Level {
    type Err = ParseLevelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "m0" => Ok(Level::M0),
            "m1" => Ok(Level::M1),
            "m2" => Ok(Level::M2),
            _ => Err(ParseLevelError(s.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot project a {from} state to {to}: target must be a strictly more abstract level")]
pub struct ProjectError {
    pub from: Level,
    pub to: Level,
}

/// Complete machine state.
///
/// `lnet` is only meaningful from M1 upwards and `snet`/`sanet` from M2;
/// at lower levels they stay empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WsanState {
    pub level: Level,
    pub status: Vec<Status>,
    pub anet: BinRel,
    pub snet: BinRel,
    pub sanet: BinRel,
    pub lnet: TriRel,
    pub failed_node_neigh: BTreeSet<NodeId>,
}

impl WsanState {
    /// Every node failed, every relation empty.
    pub fn initial(universe: &NodeUniverse, level: Level) -> Self {
        WsanState {
            level,
            status: vec![Status::Fail; universe.len()],
            anet: BinRel::new(),
            snet: BinRel::new(),
            sanet: BinRel::new(),
            lnet: TriRel::new(),
            failed_node_neigh: BTreeSet::new(),
        }
    }

    pub fn status(&self, n: NodeId) -> Status {
        self.status.get(n.index()).copied().unwrap_or(Status::Fail)
    }

    pub fn is_ok(&self, n: NodeId) -> bool {
        self.status(n) == Status::Ok
    }

    /// Termination measure of the recovery phase.
    pub fn variant(&self) -> usize {
        self.failed_node_neigh.len()
    }

    pub fn in_recovery(&self) -> bool {
        !self.failed_node_neigh.is_empty()
    }

    /// Drops the variables introduced above `target`.
    pub fn project(&self, target: Level) -> Result<WsanState, ProjectError> {
        if target >= self.level {
            return Err(ProjectError {
                from: self.level,
                to: target,
            });
        }
        let mut out = self.clone();
        out.level = target;
        out.snet = BinRel::new();
        out.sanet = BinRel::new();
        if target == Level::M0 {
            out.lnet = TriRel::new();
        }
        Ok(out)
    }

    /// Canonical text rendering: sorted ids, sorted tuples.
    pub fn canonical(&self, universe: &NodeUniverse) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "level {}", self.level);
        for (n, status) in universe.nodes().zip(&self.status) {
            let s = match status {
                Status::Ok => "ok",
                Status::Fail => "fail",
            };
            let _ = writeln!(out, "status {} {s}", universe.name(n));
        }
        for (label, rel) in [("anet", &self.anet), ("snet", &self.snet), ("sanet", &self.sanet)] {
            for (a, b) in rel.iter() {
                let _ = writeln!(out, "{label} {} {}", universe.name(a), universe.name(b));
            }
        }
        for (a, b, v) in self.lnet.iter() {
            let _ = writeln!(
                out,
                "lnet {} {} {}",
                universe.name(a),
                universe.name(b),
                universe.name(v)
            );
        }
        for &n in &self.failed_node_neigh {
            let _ = writeln!(out, "fnn {}", universe.name(n));
        }
        out
    }

    /// SHA-256 of [`canonical`](Self::canonical), hex encoded.
    pub fn digest(&self, universe: &NodeUniverse) -> String {
        let hash = Sha256::digest(self.canonical(universe).as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}
