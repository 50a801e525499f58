//! Invariant suites for the three machine levels.
//!
//! Each invariant is a named predicate tied to the level that introduced
//! it. A state at level L is checked against every invariant of level <= L.

use std::fmt;

use serde::Serialize;

use crate::machine::EventInstance;
use crate::relations::{BinRel, NodeId};
use crate::state::{Level, NodeUniverse, Status, WsanState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InvariantId {
    pub level: Level,
    pub number: u8,
}

impl InvariantId {
    pub const fn new(level: Level, number: u8) -> Self {
        InvariantId { level, number }
    }

    pub fn label(self) -> String {
        format!("{}.inv{}", self.level, self.number)
    }
}

impl fmt::Display for InvariantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.inv{}", self.level, self.number)
    }
}

impl Serialize for InvariantId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// A falsified invariant and the tuple that falsifies it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub id: InvariantId,
    pub witness: Vec<NodeId>,
}

impl Violation {
    pub fn render(&self, universe: &NodeUniverse) -> String {
        if self.witness.is_empty() {
            self.id.label()
        } else {
            format!("{}({})", self.id, universe.names_of(&self.witness).join(","))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InvariantReport {
    pub violations: Vec<Violation>,
}

impl InvariantReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn contains(&self, id: InvariantId) -> bool {
        self.violations.iter().any(|v| v.id == id)
    }

    pub fn ids(&self) -> Vec<InvariantId> {
        self.violations.iter().map(|v| v.id).collect()
    }

    pub fn render(&self, universe: &NodeUniverse) -> Vec<String> {
        self.violations.iter().map(|v| v.render(universe)).collect()
    }
}

type Check = fn(&NodeUniverse, &WsanState) -> Option<Vec<NodeId>>;

/// One named invariant: returns a witness when violated.
pub struct Invariant {
    pub id: InvariantId,
    pub description: &'static str,
    check: Check,
}

impl Invariant {
    pub fn check(&self, universe: &NodeUniverse, s: &WsanState) -> Option<Violation> {
        (self.check)(universe, s).map(|witness| Violation {
            id: self.id,
            witness,
        })
    }
}

fn pair(a: NodeId, b: NodeId) -> Vec<NodeId> {
    vec![a, b]
}

fn first_pair(r: &BinRel, bad: impl Fn(NodeId, NodeId) -> bool) -> Option<Vec<NodeId>> {
    r.iter().find(|&(a, b)| bad(a, b)).map(|(a, b)| pair(a, b))
}

fn asymmetric(r: &BinRel) -> Option<Vec<NodeId>> {
    first_pair(r, |a, b| !r.contains(b, a))
}

fn reflexive(r: &BinRel) -> Option<Vec<NodeId>> {
    first_pair(r, |a, b| a == b)
}

fn overlap(r: &BinRel, other: &BinRel) -> Option<Vec<NodeId>> {
    first_pair(r, |a, b| other.contains(a, b))
}

fn failed_endpoint(s: &WsanState, r: &BinRel) -> Option<Vec<NodeId>> {
    first_pair(r, |a, b| !s.is_ok(a) || !s.is_ok(b))
}

const M0: Level = Level::M0;
const M1: Level = Level::M1;
const M2: Level = Level::M2;

/// The complete catalog across all levels.
pub static INVARIANTS: &[Invariant] = &[
    Invariant {
        id: InvariantId::new(M0, 1),
        description: "Status is a total function on NODE",
        check: |u, s| (s.status.len() != u.len()).then(Vec::new),
    },
    Invariant {
        id: InvariantId::new(M0, 2),
        description: "ANET relates actors only",
        check: |u, s| first_pair(&s.anet, |a, b| !u.is_actor(a) || !u.is_actor(b)),
    },
    Invariant {
        id: InvariantId::new(M0, 3),
        description: "FailedNodeNeigh contains actors only",
        check: |u, s| {
            s.failed_node_neigh
                .iter()
                .find(|&&n| !u.is_actor(n))
                .map(|&n| vec![n])
        },
    },
    Invariant {
        id: InvariantId::new(M0, 4),
        description: "ANET is irreflexive",
        check: |_, s| reflexive(&s.anet),
    },
    Invariant {
        id: InvariantId::new(M0, 5),
        description: "ANET is symmetric",
        check: |_, s| asymmetric(&s.anet),
    },
    Invariant {
        id: InvariantId::new(M0, 6),
        description: "ANET endpoints are ok",
        check: |_, s| failed_endpoint(s, &s.anet),
    },
    Invariant {
        id: InvariantId::new(M0, 7),
        description: "FailedNodeNeigh members are ok",
        check: |_, s| {
            s.failed_node_neigh
                .iter()
                .find(|&&n| s.status(n) != Status::Ok)
                .map(|&n| vec![n])
        },
    },
    Invariant {
        id: InvariantId::new(M1, 1),
        description: "l_net relates actor pairs to nodes",
        check: |u, s| {
            s.lnet
                .iter()
                .find(|&(a, b, v)| !u.is_actor(a) || !u.is_actor(b) || !u.contains(v))
                .map(|(a, b, v)| vec![a, b, v])
        },
    },
    Invariant {
        id: InvariantId::new(M1, 2),
        description: "l_net has no (n, n, _) triple",
        check: |_, s| {
            s.lnet
                .iter()
                .find(|&(a, b, _)| a == b)
                .map(|(a, b, v)| vec![a, b, v])
        },
    },
    Invariant {
        id: InvariantId::new(M2, 1),
        description: "SNET relates sensors only",
        check: |u, s| first_pair(&s.snet, |a, b| !u.is_sensor(a) || !u.is_sensor(b)),
    },
    Invariant {
        id: InvariantId::new(M2, 2),
        description: "SANET relates nodes of the universe",
        check: |u, s| first_pair(&s.sanet, |a, b| !u.contains(a) || !u.contains(b)),
    },
    Invariant {
        id: InvariantId::new(M2, 3),
        description: "SNET and ANET are disjoint",
        check: |_, s| overlap(&s.snet, &s.anet),
    },
    Invariant {
        id: InvariantId::new(M2, 4),
        description: "ANET and SANET are disjoint",
        check: |_, s| overlap(&s.anet, &s.sanet),
    },
    Invariant {
        id: InvariantId::new(M2, 5),
        description: "SNET and SANET are disjoint",
        check: |_, s| overlap(&s.snet, &s.sanet),
    },
    Invariant {
        id: InvariantId::new(M2, 6),
        description: "SNET is symmetric",
        check: |_, s| asymmetric(&s.snet),
    },
    Invariant {
        id: InvariantId::new(M2, 7),
        description: "SANET is symmetric",
        check: |_, s| asymmetric(&s.sanet),
    },
    Invariant {
        id: InvariantId::new(M2, 8),
        description: "SNET is irreflexive",
        check: |_, s| reflexive(&s.snet),
    },
    Invariant {
        id: InvariantId::new(M2, 9),
        description: "SANET is irreflexive",
        check: |_, s| reflexive(&s.sanet),
    },
    Invariant {
        id: InvariantId::new(M2, 10),
        description: "SANET joins one actor and one sensor",
        check: |u, s| {
            first_pair(&s.sanet, |a, b| {
                !((u.is_actor(a) && u.is_sensor(b)) || (u.is_sensor(a) && u.is_actor(b)))
            })
        },
    },
    Invariant {
        id: InvariantId::new(M2, 11),
        description: "SNET endpoints are ok",
        check: |_, s| failed_endpoint(s, &s.snet),
    },
    Invariant {
        id: InvariantId::new(M2, 12),
        description: "SANET endpoints are ok",
        check: |_, s| failed_endpoint(s, &s.sanet),
    },
    Invariant {
        id: InvariantId::new(M2, 13),
        description: "sensor-mediated l_net routes are backed by SANET links and an SNET path",
        check: sensor_routes_backed,
    },
];

fn sensor_routes_backed(u: &NodeUniverse, s: &WsanState) -> Option<Vec<NodeId>> {
    // Only sensor-via triples can falsify this; skip the closure otherwise.
    if !s.lnet.iter().any(|(_, _, v)| u.is_sensor(v)) {
        return None;
    }
    let snet_closure = s.snet.closure();
    for (n, k, x) in s.lnet.iter() {
        if !u.is_sensor(x) {
            continue;
        }
        for y in s.lnet.vias(k, n).filter(|&y| u.is_sensor(y)) {
            let backed = s.sanet.contains(n, x)
                && s.sanet.contains(k, y)
                && snet_closure.contains(x, y);
            if !backed {
                return Some(vec![n, k, x, y]);
            }
        }
    }
    None
}

/// Invariants checked for a state at `level`.
pub fn suite(level: Level) -> impl Iterator<Item = &'static Invariant> {
    INVARIANTS.iter().filter(move |inv| inv.id.level <= level)
}

/// Every invariant of the state's level suite that fails, in catalog order.
pub fn check_invariants(universe: &NodeUniverse, s: &WsanState) -> InvariantReport {
    InvariantReport {
        violations: suite(s.level)
            .filter_map(|inv| inv.check(universe, s))
            .collect(),
    }
}

/// Deadlock freedom at a state: at least one event instance is enabled.
pub fn check_thm1(enabled: &[EventInstance]) -> bool {
    !enabled.is_empty()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn universe() -> NodeUniverse {
        NodeUniverse::with_counts(3, 2).unwrap()
    }

    const A1: NodeId = NodeId(0);
    const A2: NodeId = NodeId(1);
    const A3: NodeId = NodeId(2);
    const S1: NodeId = NodeId(3);
    const S2: NodeId = NodeId(4);

    fn ids(report: &InvariantReport) -> Vec<String> {
        report.ids().into_iter().map(InvariantId::label).collect()
    }

    #[test]
    fn suite_sizes() {
        assert_eq!(suite(Level::M0).count(), 7);
        assert_eq!(suite(Level::M1).count(), 9);
        assert_eq!(suite(Level::M2).count(), 22);
    }

    #[test]
    fn initial_state_is_clean_at_every_level() {
        let u = universe();
        for level in Level::ALL {
            assert!(check_invariants(&u, &WsanState::initial(&u, level)).is_clean());
        }
    }

    #[test]
    fn self_loop_in_anet_reports_inv4() {
        let u = universe();
        let mut s = WsanState::initial(&u, Level::M0);
        s.status[0] = Status::Ok;
        s.anet.insert(A1, A1);
        let report = check_invariants(&u, &s);
        assert_eq!(ids(&report), vec!["m0.inv4"]);
        assert_eq!(report.violations[0].witness, vec![A1, A1]);
        assert_eq!(report.render(&u), vec!["m0.inv4(A1,A1)"]);
    }

    #[test]
    fn failed_sensor_on_snet_reports_inv11() {
        let u = universe();
        let mut s = WsanState::initial(&u, Level::M2);
        s.status[S2.index()] = Status::Ok;
        s.snet = s.snet.symmetric_insert(S1, S2).unwrap();
        let report = check_invariants(&u, &s);
        assert!(report.contains(InvariantId::new(Level::M2, 11)));
        assert_eq!(ids(&report), vec!["m2.inv11"]);
    }

    #[test]
    fn higher_level_invariants_ignored_below() {
        let u = universe();
        let mut s = WsanState::initial(&u, Level::M0);
        s.lnet.insert(A1, A1, A2);
        assert!(check_invariants(&u, &s).is_clean());
        s.level = Level::M1;
        assert_eq!(ids(&check_invariants(&u, &s)), vec!["m1.inv2"]);
    }

    #[test]
    fn anet_and_failed_neighbour_checks() {
        let u = universe();
        let mut s = WsanState::initial(&u, Level::M2);
        s.anet.insert(A1, S1);
        s.failed_node_neigh.insert(S1);
        let report = check_invariants(&u, &s);
        for id in ["m0.inv2", "m0.inv3", "m0.inv5", "m0.inv6", "m0.inv7"] {
            assert!(ids(&report).contains(&id.to_owned()), "{id} missing");
        }
    }

    #[test]
    fn sanet_must_join_actor_and_sensor() {
        let u = universe();
        let mut s = WsanState::initial(&u, Level::M2);
        for n in u.nodes() {
            s.status[n.index()] = Status::Ok;
        }
        s.sanet = s.sanet.symmetric_insert(A1, A2).unwrap();
        s.anet = s.anet.symmetric_insert(A1, A2).unwrap();
        let found = ids(&check_invariants(&u, &s));
        assert!(found.contains(&"m2.inv10".to_owned()));
        assert!(found.contains(&"m2.inv4".to_owned()));
    }

    #[test]
    fn sensor_routes_need_snet_path() {
        let u = universe();
        let mut s = WsanState::initial(&u, Level::M2);
        for n in u.nodes() {
            s.status[n.index()] = Status::Ok;
        }
        s.sanet = s.sanet.symmetric_insert(A2, S1).unwrap();
        s.sanet = s.sanet.symmetric_insert(A3, S2).unwrap();
        s.lnet.insert(A2, A3, S1);
        s.lnet.insert(A3, A2, S2);
        let inv13 = InvariantId::new(Level::M2, 13);
        assert!(check_invariants(&u, &s).contains(inv13));
        s.snet = s.snet.symmetric_insert(S1, S2).unwrap();
        assert!(check_invariants(&u, &s).is_clean());
        // A one-sided sensor triple does not trigger the route condition.
        s.lnet.remove(A3, A2, S2);
        s.snet = BinRel::new();
        assert!(check_invariants(&u, &s).is_clean());
    }

    #[test]
    fn thm1_is_non_emptiness() {
        assert!(!check_thm1(&[]));
    }
}
