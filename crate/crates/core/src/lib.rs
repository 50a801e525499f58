//! Executable model of actor-coordination recovery in wireless sensor-actor
//! networks.
//!
//! Three machine levels share one state type:
//!
//! * `M0`: actors and direct actor links; a failed actor's neighbours
//!   reconnect using global reachability (`closure(ANET)`).
//! * `M1`: adds `l_net`, a table of 1-hop and 2-hop neighbour routes, and
//!   recovers from that local knowledge.
//! * `M2`: adds sensor links and routes replacement links through sensor
//!   paths.
//!
//! The [`scheduler`] runs seeded traces and bounded exhaustive exploration,
//! [`invariants`] checks every level's invariant suite after each step, and
//! [`refinement`] checks that each level refines the one below it.

pub mod invariants;
pub mod machine;
pub mod refinement;
pub mod relations;
pub mod scenario;
pub mod scheduler;
pub mod state;

pub use invariants::{check_invariants, check_thm1, InvariantId, InvariantReport, Violation};
pub use machine::{EventError, EventInstance, EventKind, Fixture, Machine};
pub use relations::{reachable_from_oracle, reachable_oracle, BinRel, NodeId, TriRel};
pub use state::{Level, NodeKind, NodeUniverse, Status, WsanState};
