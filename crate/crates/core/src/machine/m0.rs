//! Initial model: actors only, recovery with global knowledge of
//! `closure(ANET)`.

use crate::relations::NodeId;
use crate::state::{Level, Status, WsanState};

use super::{require, Ctx, Unsatisfied};

type Guard = Result<(), Unsatisfied>;

pub(super) fn add_node_guard(ctx: &Ctx<'_>, n: NodeId) -> Guard {
    let s = ctx.state;
    require(!s.is_ok(n), "grd1", "Status(n) = fail")?;
    require(!s.in_recovery(), "grd2", "FailedNodeNeigh = ∅")?;
    require(ctx.universe.is_actor(n), "grd3", "n ∈ actors")
}

pub(super) fn add_node_action(next: &mut WsanState, n: NodeId) {
    next.status[n.index()] = Status::Ok;
}

pub(super) fn add_link_guard(ctx: &Ctx<'_>, n: NodeId, m: NodeId) -> Guard {
    let s = ctx.state;
    require(s.is_ok(n) && s.is_ok(m), "grd1", "Status(n) = ok ∧ Status(m) = ok")?;
    require(!s.anet.contains(n, m), "grd2", "n ↦ m ∉ ANET")?;
    require(n != m, "grd3", "n ≠ m")?;
    require(
        ctx.universe.is_actor(n) && ctx.universe.is_actor(m),
        "grd4",
        "n ∈ actors ∧ m ∈ actors",
    )?;
    require(!s.in_recovery(), "grd5", "FailedNodeNeigh = ∅")
}

pub(super) fn add_link_action(pre: &WsanState, next: &mut WsanState, n: NodeId, m: NodeId) {
    next.anet.insert(n, m);
    next.anet.insert(m, n);
    if pre.level >= Level::M1 {
        next.lnet.insert(n, m, m);
        next.lnet.insert(m, n, n);
    }
}

pub(super) fn remove_node_guard(ctx: &Ctx<'_>, n: NodeId) -> Guard {
    let s = ctx.state;
    require(s.is_ok(n), "grd1", "Status(n) = ok")?;
    require(ctx.universe.is_actor(n), "grd2", "n ∈ actors")?;
    require(!s.in_recovery(), "grd3", "FailedNodeNeigh = ∅")
}

/// All three levels in one place: the refinements only add actions.
pub(super) fn remove_node_action(pre: &WsanState, next: &mut WsanState, n: NodeId) {
    next.status[n.index()] = Status::Fail;
    next.anet = pre.anet.domain_range_subtract(n);
    next.failed_node_neigh = pre.anet.image(n);
    if pre.level >= Level::M1 {
        let linked = pre.anet.domain();
        let sensor_linked = pre.snet.domain();
        let m2 = pre.level >= Level::M2;
        next.lnet.retain(|a, b, via| {
            let own_route = a == n && linked.contains(&b) && linked.contains(&via);
            let direct_to_n = linked.contains(&a) && b == n && via == n;
            let sensor_to_n = m2 && linked.contains(&a) && b == n && sensor_linked.contains(&via);
            // n's own sensor routes lose their SANET backing too.
            let sensor_from_n = m2 && a == n && linked.contains(&b) && sensor_linked.contains(&via);
            !(own_route || direct_to_n || sensor_to_n || sensor_from_n)
        });
    }
    if pre.level >= Level::M2 {
        next.sanet = pre.sanet.domain_range_subtract(n);
    }
}

/// Shared by the refined recovery events, which inherit this guard.
pub(super) fn recovery_members(ctx: &Ctx<'_>, n: NodeId, k: NodeId) -> Guard {
    let fnn = &ctx.state.failed_node_neigh;
    require(
        fnn.contains(&n) && fnn.contains(&k),
        "grd1",
        "n ∈ FailedNodeNeigh ∧ k ∈ FailedNodeNeigh",
    )
}

/// `n ≠ k ∧ n ↦ k ∉ closure(ANET)`.
pub(super) fn disconnected(ctx: &Ctx<'_>, n: NodeId, k: NodeId) -> Guard {
    require(
        n != k && !ctx.anet_closure().contains(n, k),
        "grd2",
        "n ≠ k ∧ n ↦ k ∉ closure(ANET)",
    )
}

/// `n ↦ k ∈ closure(ANET)` for distinct members; `n = k` only for the last
/// member of `FailedNodeNeigh`, whether or not it kept any link.
pub(super) fn connected(ctx: &Ctx<'_>, n: NodeId, k: NodeId) -> Guard {
    let last = n == k && ctx.state.failed_node_neigh.len() == 1;
    require(
        last || (n != k && ctx.anet_closure().contains(n, k)),
        "grd2",
        "(n ≠ k ∧ n ↦ k ∈ closure(ANET)) ∨ FailedNodeNeigh = {n} = {k}",
    )
}

pub(super) fn fault_det_rec_guard(ctx: &Ctx<'_>, n: NodeId, k: NodeId) -> Guard {
    recovery_members(ctx, n, k)?;
    disconnected(ctx, n, k)
}

/// Also the action of the global-knowledge fallback at M1/M2, where the
/// new direct link is mirrored into `l_net` like an ordinary AddLink.
pub(super) fn fault_det_rec_action(pre: &WsanState, next: &mut WsanState, n: NodeId, k: NodeId) {
    add_link_action(pre, next, n, k);
    next.failed_node_neigh.remove(&n);
}

pub(super) fn fault_det_rec2_guard(ctx: &Ctx<'_>, n: NodeId, k: NodeId) -> Guard {
    recovery_members(ctx, n, k)?;
    connected(ctx, n, k)
}

pub(super) fn fault_det_rec2_action(next: &mut WsanState, n: NodeId) {
    next.failed_node_neigh.remove(&n);
}
