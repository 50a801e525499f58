//! First refinement: each actor keeps 1-hop and 2-hop neighbour knowledge in
//! `l_net`, and recovery consults that local table.
//!
//! Triple `(n, m, m)` records a direct link; `(n, k, m)` with `k ≠ m` records
//! that `k` is reachable from `n` through `m`.

use crate::machine::Fixture;
use crate::relations::NodeId;
use crate::state::WsanState;

use super::m0::{connected, disconnected, recovery_members};
use super::{require, Ctx, Unsatisfied};

type Guard = Result<(), Unsatisfied>;

/// grd3 of the refined recovery events: `n` and `k` know each other only
/// through `m`, which is no longer a direct neighbour of either.
pub(super) fn routed_via(ctx: &Ctx<'_>, n: NodeId, k: NodeId, m: NodeId) -> bool {
    let l = &ctx.state.lnet;
    l.contains(n, k, m) && !l.contains(n, m, m) && l.contains(k, n, m) && !l.contains(k, m, m)
}

fn has_local_route(ctx: &Ctx<'_>, n: NodeId, k: NodeId) -> bool {
    ctx.state.lnet.vias(n, k).any(|m| routed_via(ctx, n, k, m))
}

pub(super) fn local_route(ctx: &Ctx<'_>, n: NodeId, k: NodeId, m: NodeId) -> Guard {
    require(
        routed_via(ctx, n, k, m),
        "grd3",
        "n↦k↦m ∈ l_net ∧ n↦m↦m ∉ l_net ∧ k↦n↦m ∈ l_net ∧ k↦m↦m ∉ l_net",
    )
}

/// The inherited "no existing path" guard, unless a fixture removes it.
pub(super) fn inherited_disconnected(ctx: &Ctx<'_>, n: NodeId, k: NodeId) -> Guard {
    if ctx.fixture == Some(Fixture::DropRecoveryGrd2) {
        return Ok(());
    }
    disconnected(ctx, n, k)
}

pub(super) fn fault_det_rec_guard(
    ctx: &Ctx<'_>,
    n: NodeId,
    k: NodeId,
    m: NodeId,
    v: NodeId,
    w: NodeId,
) -> Guard {
    recovery_members(ctx, n, k)?;
    inherited_disconnected(ctx, n, k)?;
    local_route(ctx, n, k, m)?;
    require(v != m && w != m, "wit1", "v ∈ NODE ∖ {m} ∧ w ∈ NODE ∖ {m}")
}

fn expire_routes_via(pre: &WsanState, next: &mut WsanState, n: NodeId, k: NodeId, m: NodeId) {
    next.lnet.remove(n, k, m);
    next.lnet.remove(k, n, m);
    for j in pre.anet.image(n) {
        next.lnet.remove(j, m, n);
    }
    for j in pre.anet.image(k) {
        next.lnet.remove(j, m, k);
    }
}

/// Replaces the routes through the failed `m` by a new `n`–`k` route whose
/// via-nodes are the witnesses `v` (for `n`) and `w` (for `k`).
///
/// The witness pair resolves the nondeterministic choice of the abstract
/// update: any `v, w ≠ m` yields a member of the admissible set.
pub(super) fn fault_det_rec_action(
    pre: &WsanState,
    next: &mut WsanState,
    n: NodeId,
    k: NodeId,
    m: NodeId,
    v: NodeId,
    w: NodeId,
) {
    next.anet.insert(n, k);
    next.anet.insert(k, n);
    next.failed_node_neigh.remove(&n);
    expire_routes_via(pre, next, n, k, m);
    let n_neigh = pre.anet.image(n);
    let k_neigh = pre.anet.image(k);
    for &j in &k_neigh {
        next.lnet.insert(j, n, k);
        next.lnet.insert(n, j, k);
    }
    for &j in &n_neigh {
        next.lnet.insert(j, k, n);
        next.lnet.insert(k, j, n);
    }
    next.lnet.insert(n, k, v);
    next.lnet.insert(k, n, w);
}

pub(super) fn fault_det_rec2_guard(ctx: &Ctx<'_>, n: NodeId, k: NodeId, m: NodeId) -> Guard {
    recovery_members(ctx, n, k)?;
    connected(ctx, n, k)?;
    local_route(ctx, n, k, m)
}

pub(super) fn fault_det_rec2_action(pre: &WsanState, next: &mut WsanState, n: NodeId, k: NodeId, m: NodeId) {
    next.failed_node_neigh.remove(&n);
    expire_routes_via(pre, next, n, k, m);
}

fn no_local_route(ctx: &Ctx<'_>, n: NodeId, k: NodeId) -> Guard {
    require(
        !has_local_route(ctx, n, k),
        "grd3",
        "no m with n↦k↦m, k↦n↦m ∈ l_net and m not a direct neighbour",
    )
}

/// Fallback when `l_net` holds no route between `n` and `k` (always the
/// case for `n = k`): recover as the initial model does.
pub(super) fn fault_det_rec_global_guard(ctx: &Ctx<'_>, n: NodeId, k: NodeId) -> Guard {
    recovery_members(ctx, n, k)?;
    inherited_disconnected(ctx, n, k)?;
    no_local_route(ctx, n, k)
}

pub(super) fn fault_det_rec2_global_guard(ctx: &Ctx<'_>, n: NodeId, k: NodeId) -> Guard {
    recovery_members(ctx, n, k)?;
    connected(ctx, n, k)?;
    no_local_route(ctx, n, k)
}

pub(super) fn add_2hop_guard(ctx: &Ctx<'_>, n: NodeId, m: NodeId, k: NodeId) -> Guard {
    let s = ctx.state;
    let l = &s.lnet;
    require(
        s.is_ok(n) && s.is_ok(m) && s.is_ok(k),
        "grd1",
        "Status(n) = Status(m) = Status(k) = ok",
    )?;
    require(
        l.contains(m, k, k) && l.contains(n, m, m) && !l.contains(n, k, m) && !l.contains(k, n, m),
        "grd2",
        "m↦k↦k ∈ l_net ∧ n↦m↦m ∈ l_net ∧ n↦k↦m ∉ l_net ∧ k↦n↦m ∉ l_net",
    )?;
    require(m != n && n != k && m != k, "grd3", "m ≠ n ∧ n ≠ k ∧ m ≠ k")?;
    require(!s.in_recovery(), "grd4", "FailedNodeNeigh = ∅")
}

pub(super) fn add_2hop_action(next: &mut WsanState, n: NodeId, m: NodeId, k: NodeId) {
    next.lnet.insert(n, k, m);
    next.lnet.insert(k, n, m);
}
