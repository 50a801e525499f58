//! Second refinement: sensor links (`SNET`) and sensor-actor links (`SANET`)
//! carry the replacement routes chosen during recovery.

use crate::relations::NodeId;

use super::m0::{connected, recovery_members};
use super::m1::{inherited_disconnected, local_route};
use super::{require, Ctx, Unsatisfied};

type Guard = Result<(), Unsatisfied>;

/// Raises a sensor to ok. Sensors never fail in-model.
pub(super) fn add_sensor_node_guard(ctx: &Ctx<'_>, n: NodeId) -> Guard {
    let s = ctx.state;
    require(!s.is_ok(n), "grd1", "Status(n) = fail")?;
    require(!s.in_recovery(), "grd2", "FailedNodeNeigh = ∅")?;
    require(ctx.universe.is_sensor(n), "grd3", "n ∈ sensors")
}

pub(super) fn add_slink_guard(ctx: &Ctx<'_>, n: NodeId, m: NodeId) -> Guard {
    let s = ctx.state;
    require(s.is_ok(n) && s.is_ok(m), "grd1", "Status(n) = ok ∧ Status(m) = ok")?;
    require(!s.snet.contains(n, m), "grd2", "n ↦ m ∉ SNET")?;
    require(n != m, "grd3", "n ≠ m")?;
    require(
        ctx.universe.is_sensor(n) && ctx.universe.is_sensor(m),
        "grd4",
        "n ∈ sensors ∧ m ∈ sensors",
    )
}

pub(super) fn add_salink_guard(ctx: &Ctx<'_>, n: NodeId, m: NodeId) -> Guard {
    let s = ctx.state;
    let u = ctx.universe;
    require(s.is_ok(n) && s.is_ok(m), "grd1", "Status(n) = ok ∧ Status(m) = ok")?;
    require(
        (u.is_actor(n) && u.is_sensor(m)) || (u.is_sensor(n) && u.is_actor(m)),
        "grd2",
        "one of n, m is an actor and the other a sensor",
    )?;
    require(!s.sanet.contains(n, m), "grd3", "n ↦ m ∉ SANET")?;
    require(n != m, "grd4", "n ≠ m")
}

/// `n ↦ k ∈ dom(l_net ∖ {n ↦ k ↦ m})`.
fn other_route(ctx: &Ctx<'_>, n: NodeId, k: NodeId, m: NodeId) -> bool {
    ctx.state.lnet.vias(n, k).any(|via| via != m)
}

fn sensor_bridge(ctx: &Ctx<'_>, n: NodeId, k: NodeId, x: NodeId, y: NodeId) -> Guard {
    let s = ctx.state;
    require(
        s.sanet.contains(n, x) && s.sanet.contains(k, y),
        "grd4",
        "x ∈ SANET[{n}] ∧ y ∈ SANET[{k}]",
    )?;
    require(ctx.snet_closure().contains(x, y), "grd5", "x ↦ y ∈ closure(SNET)")
}

fn sensor_recovery_extras(ctx: &Ctx<'_>, n: NodeId, k: NodeId, m: NodeId, x: NodeId, y: NodeId) -> Guard {
    sensor_bridge(ctx, n, k, x, y)?;
    require(ctx.universe.is_actor(m), "grd6", "m ∈ actors")?;
    require(!other_route(ctx, n, k, m), "grd7", "n ↦ k ∉ dom(l_net ∖ {n ↦ k ↦ m})")
}

pub(super) fn fault_det_rec_guard(
    ctx: &Ctx<'_>,
    n: NodeId,
    k: NodeId,
    m: NodeId,
    x: NodeId,
    y: NodeId,
) -> Guard {
    recovery_members(ctx, n, k)?;
    inherited_disconnected(ctx, n, k)?;
    local_route(ctx, n, k, m)?;
    sensor_recovery_extras(ctx, n, k, m, x, y)
}

pub(super) fn fault_det_rec2_guard(ctx: &Ctx<'_>, n: NodeId, k: NodeId, m: NodeId) -> Guard {
    recovery_members(ctx, n, k)?;
    connected(ctx, n, k)?;
    local_route(ctx, n, k, m)?;
    require(other_route(ctx, n, k, m), "grd6", "n ↦ k ∈ dom(l_net ∖ {n ↦ k ↦ m})")
}

/// Fallback for a local route through `m` that no sensor path can replace:
/// the actors link directly, recording each other as 1-hop via-nodes.
pub(super) fn fault_det_rec_direct_guard(ctx: &Ctx<'_>, n: NodeId, k: NodeId, m: NodeId) -> Guard {
    recovery_members(ctx, n, k)?;
    inherited_disconnected(ctx, n, k)?;
    local_route(ctx, n, k, m)?;
    let sensor_route = ctx.state.sanet.image(n).into_iter().any(|x| {
        ctx.state
            .sanet
            .image(k)
            .into_iter()
            .any(|y| sensor_recovery_extras(ctx, n, k, m, x, y).is_ok())
    });
    require(!sensor_route, "grd8", "no x, y satisfying grd4–grd7")
}

/// Fallback for a local route through `m` when `l_net` has no other route.
pub(super) fn fault_det_rec2_direct_guard(ctx: &Ctx<'_>, n: NodeId, k: NodeId, m: NodeId) -> Guard {
    recovery_members(ctx, n, k)?;
    connected(ctx, n, k)?;
    local_route(ctx, n, k, m)?;
    require(!other_route(ctx, n, k, m), "grd6", "n ↦ k ∉ dom(l_net ∖ {n ↦ k ↦ m})")
}
