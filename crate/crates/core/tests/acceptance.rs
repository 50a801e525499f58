//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line; run with
//! `cargo test -p wsan-core --test acceptance -- --nocapture` to see them.

use std::collections::BTreeSet;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRng, TestRunner};
use rayon::prelude::*;
use wsan_core::invariants::InvariantId;
use wsan_core::refinement::sweep;
use wsan_core::scenario::{actor_components, fig1, replay_script, trace_records, FIG1_PARTITIONS};
use wsan_core::scheduler::{explore, run, run_observed, ExploreOptions, ScheduleConfig, StopCondition};
use wsan_core::{reachable_from_oracle, BinRel, EventKind, Fixture, Level, NodeId, NodeUniverse};

fn verdict(criterion: u8, name: &str, ok: bool, detail: impl AsRef<str>) {
    let tag = if ok { "PASS" } else { "FAIL" };
    println!("criterion {criterion} [{tag}] {name}: {}", detail.as_ref());
    assert!(ok, "criterion {criterion} failed: {}", detail.as_ref());
}

const SEEDS: u64 = 1000;
const STEPS: usize = 500;
const CORPUS_ACTORS: usize = 5;
const CORPUS_SENSORS: usize = 3;

/// One recovery phase, from a RemoveNode to the state with an empty
/// `FailedNodeNeigh` (or the end of the trace).
struct Episode {
    neighbours: Vec<NodeId>,
    recovery_events: usize,
    variant: usize,
    /// Sensor-mediated recoveries `(n, k, x, y)` performed in this phase.
    sensor_pairs: Vec<[NodeId; 4]>,
}

#[derive(Default)]
struct CorpusStats {
    traces: usize,
    steps: usize,
    unhealthy: Vec<String>,
    episodes: usize,
    completed: usize,
    termination_failures: Vec<String>,
    reconnection_failures: Vec<String>,
    sensor_certified: usize,
    elapsed: Duration,
}

fn trace_stats(universe: &NodeUniverse, level: Level, seed: u64) -> CorpusStats {
    let mut stats = CorpusStats {
        traces: 1,
        ..Default::default()
    };
    let mut open: Option<Episode> = None;
    let inv13 = InvariantId::new(Level::M2, 13);
    let cfg = ScheduleConfig::new(level, seed, STEPS);
    let trace = run_observed(universe, &cfg, &[], |view| {
        let inst = view.instance;
        let tag = format!("{level} seed {seed} step {}", view.index);
        if inst.event == EventKind::RemoveNode {
            let neighbours: Vec<NodeId> = view.pre.anet.image(inst.params[0]).into_iter().collect();
            if view.post.variant() != neighbours.len() {
                stats.termination_failures.push(format!("{tag}: variant {} after RemoveNode with {} neighbours", view.post.variant(), neighbours.len()));
            }
            stats.episodes += 1;
            open = Some(Episode {
                neighbours,
                recovery_events: 0,
                variant: view.post.variant(),
                sensor_pairs: Vec::new(),
            });
        } else if let Some(ep) = open.as_mut() {
            let expected = if inst.event.is_recovery() {
                ep.recovery_events += 1;
                ep.variant.saturating_sub(1)
            } else {
                ep.variant
            };
            if view.post.variant() != expected || (inst.event.is_recovery() && ep.variant == 0) {
                stats.termination_failures.push(format!("{tag}: {:?} moved variant {} -> {}", inst.event, ep.variant, view.post.variant()));
            }
            if level == Level::M2 && inst.event == EventKind::FaultDetRec {
                let p = &inst.params;
                ep.sensor_pairs.push([p[0], p[1], p[3], p[4]]);
            }
            ep.variant = view.post.variant();
        }
        if let Some(ep) = open.as_ref().filter(|ep| ep.variant == 0) {
            stats.completed += 1;
            if ep.recovery_events != ep.neighbours.len() {
                stats.termination_failures.push(format!("{tag}: {} recovery events for {} neighbours", ep.recovery_events, ep.neighbours.len()));
            }
            let closure = view.post.anet.closure();
            for &a in &ep.neighbours {
                for &b in ep.neighbours.iter().filter(|&&b| b != a) {
                    if !closure.contains(a, b) {
                        stats.reconnection_failures.push(format!("{tag}: {a} and {b} not rejoined"));
                    }
                }
            }
            for &[n, k, x, y] in &ep.sensor_pairs {
                let s = view.post;
                let certified = s.lnet.contains(n, k, x)
                    && s.sanet.contains(n, x)
                    && s.sanet.contains(k, y)
                    && s.snet.closure().contains(x, y)
                    && !wsan_core::check_invariants(universe, s).contains(inv13);
                if certified {
                    stats.sensor_certified += 1;
                } else {
                    stats.reconnection_failures.push(format!("{tag}: sensor route {n}-{k} via {x},{y} not certified"));
                }
            }
            open = None;
        }
    })
    .expect("config is valid");
    stats.steps = trace.steps.len() - 1;
    if !trace.outcome.is_healthy() {
        let detail = match trace.violation() {
            Some(r) => r.render(universe).join(" "),
            None => format!("{:?}", trace.outcome),
        };
        stats.unhealthy.push(format!("{level} seed {seed}: {detail}"));
    }
    stats
}

fn merge(mut a: CorpusStats, b: CorpusStats) -> CorpusStats {
    a.traces += b.traces;
    a.steps += b.steps;
    a.unhealthy.extend(b.unhealthy);
    a.episodes += b.episodes;
    a.completed += b.completed;
    a.termination_failures.extend(b.termination_failures);
    a.reconnection_failures.extend(b.reconnection_failures);
    a.sensor_certified += b.sensor_certified;
    a
}

fn corpus(level: Level) -> &'static CorpusStats {
    static CORPORA: [OnceLock<CorpusStats>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];
    CORPORA[level as usize].get_or_init(|| {
        let universe = NodeUniverse::with_counts(CORPUS_ACTORS, CORPUS_SENSORS).unwrap();
        let start = Instant::now();
        let mut stats = (0..SEEDS)
            .into_par_iter()
            .map(|seed| trace_stats(&universe, level, seed))
            .reduce(CorpusStats::default, merge);
        stats.elapsed = start.elapsed();
        stats
    })
}

fn first(list: &[String]) -> &str {
    list.first().map_or("", String::as_str)
}

#[test]
fn criterion_1_invariant_preservation() {
    let mut ok = true;
    let mut parts = Vec::new();
    let mut total = Duration::ZERO;
    for level in Level::ALL {
        let c = corpus(level);
        total += c.elapsed;
        ok &= c.unhealthy.is_empty() && c.traces == SEEDS as usize;
        parts.push(format!("{level}: {} traces, {} steps, {} violations {}", c.traces, c.steps, c.unhealthy.len(), first(&c.unhealthy)));
    }
    ok &= total < Duration::from_secs(120);
    verdict(1, "invariant preservation", ok, format!("{}; {:.1?}", parts.join("; "), total));
}

#[test]
fn criterion_2_recovery_terminates() {
    let mut ok = true;
    let mut parts = Vec::new();
    for level in Level::ALL {
        let c = corpus(level);
        ok &= c.termination_failures.is_empty() && c.episodes > 0;
        parts.push(format!("{level}: {} recoveries, {} exceptions {}", c.episodes, c.termination_failures.len(), first(&c.termination_failures)));
    }
    verdict(2, "termination of recovery", ok, parts.join("; "));
}

#[test]
fn criterion_3_reconnection() {
    let mut ok = true;
    let mut parts = Vec::new();
    for level in Level::ALL {
        let c = corpus(level);
        ok &= c.reconnection_failures.is_empty() && c.completed > 0;
        parts.push(format!("{level}: {} completed, {} exceptions {}", c.completed, c.reconnection_failures.len(), first(&c.reconnection_failures)));
    }
    let m2 = corpus(Level::M2);
    ok &= m2.sensor_certified > 0;
    parts.push(format!("m2 sensor-mediated pairs certified by inv13: {}", m2.sensor_certified));
    verdict(3, "reconnection", ok, parts.join("; "));
}

#[test]
fn criterion_4_deadlock_freedom() {
    let start = Instant::now();
    let mut ok = true;
    let mut states = 0;
    let mut failures = Vec::new();
    for level in Level::ALL {
        for actors in 1..=3 {
            for sensors in 0..=2 {
                let u = NodeUniverse::with_counts(actors, sensors).unwrap();
                let r = explore(&u, level, 7, ExploreOptions::default()).unwrap();
                states += r.states;
                if !r.is_clean() {
                    ok = false;
                    failures.push(format!("{level} {actors}a+{sensors}s: {} deadlocks, {} violations", r.deadlocks, r.violations));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(60);
    verdict(4, "deadlock freedom", ok, format!("{states} states explored, {} failing universes {}; {elapsed:.1?}", failures.len(), first(&failures)));
}

/// Every pair over `0..nodes`: `closure` membership equals BFS reachability.
fn closure_agrees(r: &BinRel, nodes: u32) -> bool {
    let c = r.closure();
    (0..nodes).all(|a| {
        let reached = reachable_from_oracle(r, NodeId(a));
        (0..nodes).all(|b| c.contains(NodeId(a), NodeId(b)) == reached.contains(&NodeId(b)))
    })
}

#[test]
fn criterion_5_closure_oracle() {
    let start = Instant::now();
    let strategy = (1u32..=50).prop_flat_map(|n| {
        (Just(n), proptest::collection::vec((0..n, 0..n), 0..=(3 * n as usize)))
    });
    let mut runner = TestRunner::new_with_rng(
        Config { cases: 10_000, failure_persistence: None, ..Config::default() },
        TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    let random = runner.run(&strategy, |(n, pairs)| {
        let r: BinRel = pairs.into_iter().map(|(a, b)| (NodeId(a), NodeId(b))).collect();
        prop_assert!(closure_agrees(&r, n));
        Ok(())
    });

    let mut exhaustive = 0;
    let mut exhaustive_ok = true;
    for nodes in 1u32..=3 {
        let all: Vec<(NodeId, NodeId)> = (0..nodes).flat_map(|a| (0..nodes).map(move |b| (NodeId(a), NodeId(b)))).collect();
        for mask in 0u32..(1 << all.len()) {
            let r: BinRel = all.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &p)| p).collect();
            exhaustive_ok &= closure_agrees(&r, nodes);
            if nodes == 3 {
                exhaustive += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let ok = random.is_ok() && exhaustive_ok && exhaustive == 512 && elapsed < Duration::from_secs(30);
    verdict(5, "closure oracle equivalence", ok, format!("10000 random relations on 1..=50 nodes: {}; {exhaustive} relations on 3 nodes agree: {exhaustive_ok}; {elapsed:.1?}", if random.is_ok() { "agree".to_string() } else { format!("{random:?}") }));
}

#[test]
fn criterion_6_refinement_sweep() {
    let start = Instant::now();
    let mut ok = true;
    let mut checks = 0;
    let mut failures = Vec::new();
    for actors in 1..=3 {
        for sensors in 0..=2 {
            let u = NodeUniverse::with_counts(actors, sensors).unwrap();
            let r = sweep(&u, 6, ExploreOptions::default()).unwrap();
            for p in &r.pairs {
                checks += p.guard_checks + p.action_checks;
            }
            if !r.passed() {
                ok = false;
                failures.push(r.first_counterexample().unwrap().to_string());
            }
        }
    }
    let fixture = ExploreOptions { fixture: Some(Fixture::DropRecoveryGrd2), ..Default::default() };
    let broken = sweep(&NodeUniverse::with_counts(3, 2).unwrap(), 6, fixture).unwrap();
    let detected: usize = broken.pairs.iter().map(|p| p.guard_failures + p.action_failures).sum();
    ok &= detected >= 1;
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(120);
    verdict(6, "refinement sweep", ok, format!("{checks} checks, {} failing universes {}; fixture failures detected: {detected}; {elapsed:.1?}", failures.len(), first(&failures)));
}

#[test]
fn criterion_7_fig1_partitions() {
    let start = Instant::now();
    let sc = fig1();
    let expected: Vec<BTreeSet<NodeId>> = FIG1_PARTITIONS
        .iter()
        .map(|p| p.iter().map(|&a| sc.universe.lookup(&format!("A{a}")).unwrap()).collect())
        .collect();
    let mut ok = true;
    let mut detail = Vec::new();
    for level in Level::ALL {
        let script = sc.script_at(level);
        for seed in 0..20 {
            let mut after_removal = Vec::new();
            let cfg = ScheduleConfig::new(level, seed, 200).with_stop(StopCondition::RecoveryComplete);
            let trace = run_observed(&sc.universe, &cfg, &script, |v| {
                if v.instance.event == EventKind::RemoveNode {
                    after_removal = actor_components(&sc.universe, v.post);
                }
            })
            .unwrap();
            let after_recovery = actor_components(&sc.universe, &trace.final_state);
            let good = after_removal == expected
                && after_recovery.len() == 1
                && trace.final_state.variant() == 0
                && trace.outcome.is_healthy();
            if !good {
                ok = false;
                detail.push(format!("{level} seed {seed}: {} then {} components", after_removal.len(), after_recovery.len()));
            }
        }
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(1);
    verdict(7, "fig1 partitions", ok, format!("3 components after removing A1, 1 after recovery, 3 levels x 20 seeds, {} exceptions {}; {elapsed:.1?}", detail.len(), first(&detail)));
}

fn digests(universe: &NodeUniverse, level: Level, seed: u64, script: &[wsan_core::EventInstance]) -> Vec<String> {
    let trace = run(universe, &ScheduleConfig::new(level, seed, 300), script).unwrap();
    trace.steps.into_iter().map(|s| s.digest).collect()
}

#[test]
fn criterion_8_replay_determinism() {
    let sc = fig1();
    let corpus_universe = NodeUniverse::with_counts(CORPUS_ACTORS, CORPUS_SENSORS).unwrap();
    let mut ok = true;
    let mut compared = 0;
    for level in Level::ALL {
        let script = sc.script_at(level);
        for seed in 0..10 {
            ok &= digests(&sc.universe, level, seed, &script) == digests(&sc.universe, level, seed, &script);
            ok &= digests(&corpus_universe, level, seed, &[]) == digests(&corpus_universe, level, seed, &[]);
            compared += 2;
        }
        // A trace's own event sequence replays to the same digests.
        let trace = run(&sc.universe, &ScheduleConfig::new(level, 5, 100), &script).unwrap();
        let records = trace_records(&sc.universe, &trace);
        let replay = replay_script(&sc.universe, &records).unwrap();
        let again = run(&sc.universe, &ScheduleConfig::new(level, 0, 0), &replay).unwrap();
        ok &= again.digests() == trace.digests();
        compared += 1;
    }
    verdict(8, "replay determinism", ok, format!("{compared} trace pairs byte-identical"));
}
