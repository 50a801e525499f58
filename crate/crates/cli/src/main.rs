//! `wsan`: run scenarios, explore state spaces, check refinement and
//! generate scenario files.
//!
//! Exit codes: 0 success, 1 input error, 2 property violation, 3 explosion
//! guard exceeded.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tracing::info;
use tracing_subscriber::EnvFilter;
use wsan_core::refinement::sweep;
use wsan_core::scenario::{
    actor_components, generate, trace_records, write_trace, GenKind, GenParams, Scenario,
};
use wsan_core::scheduler::{explore, run, ExploreOptions, Outcome, RunError, ScheduleConfig, StopCondition};
use wsan_core::{EventKind, Fixture, Level, NodeUniverse};

const EXIT_INPUT: u8 = 1;
const EXIT_VIOLATION: u8 = 2;
const EXIT_GUARD: u8 = 3;

#[derive(Parser)]
#[command(name = "wsan", version, about = "Sensor-actor network recovery simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario script, then a seeded free run.
    Run(RunArgs),
    /// Enumerate every reachable state up to a depth.
    Explore(ExploreArgs),
    /// Check M1 ⊑ M0 and M2 ⊑ M1 on every reachable state up to a depth.
    CheckRefinement(RefineArgs),
    /// Write a scenario file.
    Gen(GenArgs),
}

#[derive(Args)]
struct UniverseArgs {
    /// Number of actors, named A1..An.
    #[arg(long, default_value_t = 3)]
    actors: usize,
    /// Number of sensors, named S1..Sm.
    #[arg(long, default_value_t = 0)]
    sensors: usize,
}

impl UniverseArgs {
    fn universe(&self) -> Result<NodeUniverse, String> {
        NodeUniverse::with_counts(self.actors, self.sensors).map_err(|e| e.to_string())
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Until {
    /// Stop when a recovery phase completes, if the script removes an actor.
    Auto,
    /// Stop when a recovery phase completes.
    Recovery,
    /// Take exactly --steps free steps.
    Steps,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file; without one, an empty script over --actors/--sensors.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Machine level; defaults to the scenario's level (m0 without a scenario).
    #[arg(long)]
    level: Option<Level>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum free steps after the script.
    #[arg(long, default_value_t = 500)]
    steps: usize,
    #[arg(long, value_enum, default_value_t = Until::Auto)]
    until: Until,
    /// Write one JSON trace record per line to this file.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[arg(long)]
    machine_fixture: Option<Fixture>,
    #[command(flatten)]
    nodes: UniverseArgs,
}

#[derive(Args)]
struct ExploreArgs {
    #[arg(long, default_value = "m0")]
    level: Level,
    #[arg(long, default_value_t = 6)]
    depth: usize,
    /// Explore universes above the explosion guard.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    machine_fixture: Option<Fixture>,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    nodes: UniverseArgs,
}

#[derive(Args)]
struct RefineArgs {
    #[arg(long, default_value_t = 6)]
    depth: usize,
    #[arg(long)]
    force: bool,
    /// Break the concrete machines with a named fixture.
    #[arg(long)]
    machine_fixture: Option<Fixture>,
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    nodes: UniverseArgs,
}

#[derive(Args)]
struct GenArgs {
    /// random, star, chain or fig1.
    kind: GenKind,
    #[arg(long, default_value_t = 6)]
    actors: usize,
    #[arg(long, default_value_t = 0)]
    sensors: usize,
    #[arg(long, default_value = "m0")]
    level: Level,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout by default.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("WSAN_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_INPUT) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Explore(args) => cmd_explore(args),
        Command::CheckRefinement(args) => cmd_check_refinement(args),
        Command::Gen(args) => cmd_gen(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}

struct Failure(u8, String);

fn input(message: impl ToString) -> Failure {
    Failure(EXIT_INPUT, message.to_string())
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    let text = fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    text.parse()
        .map_err(|e| input(format!("{}: {e}", path.display())))
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let scenario = match &args.scenario {
        Some(path) => load_scenario(path)?,
        None => Scenario {
            description: String::new(),
            level: args.level.unwrap_or(Level::M0),
            universe: args.nodes.universe().map_err(input)?,
            script: Vec::new(),
        },
    };
    let level = args.level.unwrap_or(scenario.level);
    let script = scenario.script_at(level);
    let removes = script.iter().any(|i| i.event == EventKind::RemoveNode);
    let stop = match args.until {
        Until::Recovery => StopCondition::RecoveryComplete,
        Until::Auto if removes => StopCondition::RecoveryComplete,
        _ => StopCondition::StepsExhausted,
    };
    let mut cfg = ScheduleConfig::new(level, args.seed, args.steps).with_stop(stop);
    cfg.fixture = args.machine_fixture;
    info!(level = %level, seed = args.seed, script = script.len(), "run");

    let u = &scenario.universe;
    let trace = run(u, &cfg, &script).map_err(|e| match e {
        RunError::Script { .. } => input(format!("scenario {e}")),
        RunError::Config(_) => input(e),
    })?;
    if let Some(path) = &args.trace_out {
        let file = fs::File::create(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
        write_trace(io::BufWriter::new(file), &trace_records(u, &trace))
            .map_err(|e| input(format!("{}: {e}", path.display())))?;
    }

    let last = trace.steps.last().expect("trace has the initialisation");
    println!("level: {level}");
    println!("seed: {}", args.seed);
    println!("steps: {}", trace.steps.len() - 1);
    println!("variant: {}", last.variant);
    println!("components: {}", actor_components(u, &trace.final_state).len());
    println!("digest: {}", last.digest);
    match trace.outcome {
        Outcome::Completed(reason) => {
            println!("outcome: completed ({})", serde_json::to_value(reason).unwrap_or_default().as_str().unwrap_or(""));
            Ok(())
        }
        Outcome::Violation { step } => {
            let violated = trace.steps[step].report.render(u).join(" ");
            println!("outcome: violation at step {step}: {violated}");
            Err(Failure(EXIT_VIOLATION, format!("invariant violation at step {step}: {violated}")))
        }
        Outcome::Deadlock { step } => {
            println!("outcome: deadlock after step {step}");
            Err(Failure(EXIT_VIOLATION, format!("deadlock: no event enabled after step {step}")))
        }
        Outcome::Stalled { step } => {
            println!("outcome: stalled after step {step}");
            Err(Failure(EXIT_VIOLATION, format!("every enabled event has weight zero after step {step}")))
        }
    }
}

fn guard_exceeded(e: wsan_core::scheduler::ExploreError) -> Failure {
    Failure(EXIT_GUARD, format!("{e} (pass --force to explore anyway)"))
}

fn explore_options(force: bool, fixture: Option<Fixture>) -> ExploreOptions {
    ExploreOptions {
        force,
        fixture,
        ..Default::default()
    }
}

fn cmd_explore(args: ExploreArgs) -> Result<(), Failure> {
    let u = args.nodes.universe().map_err(input)?;
    let report = explore(&u, args.level, args.depth, explore_options(args.force, args.machine_fixture))
        .map_err(guard_exceeded)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        println!("level: {}", report.level);
        println!("nodes: {} ({} actors, {} sensors)", report.nodes, args.nodes.actors, args.nodes.sensors);
        println!("depth: {} (reached {}{})", report.depth, report.depth_reached, if report.exhausted { ", state space exhausted" } else { "" });
        println!("states: {}", report.states);
        println!("transitions: {}", report.transitions);
        println!("deadlocks: {}", report.deadlocks);
        println!("violations: {}", report.violations);
    }
    if let Some(state) = &report.first_deadlock {
        return Err(Failure(EXIT_VIOLATION, format!("deadlocked state:\n{state}")));
    }
    if let Some(v) = &report.first_violation {
        return Err(Failure(EXIT_VIOLATION, format!("invariant violation: {}", v.join(" "))));
    }
    Ok(())
}

fn cmd_check_refinement(args: RefineArgs) -> Result<(), Failure> {
    let u = args.nodes.universe().map_err(input)?;
    let report = sweep(&u, args.depth, explore_options(args.force, args.machine_fixture))
        .map_err(guard_exceeded)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        for p in &report.pairs {
            let pair = p.pair.map(|p| p.to_string()).unwrap_or_default();
            println!(
                "{pair}: {} states, {} guard checks ({} failed), {} action checks ({} failed), {} vacuous",
                p.states, p.guard_checks, p.guard_failures, p.action_checks, p.action_failures, p.vacuous
            );
        }
    }
    match report.first_counterexample() {
        Some(c) => Err(Failure(EXIT_VIOLATION, format!("refinement counterexample: {c}"))),
        None => Ok(()),
    }
}

fn cmd_gen(args: GenArgs) -> Result<(), Failure> {
    let params = GenParams {
        actors: args.actors,
        sensors: args.sensors,
        level: args.level,
        seed: args.seed,
    };
    let scenario = generate(args.kind, params).map_err(input)?;
    let mut text = scenario.to_file().to_json();
    text.push('\n');
    match &args.out {
        Some(path) => fs::write(path, text).map_err(|e| input(format!("{}: {e}", path.display()))),
        None => io::stdout().write_all(text.as_bytes()).map_err(input),
    }
}
