use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};

use relaymesh::scenario;
use relaymesh::sim::{
    compare_topology, plan_topology, run_from, CommandScript, Outcome, RunResult, ScenarioConfig, SimError, Simulation,
    TreeStats,
};
use relaymesh::topology::{hop_count, relay_count};
use relaymesh_bridge::{serve, Bridge, Scene, ServeOptions};

/// Relay-tree deployment planner and simulator.
///
/// Exit codes: 0 success, 1 run did not terminate or I/O failure,
/// 2 validation error, 3 monitor breach, 4 infeasible topology.
#[derive(Parser, Debug)]
#[command(name = "relaymesh", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a scenario file and report the first problem.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Plan the relay tree only.
    Topology {
        #[command(flatten)]
        common: Common,
    },
    /// Relay and hop counts of our tree against the MST baseline.
    Compare(CompareArgs),
    /// Full deployment run.
    Run(RunArgs),
    /// Write a generated scenario file.
    Generate(GenerateArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Compare on this scenario instead of the corridor-world generator.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// First seed; trial `i` uses `seed + i`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trials per target count.
    #[arg(long, default_value_t = 10)]
    trials: u64,
    /// Target counts for the generator.
    #[arg(long, value_delimiter = ',', default_value = "2,4,6,8")]
    targets: Vec<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Overrides the scenario tick budget.
    #[arg(long)]
    tick_budget: Option<u64>,
    /// Steering commands to replay, as written by a served run.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Stream frames and accept commands over WebSocket.
    #[arg(long)]
    serve: bool,
    #[arg(long, default_value_t = 8765, requires = "serve")]
    port: u16,
    /// Simulated seconds per wall second when serving.
    #[arg(long, default_value_t = 1.0, requires = "serve")]
    speed: f64,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Kind {
    Desk,
    Corridor,
    Valley,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(value_enum)]
    kind: Kind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    targets: usize,
    /// Obstacle count (desk only).
    #[arg(long, default_value_t = 6)]
    obstacles: usize,
    /// File to write; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Io(String),
    NotTerminated(String),
    Validation(String),
    Breach(String),
    Topology(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) | Failure::NotTerminated(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Breach(_) => 3,
            Failure::Topology(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Io(m) | Failure::NotTerminated(m) | Failure::Validation(m) | Failure::Breach(m) | Failure::Topology(m) => m,
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => Failure::Validation(c.to_string()),
            SimError::Topology(t) => Failure::Topology(t.to_string()),
            other => Failure::Io(other.to_string()),
        }
    }
}

fn io(context: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", context.display()))
}

fn load(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    let mut cfg = ScenarioConfig::from_json(&text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    if let Some(s) = seed {
        cfg.params.seed = s;
    }
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(io(dir))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let f = fs::File::create(path).map_err(io(path))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn cmd_topology(c: &Common) -> Result<(), Failure> {
    let cfg = load(&c.scenario, c.seed)?;
    let t0 = Instant::now();
    let (tree, _) = plan_topology(&cfg)?;
    let ms = t0.elapsed().as_secs_f64() * 1e3;
    create_dir(&c.out)?;
    let path = c.out.join("tree.json");
    write_json(&path, &tree.export())?;
    println!(
        "N={} N_r={} N_h={} time_ms={ms:.1} tree={}",
        tree.agent_count(),
        relay_count(&tree),
        hop_count(&tree),
        path.display()
    );
    Ok(())
}

#[derive(serde::Serialize)]
struct CompareRow {
    targets: usize,
    trials: usize,
    mst_relays: f64,
    ours_relays: f64,
    mst_hops: f64,
    ours_hops: f64,
    mst_ms: f64,
    ours_ms: f64,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn cmd_compare(a: &CompareArgs) -> Result<(), Failure> {
    let base = a.scenario.as_deref().map(|p| load(p, None)).transpose()?;
    let counts: Vec<usize> = match &base {
        Some(cfg) => vec![cfg.targets.len()],
        None => a.targets.clone(),
    };
    let mut rows = Vec::new();
    for &m in &counts {
        let mut pairs: Vec<(TreeStats, TreeStats)> = Vec::new();
        for i in 0..a.trials {
            let seed = a.seed + i;
            let cfg = match &base {
                Some(cfg) => {
                    let mut c = cfg.clone();
                    c.params.seed = seed;
                    c
                }
                None => scenario::corridor_world(seed, m),
            };
            pairs.push(compare_topology(&cfg)?);
        }
        rows.push(CompareRow {
            targets: m,
            trials: pairs.len(),
            mst_relays: mean(pairs.iter().map(|p| p.1.relays as f64)),
            ours_relays: mean(pairs.iter().map(|p| p.0.relays as f64)),
            mst_hops: mean(pairs.iter().map(|p| p.1.hops as f64)),
            ours_hops: mean(pairs.iter().map(|p| p.0.hops as f64)),
            mst_ms: mean(pairs.iter().map(|p| p.1.wall_ms)),
            ours_ms: mean(pairs.iter().map(|p| p.0.wall_ms)),
        });
    }
    create_dir(&a.out)?;
    let path = a.out.join("compare.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    for r in &rows {
        w.serialize(r).map_err(|e| Failure::Io(e.to_string()))?;
    }
    w.flush().map_err(io(&path))?;
    println!("{:>7} {:>6} {:>9} {:>9} {:>9} {:>9}", "targets", "trials", "N_r mst", "N_r ours", "N_h mst", "N_h ours");
    for r in &rows {
        println!(
            "{:>7} {:>6} {:>9.2} {:>9.2} {:>9.2} {:>9.2}",
            r.targets, r.trials, r.mst_relays, r.ours_relays, r.mst_hops, r.ours_hops
        );
    }
    Ok(())
}

fn cmd_run(a: &RunArgs) -> Result<(), Failure> {
    let mut cfg = load(&a.common.scenario, a.common.seed)?;
    if let Some(b) = a.tick_budget {
        cfg.params.tick_budget = b;
    }
    let script: CommandScript = match &a.script {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(io(p))?;
            serde_json::from_str(&text).map_err(|e| Failure::Validation(format!("{}: {e}", p.display())))?
        }
        None => CommandScript::default(),
    };
    create_dir(&a.common.out)?;
    let sim = Simulation::new(cfg)?;
    let result: RunResult = if a.serve {
        if !(a.speed > 0.0) {
            return Err(Failure::Validation("--speed: must be positive".into()));
        }
        let bridge = Bridge::bind(("0.0.0.0", a.port), &Scene::of(&sim)).map_err(|e| Failure::Io(format!("port {}: {e}", a.port)))?;
        eprintln!("serving ws://{}", bridge.local_addr());
        let options = ServeOptions {
            pace: Some(Duration::from_secs_f64(sim.params.h / a.speed)),
            wait_for_client: None,
        };
        let served = serve(sim, &bridge, &options);
        write_json(&a.common.out.join("commands.json"), &served.script)?;
        served.result
    } else {
        run_from(sim, &script)
    };
    let log_path = a.common.out.join("runlog.ndjson");
    let f = fs::File::create(&log_path).map_err(io(&log_path))?;
    result.log.write_ndjson(BufWriter::new(f)).map_err(io(&log_path))?;
    let csv_path = a.common.out.join("metrics.csv");
    let f = fs::File::create(&csv_path).map_err(io(&csv_path))?;
    result.metrics.write_csv(f).map_err(|e| Failure::Io(format!("{}: {e}", csv_path.display())))?;
    for (tick, cmd, reason) in &result.rejected {
        eprintln!("rejected at boundary {tick}: {cmd:?}: {reason}");
    }
    let n = result.log.records.len().max(1) as f64;
    let constraint = result.metrics.rows.iter().map(|r| r.mean_constraint_ms).sum::<f64>() / n;
    let solve = result.metrics.rows.iter().map(|r| r.mean_solve_ms).sum::<f64>() / n;
    println!(
        "outcome={} ticks={} agent_tick_ms={:.2} (constraints {constraint:.2}, solve {solve:.2}) hash={}",
        serde_json::to_string(result.outcome()).expect("serializable"),
        result.log.records.len(),
        constraint + solve,
        result.log.hash()
    );
    match result.outcome() {
        Outcome::Terminated { .. } => Ok(()),
        Outcome::Breach { tick, detail } => Err(Failure::Breach(format!("monitor breach at tick {tick}: {detail}"))),
        Outcome::BudgetExhausted { tick } => Err(Failure::NotTerminated(format!("tick budget exhausted at tick {tick}"))),
        Outcome::Fault { tick, detail } => Err(Failure::NotTerminated(format!("planner fault at tick {tick}: {detail}"))),
    }
}

fn cmd_generate(a: &GenerateArgs) -> Result<(), Failure> {
    let cfg = match a.kind {
        Kind::Desk => scenario::desk(a.seed, a.targets, a.obstacles),
        Kind::Corridor => scenario::corridor_world(a.seed, a.targets),
        Kind::Valley => scenario::valley(a.seed, a.targets),
    };
    match &a.out {
        Some(p) => fs::write(p, cfg.to_json()).map_err(io(p)),
        None => {
            println!("{}", cfg.to_json());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { scenario } => load(scenario, None).map(|cfg| println!("ok: {} ({} targets)", cfg.name, cfg.targets.len())),
        Command::Topology { common } => cmd_topology(common),
        Command::Compare(a) => cmd_compare(a),
        Command::Run(a) => cmd_run(a),
        Command::Generate(a) => cmd_generate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message().replace('\n', " "));
            ExitCode::from(f.code())
        }
    }
}
