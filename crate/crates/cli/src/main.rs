//! `tactix`: run a session server, seeded experiments, trace analysis and
//! map/activity validation.
//!
//! Exit codes: 0 success, 1 usage, 2 validation, 3 runtime.

use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use tactix_core::activity::{Activity, ActivityError};
use tactix_core::agent::AgentScript;
use tactix_core::dynamics::DynamicsParams;
use tactix_core::exec::Execution;
use tactix_core::experiment::{run_manifest, write_outputs, ExperimentError, RunManifest, World};
use tactix_core::haptics::HapticMode;
use tactix_core::session::{LatencyProfile, SessionConfig, DEFAULT_PORT};
use tactix_core::trace::summary::{session_summary, write_plot_csvs, SummaryOptions};
use tactix_core::trace::{read_events, read_trace, TraceError};
use tactix_core::zone_map::{MapError, ZoneMap};
use tactix_core::{sha256_hex, DEFAULT_ACTIVITY_JSON, DEFAULT_MAP_JSON};
use tactix_server::{ServerError, ServerOptions};
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<MapError> for CliError {
    fn from(e: MapError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<ActivityError> for CliError {
    fn from(e: ActivityError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        match e {
            TraceError::Io(e) => CliError::Runtime(format!("I/O error: {e}")),
            e => CliError::Validation(e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(msg) => CliError::Usage(msg),
            ExperimentError::Trace(e) => e.into(),
            ExperimentError::Io(e) => CliError::Runtime(format!("I/O error: {e}")),
        }
    }
}

impl From<ServerError> for CliError {
    fn from(e: ServerError) -> Self {
        match e {
            ServerError::Config(msg) => CliError::Validation(msg),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Parser)]
#[command(name = "tactix", version, about = "Remote collaboration with simulated haptic robots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a live session server (TCP and WebSocket).
    Serve(ServeArgs),
    /// Run seeded scripted-agent sessions and compare modes.
    Experiment(ExperimentArgs),
    /// Summarize a recorded trace and event log.
    Analyze(AnalyzeArgs),
    /// Check a map and an activity against each other.
    Validate(ValidateArgs),
    /// Connect one scripted agent to a running server over TCP.
    Agent(AgentArgs),
}

#[derive(Args)]
struct WorldArgs {
    /// Map JSON; the packaged cell map when omitted.
    #[arg(long)]
    map: Option<PathBuf>,
    /// Activity JSON; the packaged activity when omitted.
    #[arg(long)]
    activity: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    world: WorldArgs,
    #[arg(long, value_parser = parse_mode, default_value = "co_location")]
    mode: HapticMode,
    /// TCP port; the WebSocket and asset endpoint listens on the next port
    /// unless `--http-port` is given.
    #[arg(long, env = "TACTIX_PORT", default_value_t = DEFAULT_PORT)]
    port: u16,
    #[arg(long)]
    http_port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long)]
    session_id: Option<String>,
    /// Directory for trace.csv, events.jsonl and report.json.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Wall-clock session; this is the only clock `serve` has, the flag is
    /// accepted so live-session scripts can say so explicitly.
    #[arg(long)]
    realtime: bool,
    #[arg(long, default_value_t = 10_000)]
    n_perm: u64,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    world: WorldArgs,
    /// Modes to run, comma separated.
    #[arg(long, value_parser = parse_mode, value_delimiter = ',', conflicts_with = "manifest")]
    mode: Vec<HapticMode>,
    /// Seed list: `1..20` (inclusive), `1..=20`, `7` or `1,4,9`.
    #[arg(long, value_parser = parse_seeds, conflicts_with = "manifest")]
    seeds: Option<Seeds>,
    /// `base_ms:jitter_ms`.
    #[arg(long, default_value = "100:50", conflicts_with = "manifest")]
    latency: String,
    #[arg(long, default_value_t = 0, conflicts_with = "manifest")]
    latency_seed: u64,
    /// Simulated-time cap per session, seconds.
    #[arg(long, conflicts_with = "manifest")]
    duration: Option<f64>,
    #[arg(long, conflicts_with = "manifest")]
    n_perm: Option<u64>,
    #[arg(long, conflicts_with = "manifest")]
    hz: Option<f64>,
    /// Re-run a manifest written by an earlier experiment.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run sessions concurrently; outputs are identical to a sequential run.
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long, default_value_t = 10.0)]
    hz: f64,
    #[arg(long, default_value_t = 10_000)]
    n_perm: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Writes report.json and plot CSVs here instead of printing the report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    activity: PathBuf,
}

#[derive(Args)]
struct AgentArgs {
    #[command(flatten)]
    world: WorldArgs,
    /// Server TCP address.
    #[arg(long, default_value = "127.0.0.1:7741")]
    connect: SocketAddr,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Organelles to visit, comma separated; a seeded random tour when omitted.
    #[arg(long, value_delimiter = ',')]
    itinerary: Vec<String>,
    #[arg(long, default_value_t = 600.0)]
    max_s: f64,
}

fn parse_mode(s: &str) -> Result<HapticMode, String> {
    s.parse()
}

#[derive(Debug, Clone)]
struct Seeds(Vec<u64>);

fn parse_seeds(s: &str) -> Result<Seeds, String> {
    let num = |t: &str| t.trim().parse::<u64>().map_err(|_| format!("bad seed {t:?}"));
    let seeds = if let Some((lo, hi)) = s.split_once("..") {
        let hi = hi.strip_prefix('=').unwrap_or(hi);
        let (lo, hi) = (num(lo)?, num(hi)?);
        (lo..=hi).collect()
    } else {
        s.split(',').filter(|t| !t.trim().is_empty()).map(num).collect::<Result<Vec<_>, _>>()?
    };
    if seeds.is_empty() {
        return Err("empty seed list".into());
    }
    Ok(Seeds(seeds))
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| io_err(path, e))
}

/// Map, its raw document and its hash.
fn load_map(path: Option<&Path>) -> Result<(ZoneMap, String, String), CliError> {
    let text = match path {
        Some(p) => String::from_utf8(read_file(p)?).map_err(|_| CliError::Validation(format!("{}: not UTF-8", p.display())))?,
        None => DEFAULT_MAP_JSON.to_string(),
    };
    let map = ZoneMap::load(text.as_bytes())?;
    let hash = sha256_hex(text.as_bytes());
    Ok((map, text, hash))
}

fn load_activity(path: Option<&Path>) -> Result<(Activity, String), CliError> {
    let text = match path {
        Some(p) => String::from_utf8(read_file(p)?).map_err(|_| CliError::Validation(format!("{}: not UTF-8", p.display())))?,
        None => DEFAULT_ACTIVITY_JSON.to_string(),
    };
    Ok((Activity::load(text.as_bytes())?, text))
}

fn load_world(args: &WorldArgs) -> Result<(World, String, String), CliError> {
    let (map, map_json, hash) = load_map(args.map.as_deref())?;
    let (activity, activity_json) = load_activity(args.activity.as_deref())?;
    let problems = activity.check_against(&map);
    if !problems.is_empty() {
        return Err(CliError::Validation(problems.join("\n")));
    }
    Ok((World::new(map, hash, activity, DynamicsParams::default()), map_json, activity_json))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

fn cmd_validate(args: ValidateArgs) -> Result<(), CliError> {
    let (map, _, hash) = load_map(Some(&args.map))?;
    let (activity, _) = load_activity(Some(&args.activity))?;
    let problems = activity.check_against(&map);
    if !problems.is_empty() {
        return Err(CliError::Validation(problems.join("\n")));
    }
    println!(
        "ok: {} zones, {} tasks, {} questions, map sha256 {hash}",
        map.zones().len(),
        activity.tasks.len(),
        activity.questions.len()
    );
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    if !(args.hz.is_finite() && args.hz > 0.0) {
        return Err(CliError::Usage(format!("--hz must be positive, got {}", args.hz)));
    }
    let file = std::fs::File::open(&args.trace).map_err(|e| io_err(&args.trace, e))?;
    let (trace, _digest) = read_trace(std::io::BufReader::new(file))?;
    let events = match &args.events {
        Some(path) => {
            let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
            read_events(std::io::BufReader::new(file))?
        }
        None => Vec::new(),
    };
    let opts = SummaryOptions {
        hz: args.hz,
        n_perm: args.n_perm,
        seed: args.seed,
        exec: Execution::default(),
    };
    let report = session_summary(&trace, &events, &opts)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    match &args.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
            write_json(&dir.join("report.json"), &report)?;
            write_plot_csvs(dir, &trace)?;
            println!("wrote {}", dir.join("report.json").display());
        }
        None => println!("{}", serde_json::to_string_pretty(&report).map_err(|e| CliError::Runtime(e.to_string()))?),
    }
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> Result<(), CliError> {
    let (world, _, _) = load_world(&args.world)?;
    let mut manifest = match &args.manifest {
        Some(path) => serde_json::from_slice::<RunManifest>(&read_file(path)?)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?,
        None => {
            let seeds = args.seeds.clone().ok_or_else(|| CliError::Usage("--seeds is required without --manifest".into()))?;
            let base = LatencyProfile::parse(&args.latency, args.latency_seed).map_err(CliError::Usage)?;
            let modes = if args.mode.is_empty() {
                vec![HapticMode::CoLocation, HapticMode::Consensus]
            } else {
                args.mode.clone()
            };
            let mut m = RunManifest::new(&world, modes, seeds.0, base);
            if let Some(d) = args.duration {
                m.duration_s = d;
            }
            if let Some(n) = args.n_perm {
                m.n_perm = n;
            }
            if let Some(hz) = args.hz {
                m.hz = hz;
            }
            m
        }
    };
    let out = args
        .out
        .clone()
        .or_else(|| manifest.out_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("tactix-out"));
    // The written manifest must not depend on where it was written.
    manifest.out_dir = None;
    manifest.validate(&world).map_err(CliError::Usage)?;
    let exec = if args.parallel { Execution::Parallel } else { Execution::Sequential };
    info!("running {} modes x {} seeds", manifest.modes.len(), manifest.seeds.len());
    let outcomes = run_manifest(&manifest, &world, exec)?;
    let agg = write_outputs(&out, &manifest, &outcomes)?;
    for line in &agg.runs {
        println!(
            "{} seed {}: r_x {:+.3} r_y {:+.3} tandem {:.3} score {} errors {}",
            line.mode, line.seed, line.r_x, line.r_y, line.tandem_fraction, line.score, line.protocol_errors
        );
    }
    for c in &agg.comparisons {
        println!(
            "{} vs {}: matched r gap {:+.3}, tandem wins {}/{}",
            c.first, c.second, c.matched_r_gap, c.tandem_wins, c.n_pairs
        );
    }
    println!("outputs in {}", out.display());
    Ok(())
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(e.to_string()))
}

fn cmd_serve(args: ServeArgs) -> Result<(), CliError> {
    let (world, map_json, activity_json) = load_world(&args.world)?;
    let session_id = args.session_id.clone().unwrap_or_else(|| {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        format!("session-{secs}")
    });
    let http_port = match args.http_port {
        Some(p) => p,
        None if args.port == 0 => 0,
        None => args.port.checked_add(1).ok_or_else(|| CliError::Usage("no port after 65535".into()))?,
    };
    let opts = ServerOptions {
        config: SessionConfig::new(session_id, args.mode, world.map_hash.clone()),
        dynamics: world.dynamics,
        map: world.map,
        map_json,
        activity: world.activity,
        activity_json,
        tcp_addr: SocketAddr::new(args.host, args.port),
        http_addr: SocketAddr::new(args.host, http_port),
    };
    let rt = runtime()?;
    let record = rt.block_on(async {
        let server = tactix_server::start(opts).await?;
        println!("session_id {}", server.session_id());
        println!("tcp {}", server.tcp_addr());
        println!("websocket {}", server.ws_url());
        println!("assets http://{}/assets/", server.http_addr());
        let stop = server.stop_handle();
        tokio::spawn(async move {
            if tokio::signal::ctrl_c().await.is_ok() {
                info!("interrupted, closing the session");
                stop.stop();
            }
        });
        server.finished().await
    })?;
    println!(
        "session ended: {} trace samples, {} events, score {}, {} protocol errors",
        record.trace.len(),
        record.events.len(),
        record.state.quiz.score(),
        record.protocol_errors
    );
    if let Some(dir) = &args.out {
        let opts = SummaryOptions {
            n_perm: args.n_perm,
            ..Default::default()
        };
        for path in tactix_server::write_record(dir, &record, &opts)? {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn cmd_agent(args: AgentArgs) -> Result<(), CliError> {
    let (world, _, _) = load_world(&args.world)?;
    let mut script = AgentScript::random(&world.map, args.seed);
    if !args.itinerary.is_empty() {
        script.itinerary = args.itinerary.clone();
    }
    script.validate(&world.map).map_err(CliError::Usage)?;
    let run = runtime()?.block_on(tactix_server::agent::run_tcp_agent(args.connect, &world, script, args.max_s))?;
    println!(
        "agent done after {} ms: quiz finished {}, {} partner poses, max haptic force {:.3}, {} protocol errors",
        run.elapsed_ms, run.quiz_finished, run.stats.partner_poses, run.stats.max_haptic_force, run.stats.protocol_errors
    );
    if let Some(reason) = run.closed_reason {
        println!("closed by server: {reason}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    // Session-level logging is only interesting for live sessions.
    let filter = match cli.command {
        Command::Serve(_) | Command::Agent(_) => "info",
        _ => "warn,tactix=info,tactix_core::session=warn",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(filter)).init();
    let result = match cli.command {
        Command::Serve(a) => cmd_serve(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Agent(a) => cmd_agent(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let label = match e {
                CliError::Usage(_) => "usage error",
                CliError::Validation(_) => "validation failed",
                CliError::Runtime(_) => "error",
            };
            eprintln!("{label}: {e}");
            ExitCode::from(e.code())
        }
    }
}
