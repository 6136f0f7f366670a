//! Seeded two-agent sessions in simulated time.
//!
//! [`run_pair`] wires two [`ScriptedAgent`]s to a [`SessionHub`] through the
//! latency transport and steps everything on a 1 ms clock. [`run_manifest`]
//! repeats that over modes and seeds and summarizes each run.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::activity::Activity;
use crate::agent::{AgentScript, AgentView, ScriptedAgent};
use crate::dynamics::DynamicsParams;
use crate::exec::{self, Execution};
use crate::haptics::HapticMode;
use crate::session::client::{ClientStats, RobotClient};
use crate::session::hub::{ConnId, HubInput, HubOutput, SessionHub, SessionRecord};
use crate::session::transport::{LatencyProfile, SimDuplex};
use crate::session::wire::{decode, encode, Bye, Message};
use crate::session::SessionConfig;
use crate::trace::summary::{session_summary, write_plot_csvs, SessionReport, SummaryOptions};
use crate::trace::{write_events, write_trace, TraceError};
use crate::zone_map::ZoneMap;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Static inputs shared by every run.
#[derive(Debug, Clone)]
pub struct World {
    pub map: ZoneMap,
    pub map_hash: String,
    pub activity: Activity,
    pub dynamics: DynamicsParams,
}

impl World {
    pub fn new(map: ZoneMap, map_hash: impl Into<String>, activity: Activity, dynamics: DynamicsParams) -> Self {
        Self {
            map,
            map_hash: map_hash.into(),
            activity,
            dynamics,
        }
    }

    /// The packaged map and activity with default dynamics.
    pub fn packaged() -> Self {
        Self::new(
            ZoneMap::default_map(),
            crate::sha256_hex(crate::DEFAULT_MAP_JSON.as_bytes()),
            Activity::default_activity(),
            DynamicsParams::default(),
        )
    }
}

/// Time the session keeps running after the last quiz answer.
const LINGER_MS: u64 = 1000;

#[derive(Debug, Clone)]
pub struct PairRun {
    pub record: SessionRecord,
    pub clients: [ClientStats; 2],
    /// Frames a client could not decode.
    pub decode_errors: u64,
    /// Simulated time at which the run stopped.
    pub ended_ms: u64,
}

impl PairRun {
    pub fn protocol_errors(&self) -> u64 {
        self.record.protocol_errors + self.decode_errors + self.clients.iter().map(|c| c.protocol_errors).sum::<u64>()
    }

    pub fn max_haptic_force(&self) -> f64 {
        self.clients.iter().map(|c| c.max_haptic_force).fold(0.0, f64::max)
    }

    pub fn forces_finite(&self) -> bool {
        self.clients.iter().all(|c| c.nonfinite_forces == 0)
    }

    pub fn quiz_finished(&self) -> bool {
        self.record.state.quiz.is_finished()
    }
}

struct Party {
    conn: ConnId,
    link: SimDuplex,
    client: RobotClient,
    agent: ScriptedAgent,
    joined: bool,
    closed: bool,
}

/// Runs one seeded session between two scripted agents.
///
/// The agent given first always becomes participant A: the second client
/// only says hello once the first has been admitted. `duration_s` caps the
/// simulated time; the run also stops shortly after the quiz completes.
pub fn run_pair(
    world: &World,
    script_a: &AgentScript,
    script_b: &AgentScript,
    config: &SessionConfig,
    latency: LatencyProfile,
    duration_s: f64,
) -> Result<PairRun, ExperimentError> {
    config.validate().map_err(ExperimentError::Config)?;
    world.dynamics.validate().map_err(ExperimentError::Config)?;
    for s in [script_a, script_b] {
        s.validate(&world.map).map_err(ExperimentError::Config)?;
    }
    if !(duration_s.is_finite() && duration_s >= 0.0) {
        return Err(ExperimentError::Config("duration must be finite and >= 0".into()));
    }
    let mut config = config.clone();
    config.map_hash = world.map_hash.clone();
    let tick_ms = config.tick_ms();
    let cap_ms = (duration_s * 1000.0).round() as u64;

    let mut hub = SessionHub::new(config.clone(), world.dynamics, world.map.clone(), &world.activity);
    let mut parties: Vec<Party> = [script_a, script_b]
        .into_iter()
        .enumerate()
        .map(|(i, script)| {
            let agent = ScriptedAgent::new(script.clone(), &world.map, &world.activity, config.coupling.f_max, tick_ms);
            let client = RobotClient::new(world.map.clone(), world.map_hash.clone(), agent.start_position())
                .with_name(format!("agent-{i}"));
            Party {
                conn: ConnId(i as u64),
                link: SimDuplex::new(latency, i as u64),
                client,
                agent,
                joined: false,
                closed: false,
            }
        })
        .collect();
    let mut decode_errors = 0;
    let mut finished_at: Option<u64> = None;
    let mut stop_at: Option<u64> = None;
    let mut now = 0;

    loop {
        let stopping = stop_at.is_some_and(|t| now >= t);
        if stopping && parties.iter().all(|p| p.link.up.in_flight() == 0 && p.link.down.in_flight() == 0) {
            break;
        }
        if stop_at.is_none() && now >= cap_ms {
            stop_at = Some(now);
            if cap_ms == 0 {
                break;
            }
            for p in parties.iter_mut().filter(|p| p.joined) {
                let bye = p.client.send(now, Message::Bye(Bye { reason: "done".into(), party: None }));
                p.link.up.send(now, encode(&bye));
                p.closed = true;
            }
        }

        // Joins: A at t = 0, B once A holds its role.
        for i in 0..parties.len() {
            if parties[i].joined || stop_at.is_some() || (i > 0 && hub.connected_roles().is_empty()) {
                continue;
            }
            let p = &mut parties[i];
            hub.handle(now, HubInput::Connected(p.conn));
            let hello = p.client.hello(now);
            p.link.up.send(now, encode(&hello));
            p.joined = true;
        }

        let mut outputs = Vec::new();
        for p in parties.iter_mut() {
            for frame in p.link.up.poll(now) {
                let input = match decode(&frame) {
                    Ok(env) => HubInput::Frame(p.conn, env),
                    Err(e) => HubInput::Malformed(p.conn, e),
                };
                outputs.extend(hub.handle(now, input));
            }
        }
        outputs.extend(hub.tick(now));
        for o in outputs {
            if let HubOutput::Send(conn, env) = o {
                parties[conn.0 as usize].link.down.send(now, encode(&env));
            }
        }
        for p in parties.iter_mut() {
            for frame in p.link.down.poll(now) {
                match decode(&frame) {
                    Ok(env) => p.client.receive(now, env),
                    Err(_) => decode_errors += 1,
                }
            }
        }

        if finished_at.is_none() && hub.state().quiz.is_finished() {
            finished_at = Some(now);
        }
        if stop_at.is_none() && finished_at.is_some_and(|t| now >= t + LINGER_MS) {
            stop_at = Some(now);
            for p in parties.iter_mut().filter(|p| p.joined) {
                let bye = p.client.send(now, Message::Bye(Bye { reason: "done".into(), party: None }));
                p.link.up.send(now, encode(&bye));
                p.closed = true;
            }
        }

        if now % tick_ms == 0 {
            for p in parties.iter_mut().filter(|p| !p.closed && p.client.is_started()) {
                let results = p.client.take_results();
                p.client.take_relayed();
                let view = AgentView {
                    now_ms: now,
                    position: p.client.robot().position(),
                    zone: p.client.zone(),
                    haptic_force: p.client.last_haptic(),
                    partner_zone: p.client.partner().map(|v| v.zone_id.as_str()),
                    results: &results,
                };
                let action = p.agent.tick(&view);
                let mut out = p.client.step(now, action.f_user, action.grasped);
                for msg in action.messages {
                    out.push(p.client.send(now, msg));
                }
                for env in out {
                    p.link.up.send(now, encode(&env));
                }
            }
        }
        now += 1;
    }

    let clients = [parties[0].client.stats().clone(), parties[1].client.stats().clone()];
    Ok(PairRun {
        record: hub.finish(),
        clients,
        decode_errors,
        ended_ms: now,
    })
}

fn default_modes() -> Vec<HapticMode> {
    vec![HapticMode::CoLocation, HapticMode::Consensus]
}

fn default_duration() -> f64 {
    600.0
}

fn default_hz() -> f64 {
    10.0
}

fn default_n_perm() -> u64 {
    1000
}

/// Everything needed to reproduce an experiment batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Session template; `session_id` is used as a prefix and `mode` is
    /// replaced per run.
    pub config: SessionConfig,
    #[serde(default = "default_modes")]
    pub modes: Vec<HapticMode>,
    /// Base and jitter for every run; a run with seed `s` uses latency seed
    /// `latency.seed + s`.
    pub latency: LatencyProfile,
    pub seeds: Vec<u64>,
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    /// Templates for participants A and B. An empty itinerary means a
    /// seeded random tour of the organelles.
    pub agents: [AgentScript; 2],
    #[serde(default)]
    pub dynamics: DynamicsParams,
    #[serde(default = "default_hz")]
    pub hz: f64,
    #[serde(default = "default_n_perm")]
    pub n_perm: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
}

impl RunManifest {
    pub fn new(world: &World, modes: Vec<HapticMode>, seeds: Vec<u64>, latency: LatencyProfile) -> Self {
        let template = AgentScript::new(Vec::new(), 0);
        Self {
            config: SessionConfig::new("run", HapticMode::None, world.map_hash.clone()),
            modes,
            latency,
            seeds,
            duration_s: default_duration(),
            agents: [template.clone(), template],
            dynamics: world.dynamics,
            hz: default_hz(),
            n_perm: default_n_perm(),
            out_dir: None,
        }
    }

    pub fn validate(&self, world: &World) -> Result<(), String> {
        if self.seeds.is_empty() {
            return Err("no seeds given".into());
        }
        if self.modes.is_empty() {
            return Err("no modes given".into());
        }
        if !(self.hz.is_finite() && self.hz > 0.0) {
            return Err("hz must be positive".into());
        }
        if self.config.map_hash != world.map_hash {
            return Err("manifest map_hash does not match the map".into());
        }
        self.config.validate()?;
        self.dynamics.validate()?;
        for a in &self.agents {
            a.validate(&world.map)?;
        }
        Ok(())
    }

    /// Session config, latency and both agent scripts for one run.
    pub fn run_inputs(&self, world: &World, mode: HapticMode, seed: u64) -> (SessionConfig, LatencyProfile, [AgentScript; 2]) {
        let mut config = self.config.clone();
        config.mode = mode;
        config.session_id = format!("{}-{mode}-seed{seed}", self.config.session_id);
        let latency = LatencyProfile {
            seed: self.latency.seed.wrapping_add(seed),
            ..self.latency
        };
        let scripts = [0u64, 1].map(|i| {
            let mut s = self.agents[i as usize].clone();
            s.seed = seed.wrapping_mul(2).wrapping_add(i);
            if s.itinerary.is_empty() {
                s.itinerary = AgentScript::random(&world.map, s.seed).itinerary;
            }
            s
        });
        (config, latency, scripts)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub mode: HapticMode,
    pub seed: u64,
    pub run: PairRun,
    pub report: SessionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLine {
    pub mode: HapticMode,
    pub seed: u64,
    pub r_x: f64,
    pub r_y: f64,
    pub matched_r: f64,
    pub tandem_fraction: f64,
    pub mean_distance_mm: f64,
    pub score: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quiz_duration_s: Option<f64>,
    pub protocol_errors: u64,
    pub max_haptic_force: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeAggregate {
    pub mode: HapticMode,
    pub n_runs: usize,
    pub mean_matched_r: f64,
    pub mean_tandem_fraction: f64,
    pub mean_distance_mm: f64,
    pub quizzes_completed: usize,
    pub perfect_scores: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_quiz_duration_s: Option<f64>,
}

/// Paired comparison of two modes over the shared seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeComparison {
    pub first: HapticMode,
    pub second: HapticMode,
    pub n_pairs: usize,
    /// mean matched-axis r of `first` minus that of `second`.
    pub matched_r_gap: f64,
    /// Seeds where `first` had the strictly larger tandem fraction.
    pub tandem_wins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub modes: Vec<ModeAggregate>,
    pub comparisons: Vec<ModeComparison>,
    pub runs: Vec<RunLine>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl RunOutcome {
    pub fn line(&self) -> RunLine {
        let c = &self.report.correlation;
        RunLine {
            mode: self.mode,
            seed: self.seed,
            r_x: c.r[0][2],
            r_y: c.r[1][3],
            matched_r: c.matched_axis_mean(),
            tandem_fraction: self.report.tandem_fraction,
            mean_distance_mm: self.report.mean_distance_mm,
            score: self.report.score,
            quiz_duration_s: self.report.quiz_duration_s,
            protocol_errors: self.run.protocol_errors(),
            max_haptic_force: self.run.max_haptic_force(),
        }
    }
}

pub fn aggregate(outcomes: &[RunOutcome], modes: &[HapticMode]) -> AggregateReport {
    let runs: Vec<RunLine> = outcomes.iter().map(RunOutcome::line).collect();
    let of = |m: HapticMode| runs.iter().filter(move |r| r.mode == m);
    let per_mode = modes
        .iter()
        .map(|&m| ModeAggregate {
            mode: m,
            n_runs: of(m).count(),
            mean_matched_r: mean(of(m).map(|r| r.matched_r)).unwrap_or(f64::NAN),
            mean_tandem_fraction: mean(of(m).map(|r| r.tandem_fraction)).unwrap_or(f64::NAN),
            mean_distance_mm: mean(of(m).map(|r| r.mean_distance_mm)).unwrap_or(f64::NAN),
            quizzes_completed: of(m).filter(|r| r.quiz_duration_s.is_some()).count(),
            perfect_scores: of(m).filter(|r| r.score == 5).count(),
            mean_quiz_duration_s: mean(of(m).filter_map(|r| r.quiz_duration_s)),
        })
        .collect();
    let mut comparisons = Vec::new();
    for (i, &first) in modes.iter().enumerate() {
        for &second in &modes[i + 1..] {
            let pairs: Vec<(&RunLine, &RunLine)> = of(first)
                .filter_map(|a| of(second).find(|b| b.seed == a.seed).map(|b| (a, b)))
                .collect();
            comparisons.push(ModeComparison {
                first,
                second,
                n_pairs: pairs.len(),
                matched_r_gap: mean(pairs.iter().map(|(a, b)| a.matched_r - b.matched_r)).unwrap_or(f64::NAN),
                tandem_wins: pairs.iter().filter(|(a, b)| a.tandem_fraction > b.tandem_fraction).count(),
            });
        }
    }
    AggregateReport {
        modes: per_mode,
        comparisons,
        runs,
    }
}

/// Runs every (mode, seed) of the manifest and summarizes each run. Output
/// order is modes-major, seeds-minor regardless of `exec`.
pub fn run_manifest(manifest: &RunManifest, world: &World, exec: Execution) -> Result<Vec<RunOutcome>, ExperimentError> {
    manifest.validate(world).map_err(ExperimentError::Config)?;
    let jobs: Vec<(HapticMode, u64)> = manifest
        .modes
        .iter()
        .flat_map(|&m| manifest.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let results = exec::map(exec, jobs, |(mode, seed)| -> Result<RunOutcome, ExperimentError> {
        let (config, latency, [a, b]) = manifest.run_inputs(world, mode, seed);
        let run = run_pair(world, &a, &b, &config, latency, manifest.duration_s)?;
        let opts = SummaryOptions {
            hz: manifest.hz,
            n_perm: manifest.n_perm,
            seed,
            exec: Execution::Sequential,
        };
        let report = session_summary(&run.record.trace, &run.record.events, &opts)?;
        Ok(RunOutcome { mode, seed, run, report })
    });
    results.into_iter().collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| ExperimentError::Config(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Writes per-run trace, events, report and plot CSVs under
/// `out/{mode}/seed_{s}/`, plus `aggregate.json` and `manifest.json`.
pub fn write_outputs(out: &Path, manifest: &RunManifest, outcomes: &[RunOutcome]) -> Result<AggregateReport, ExperimentError> {
    std::fs::create_dir_all(out)?;
    for o in outcomes {
        let dir = out.join(o.mode.as_str()).join(format!("seed_{}", o.seed));
        std::fs::create_dir_all(&dir)?;
        let digest = o.run.record.config.digest();
        write_trace(
            std::io::BufWriter::new(std::fs::File::create(dir.join("trace.csv"))?),
            &o.run.record.trace,
            Some(&digest),
        )?;
        write_events(
            std::io::BufWriter::new(std::fs::File::create(dir.join("events.jsonl"))?),
            &o.run.record.events,
        )?;
        write_json(&dir.join("report.json"), &o.report)?;
        write_plot_csvs(&dir, &o.run.record.trace)?;
    }
    let agg = aggregate(outcomes, &manifest.modes);
    write_json(&out.join("aggregate.json"), &agg)?;
    write_json(&out.join("manifest.json"), manifest)?;
    Ok(agg)
}
