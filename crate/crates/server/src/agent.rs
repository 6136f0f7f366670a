//! A scripted agent driving a robot client over a real TCP connection in
//! wall-clock time. Used for live smoke runs against `tactix serve`.

use std::net::SocketAddr;
use std::time::{Duration, Instant};

use tactix_core::agent::{AgentScript, AgentView, ScriptedAgent};
use tactix_core::experiment::World;
use tactix_core::haptics::HapticMode;
use tactix_core::session::wire::Bye;
use tactix_core::session::{encode, LineDecoder, Message, RobotClient, SessionConfig};
use tactix_core::session::client::ClientStats;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;

use crate::ServerError;

/// Time the agent stays connected after the last quiz answer.
const LINGER_MS: u64 = 1000;

#[derive(Debug, Clone)]
pub struct AgentRun {
    pub stats: ClientStats,
    pub quiz_finished: bool,
    /// Why the server closed the session, if it did.
    pub closed_reason: Option<String>,
    pub elapsed_ms: u64,
}

/// Connects to `addr`, plays `script` until the quiz completes (or
/// `max_s` passes), then says bye.
pub async fn run_tcp_agent(addr: SocketAddr, world: &World, script: AgentScript, max_s: f64) -> Result<AgentRun, ServerError> {
    script.validate(&world.map).map_err(ServerError::Config)?;
    let defaults = SessionConfig::new("", HapticMode::None, world.map_hash.clone());
    let tick_ms = defaults.tick_ms();
    let mut agent = ScriptedAgent::new(script, &world.map, &world.activity, defaults.coupling.f_max, tick_ms);
    let mut client = RobotClient::new(world.map.clone(), world.map_hash.clone(), agent.start_position()).with_name("tcp-agent");

    let stream = TcpStream::connect(addr).await?;
    stream.set_nodelay(true)?;
    let (mut rd, mut wr) = stream.into_split();
    let epoch = Instant::now();
    let now = || epoch.elapsed().as_millis() as u64;
    wr.write_all(&encode(&client.hello(now()))).await?;

    let cap_ms = (max_s.max(0.0) * 1000.0) as u64;
    let mut decoder = LineDecoder::new();
    let mut buf = vec![0u8; 8192];
    let mut ticker = tokio::time::interval(Duration::from_millis(tick_ms));
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Burst);
    let mut finished_at = None;
    let mut eof = false;
    loop {
        tokio::select! {
            read = rd.read(&mut buf) => {
                let n = read?;
                if n == 0 {
                    eof = true;
                    break;
                }
                decoder.push(&buf[..n]);
                while let Some(frame) = decoder.next_frame() {
                    match frame {
                        Ok(env) => client.receive(now(), env),
                        Err(e) => log::warn!("undecodable frame: {e}"),
                    }
                }
                if client.closed_reason().is_some() {
                    break;
                }
            }
            _ = ticker.tick() => {
                let t = now();
                if t >= cap_ms || finished_at.is_some_and(|f| t >= f + LINGER_MS) {
                    break;
                }
                if !client.is_started() {
                    continue;
                }
                let results = client.take_results();
                if finished_at.is_none() && results.iter().any(|r| r.quiz_finished) {
                    finished_at = Some(t);
                }
                client.take_relayed();
                let view = AgentView {
                    now_ms: t,
                    position: client.robot().position(),
                    zone: client.zone(),
                    haptic_force: client.last_haptic(),
                    partner_zone: client.partner().map(|v| v.zone_id.as_str()),
                    results: &results,
                };
                let action = agent.tick(&view);
                let mut out = client.step(t, action.f_user, action.grasped);
                for msg in action.messages {
                    out.push(client.send(t, msg));
                }
                for env in out {
                    wr.write_all(&encode(&env)).await?;
                }
            }
        }
    }
    if !eof && client.closed_reason().is_none() {
        let bye = client.send(now(), Message::Bye(Bye { reason: "done".into(), party: None }));
        wr.write_all(&encode(&bye)).await?;
        let _ = wr.shutdown().await;
    }
    Ok(AgentRun {
        stats: client.stats().clone(),
        quiz_finished: finished_at.is_some(),
        closed_reason: client.closed_reason().map(str::to_string),
        elapsed_ms: now(),
    })
}
