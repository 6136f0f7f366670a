//! The per-session event loop.
//!
//! [`SessionHub`] is transport-agnostic: the TCP/WebSocket server and the
//! in-process simulator both feed it [`HubInput`]s stamped with a
//! millisecond clock and carry out the [`HubOutput`]s it returns.

use std::collections::BTreeMap;

use log::{debug, info, warn};

use crate::activity::{Activity, ActivityState, Participant};
use crate::dynamics::DynamicsParams;
use crate::haptics::HapticMode;
use crate::session::replay::{apply_event, Applied, LiveZones};
use crate::session::wire::{Bye, Envelope, Heartbeat, Message, Sender, SessionStart, SubmitResult, WireError};
use crate::session::{SessionConfig, HEARTBEAT_INTERVAL_MS};
use crate::trace::TraceSample;
use crate::zone_map::ZoneMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConnId(pub u64);

#[derive(Debug, Clone, PartialEq)]
pub enum HubInput {
    Connected(ConnId),
    Frame(ConnId, Envelope),
    /// A line that failed to decode.
    Malformed(ConnId, WireError),
    Disconnected(ConnId),
}

#[derive(Debug, Clone, PartialEq)]
pub enum HubOutput {
    Send(ConnId, Envelope),
    /// Close the connection after flushing anything sent before.
    Close(ConnId),
}

#[derive(Debug, Clone, Copy)]
struct Conn {
    role: Option<Participant>,
    last_seq: Option<u64>,
}

/// Everything a finished session leaves behind.
#[derive(Debug, Clone)]
pub struct SessionRecord {
    pub config: SessionConfig,
    pub trace: Vec<TraceSample>,
    /// Every participant message (server-stamped) and every server message
    /// except heartbeats, in processing order.
    pub events: Vec<Envelope>,
    pub state: ActivityState,
    pub protocol_errors: u64,
    pub warnings: Vec<String>,
}

pub struct SessionHub {
    config: SessionConfig,
    dynamics: DynamicsParams,
    map: ZoneMap,
    conns: BTreeMap<ConnId, Conn>,
    roles: BTreeMap<Participant, ConnId>,
    started_at_ms: Option<u64>,
    last_stamp: u64,
    next_heartbeat: u64,
    server_seq: u64,
    state: ActivityState,
    live: LiveZones,
    trace: Vec<TraceSample>,
    events: Vec<Envelope>,
    protocol_errors: u64,
    warnings: Vec<String>,
}

impl SessionHub {
    pub fn new(config: SessionConfig, dynamics: DynamicsParams, map: ZoneMap, activity: &Activity) -> Self {
        Self {
            config,
            dynamics,
            map,
            conns: BTreeMap::new(),
            roles: BTreeMap::new(),
            started_at_ms: None,
            last_stamp: 0,
            next_heartbeat: HEARTBEAT_INTERVAL_MS,
            server_seq: 0,
            state: ActivityState::new(activity),
            live: LiveZones::default(),
            trace: Vec::new(),
            events: Vec::new(),
            protocol_errors: 0,
            warnings: Vec::new(),
        }
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn state(&self) -> &ActivityState {
        &self.state
    }

    pub fn is_started(&self) -> bool {
        self.started_at_ms.is_some()
    }

    pub fn protocol_errors(&self) -> u64 {
        self.protocol_errors
    }

    pub fn role_of(&self, conn: ConnId) -> Option<Participant> {
        self.conns.get(&conn).and_then(|c| c.role)
    }

    pub fn connected_roles(&self) -> Vec<Participant> {
        self.roles.keys().copied().collect()
    }

    pub fn trace(&self) -> &[TraceSample] {
        &self.trace
    }

    pub fn events(&self) -> &[Envelope] {
        &self.events
    }

    /// Session clock at hub time `now_ms`; never runs backwards.
    fn stamp(&mut self, now_ms: u64) -> u64 {
        let t = self.started_at_ms.map_or(0, |s| now_ms.saturating_sub(s));
        self.last_stamp = self.last_stamp.max(t);
        self.last_stamp
    }

    fn server_env(&mut self, t_ms: u64, msg: Message) -> Envelope {
        self.server_seq += 1;
        Envelope::new(self.server_seq, t_ms, Sender::Server, msg)
    }

    fn protocol_error(&mut self, what: String) {
        warn!("protocol error: {what}");
        self.protocol_errors += 1;
        self.warnings.push(what);
    }

    fn peer_of(&self, role: Participant) -> Option<ConnId> {
        self.roles.get(&role.other()).copied()
    }

    pub fn handle(&mut self, now_ms: u64, input: HubInput) -> Vec<HubOutput> {
        let mut out = Vec::new();
        match input {
            HubInput::Connected(conn) => {
                self.conns.insert(conn, Conn { role: None, last_seq: None });
            }
            HubInput::Malformed(conn, err) => {
                self.protocol_error(format!("connection {}: {err}", conn.0));
                if let WireError::VersionMismatch(_) = err {
                    self.reject(now_ms, conn, "version mismatch", &mut out);
                }
            }
            HubInput::Disconnected(conn) => self.drop_conn(now_ms, conn, "peer_lost", &mut out),
            HubInput::Frame(conn, env) => self.frame(now_ms, conn, env, &mut out),
        }
        out
    }

    /// Emits due heartbeats.
    pub fn tick(&mut self, now_ms: u64) -> Vec<HubOutput> {
        let mut out = Vec::new();
        if !self.is_started() {
            return out;
        }
        let t = self.stamp(now_ms);
        if t >= self.next_heartbeat {
            self.next_heartbeat = (t / HEARTBEAT_INTERVAL_MS + 1) * HEARTBEAT_INTERVAL_MS;
            let targets: Vec<ConnId> = self.roles.values().copied().collect();
            for conn in targets {
                let env = self.server_env(t, Message::Heartbeat(Heartbeat {}));
                out.push(HubOutput::Send(conn, env));
            }
        }
        out
    }

    fn reject(&mut self, now_ms: u64, conn: ConnId, reason: &str, out: &mut Vec<HubOutput>) {
        info!("rejecting connection {}: {reason}", conn.0);
        let t = self.stamp(now_ms);
        let env = self.server_env(
            t,
            Message::Bye(Bye {
                reason: reason.to_string(),
                party: None,
            }),
        );
        out.push(HubOutput::Send(conn, env));
        out.push(HubOutput::Close(conn));
        self.conns.remove(&conn);
    }

    fn drop_conn(&mut self, now_ms: u64, conn: ConnId, reason: &str, out: &mut Vec<HubOutput>) {
        let Some(c) = self.conns.remove(&conn) else {
            return;
        };
        let Some(role) = c.role else {
            return;
        };
        self.roles.remove(&role);
        info!("participant {role} left ({reason})");
        let t = self.stamp(now_ms);
        let notice = self.server_env(
            t,
            Message::Bye(Bye {
                reason: reason.to_string(),
                party: Some(role),
            }),
        );
        self.events.push(notice.clone());
        if let Some(peer) = self.peer_of(role) {
            out.push(HubOutput::Send(peer, notice));
        }
    }

    fn frame(&mut self, now_ms: u64, conn: ConnId, env: Envelope, out: &mut Vec<HubOutput>) {
        let Some(c) = self.conns.get(&conn).copied() else {
            return;
        };
        if c.last_seq.is_some_and(|last| env.seq <= last) {
            self.protocol_error(format!(
                "connection {}: seq regression ({} after {})",
                conn.0,
                env.seq,
                c.last_seq.unwrap_or_default()
            ));
            self.reject(now_ms, conn, "protocol violation: seq regression", out);
            if let Some(role) = c.role {
                self.roles.remove(&role);
                let t = self.stamp(now_ms);
                let notice = self.server_env(
                    t,
                    Message::Bye(Bye {
                        reason: "peer_lost".into(),
                        party: Some(role),
                    }),
                );
                self.events.push(notice.clone());
                if let Some(peer) = self.peer_of(role) {
                    out.push(HubOutput::Send(peer, notice));
                }
            }
            return;
        }
        if let Some(entry) = self.conns.get_mut(&conn) {
            entry.last_seq = Some(env.seq);
        }
        match c.role {
            None => self.join(now_ms, conn, env, out),
            Some(role) => self.participant_message(now_ms, conn, role, env, out),
        }
    }

    fn join(&mut self, now_ms: u64, conn: ConnId, env: Envelope, out: &mut Vec<HubOutput>) {
        let Message::Hello(hello) = env.msg else {
            self.protocol_error(format!("connection {}: {} before hello", conn.0, env.kind()));
            return;
        };
        if hello.map_hash != self.config.map_hash {
            self.reject(now_ms, conn, "map mismatch", out);
            return;
        }
        let Some(role) = Participant::BOTH.into_iter().find(|p| !self.roles.contains_key(p)) else {
            self.reject(now_ms, conn, "session full", out);
            return;
        };
        info!("connection {} joined as {role}", conn.0);
        self.roles.insert(role, conn);
        if let Some(entry) = self.conns.get_mut(&conn) {
            entry.role = Some(role);
        }
        if self.roles.len() < 2 {
            return;
        }
        let newcomers: Vec<(Participant, ConnId)> = if self.started_at_ms.is_none() {
            self.started_at_ms = Some(now_ms);
            self.roles.iter().map(|(r, c)| (*r, *c)).collect()
        } else {
            vec![(role, conn)]
        };
        let t = self.stamp(now_ms);
        for (role, conn) in newcomers {
            let start = Message::SessionStart(Box::new(SessionStart {
                session_id: self.config.session_id.clone(),
                role,
                config: self.config.clone(),
                dynamics: self.dynamics,
                snapshot: self.state.clone(),
            }));
            let env = self.server_env(t, start);
            self.events.push(env.clone());
            out.push(HubOutput::Send(conn, env));
        }
    }

    fn participant_message(&mut self, now_ms: u64, conn: ConnId, role: Participant, env: Envelope, out: &mut Vec<HubOutput>) {
        if !self.is_started() {
            self.protocol_error(format!("{role}: {} before session_start", env.kind()));
            return;
        }
        let t = self.stamp(now_ms);
        let relayed = Envelope::new(env.seq, t, Sender::from(role), env.msg);
        let relay = match &relayed.msg {
            Message::Hello(_) | Message::SessionStart(_) | Message::SubmitResult(_) => {
                self.protocol_error(format!("{role}: unexpected {}", relayed.kind()));
                return;
            }
            Message::Bye(_) => {
                self.events.push(relayed);
                out.push(HubOutput::Close(conn));
                self.drop_conn(now_ms, conn, "peer_left", out);
                return;
            }
            Message::Heartbeat(_) => return,
            Message::ConsensusEdge(_) if self.config.mode != HapticMode::Consensus => {
                self.protocol_error(format!("{role}: consensus_edge in {} session", self.config.mode));
                return;
            }
            Message::Pose(p) if !(p.x_mm.is_finite() && p.y_mm.is_finite() && p.theta_rad.is_finite()) => {
                self.protocol_error(format!("{role}: non-finite pose"));
                return;
            }
            _ => true,
        };
        self.events.push(relayed.clone());
        match apply_event(&mut self.state, &mut self.live, &self.map, role, t, &relayed.msg) {
            Ok(Applied::Located { zone_id, clamped, .. }) => {
                if clamped {
                    self.warnings.push(format!("{role}: pose outside the sheet clamped at t={t}"));
                }
                let Message::Pose(p) = &relayed.msg else { unreachable!() };
                let at = self.map.clamp_to_bounds(crate::geom::Vec2::new(p.x_mm, p.y_mm));
                self.trace
                    .push(TraceSample::new(t, role, at.x_mm, at.y_mm, p.theta_rad, zone_id));
            }
            Ok(Applied::Submit(outcome)) => {
                let q_id = match &relayed.msg {
                    Message::Propose(v) | Message::Agree(v) => v.q_id.clone(),
                    _ => unreachable!(),
                };
                let result = Message::SubmitResult(SubmitResult {
                    q_id,
                    accepted: outcome.accepted,
                    correct: outcome.correct,
                    reason: outcome.reason,
                    quiz_finished: outcome.accepted && self.state.quiz.is_finished(),
                });
                let env = self.server_env(t, result);
                debug!("{role} vote -> {:?}", outcome);
                self.events.push(env.clone());
                for target in self.roles.values().copied().collect::<Vec<_>>() {
                    out.push(HubOutput::Send(target, env.clone()));
                }
            }
            Ok(_) => {}
            Err(e) => self.warnings.push(format!("{role} {} at t={t}: {e}", relayed.kind())),
        }
        if relay {
            if let Some(peer) = self.peer_of(role) {
                out.push(HubOutput::Send(peer, relayed));
            }
        }
    }

    pub fn finish(self) -> SessionRecord {
        SessionRecord {
            config: self.config,
            trace: self.trace,
            events: self.events,
            state: self.state,
            protocol_errors: self.protocol_errors,
            warnings: self.warnings,
        }
    }
}
