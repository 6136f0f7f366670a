//! Robot-side session client: owns the local robot's physics and haptics,
//! keeps the latest partner snapshot and produces outgoing envelopes.

use std::collections::BTreeMap;

use crate::activity::{ActivityState, Participant};
use crate::dynamics::{step, DynamicsParams, RobotPose, RobotState};
use crate::geom::Vec2;
use crate::haptics::{ConsensusEdge, HapticCoupler, PartnerView};
use crate::session::wire::{
    ConsensusEdgeMsg, EdgeKind, Envelope, Hello, Message, Pose, Sender, SubmitResult, ZoneChange,
};
use crate::session::SessionConfig;
use crate::zone_map::ZoneMap;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClientStats {
    pub protocol_errors: u64,
    pub errors: Vec<String>,
    pub partner_poses: u64,
    pub max_haptic_force: f64,
    pub nonfinite_forces: u64,
    pub heartbeats: u64,
}

#[derive(Debug, Clone)]
pub struct RobotClient {
    map: ZoneMap,
    map_hash: String,
    name: Option<String>,
    seq: u64,
    role: Option<Participant>,
    config: Option<SessionConfig>,
    dynamics: DynamicsParams,
    coupler: Option<HapticCoupler>,
    state: RobotState,
    partner: Option<PartnerView>,
    partner_present: bool,
    last_seq: BTreeMap<Sender, u64>,
    last_server_stamp: u64,
    clock_offset: i64,
    ticks: u64,
    last_haptic: Vec2,
    zone: Option<String>,
    results: Vec<SubmitResult>,
    relayed: Vec<Envelope>,
    snapshot: Option<ActivityState>,
    closed: Option<String>,
    stats: ClientStats,
}

impl RobotClient {
    pub fn new(map: ZoneMap, map_hash: impl Into<String>, start: Vec2) -> Self {
        Self {
            map,
            map_hash: map_hash.into(),
            name: None,
            seq: 0,
            role: None,
            config: None,
            dynamics: DynamicsParams::default(),
            coupler: None,
            state: RobotState::at(start),
            partner: None,
            partner_present: false,
            last_seq: BTreeMap::new(),
            last_server_stamp: 0,
            clock_offset: 0,
            ticks: 0,
            last_haptic: Vec2::ZERO,
            zone: None,
            results: Vec::new(),
            relayed: Vec::new(),
            snapshot: None,
            closed: None,
            stats: ClientStats::default(),
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn role(&self) -> Option<Participant> {
        self.role
    }

    pub fn config(&self) -> Option<&SessionConfig> {
        self.config.as_ref()
    }

    pub fn is_started(&self) -> bool {
        self.role.is_some() && self.closed.is_none()
    }

    pub fn closed_reason(&self) -> Option<&str> {
        self.closed.as_deref()
    }

    pub fn robot(&self) -> &RobotState {
        &self.state
    }

    pub fn partner(&self) -> Option<&PartnerView> {
        self.partner.as_ref()
    }

    pub fn partner_present(&self) -> bool {
        self.partner_present
    }

    pub fn map(&self) -> &ZoneMap {
        &self.map
    }

    pub fn stats(&self) -> &ClientStats {
        &self.stats
    }

    /// Activity state as of the last session_start.
    pub fn snapshot(&self) -> Option<&ActivityState> {
        self.snapshot.as_ref()
    }

    /// Zone the local robot currently occupies.
    pub fn zone(&self) -> &str {
        self.map
            .locate(self.map.clamp_to_bounds(self.state.pose.p))
            .unwrap_or(self.map.background_zone_id())
    }

    /// Haptic force applied on the latest tick.
    pub fn last_haptic(&self) -> Vec2 {
        self.last_haptic
    }

    pub fn consensus_active(&self) -> bool {
        self.coupler.as_ref().is_some_and(HapticCoupler::consensus_active)
    }

    /// Quiz results received since the last call.
    pub fn take_results(&mut self) -> Vec<SubmitResult> {
        std::mem::take(&mut self.results)
    }

    /// Relayed partner activity messages received since the last call.
    pub fn take_relayed(&mut self) -> Vec<Envelope> {
        std::mem::take(&mut self.relayed)
    }

    /// Estimated session clock at local time `local_ms`.
    pub fn session_now(&self, local_ms: u64) -> u64 {
        (local_ms as i64 - self.clock_offset).max(self.last_server_stamp as i64) as u64
    }

    fn error(&mut self, what: String) {
        self.stats.protocol_errors += 1;
        self.stats.errors.push(what);
    }

    fn envelope(&mut self, local_ms: u64, msg: Message) -> Envelope {
        self.seq += 1;
        let from = self.role.map_or(Sender::A, Sender::from);
        Envelope::new(self.seq, self.session_now(local_ms), from, msg)
    }

    pub fn hello(&mut self, local_ms: u64) -> Envelope {
        let msg = Message::Hello(Hello {
            map_hash: self.map_hash.clone(),
            client: self.name.clone(),
        });
        self.envelope(local_ms, msg)
    }

    /// Wraps an activity message (task tick, quiz navigation, vote, bye).
    pub fn send(&mut self, local_ms: u64, msg: Message) -> Envelope {
        self.envelope(local_ms, msg)
    }

    pub fn receive(&mut self, local_ms: u64, env: Envelope) {
        if let Some(last) = self.last_seq.get(&env.from) {
            if env.seq <= *last {
                self.error(format!("seq regression from {:?}: {} after {last}", env.from, env.seq));
            }
        }
        self.last_seq.insert(env.from, env.seq);
        if env.t_ms < self.last_server_stamp {
            self.error(format!("server stamp went backwards: {} after {}", env.t_ms, self.last_server_stamp));
        }
        self.last_server_stamp = self.last_server_stamp.max(env.t_ms);
        let own = self.role.map(Sender::from);
        match env.msg {
            Message::SessionStart(start) => {
                if env.from != Sender::Server {
                    return self.error("session_start not from server".into());
                }
                self.role = Some(start.role);
                self.clock_offset = local_ms as i64 - env.t_ms as i64;
                self.coupler = Some(HapticCoupler::new(start.config.haptics()));
                self.dynamics = start.dynamics;
                self.config = Some(start.config);
                self.snapshot = Some(start.snapshot);
                self.partner_present = true;
            }
            Message::Pose(p) => {
                if env.from == Sender::Server || Some(env.from) == own {
                    return self.error(format!("pose relayed from {:?}", env.from));
                }
                let at = Vec2::new(p.x_mm, p.y_mm);
                if !(at.is_finite() && p.theta_rad.is_finite()) {
                    return self.error("non-finite partner pose".into());
                }
                if self.partner.as_ref().is_some_and(|v| env.t_ms < v.received_t_ms) {
                    self.error("partner stamp went backwards".into());
                }
                let zone_id = self
                    .map
                    .locate(self.map.clamp_to_bounds(at))
                    .unwrap_or(self.map.background_zone_id())
                    .to_string();
                self.partner = Some(PartnerView {
                    pose: RobotPose {
                        p: at,
                        theta_rad: p.theta_rad,
                    },
                    zone_id,
                    received_t_ms: env.t_ms,
                });
                self.stats.partner_poses += 1;
                self.partner_present = true;
            }
            Message::SubmitResult(r) => self.results.push(r),
            Message::Heartbeat(_) => self.stats.heartbeats += 1,
            Message::Bye(b) => {
                if b.party.is_some_and(|p| Some(p) != self.role) {
                    self.partner_present = false;
                } else {
                    self.closed = Some(b.reason);
                }
            }
            Message::Hello(_) => self.error("unexpected hello".into()),
            msg => self.relayed.push(Envelope::new(env.seq, env.t_ms, env.from, msg)),
        }
    }

    /// Advances the robot by one simulation tick and returns the pose, zone
    /// and consensus-edge messages it produced.
    pub fn step(&mut self, local_ms: u64, f_user: Vec2, grasped: bool) -> Vec<Envelope> {
        let mut out = Vec::new();
        let (Some(coupler), Some(config)) = (self.coupler.as_mut(), self.config.as_ref()) else {
            return out;
        };
        if self.closed.is_some() {
            return out;
        }
        let decimation = config.pose_decimation();
        let now = (local_ms as i64 - self.clock_offset).max(self.last_server_stamp as i64) as u64;
        self.state.grasped = grasped;
        let haptic = coupler.update(&self.state, self.partner.as_ref(), now, &self.map);
        self.last_haptic = haptic.force;
        let magnitude = haptic.force.norm();
        if magnitude.is_finite() {
            self.stats.max_haptic_force = self.stats.max_haptic_force.max(magnitude);
        } else {
            self.stats.nonfinite_forces += 1;
        }
        self.state = step(&self.state, f_user, haptic.force, &self.dynamics, &self.map);
        self.ticks += 1;

        if self.ticks % decimation == 0 {
            let p = self.state.pose;
            let msg = Message::Pose(Pose {
                x_mm: p.p.x_mm,
                y_mm: p.p.y_mm,
                theta_rad: p.theta_rad,
            });
            out.push(self.envelope(local_ms, msg));
        }
        let zone = self.zone().to_string();
        if self.zone.as_deref() != Some(zone.as_str()) {
            self.zone = Some(zone.clone());
            out.push(self.envelope(local_ms, Message::Zone(ZoneChange { zone_id: zone })));
        }
        let edge = match haptic.consensus_edge {
            ConsensusEdge::None => None,
            ConsensusEdge::Entered => Some(EdgeKind::Entered),
            ConsensusEdge::Exited => Some(EdgeKind::Exited),
        };
        if let Some(edge) = edge {
            out.push(self.envelope(local_ms, Message::ConsensusEdge(ConsensusEdgeMsg { edge })));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activity::Activity;
    use crate::haptics::HapticMode;
    use crate::session::wire::SessionStart;

    fn started(mode: HapticMode) -> RobotClient {
        let map = ZoneMap::default_map();
        let mut c = RobotClient::new(map, "h", Vec2::new(20.0, 20.0));
        let start = SessionStart {
            session_id: "s".into(),
            role: Participant::A,
            config: SessionConfig::new("s", mode, "h"),
            dynamics: DynamicsParams::default(),
            snapshot: ActivityState::new(&Activity::default_activity()),
        };
        c.receive(40, Envelope::new(1, 0, Sender::Server, Message::SessionStart(Box::new(start))));
        c
    }

    fn partner_pose(seq: u64, t: u64, x: f64) -> Envelope {
        Envelope::new(
            seq,
            t,
            Sender::B,
            Message::Pose(Pose {
                x_mm: x,
                y_mm: 20.0,
                theta_rad: 0.0,
            }),
        )
    }

    #[test]
    fn pose_every_fifth_tick_and_zone_on_change() {
        let mut c = started(HapticMode::None);
        assert_eq!(c.role(), Some(Participant::A));
        let mut kinds = Vec::new();
        for i in 1..=10 {
            for e in c.step(40 + 10 * i, Vec2::ZERO, true) {
                kinds.push((i, e.kind()));
            }
        }
        assert_eq!(kinds, vec![(1, "zone"), (5, "pose"), (10, "pose")]);
    }

    #[test]
    fn session_clock_follows_start_stamp() {
        let c = started(HapticMode::None);
        assert_eq!(c.session_now(40), 0);
        assert_eq!(c.session_now(1040), 1000);
    }

    #[test]
    fn colocation_pulls_toward_partner() {
        let mut c = started(HapticMode::CoLocation);
        c.receive(50, partner_pose(1, 10, 120.0));
        c.step(60, Vec2::ZERO, false);
        assert!(c.robot().v.x_mm > 0.0);
        assert!((c.stats().max_haptic_force - 2.0).abs() < 1e-12);
    }

    #[test]
    fn stamp_regression_is_an_error() {
        let mut c = started(HapticMode::CoLocation);
        c.receive(50, partner_pose(2, 30, 50.0));
        c.receive(51, partner_pose(3, 20, 50.0));
        // Flagged both as a server-clock and as a partner-stamp regression.
        assert_eq!(c.stats().protocol_errors, 2);
        c.receive(52, partner_pose(3, 40, 50.0));
        assert_eq!(c.stats().protocol_errors, 3);
    }
}
