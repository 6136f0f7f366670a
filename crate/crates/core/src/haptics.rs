//! The two mutually exclusive haptic modes.
//!
//! * Co-location: an elastic band with a dead zone and a force clamp pulls
//!   each robot toward its last known view of the partner.
//! * Consensus: both robots buzz while they sit on the same organelle. The
//!   background zone never counts as agreement.
//!
//! Everything here is a pure function of snapshots; [`HapticCoupler`] only
//! remembers the previous consensus state for edge detection.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::{self, DynamicsParams, RobotPose, RobotState};
use crate::geom::Vec2;
use crate::zone_map::{MapError, ZoneKind, ZoneMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HapticMode {
    CoLocation,
    Consensus,
    None,
}

impl HapticMode {
    pub const ALL: [HapticMode; 3] = [HapticMode::CoLocation, HapticMode::Consensus, HapticMode::None];

    pub fn as_str(self) -> &'static str {
        match self {
            HapticMode::CoLocation => "co_location",
            HapticMode::Consensus => "consensus",
            HapticMode::None => "none",
        }
    }
}

impl std::fmt::Display for HapticMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for HapticMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HapticMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown haptic mode {s:?} (expected co_location, consensus or none)"))
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    /// Spring constant, force/mm.
    pub k: f64,
    pub deadzone_mm: f64,
    pub f_max: f64,
    pub stale_ms: u64,
    pub decay_ms: u64,
    /// When false, only a released robot is pulled; the holder leads.
    #[serde(default = "default_true")]
    pub symmetric: bool,
}

impl Default for CouplingParams {
    fn default() -> Self {
        Self {
            k: 0.05,
            deadzone_mm: 10.0,
            f_max: 2.0,
            stale_ms: 500,
            decay_ms: 250,
            symmetric: true,
        }
    }
}

impl CouplingParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.k.is_finite() && self.k >= 0.0) {
            return Err("coupling k must be finite and >= 0".into());
        }
        if !(self.deadzone_mm.is_finite() && self.deadzone_mm >= 0.0) {
            return Err("coupling deadzone_mm must be finite and >= 0".into());
        }
        if !(self.f_max.is_finite() && self.f_max > 0.0) {
            return Err("coupling f_max must be finite and > 0".into());
        }
        Ok(())
    }

    /// Attenuation applied to a partner snapshot of the given age.
    pub fn staleness_factor(&self, age_ms: u64) -> f64 {
        if age_ms <= self.stale_ms {
            1.0
        } else if self.decay_ms == 0 {
            0.0
        } else {
            (1.0 - (age_ms - self.stale_ms) as f64 / self.decay_ms as f64).max(0.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VibrationParams {
    pub amplitude: f64,
    pub freq_hz: f64,
}

impl Default for VibrationParams {
    fn default() -> Self {
        Self {
            amplitude: 0.3,
            freq_hz: 15.0,
        }
    }
}

impl VibrationParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err("vibration amplitude must be finite and >= 0".into());
        }
        if !(self.freq_hz.is_finite() && self.freq_hz > 0.0) {
            return Err("vibration freq_hz must be finite and > 0".into());
        }
        Ok(())
    }
}

/// The local robot's latest knowledge of the partner robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartnerView {
    pub pose: RobotPose,
    pub zone_id: String,
    /// Session-clock stamp of the update.
    pub received_t_ms: u64,
}

impl PartnerView {
    pub fn age_ms(&self, now_ms: u64) -> u64 {
        now_ms.saturating_sub(self.received_t_ms)
    }
}

/// Elastic-band pull of the robot at `self_p` toward the partner.
pub fn colocation_force(self_p: Vec2, partner: &PartnerView, now_ms: u64, cp: &CouplingParams) -> Vec2 {
    let delta = partner.pose.p - self_p;
    let d = delta.norm();
    if d <= cp.deadzone_mm || d == 0.0 {
        return Vec2::ZERO;
    }
    let magnitude = (cp.k * (d - cp.deadzone_mm)).min(cp.f_max) * cp.staleness_factor(partner.age_ms(now_ms));
    if magnitude == 0.0 {
        return Vec2::ZERO;
    }
    delta * (magnitude / d)
}

/// Whether the two robots agree on an organelle.
pub fn consensus_state(self_zone: &str, partner_zone: &str, map: &ZoneMap) -> Result<bool, MapError> {
    let own = map.zone(self_zone).ok_or_else(|| MapError::UnknownZone(self_zone.to_string()))?;
    map.zone(partner_zone)
        .ok_or_else(|| MapError::UnknownZone(partner_zone.to_string()))?;
    Ok(self_zone == partner_zone && own.kind == ZoneKind::Organelle)
}

/// Planar buzz: a sine of the given amplitude, applied along x during even
/// half-periods and along y during odd ones.
pub fn vibration_force(active: bool, t_ms: u64, vp: &VibrationParams) -> Vec2 {
    if !active {
        return Vec2::ZERO;
    }
    let t_s = t_ms as f64 / 1000.0;
    let s = vp.amplitude * (2.0 * PI * vp.freq_hz * t_s).sin();
    let half_period = (2.0 * vp.freq_hz * t_s).floor() as u64;
    if half_period % 2 == 0 {
        Vec2::new(s, 0.0)
    } else {
        Vec2::new(0.0, s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsensusEdge {
    None,
    Entered,
    Exited,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HapticOutput {
    pub force: Vec2,
    pub consensus_edge: ConsensusEdge,
}

/// Everything the pipeline needs besides the two robots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HapticSettings {
    pub mode: HapticMode,
    pub coupling: CouplingParams,
    pub vibration: VibrationParams,
}

/// One tick of haptic rendering for the local robot.
///
/// `was_active` is the consensus state from the previous tick; the returned
/// flag is the new one. A partner snapshot whose staleness decay has run out
/// no longer counts toward consensus.
pub fn haptic_pipeline(
    settings: &HapticSettings,
    self_state: &RobotState,
    partner: Option<&PartnerView>,
    now_ms: u64,
    map: &ZoneMap,
    was_active: bool,
) -> (HapticOutput, bool) {
    let quiet = |active: bool| {
        (
            HapticOutput {
                force: Vec2::ZERO,
                consensus_edge: ConsensusEdge::None,
            },
            active,
        )
    };
    match settings.mode {
        HapticMode::None => quiet(false),
        HapticMode::CoLocation => {
            let Some(partner) = partner else {
                return quiet(false);
            };
            if !settings.coupling.symmetric && self_state.grasped {
                return quiet(false);
            }
            let force = colocation_force(self_state.pose.p, partner, now_ms, &settings.coupling);
            (
                HapticOutput {
                    force,
                    consensus_edge: ConsensusEdge::None,
                },
                false,
            )
        }
        HapticMode::Consensus => {
            let active = partner.is_some_and(|partner| {
                let fresh = settings.coupling.staleness_factor(partner.age_ms(now_ms)) > 0.0;
                let own_zone = map
                    .locate(map.clamp_to_bounds(self_state.pose.p))
                    .unwrap_or(map.background_zone_id());
                fresh && consensus_state(own_zone, &partner.zone_id, map).unwrap_or(false)
            });
            let consensus_edge = match (was_active, active) {
                (false, true) => ConsensusEdge::Entered,
                (true, false) => ConsensusEdge::Exited,
                _ => ConsensusEdge::None,
            };
            (
                HapticOutput {
                    force: vibration_force(active, now_ms, &settings.vibration),
                    consensus_edge,
                },
                active,
            )
        }
    }
}

/// Stateful wrapper around [`haptic_pipeline`] holding the consensus flag.
#[derive(Debug, Clone)]
pub struct HapticCoupler {
    settings: HapticSettings,
    active: bool,
}

impl HapticCoupler {
    pub fn new(settings: HapticSettings) -> Self {
        Self { settings, active: false }
    }

    pub fn settings(&self) -> &HapticSettings {
        &self.settings
    }

    pub fn consensus_active(&self) -> bool {
        self.active
    }

    pub fn update(&mut self, self_state: &RobotState, partner: Option<&PartnerView>, now_ms: u64, map: &ZoneMap) -> HapticOutput {
        let (out, active) = haptic_pipeline(&self.settings, self_state, partner, now_ms, map, self.active);
        self.active = active;
        out
    }
}

/// Two released robots pulled together by the band alone, each seeing the
/// other's pose from the previous tick. Returns the first simulated time (s)
/// at which they are within `tol_mm`, or `None` if `limit_s` runs out.
pub fn band_convergence_s(
    start_a: Vec2,
    start_b: Vec2,
    cp: &CouplingParams,
    params: &DynamicsParams,
    map: &ZoneMap,
    tol_mm: f64,
    limit_s: f64,
) -> Option<f64> {
    let view = |s: &RobotState, t_ms: u64| PartnerView {
        pose: s.pose,
        zone_id: String::new(),
        received_t_ms: t_ms,
    };
    let mut a = RobotState::at(start_a);
    let mut b = RobotState::at(start_b);
    let dt_ms = params.dt_ms();
    let ticks = (limit_s / params.dt_s).round() as u64;
    for tick in 0..=ticks {
        if a.pose.p.distance(b.pose.p) <= tol_mm {
            return Some(tick as f64 * params.dt_s);
        }
        let now = tick * dt_ms;
        let fa = colocation_force(a.pose.p, &view(&b, now), now, cp);
        let fb = colocation_force(b.pose.p, &view(&a, now), now, cp);
        a = dynamics::step(&a, Vec2::ZERO, fa, params, map);
        b = dynamics::step(&b, Vec2::ZERO, fb, params, map);
    }
    None
}
