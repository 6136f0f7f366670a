//! Two-party session: wire protocol, the server-side event loop, the
//! robot-side client, and an in-process latency transport.

pub mod client;
pub mod hub;
pub mod replay;
pub mod transport;
pub mod wire;

use serde::{Deserialize, Serialize};

use crate::haptics::{CouplingParams, HapticMode, HapticSettings, VibrationParams};

pub use client::RobotClient;
pub use hub::{ConnId, HubInput, HubOutput, SessionHub, SessionRecord};
pub use transport::{simulated_transport, LatencyProfile, SimDuplex, SimLink};
pub use wire::{decode, encode, Envelope, LineDecoder, Message, Sender, WireError};

/// Default TCP port; overridable with `TACTIX_PORT`.
pub const DEFAULT_PORT: u16 = 7741;
pub const HEARTBEAT_INTERVAL_MS: u64 = 1000;

fn default_pose_rate() -> u32 {
    20
}

fn default_sim_rate() -> u32 {
    100
}

/// Session-wide settings, fixed at creation and sent to both clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub session_id: String,
    pub mode: HapticMode,
    #[serde(default)]
    pub coupling: CouplingParams,
    #[serde(default)]
    pub vibration: VibrationParams,
    /// SHA-256 (hex) of the map file both clients must present.
    pub map_hash: String,
    #[serde(default = "default_pose_rate")]
    pub pose_rate_hz: u32,
    #[serde(default = "default_sim_rate")]
    pub sim_rate_hz: u32,
}

impl SessionConfig {
    pub fn new(session_id: impl Into<String>, mode: HapticMode, map_hash: impl Into<String>) -> Self {
        Self {
            session_id: session_id.into(),
            mode,
            coupling: CouplingParams::default(),
            vibration: VibrationParams::default(),
            map_hash: map_hash.into(),
            pose_rate_hz: default_pose_rate(),
            sim_rate_hz: default_sim_rate(),
        }
    }

    pub fn haptics(&self) -> HapticSettings {
        HapticSettings {
            mode: self.mode,
            coupling: self.coupling,
            vibration: self.vibration,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.coupling.validate()?;
        self.vibration.validate()?;
        if self.pose_rate_hz == 0 || self.sim_rate_hz == 0 {
            return Err("pose_rate_hz and sim_rate_hz must be positive".into());
        }
        if self.sim_rate_hz % self.pose_rate_hz != 0 {
            return Err("sim_rate_hz must be a multiple of pose_rate_hz".into());
        }
        if 1000 % self.sim_rate_hz != 0 {
            return Err("sim_rate_hz must divide 1000 (whole-millisecond ticks)".into());
        }
        Ok(())
    }

    /// Simulation ticks between pose broadcasts.
    pub fn pose_decimation(&self) -> u64 {
        u64::from(self.sim_rate_hz / self.pose_rate_hz.max(1)).max(1)
    }

    pub fn tick_ms(&self) -> u64 {
        1000 / u64::from(self.sim_rate_hz.max(1))
    }

    /// SHA-256 over the canonical JSON form; written into trace headers.
    pub fn digest(&self) -> String {
        crate::sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}
