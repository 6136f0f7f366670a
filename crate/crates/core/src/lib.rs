//! Core engine for two-party remote collaboration with simulated tangible
//! haptic robots.
//!
//! The crate is organised bottom-up:
//!
//! * [`geom`] and [`zone_map`]: the planar cell map and zone queries.
//! * [`dynamics`]: the fixed-timestep point-mass robot model.
//! * [`haptics`]: the co-location spring and the consensus vibration.
//! * [`activity`]: exploratory tasks and the agreement-gated quiz.
//! * [`session`]: wire protocol, the per-session event loop, the robot-side
//!   client and a seeded latency transport.
//! * [`trace`]: pose/event recording and correlation analysis.
//! * [`agent`] and [`experiment`]: scripted participants and seeded
//!   desk-scale experiments.
//! * [`exec`]: the data-parallel execution switch shared by the batch code.

pub mod activity;
pub mod agent;
pub mod dynamics;
pub mod exec;
pub mod experiment;
pub mod geom;
pub mod haptics;
pub mod session;
pub mod trace;
pub mod zone_map;

pub use geom::Vec2;
pub use zone_map::{Zone, ZoneKind, ZoneMap};

/// Default map shipped with the crate (landscape A4 cell diagram).
pub const DEFAULT_MAP_JSON: &str = include_str!("../assets/cell_a4.map.json");

/// Default activity shipped with the crate (tasks and five quiz questions).
pub const DEFAULT_ACTIVITY_JSON: &str = include_str!("../assets/cell_activity.json");

/// Lowercase hex SHA-256 of `bytes`; used for map hashes and config digests.
pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
