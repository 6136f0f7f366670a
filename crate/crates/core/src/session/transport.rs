//! In-process duplex channel with seeded latency and jitter.
//!
//! Each direction delays a frame by `base ± uniform(jitter)` milliseconds of
//! simulated time. Delivery times are monotonized so a frame never overtakes
//! one sent before it on the same direction.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LatencyProfile {
    pub base_delay_ms: u64,
    pub jitter_ms: u64,
    pub seed: u64,
}

impl LatencyProfile {
    pub fn new(base_delay_ms: u64, jitter_ms: u64, seed: u64) -> Self {
        Self {
            base_delay_ms,
            jitter_ms,
            seed,
        }
    }

    /// Parses `base:jitter` (milliseconds).
    pub fn parse(text: &str, seed: u64) -> Result<Self, String> {
        let (base, jitter) = text
            .split_once(':')
            .ok_or_else(|| format!("latency must be BASE:JITTER in ms, got {text:?}"))?;
        let base = base.trim().parse().map_err(|_| format!("bad base delay {base:?}"))?;
        let jitter = jitter.trim().parse().map_err(|_| format!("bad jitter {jitter:?}"))?;
        Ok(Self::new(base, jitter, seed))
    }
}

/// One direction of a simulated link.
#[derive(Debug, Clone)]
pub struct SimLink {
    profile: LatencyProfile,
    rng: ChaCha8Rng,
    queue: VecDeque<(u64, Vec<u8>)>,
    last_delivery_ms: u64,
    sent: u64,
}

impl SimLink {
    /// `stream` selects an independent random stream for the same seed.
    pub fn new(profile: LatencyProfile, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
        rng.set_stream(stream);
        Self {
            profile,
            rng,
            queue: VecDeque::new(),
            last_delivery_ms: 0,
            sent: 0,
        }
    }

    fn sample_delay(&mut self) -> u64 {
        let j = self.profile.jitter_ms as i64;
        let offset = if j == 0 { 0 } else { self.rng.random_range(-j..=j) };
        (self.profile.base_delay_ms as i64 + offset).max(0) as u64
    }

    /// Queues a frame sent at `now_ms`; returns its delivery time.
    pub fn send(&mut self, now_ms: u64, frame: Vec<u8>) -> u64 {
        let at = (now_ms + self.sample_delay()).max(self.last_delivery_ms);
        self.last_delivery_ms = at;
        self.queue.push_back((at, frame));
        self.sent += 1;
        at
    }

    /// Frames whose delivery time is at or before `now_ms`, in send order.
    pub fn poll(&mut self, now_ms: u64) -> Vec<Vec<u8>> {
        let mut out = Vec::new();
        while self.queue.front().is_some_and(|(at, _)| *at <= now_ms) {
            out.push(self.queue.pop_front().expect("checked").1);
        }
        out
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }

    pub fn sent(&self) -> u64 {
        self.sent
    }

    /// Drops everything in flight (used when a connection is torn down).
    pub fn clear(&mut self) {
        self.queue.clear();
    }
}

/// Both directions of one client connection.
#[derive(Debug, Clone)]
pub struct SimDuplex {
    /// Client to server.
    pub up: SimLink,
    /// Server to client.
    pub down: SimLink,
}

impl SimDuplex {
    /// `channel` distinguishes connections sharing one profile seed.
    pub fn new(profile: LatencyProfile, channel: u64) -> Self {
        Self {
            up: SimLink::new(profile, 2 * channel),
            down: SimLink::new(profile, 2 * channel + 1),
        }
    }
}

pub fn simulated_transport(profile: LatencyProfile) -> SimDuplex {
    SimDuplex::new(profile, 0)
}
