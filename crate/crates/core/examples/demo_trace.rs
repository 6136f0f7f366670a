//! Writes the seeded co-location demo session used as a golden fixture.
//!
//! ```text
//! cargo run -p tactix-core --example demo_trace -- crates/core/tests/data
//! ```

use std::path::Path;

use tactix_core::experiment::{run_pair, RunManifest, World};
use tactix_core::haptics::HapticMode;
use tactix_core::session::LatencyProfile;
use tactix_core::trace::{write_events, write_trace};

pub const DEMO_SEED: u64 = 1;

/// Trace CSV and event log bytes of the demo run.
pub fn generate() -> (Vec<u8>, Vec<u8>) {
    let world = World::packaged();
    let manifest = RunManifest::new(&world, vec![HapticMode::CoLocation], vec![DEMO_SEED], LatencyProfile::new(100, 50, 0));
    let (config, latency, [a, b]) = manifest.run_inputs(&world, HapticMode::CoLocation, DEMO_SEED);
    let run = run_pair(&world, &a, &b, &config, latency, manifest.duration_s).expect("demo run");
    let mut trace = Vec::new();
    write_trace(&mut trace, &run.record.trace, Some(&config.digest())).expect("in-memory write");
    let mut events = Vec::new();
    write_events(&mut events, &run.record.events).expect("in-memory write");
    (trace, events)
}

#[allow(dead_code)]
fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "crates/core/tests/data".into());
    let dir = Path::new(&dir);
    std::fs::create_dir_all(dir).expect("output dir");
    let (trace, events) = generate();
    std::fs::write(dir.join("demo_trace.csv"), trace).expect("write trace");
    std::fs::write(dir.join("demo_events.jsonl"), events).expect("write events");
    println!("wrote {}", dir.display());
}
