//! Runs the co-location vs consensus comparison over a range of seeds and
//! prints one line per seed plus the aggregate.
//!
//! ```text
//! cargo run --release -p tactix-core --example mode_gap -- 20
//! ```

use tactix_core::exec::Execution;
use tactix_core::experiment::{aggregate, run_manifest, RunManifest, World};
use tactix_core::haptics::HapticMode;
use tactix_core::session::LatencyProfile;

fn main() {
    let n: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let world = World::packaged();
    let modes = vec![HapticMode::CoLocation, HapticMode::Consensus];
    let mut manifest = RunManifest::new(&world, modes.clone(), (1..=n).collect(), LatencyProfile::new(100, 50, 0));
    manifest.n_perm = 0;
    let t0 = std::time::Instant::now();
    let outcomes = run_manifest(&manifest, &world, Execution::default()).expect("experiment runs");
    let agg = aggregate(&outcomes, &modes);
    for line in &agg.runs {
        println!(
            "{:<12} seed {:>3}  r_x {:+.3}  r_y {:+.3}  tandem {:.3}  dist {:6.1}  score {}  quiz {:?}",
            line.mode.as_str(),
            line.seed,
            line.r_x,
            line.r_y,
            line.tandem_fraction,
            line.mean_distance_mm,
            line.score,
            line.quiz_duration_s
        );
    }
    println!("{}", serde_json::to_string_pretty(&agg.comparisons).unwrap());
    println!("{}", serde_json::to_string_pretty(&agg.modes).unwrap());
    println!("elapsed {:.1?}", t0.elapsed());
}
