use tactix_core::activity::Participant;
use tactix_core::agent::{drag_force, AgentScript};
use tactix_core::experiment::{run_pair, PairRun, World};
use tactix_core::haptics::HapticMode;
use tactix_core::session::wire::Message;
use tactix_core::session::{LatencyProfile, SessionConfig};
use tactix_core::trace::analysis::resample;
use tactix_core::trace::TraceError;
use tactix_core::Vec2;

fn run(world: &World, mode: HapticMode, a: &AgentScript, b: &AgentScript, seed: u64, duration_s: f64) -> PairRun {
    let config = SessionConfig::new("agents", mode, world.map_hash.clone());
    run_pair(world, a, b, &config, LatencyProfile::new(100, 50, seed), duration_s).unwrap()
}

fn scripts(world: &World, seed: u64) -> (AgentScript, AgentScript) {
    (AgentScript::random(&world.map, 2 * seed), AgentScript::random(&world.map, 2 * seed + 1))
}

#[test]
fn drag_examples() {
    let target = Vec2::new(100.0, 80.0);
    assert_eq!(drag_force(0.08, target, target, 4.0), Vec2::ZERO);
    let f = drag_force(0.08, target, Vec2::new(50.0, 80.0), 4.0);
    assert!((f.x_mm - 4.0).abs() < 1e-12 && f.y_mm == 0.0);
    let capped = drag_force(0.08, target, Vec2::new(0.0, 80.0), 4.0);
    assert!((capped.norm() - 4.0).abs() < 1e-12);
}

#[test]
fn itineraries_reached_without_haptics() {
    let world = World::packaged();
    for seed in 0..5 {
        let (a, b) = scripts(&world, seed);
        let r = run(&world, HapticMode::None, &a, &b, seed, 60.0);
        for (who, script) in [(Participant::A, &a), (Participant::B, &b)] {
            for zone in &script.itinerary {
                let reached = r.record.trace.iter().any(|s| s.robot_id == who && s.t_ms <= 60_000 && &s.zone_id == zone);
                assert!(reached, "seed {seed}: {who} never reached {zone}");
            }
        }
    }
}

#[test]
fn runs_are_bit_identical() {
    let world = World::packaged();
    let (a, b) = scripts(&world, 4);
    let one = run(&world, HapticMode::CoLocation, &a, &b, 4, 120.0);
    let two = run(&world, HapticMode::CoLocation, &a, &b, 4, 120.0);
    assert_eq!(one.record.trace, two.record.trace);
    assert_eq!(one.record.events, two.record.events);
}

#[test]
fn band_keeps_robots_closer() {
    let world = World::packaged();
    for seed in 1..=5 {
        let (a, b) = scripts(&world, seed);
        let dist = |mode| {
            let r = run(&world, mode, &a, &b, seed, 600.0);
            resample(&r.record.trace, 10.0).unwrap().mean_distance_mm()
        };
        let co = dist(HapticMode::CoLocation);
        let none = dist(HapticMode::None);
        assert!(co < none, "seed {seed}: {co} vs {none}");
    }
}

#[test]
fn disagreement_exercises_rejection() {
    let world = World::packaged();
    let (mut a, b) = scripts(&world, 6);
    a.disagree_first = true;
    let r = run(&world, HapticMode::None, &a, &b, 6, 600.0);
    assert!(r.quiz_finished());
    assert_eq!(r.record.state.quiz.score(), 5);
    let rejected = r
        .record
        .events
        .iter()
        .any(|e| matches!(&e.msg, Message::SubmitResult(s) if !s.accepted));
    assert!(rejected);
}

#[test]
fn zero_duration_gives_empty_trace() {
    let world = World::packaged();
    let (a, b) = scripts(&world, 1);
    let r = run(&world, HapticMode::CoLocation, &a, &b, 1, 0.0);
    assert!(r.record.trace.is_empty());
    assert!(matches!(resample(&r.record.trace, 10.0), Err(TraceError::NoOverlap)));
}
