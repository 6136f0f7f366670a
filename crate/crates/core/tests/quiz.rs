mod common;

use std::collections::BTreeMap;

use tactix_core::activity::{Activity, ActivityError, ActivityState, Participant, QuizState, RejectReason};
use tactix_core::agent::AgentScript;
use tactix_core::experiment::{run_pair, World};
use tactix_core::haptics::HapticMode;
use tactix_core::session::replay::replay;
use tactix_core::session::{LatencyProfile, SessionConfig};
use tactix_core::ZoneMap;

use Participant::{A, B};

#[test]
fn gate_cannot_be_bypassed() {
    let seen = common::gate::check(99, 10_000).unwrap();
    for reason in RejectReason::ALL {
        assert!(seen.reasons.contains(&reason), "{reason:?} never exercised");
    }
    assert!(seen.accepted > 100);
}

#[test]
fn gate_walkthrough() {
    let map = ZoneMap::default_map();
    let activity = Activity::default_activity();
    let mut quiz = QuizState::new(&activity);
    quiz.propose_answer("q1", A, "nucleus", &map, 0).unwrap();
    quiz.propose_answer("q1", A, "golgi", &map, 1).unwrap();
    assert_eq!(quiz.question("q1").unwrap().proposals, BTreeMap::from([(A, "golgi".to_string())]));

    quiz.cast_vote("q1", A, "nucleus", &map, 2).unwrap();
    let out = quiz.try_submit("q1", Some("nucleus"), Some("nucleus"), 3).unwrap();
    assert_eq!(out.reason, Some(RejectReason::AwaitingPartner));
    quiz.cast_vote("q1", B, "nucleus", &map, 4).unwrap();
    let out = quiz.try_submit("q1", Some("nucleus"), Some("golgi"), 5).unwrap();
    assert_eq!(out.reason, Some(RejectReason::NotColocated));
    let out = quiz.try_submit("q1", Some("nucleus"), Some("nucleus"), 6).unwrap();
    assert!(out.accepted && out.correct == Some(true));
    assert!(quiz.propose_answer("q1", B, "golgi", &map, 7).is_err());
    assert_eq!(quiz.try_submit("q1", Some("nucleus"), Some("nucleus"), 8).unwrap().reason, Some(RejectReason::AlreadyAnswered));
}

fn answer_all(quiz: &mut QuizState, map: &ZoneMap, answers: &[(&str, &str)], t0: u64, t_end: u64) {
    for (i, (q, z)) in answers.iter().enumerate() {
        let t = if i + 1 == answers.len() { t_end } else { t0 + i as u64 };
        quiz.cast_vote(q, A, z, map, t).unwrap();
        quiz.cast_vote(q, B, z, map, t).unwrap();
        assert!(quiz.try_submit(q, Some(z), Some(z), t).unwrap().accepted);
    }
}

#[test]
fn score_and_duration_fixtures() {
    let map = ZoneMap::default_map();
    let activity = Activity::default_activity();
    let mut quiz = QuizState::new(&activity);
    quiz.navigate("q1", 0).unwrap();
    let key = [("q1", "nucleus"), ("q2", "golgi"), ("q3", "mitochondrion"), ("q4", "lysosome"), ("q5", "cytosol")];
    answer_all(&mut quiz, &map, &key, 10, 151_000);
    let report = quiz.quiz_report().unwrap();
    assert_eq!(report.score, 5);
    assert_eq!(report.duration_s, 151.0);

    let mut wrong = QuizState::new(&activity);
    let all_golgi = [("q1", "golgi"), ("q2", "nucleus"), ("q3", "golgi"), ("q4", "golgi"), ("q5", "golgi")];
    answer_all(&mut wrong, &map, &all_golgi, 0, 100);
    assert_eq!(wrong.score(), 0);
    assert!(wrong.is_finished());
    assert_eq!(QuizState::new(&activity).quiz_report().unwrap_err(), ActivityError::QuizNotFinished);
}

#[test]
fn task_ticks_are_idempotent() {
    let activity = Activity::default_activity();
    let mut state = ActivityState::new(&activity);
    let id = state.tasks[0].task_id.clone();
    assert!(state.tick_task(&id, B, 10).unwrap());
    assert!(!state.tick_task(&id, A, 20).unwrap());
    assert_eq!(state.tasks[0].done_by.unwrap().participant, B);
    assert!(matches!(state.tick_task("t99", A, 0), Err(ActivityError::UnknownTask(_))));
}

#[test]
fn scripted_sessions_score_full_marks_and_replay() {
    let world = World::packaged();
    for mode in [HapticMode::CoLocation, HapticMode::Consensus] {
        for seed in [1, 2] {
            let a = AgentScript::random(&world.map, 2 * seed);
            let b = AgentScript::random(&world.map, 2 * seed + 1);
            let config = SessionConfig::new("quiz", mode, world.map_hash.clone());
            let run = run_pair(&world, &a, &b, &config, LatencyProfile::new(100, 50, seed), 600.0).unwrap();
            assert!(run.quiz_finished(), "{mode} seed {seed}");
            assert_eq!(run.record.state.quiz.score(), 5);
            assert_eq!(run.protocol_errors(), 0);
            assert_eq!(replay(&world.activity, &world.map, &run.record.events), run.record.state);
        }
    }
}
