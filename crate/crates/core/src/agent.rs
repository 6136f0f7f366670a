//! Deterministic simulated participant.
//!
//! An agent drags its robot toward the current stop of a zone itinerary
//! with a proportional controller, ticks tasks as it goes, then works
//! through the quiz by moving to each answer zone and voting for it.
//!
//! Under a strong haptic pull the agent may let go of its robot for a while
//! (see [`Compliance`]), which is what lets the elastic coupling drag the
//! robots into tandem motion.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::activity::Activity;
use crate::geom::Vec2;
use crate::session::wire::{Message, QuizNav, SubmitResult, TaskTick, ZoneVote};
use crate::zone_map::ZoneMap;

/// How readily the agent gives in to the haptic pull.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Compliance {
    /// Haptic force magnitude at or above which the agent may let go.
    pub yield_force: f64,
    /// Hazard rate of letting go while the pull stays strong, per second.
    pub yield_rate_hz: f64,
    /// How long the robot is left alone once released.
    pub release_ms: u64,
    /// While released, take up the partner's organelle as the next stop if
    /// it is still on the itinerary.
    #[serde(default = "default_follow")]
    pub follow_partner: bool,
}

fn default_follow() -> bool {
    true
}

impl Default for Compliance {
    fn default() -> Self {
        Self {
            yield_force: 1.0,
            yield_rate_hz: 1.0,
            release_ms: 2000,
            follow_partner: true,
        }
    }
}

fn default_dwell() -> u64 {
    3000
}

fn default_gain() -> f64 {
    0.08
}

fn default_noise() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentScript {
    pub itinerary: Vec<String>,
    #[serde(default = "default_dwell")]
    pub dwell_ms: u64,
    #[serde(default = "default_gain")]
    pub drag_gain: f64,
    #[serde(default = "default_noise")]
    pub noise_std_mm: f64,
    pub seed: u64,
    /// Answer per question; questions missing here use the answer key.
    #[serde(default)]
    pub quiz_policy: BTreeMap<String, String>,
    /// Go to a wrong zone for the first question before the right one.
    #[serde(default)]
    pub disagree_first: bool,
    #[serde(default)]
    pub compliance: Compliance,
    /// Starting position; defaults to a seeded point in the background zone.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Vec2>,
}

impl AgentScript {
    pub fn new(itinerary: Vec<String>, seed: u64) -> Self {
        Self {
            itinerary,
            dwell_ms: default_dwell(),
            drag_gain: default_gain(),
            noise_std_mm: default_noise(),
            seed,
            quiz_policy: BTreeMap::new(),
            disagree_first: false,
            compliance: Compliance::default(),
            start: None,
        }
    }

    /// Visits every organelle once in a seeded random order.
    pub fn random(map: &ZoneMap, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut itinerary: Vec<String> = map.organelles().map(|z| z.id.clone()).collect();
        rand::seq::SliceRandom::shuffle(itinerary.as_mut_slice(), &mut rng);
        Self::new(itinerary, seed)
    }

    pub fn validate(&self, map: &ZoneMap) -> Result<(), String> {
        for z in self.itinerary.iter().chain(self.quiz_policy.values()) {
            if !map.contains_zone(z) {
                return Err(format!("agent script references unknown zone {z:?}"));
            }
        }
        if !(self.drag_gain.is_finite() && self.drag_gain > 0.0) {
            return Err("drag_gain must be finite and > 0".into());
        }
        if !(self.noise_std_mm.is_finite() && self.noise_std_mm >= 0.0) {
            return Err("noise_std_mm must be finite and >= 0".into());
        }
        if let Some(p) = self.start {
            if !map.in_bounds(p) {
                return Err("start position outside the map".into());
            }
        }
        Ok(())
    }
}

/// Proportional drag toward `target`, magnitude capped at `cap`.
pub fn drag_force(gain: f64, target: Vec2, p: Vec2, cap: f64) -> Vec2 {
    ((target - p) * gain).clamp_norm(cap)
}

/// What the agent sees on each tick.
#[derive(Debug, Clone)]
pub struct AgentView<'a> {
    pub now_ms: u64,
    pub position: Vec2,
    pub zone: &'a str,
    pub haptic_force: Vec2,
    /// Partner's zone as last reported, if any.
    pub partner_zone: Option<&'a str>,
    /// Quiz results received since the previous tick.
    pub results: &'a [SubmitResult],
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentAction {
    pub f_user: Vec2,
    pub grasped: bool,
    pub messages: Vec<Message>,
}

#[derive(Debug, Clone, PartialEq)]
enum Phase {
    Explore { stop: usize, dwelled_ms: u64 },
    Quiz(QuizStep),
    Done,
}

#[derive(Debug, Clone, PartialEq)]
struct QuizStep {
    q_index: usize,
    zone: String,
    navigated: bool,
    settled_ms: u64,
    last_vote_ms: Option<u64>,
    /// Still heading for the deliberately wrong zone.
    misleading: bool,
}

const VOTE_SETTLE_MS: u64 = 500;
const VOTE_RETRY_MS: u64 = 1000;

#[derive(Debug, Clone)]
pub struct ScriptedAgent {
    script: AgentScript,
    map: ZoneMap,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    f_cap: f64,
    tick_ms: u64,
    tasks: Vec<String>,
    questions: Vec<String>,
    answer_key: BTreeMap<String, String>,
    answered: BTreeSet<String>,
    phase: Phase,
    target: Vec2,
    released_until: Option<u64>,
    start: Vec2,
}

impl ScriptedAgent {
    /// `f_max` is the coupling force cap (the hand force is capped at twice
    /// that); `tick_ms` the simulation step.
    pub fn new(script: AgentScript, map: &ZoneMap, activity: &Activity, f_max: f64, tick_ms: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
        let noise = (script.noise_std_mm > 0.0).then(|| Normal::new(0.0, script.noise_std_mm).expect("valid std"));
        let start = script.start.unwrap_or_else(|| {
            let bg = map.background_zone_id().to_string();
            loop {
                let p = Vec2::new(
                    rng.random_range(10.0..map.width_mm() - 10.0),
                    rng.random_range(10.0..map.height_mm() - 10.0),
                );
                if map.locate(p).is_ok_and(|z| z == bg) {
                    break p;
                }
            }
        });
        let mut agent = Self {
            map: map.clone(),
            rng,
            noise,
            f_cap: 2.0 * f_max,
            tick_ms,
            tasks: activity.tasks.iter().map(|t| t.id.clone()).collect(),
            questions: activity.questions.iter().map(|q| q.id.clone()).collect(),
            answer_key: activity.answer_key(),
            answered: BTreeSet::new(),
            phase: Phase::Explore { stop: 0, dwelled_ms: 0 },
            target: start,
            released_until: None,
            start,
            script,
        };
        agent.enter_stop(0);
        agent
    }

    pub fn start_position(&self) -> Vec2 {
        self.start
    }

    pub fn script(&self) -> &AgentScript {
        &self.script
    }

    pub fn target(&self) -> Vec2 {
        self.target
    }

    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    pub fn in_quiz(&self) -> bool {
        matches!(self.phase, Phase::Quiz(_) | Phase::Done)
    }

    /// Target point inside `zone`, jittered but kept inside the zone.
    fn aim_at(&mut self, zone: &str) -> Vec2 {
        let base = self.map.target_point(zone).expect("validated zone");
        if let Some(noise) = self.noise {
            for _ in 0..16 {
                let p = base + Vec2::new(noise.sample(&mut self.rng), noise.sample(&mut self.rng));
                if self.map.in_bounds(p) && self.map.locate(p).is_ok_and(|z| z == zone) {
                    return p;
                }
            }
        }
        base
    }

    fn enter_stop(&mut self, stop: usize) {
        if let Some(zone) = self.script.itinerary.get(stop).cloned() {
            self.target = self.aim_at(&zone);
            self.phase = Phase::Explore { stop, dwelled_ms: 0 };
        } else {
            self.enter_question(0);
        }
    }

    fn policy_zone(&self, q_id: &str) -> String {
        self.script
            .quiz_policy
            .get(q_id)
            .or_else(|| self.answer_key.get(q_id))
            .cloned()
            .unwrap_or_else(|| self.map.background_zone_id().to_string())
    }

    fn wrong_zone(&self, right: &str) -> String {
        self.map
            .organelles()
            .map(|z| z.id.clone())
            .find(|z| z != right)
            .unwrap_or_else(|| self.map.background_zone_id().to_string())
    }

    fn enter_question(&mut self, from: usize) {
        let next = (from..self.questions.len()).find(|&i| !self.answered.contains(&self.questions[i]));
        let Some(q_index) = next else {
            self.phase = Phase::Done;
            return;
        };
        let right = self.policy_zone(&self.questions[q_index]);
        let misleading = self.script.disagree_first && q_index == 0 && self.answered.is_empty();
        let zone = if misleading { self.wrong_zone(&right) } else { right };
        self.target = self.aim_at(&zone);
        self.phase = Phase::Quiz(QuizStep {
            q_index,
            zone,
            navigated: false,
            settled_ms: 0,
            last_vote_ms: None,
            misleading,
        });
    }

    fn follows(&self, view: &AgentView) -> bool {
        self.script.compliance.follow_partner && self.released_until.is_some_and(|t| view.now_ms < t)
    }

    fn compliance(&mut self, view: &AgentView) -> bool {
        if let Some(until) = self.released_until {
            if view.now_ms < until {
                return false;
            }
            self.released_until = None;
        }
        let c = self.script.compliance;
        if c.yield_rate_hz > 0.0 && view.haptic_force.norm() >= c.yield_force {
            let p = c.yield_rate_hz * self.tick_ms as f64 / 1000.0;
            if self.rng.random::<f64>() < p {
                self.released_until = Some(view.now_ms + c.release_ms);
                return false;
            }
        }
        true
    }

    pub fn tick(&mut self, view: &AgentView) -> AgentAction {
        let mut messages = Vec::new();
        for r in view.results {
            if r.accepted {
                self.answered.insert(r.q_id.clone());
            }
        }
        match self.phase.clone() {
            Phase::Explore { stop, mut dwelled_ms } => {
                if self.follows(view) {
                    let partner = view.partner_zone.unwrap_or_default();
                    if let Some(k) = self.script.itinerary[stop + 1..].iter().position(|z| z == partner) {
                        self.script.itinerary.swap(stop, stop + 1 + k);
                        self.target = self.aim_at(partner);
                        dwelled_ms = 0;
                    }
                }
                let zone = &self.script.itinerary[stop];
                let dwelled_ms = if view.zone == zone { dwelled_ms + self.tick_ms } else { dwelled_ms };
                if dwelled_ms >= self.script.dwell_ms {
                    let last = stop + 1 == self.script.itinerary.len();
                    let ticks: Vec<String> = if last {
                        self.tasks.iter().skip(stop).cloned().collect()
                    } else {
                        self.tasks.get(stop).cloned().into_iter().collect()
                    };
                    messages.extend(ticks.into_iter().map(|task_id| Message::TaskTick(TaskTick { task_id, done: true })));
                    self.enter_stop(stop + 1);
                } else {
                    self.phase = Phase::Explore { stop, dwelled_ms };
                }
            }
            Phase::Quiz(mut step) => {
                let q_id = self.questions[step.q_index].clone();
                if self.answered.contains(&q_id) {
                    self.enter_question(step.q_index + 1);
                } else {
                    if step.misleading && step.last_vote_ms.is_some() && view.results.iter().any(|r| r.q_id == q_id && !r.accepted) {
                        // Rejected: give up the wrong answer.
                        step.misleading = false;
                        step.zone = self.policy_zone(&q_id);
                        step.settled_ms = 0;
                        step.last_vote_ms = None;
                        self.target = self.aim_at(&step.zone);
                    }
                    if !step.navigated {
                        messages.push(Message::QuizNav(QuizNav { q_id: q_id.clone() }));
                        step.navigated = true;
                    }
                    if view.zone == step.zone {
                        step.settled_ms += self.tick_ms;
                    } else {
                        step.settled_ms = 0;
                    }
                    let due = step.last_vote_ms.map_or(true, |t| view.now_ms >= t + VOTE_RETRY_MS);
                    if step.settled_ms >= VOTE_SETTLE_MS && due {
                        let vote = ZoneVote {
                            q_id,
                            zone_id: step.zone.clone(),
                        };
                        if step.last_vote_ms.is_none() {
                            messages.push(Message::Propose(vote.clone()));
                        }
                        messages.push(Message::Agree(vote));
                        step.last_vote_ms = Some(view.now_ms);
                    }
                    self.phase = Phase::Quiz(step);
                }
            }
            Phase::Done => {}
        }
        let grasped = self.compliance(view);
        let f_user = if grasped {
            drag_force(self.script.drag_gain, self.target, view.position, self.f_cap)
        } else {
            Vec2::ZERO
        };
        AgentAction {
            f_user,
            grasped,
            messages,
        }
    }
}
