//! Applying participant events to the activity state.
//!
//! The hub and offline replay share [`apply_event`], so a recorded event log
//! fed back through [`replay`] reproduces the session's final state.

use crate::activity::{Activity, ActivityError, ActivityState, Participant, RejectReason, SubmitOutcome};
use crate::geom::Vec2;
use crate::session::wire::{Envelope, Message};
use crate::zone_map::ZoneMap;

/// Server-side view of which zone each robot currently occupies.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LiveZones {
    pub a: Option<String>,
    pub b: Option<String>,
}

impl LiveZones {
    pub fn get(&self, p: Participant) -> Option<&str> {
        match p {
            Participant::A => self.a.as_deref(),
            Participant::B => self.b.as_deref(),
        }
    }

    fn slot(&mut self, p: Participant) -> &mut Option<String> {
        match p {
            Participant::A => &mut self.a,
            Participant::B => &mut self.b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Applied {
    /// Message kind with no activity effect.
    Ignored,
    /// Pose located; `changed` when the robot entered a different zone.
    Located { zone_id: String, changed: bool, clamped: bool },
    Ticked { changed: bool },
    Navigated,
    Proposed,
    /// Outcome of the gate after a vote, or a rejected proposal.
    Submit(SubmitOutcome),
}

fn rejected(reason: RejectReason) -> SubmitOutcome {
    SubmitOutcome {
        accepted: false,
        reason: Some(reason),
        correct: None,
    }
}

/// Applies one participant message at session time `t_ms`.
pub fn apply_event(
    state: &mut ActivityState,
    live: &mut LiveZones,
    map: &ZoneMap,
    who: Participant,
    t_ms: u64,
    msg: &Message,
) -> Result<Applied, ActivityError> {
    match msg {
        Message::Pose(pose) => {
            let raw = Vec2::new(pose.x_mm, pose.y_mm);
            let p = map.clamp_to_bounds(raw);
            let zone = map.locate(p).expect("clamped point is in bounds").to_string();
            let slot = live.slot(who);
            let changed = slot.as_deref() != Some(zone.as_str());
            *slot = Some(zone.clone());
            Ok(Applied::Located {
                zone_id: zone,
                changed,
                clamped: p != raw,
            })
        }
        Message::TaskTick(tick) => {
            if !tick.done {
                // Ticks are self-reported and permanent; unticking is a no-op.
                state
                    .tasks
                    .iter()
                    .find(|t| t.task_id == tick.task_id)
                    .ok_or_else(|| ActivityError::UnknownTask(tick.task_id.clone()))?;
                return Ok(Applied::Ticked { changed: false });
            }
            let changed = state.tick_task(&tick.task_id, who, t_ms)?;
            Ok(Applied::Ticked { changed })
        }
        Message::QuizNav(nav) => {
            state.quiz.navigate(&nav.q_id, t_ms)?;
            Ok(Applied::Navigated)
        }
        Message::Propose(vote) => match state.quiz.propose_answer(&vote.q_id, who, &vote.zone_id, map, t_ms) {
            Ok(()) => Ok(Applied::Proposed),
            Err(ActivityError::AlreadyAnswered(_)) => Ok(Applied::Submit(rejected(RejectReason::AlreadyAnswered))),
            Err(e) => Err(e),
        },
        Message::Agree(vote) => match state.quiz.cast_vote(&vote.q_id, who, &vote.zone_id, map, t_ms) {
            Ok(()) => {
                let outcome = state.quiz.try_submit(&vote.q_id, live.a.as_deref(), live.b.as_deref(), t_ms)?;
                Ok(Applied::Submit(outcome))
            }
            Err(ActivityError::AlreadyAnswered(_)) => Ok(Applied::Submit(rejected(RejectReason::AlreadyAnswered))),
            Err(e) => Err(e),
        },
        _ => Ok(Applied::Ignored),
    }
}

/// Rebuilds the activity state from a session event log.
///
/// Only participant envelopes are applied; server messages and unknown
/// references are skipped exactly as the live session skipped them.
pub fn replay(activity: &Activity, map: &ZoneMap, events: &[Envelope]) -> ActivityState {
    let mut state = ActivityState::new(activity);
    let mut live = LiveZones::default();
    for e in events {
        if let Some(who) = e.from.participant() {
            let _ = apply_event(&mut state, &mut live, map, who, e.t_ms, &e.msg);
        }
    }
    state
}
