//! Learning activity: a free-order task checklist and a quiz whose answers
//! are accepted only when both robots stand on the same zone and both
//! participants vote for it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::zone_map::ZoneMap;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ActivityError {
    #[error("activity parse error: {0}")]
    Parse(String),
    #[error("activity validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("unknown question {0:?}")]
    UnknownQuestion(String),
    #[error("unknown zone {0:?}")]
    UnknownZone(String),
    #[error("question {0:?} already answered")]
    AlreadyAnswered(String),
    #[error("quiz not finished")]
    QuizNotFinished,
}

/// One of the two collaborating participants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Participant {
    A,
    B,
}

impl Participant {
    pub const BOTH: [Participant; 2] = [Participant::A, Participant::B];

    pub fn other(self) -> Participant {
        match self {
            Participant::A => Participant::B,
            Participant::B => Participant::A,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Participant::A => "A",
            Participant::B => "B",
        }
    }
}

impl std::fmt::Display for Participant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Participant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" => Ok(Participant::A),
            "B" => Ok(Participant::B),
            other => Err(format!("unknown participant {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDef {
    pub id: String,
    pub text: String,
    /// Written for this activity rather than taken from the original task list.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub authored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionDef {
    pub id: String,
    pub text: String,
    pub answer_zone_id: String,
}

/// Activity content as authored in the activity file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Activity {
    pub tasks: Vec<TaskDef>,
    pub questions: Vec<QuestionDef>,
}

impl Activity {
    pub fn load(document: &[u8]) -> Result<Activity, ActivityError> {
        let activity: Activity = serde_json::from_slice(document).map_err(|e| ActivityError::Parse(e.to_string()))?;
        let problems = activity.structural_problems();
        if problems.is_empty() {
            Ok(activity)
        } else {
            Err(ActivityError::Validation(problems))
        }
    }

    pub fn default_activity() -> Activity {
        Self::load(crate::DEFAULT_ACTIVITY_JSON.as_bytes()).expect("packaged activity is valid")
    }

    fn structural_problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.questions.is_empty() {
            problems.push("activity has no questions".to_string());
        }
        let mut seen = std::collections::BTreeSet::new();
        for t in &self.tasks {
            if !seen.insert(("task", t.id.as_str())) {
                problems.push(format!("duplicate task id {:?}", t.id));
            }
        }
        for q in &self.questions {
            if !seen.insert(("question", q.id.as_str())) {
                problems.push(format!("duplicate question id {:?}", q.id));
            }
        }
        problems
    }

    /// Cross-references against a map: every answer zone must exist.
    pub fn check_against(&self, map: &ZoneMap) -> Vec<String> {
        self.questions
            .iter()
            .filter(|q| !map.contains_zone(&q.answer_zone_id))
            .map(|q| format!("question {:?} references unknown zone {:?}", q.id, q.answer_zone_id))
            .collect()
    }

    pub fn answer_key(&self) -> BTreeMap<String, String> {
        self.questions
            .iter()
            .map(|q| (q.id.clone(), q.answer_zone_id.clone()))
            .collect()
    }

    pub fn question(&self, q_id: &str) -> Option<&QuestionDef> {
        self.questions.iter().find(|q| q.id == q_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub participant: Participant,
    pub t_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskItem {
    pub task_id: String,
    pub text: String,
    pub done_by: Option<Stamp>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizResult {
    pub zone_id: String,
    pub correct: bool,
    pub t_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionState {
    pub q_id: String,
    pub text: String,
    pub answer_zone_id: String,
    pub proposals: BTreeMap<Participant, String>,
    pub votes: BTreeMap<Participant, String>,
    pub agreement: Option<String>,
    pub result: Option<QuizResult>,
}

impl QuestionState {
    pub fn is_answered(&self) -> bool {
        self.result.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    NotColocated,
    AwaitingPartner,
    AlreadyAnswered,
}

impl RejectReason {
    pub const ALL: [RejectReason; 3] = [
        RejectReason::NotColocated,
        RejectReason::AwaitingPartner,
        RejectReason::AlreadyAnswered,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub accepted: bool,
    pub reason: Option<RejectReason>,
    pub correct: Option<bool>,
}

impl SubmitOutcome {
    fn rejected(reason: RejectReason) -> Self {
        Self {
            accepted: false,
            reason: Some(reason),
            correct: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizState {
    pub questions: Vec<QuestionState>,
    /// Question most recently navigated to.
    pub current: Option<String>,
    pub quiz_started_t_ms: Option<u64>,
    pub quiz_finished_t_ms: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuizReport {
    pub score: u32,
    pub n_questions: u32,
    pub duration_s: f64,
}

impl QuizState {
    pub fn new(activity: &Activity) -> Self {
        Self {
            questions: activity
                .questions
                .iter()
                .map(|q| QuestionState {
                    q_id: q.id.clone(),
                    text: q.text.clone(),
                    answer_zone_id: q.answer_zone_id.clone(),
                    proposals: BTreeMap::new(),
                    votes: BTreeMap::new(),
                    agreement: None,
                    result: None,
                })
                .collect(),
            current: None,
            quiz_started_t_ms: None,
            quiz_finished_t_ms: None,
        }
    }

    pub fn question(&self, q_id: &str) -> Option<&QuestionState> {
        self.questions.iter().find(|q| q.q_id == q_id)
    }

    fn question_mut(&mut self, q_id: &str) -> Result<&mut QuestionState, ActivityError> {
        self.questions
            .iter_mut()
            .find(|q| q.q_id == q_id)
            .ok_or_else(|| ActivityError::UnknownQuestion(q_id.to_string()))
    }

    fn mark_started(&mut self, t_ms: u64) {
        self.quiz_started_t_ms.get_or_insert(t_ms);
    }

    pub fn is_finished(&self) -> bool {
        self.quiz_finished_t_ms.is_some()
    }

    /// Moves both participants' view to `q_id`; the first navigation starts
    /// the quiz clock.
    pub fn navigate(&mut self, q_id: &str, t_ms: u64) -> Result<(), ActivityError> {
        self.question_mut(q_id)?;
        self.current = Some(q_id.to_string());
        self.mark_started(t_ms);
        Ok(())
    }

    /// Records (or overwrites) a participant's live proposal. A standing vote
    /// for a different zone is withdrawn.
    pub fn propose_answer(
        &mut self,
        q_id: &str,
        participant: Participant,
        zone_id: &str,
        map: &ZoneMap,
        t_ms: u64,
    ) -> Result<(), ActivityError> {
        if !map.contains_zone(zone_id) {
            return Err(ActivityError::UnknownZone(zone_id.to_string()));
        }
        let q = self.question_mut(q_id)?;
        if q.is_answered() {
            return Err(ActivityError::AlreadyAnswered(q_id.to_string()));
        }
        q.proposals.insert(participant, zone_id.to_string());
        if q.votes.get(&participant).is_some_and(|v| v != zone_id) {
            q.votes.remove(&participant);
        }
        self.mark_started(t_ms);
        Ok(())
    }

    /// Records a participant's agreement vote; the vote doubles as their
    /// proposal.
    pub fn cast_vote(
        &mut self,
        q_id: &str,
        participant: Participant,
        zone_id: &str,
        map: &ZoneMap,
        t_ms: u64,
    ) -> Result<(), ActivityError> {
        self.propose_answer(q_id, participant, zone_id, map, t_ms)?;
        let q = self.question_mut(q_id)?;
        q.votes.insert(participant, zone_id.to_string());
        Ok(())
    }

    /// Evaluates the agreement gate for `q_id` against the robots' live zones.
    pub fn try_submit(&mut self, q_id: &str, live_a: Option<&str>, live_b: Option<&str>, t_ms: u64) -> Result<SubmitOutcome, ActivityError> {
        let q = self.question_mut(q_id)?;
        if q.is_answered() {
            return Ok(SubmitOutcome::rejected(RejectReason::AlreadyAnswered));
        }
        let zone = match (live_a, live_b) {
            (Some(a), Some(b)) if a == b => a.to_string(),
            _ => return Ok(SubmitOutcome::rejected(RejectReason::NotColocated)),
        };
        let both_agree = Participant::BOTH.iter().all(|p| {
            q.votes.get(p).is_some_and(|v| *v == zone) && q.proposals.get(p).is_some_and(|v| *v == zone)
        });
        if !both_agree {
            return Ok(SubmitOutcome::rejected(RejectReason::AwaitingPartner));
        }
        let correct = zone == q.answer_zone_id;
        q.agreement = Some(zone.clone());
        q.result = Some(QuizResult {
            zone_id: zone,
            correct,
            t_ms,
        });
        self.mark_started(t_ms);
        if self.questions.iter().all(QuestionState::is_answered) {
            self.quiz_finished_t_ms = Some(t_ms);
        }
        Ok(SubmitOutcome {
            accepted: true,
            reason: None,
            correct: Some(correct),
        })
    }

    pub fn score(&self) -> u32 {
        self.questions
            .iter()
            .filter(|q| q.result.as_ref().is_some_and(|r| r.correct))
            .count() as u32
    }

    pub fn quiz_report(&self) -> Result<QuizReport, ActivityError> {
        let (Some(start), Some(end)) = (self.quiz_started_t_ms, self.quiz_finished_t_ms) else {
            return Err(ActivityError::QuizNotFinished);
        };
        Ok(QuizReport {
            score: self.score(),
            n_questions: self.questions.len() as u32,
            duration_s: end.saturating_sub(start) as f64 / 1000.0,
        })
    }
}

/// Complete activity progress for one session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityState {
    pub tasks: Vec<TaskItem>,
    pub quiz: QuizState,
}

impl ActivityState {
    pub fn new(activity: &Activity) -> Self {
        Self {
            tasks: activity
                .tasks
                .iter()
                .map(|t| TaskItem {
                    task_id: t.id.clone(),
                    text: t.text.clone(),
                    done_by: None,
                })
                .collect(),
            quiz: QuizState::new(activity),
        }
    }

    /// Marks a task done by the first participant to tick it. Returns whether
    /// this call changed anything.
    pub fn tick_task(&mut self, task_id: &str, participant: Participant, t_ms: u64) -> Result<bool, ActivityError> {
        let task = self
            .tasks
            .iter_mut()
            .find(|t| t.task_id == task_id)
            .ok_or_else(|| ActivityError::UnknownTask(task_id.to_string()))?;
        if task.done_by.is_some() {
            return Ok(false);
        }
        task.done_by = Some(Stamp { participant, t_ms });
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Participant::{A, B};

    fn setup() -> (ZoneMap, ActivityState) {
        (ZoneMap::default_map(), ActivityState::new(&Activity::default_activity()))
    }

    #[test]
    fn default_activity_matches_map() {
        let activity = Activity::default_activity();
        assert_eq!(activity.questions.len(), 5);
        assert_eq!(activity.tasks.len(), 5);
        assert!(activity.check_against(&ZoneMap::default_map()).is_empty());
        let key = activity.answer_key();
        assert_eq!(key["q1"], "nucleus");
        assert_eq!(key["q5"], "cytosol");
    }

    #[test]
    fn unknown_answer_zone_reported() {
        let mut activity = Activity::default_activity();
        activity.questions[2].answer_zone_id = "ribosome".into();
        let problems = activity.check_against(&ZoneMap::default_map());
        assert_eq!(problems.len(), 1);
        assert!(problems[0].contains("\"q3\""));
    }

    #[test]
    fn tick_task_is_idempotent() {
        let (_, mut st) = setup();
        assert!(st.tick_task("control_centre", A, 10).unwrap());
        assert!(!st.tick_task("control_centre", B, 20).unwrap());
        assert_eq!(st.tasks[0].done_by, Some(Stamp { participant: A, t_ms: 10 }));
        assert!(matches!(st.tick_task("nope", A, 0), Err(ActivityError::UnknownTask(_))));
    }

    #[test]
    fn proposals_overwrite() {
        let (map, mut st) = setup();
        st.quiz.propose_answer("q1", A, "nucleus", &map, 0).unwrap();
        assert_eq!(st.quiz.question("q1").unwrap().proposals[&A], "nucleus");
        st.quiz.propose_answer("q1", A, "golgi", &map, 0).unwrap();
        let q = st.quiz.question("q1").unwrap();
        assert_eq!(q.proposals.len(), 1);
        assert_eq!(q.proposals[&A], "golgi");
        assert!(matches!(
            st.quiz.propose_answer("q1", A, "ribosome", &map, 0),
            Err(ActivityError::UnknownZone(_))
        ));
    }

    #[test]
    fn propose_on_answered_question_fails() {
        let (map, mut st) = setup();
        st.quiz.cast_vote("q1", A, "nucleus", &map, 0).unwrap();
        st.quiz.cast_vote("q1", B, "nucleus", &map, 0).unwrap();
        assert!(st.quiz.try_submit("q1", Some("nucleus"), Some("nucleus"), 5).unwrap().accepted);
        assert!(matches!(
            st.quiz.propose_answer("q1", A, "golgi", &map, 6),
            Err(ActivityError::AlreadyAnswered(_))
        ));
    }

    #[test]
    fn gate_accepts_colocated_agreement() {
        let (map, mut st) = setup();
        st.quiz.cast_vote("q1", A, "nucleus", &map, 0).unwrap();
        st.quiz.cast_vote("q1", B, "nucleus", &map, 0).unwrap();
        let out = st.quiz.try_submit("q1", Some("nucleus"), Some("nucleus"), 100).unwrap();
        assert_eq!(
            out,
            SubmitOutcome {
                accepted: true,
                reason: None,
                correct: Some(true)
            }
        );
        let again = st.quiz.try_submit("q1", Some("nucleus"), Some("nucleus"), 101).unwrap();
        assert_eq!(again.reason, Some(RejectReason::AlreadyAnswered));
    }

    #[test]
    fn gate_rejects_apart_robots() {
        let (map, mut st) = setup();
        st.quiz.cast_vote("q1", A, "nucleus", &map, 0).unwrap();
        st.quiz.cast_vote("q1", B, "nucleus", &map, 0).unwrap();
        let out = st.quiz.try_submit("q1", Some("nucleus"), Some("golgi"), 100).unwrap();
        assert_eq!(out.reason, Some(RejectReason::NotColocated));
        assert!(!st.quiz.question("q1").unwrap().is_answered());
    }

    #[test]
    fn gate_waits_for_partner_vote() {
        let (map, mut st) = setup();
        st.quiz.cast_vote("q1", A, "nucleus", &map, 0).unwrap();
        let out = st.quiz.try_submit("q1", Some("nucleus"), Some("nucleus"), 100).unwrap();
        assert_eq!(out.reason, Some(RejectReason::AwaitingPartner));
    }

    #[test]
    fn changed_proposal_withdraws_vote() {
        let (map, mut st) = setup();
        st.quiz.cast_vote("q1", A, "nucleus", &map, 0).unwrap();
        st.quiz.cast_vote("q1", B, "nucleus", &map, 0).unwrap();
        st.quiz.propose_answer("q1", B, "golgi", &map, 0).unwrap();
        let out = st.quiz.try_submit("q1", Some("nucleus"), Some("nucleus"), 100).unwrap();
        assert_eq!(out.reason, Some(RejectReason::AwaitingPartner));
    }

    fn answer_all(st: &mut QuizState, map: &ZoneMap, zones: &[&str], t0: u64, t_end: u64) {
        let ids: Vec<String> = st.questions.iter().map(|q| q.q_id.clone()).collect();
        st.navigate(&ids[0], t0).unwrap();
        for (i, (q, z)) in ids.iter().zip(zones).enumerate() {
            st.cast_vote(q, A, z, map, t0).unwrap();
            st.cast_vote(q, B, z, map, t0).unwrap();
            let t = if i + 1 == ids.len() { t_end } else { t0 + 1 };
            assert!(st.try_submit(q, Some(z), Some(z), t).unwrap().accepted);
        }
    }

    #[test]
    fn report_full_marks_and_duration() {
        let (map, mut st) = setup();
        assert!(matches!(st.quiz.quiz_report(), Err(ActivityError::QuizNotFinished)));
        answer_all(&mut st.quiz, &map, &["nucleus", "golgi", "mitochondrion", "lysosome", "cytosol"], 0, 151_000);
        let report = st.quiz.quiz_report().unwrap();
        assert_eq!(report.score, 5);
        assert_eq!(report.duration_s, 151.0);
    }

    #[test]
    fn report_zero_when_all_wrong() {
        let (map, mut st) = setup();
        answer_all(&mut st.quiz, &map, &["golgi", "nucleus", "lysosome", "cytosol", "mitochondrion"], 10, 500);
        let report = st.quiz.quiz_report().unwrap();
        assert_eq!(report.score, 0);
        assert!(report.duration_s > 0.0);
    }
}
