//! Per-session report built from a trace and its event log.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::activity::Participant;
use crate::exec::Execution;
use crate::session::wire::{Envelope, Message};
use crate::trace::analysis::{correlation_matrix, resample, tandem_fraction, CorrelationReport};
use crate::trace::{TraceError, TraceSample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryOptions {
    pub hz: f64,
    pub n_perm: u64,
    pub seed: u64,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        Self {
            hz: 10.0,
            n_perm: 10_000,
            seed: 0,
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_digest: Option<String>,
    /// Absent when the log has no quiz completion.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quiz_duration_s: Option<f64>,
    pub score: u32,
    pub questions_answered: u32,
    pub tasks_done: u32,
    pub tandem_fraction: f64,
    pub mean_distance_mm: f64,
    /// Seconds spent per zone, keyed by robot then zone.
    pub dwell_s: BTreeMap<String, BTreeMap<String, f64>>,
    pub correlation: CorrelationReport,
    pub n_trace_samples: usize,
    pub warnings: Vec<String>,
}

/// Per-zone dwell from consecutive raw samples; each interval counts for
/// the zone of its opening sample.
pub fn dwell_seconds(trace: &[TraceSample]) -> BTreeMap<String, BTreeMap<String, f64>> {
    let mut out: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for robot in Participant::BOTH {
        let samples: Vec<&TraceSample> = trace.iter().filter(|s| s.robot_id == robot).collect();
        let per_zone = out.entry(robot.to_string()).or_default();
        for w in samples.windows(2) {
            let dt = (w[1].t_ms - w[0].t_ms) as f64 / 1000.0;
            *per_zone.entry(w[0].zone_id.clone()).or_default() += dt;
        }
    }
    out
}

struct QuizFacts {
    started: Option<u64>,
    finished: Option<u64>,
    score: u32,
    answered: u32,
    tasks_done: u32,
    session_id: Option<String>,
    mode: Option<String>,
    digest: Option<String>,
}

fn quiz_facts(events: &[Envelope]) -> QuizFacts {
    let mut facts = QuizFacts {
        started: None,
        finished: None,
        score: 0,
        answered: 0,
        tasks_done: 0,
        session_id: None,
        mode: None,
        digest: None,
    };
    let mut answered = BTreeSet::new();
    let mut tasks = BTreeSet::new();
    for e in events {
        match &e.msg {
            Message::SessionStart(s) if facts.session_id.is_none() => {
                facts.session_id = Some(s.session_id.clone());
                facts.mode = Some(s.config.mode.to_string());
                facts.digest = Some(s.config.digest());
            }
            Message::QuizNav(_) | Message::Propose(_) | Message::Agree(_) if e.from.participant().is_some() => {
                facts.started.get_or_insert(e.t_ms);
            }
            Message::TaskTick(t) if t.done && e.from.participant().is_some() => {
                tasks.insert(t.task_id.clone());
            }
            Message::SubmitResult(r) if r.accepted && answered.insert(r.q_id.clone()) => {
                facts.answered += 1;
                if r.correct == Some(true) {
                    facts.score += 1;
                }
                if r.quiz_finished {
                    facts.finished = Some(e.t_ms);
                }
            }
            _ => {}
        }
    }
    facts.tasks_done = tasks.len() as u32;
    facts
}

/// Builds the session report. Trace problems are errors; an incomplete
/// event log only produces warnings.
pub fn session_summary(trace: &[TraceSample], events: &[Envelope], opts: &SummaryOptions) -> Result<SessionReport, TraceError> {
    let aligned = resample(trace, opts.hz)?;
    let correlation = correlation_matrix(&aligned, opts.n_perm, opts.seed, opts.exec)?;
    let facts = quiz_facts(events);
    let mut warnings = Vec::new();
    if events.is_empty() {
        warnings.push("event log is empty".to_string());
    }
    let quiz_duration_s = match (facts.started, facts.finished) {
        (Some(s), Some(f)) => Some(f.saturating_sub(s) as f64 / 1000.0),
        (_, None) => {
            warnings.push("quiz not finished: quiz_duration_s omitted".to_string());
            None
        }
        (None, Some(_)) => {
            warnings.push("quiz start not found: quiz_duration_s omitted".to_string());
            None
        }
    };
    Ok(SessionReport {
        session_id: facts.session_id,
        mode: facts.mode,
        config_digest: facts.digest,
        quiz_duration_s,
        score: facts.score,
        questions_answered: facts.answered,
        tasks_done: facts.tasks_done,
        tandem_fraction: tandem_fraction(&aligned),
        mean_distance_mm: aligned.mean_distance_mm(),
        dwell_s: dwell_seconds(trace),
        correlation,
        n_trace_samples: trace.len(),
        warnings,
    })
}

/// Writes `A_xy.csv` and `B_xy.csv` (t_ms, x_mm, y_mm) into `dir`.
pub fn write_plot_csvs(dir: &Path, trace: &[TraceSample]) -> Result<Vec<PathBuf>, TraceError> {
    let mut paths = Vec::new();
    for robot in Participant::BOTH {
        let path = dir.join(format!("{robot}_xy.csv"));
        let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
        writeln!(f, "t_ms,x_mm,y_mm")?;
        for s in trace.iter().filter(|s| s.robot_id == robot) {
            writeln!(f, "{},{:.3},{:.3}", s.t_ms, s.x_mm, s.y_mm)?;
        }
        f.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::wire::{QuizNav, Sender, SubmitResult};

    fn synthetic_trace() -> Vec<TraceSample> {
        let mut t = Vec::new();
        for k in 0..100u64 {
            let x = 20.0 + k as f64;
            let y = 50.0 + (k as f64 * 0.1).sin() * 30.0;
            let zone = if k < 50 { "cytosol" } else { "nucleus" };
            t.push(TraceSample::new(k * 100, Participant::A, x, y, 0.0, zone));
            t.push(TraceSample::new(k * 100 + 20, Participant::B, x + 5.0, y - 3.0 + (k % 3) as f64, 0.0, zone));
        }
        t
    }

    fn result(q: &str, finished: bool) -> Message {
        Message::SubmitResult(SubmitResult {
            q_id: q.into(),
            accepted: true,
            correct: Some(true),
            reason: None,
            quiz_finished: finished,
        })
    }

    #[test]
    fn full_report() {
        let events = vec![
            Envelope::new(4, 1000, Sender::A, Message::QuizNav(QuizNav { q_id: "q1".into() })),
            Envelope::new(1, 2000, Sender::Server, result("q1", false)),
            Envelope::new(2, 9000, Sender::Server, result("q2", true)),
        ];
        let opts = SummaryOptions {
            n_perm: 200,
            ..Default::default()
        };
        let rep = session_summary(&synthetic_trace(), &events, &opts).unwrap();
        assert_eq!(rep.quiz_duration_s, Some(8.0));
        assert_eq!(rep.score, 2);
        assert!(rep.warnings.is_empty());
        assert!(rep.correlation.r_of("x1", "x2").unwrap() > 0.99);
        assert!((rep.dwell_s["A"]["cytosol"] - 5.0).abs() < 1e-9);
        let json = serde_json::to_value(&rep).unwrap();
        for key in ["quiz_duration_s", "score", "dwell_s", "tandem_fraction", "correlation"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn unfinished_quiz_omits_duration() {
        let opts = SummaryOptions {
            n_perm: 0,
            ..Default::default()
        };
        let rep = session_summary(&synthetic_trace(), &[], &opts).unwrap();
        assert_eq!(rep.quiz_duration_s, None);
        assert!(rep.warnings.iter().any(|w| w.contains("quiz not finished")));
        let json = serde_json::to_value(&rep).unwrap();
        assert!(json.get("quiz_duration_s").is_none());
    }
}
