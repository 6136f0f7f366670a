//! Session traces and their statistics.

pub mod analysis;
pub mod record;
pub mod summary;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::activity::Participant;

pub use analysis::{
    correlation_matrix, pearson, perm_pvalue, resample, tandem_fraction, AlignedSeries, CorrelationReport,
    PermutationNull, DIMS,
};
pub use record::{read_events, read_trace, write_events, write_trace, TraceWriter};
pub use summary::{session_summary, write_plot_csvs, SessionReport, SummaryOptions};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed trace: {0}")]
    Malformed(String),
    #[error("non-monotone timestamp for robot {robot}: {t_ms} after {prev_ms}")]
    NonMonotone { robot: Participant, t_ms: u64, prev_ms: u64 },
    #[error("both robots required")]
    MissingRobot,
    #[error("no overlap between the robots' time spans")]
    NoOverlap,
    #[error("resample rate must be positive and finite")]
    BadRate,
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two samples")]
    TooShort,
    #[error("zero variance: correlation undefined")]
    ZeroVariance,
    #[error("need at least one permutation")]
    NoPermutations,
}

/// Rounds to the 3 decimal places stored on disk.
pub fn quantize(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// One pose observation, as stamped by the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t_ms: u64,
    pub robot_id: Participant,
    pub x_mm: f64,
    pub y_mm: f64,
    pub theta_rad: f64,
    pub zone_id: String,
}

impl TraceSample {
    /// Builds a sample with coordinates quantized as they will be written.
    pub fn new(t_ms: u64, robot_id: Participant, x_mm: f64, y_mm: f64, theta_rad: f64, zone_id: impl Into<String>) -> Self {
        Self {
            t_ms,
            robot_id,
            x_mm: quantize(x_mm),
            y_mm: quantize(y_mm),
            theta_rad: quantize(theta_rad),
            zone_id: zone_id.into(),
        }
    }
}

/// Checks that timestamps never decrease per robot.
pub fn check_monotone(trace: &[TraceSample]) -> Result<(), TraceError> {
    let mut last = [None::<u64>; 2];
    for s in trace {
        let slot = &mut last[s.robot_id as usize];
        if let Some(prev) = *slot {
            if s.t_ms < prev {
                return Err(TraceError::NonMonotone {
                    robot: s.robot_id,
                    t_ms: s.t_ms,
                    prev_ms: prev,
                });
            }
        }
        *slot = Some(s.t_ms);
    }
    Ok(())
}
