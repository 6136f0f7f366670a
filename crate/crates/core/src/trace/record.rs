//! Trace CSV and events JSONL on disk.
//!
//! ```text
//! # session_config_sha256=9f2c...
//! t_ms,robot_id,x_mm,y_mm,theta_rad,zone_id
//! 1500,A,102.300,88.000,0.000,nucleus
//! ```

use std::io::{BufRead, BufReader, Read, Write};

use serde::Deserialize;

use crate::activity::Participant;
use crate::session::wire::{decode, Envelope};
use crate::trace::{check_monotone, TraceError, TraceSample};

pub const TRACE_HEADER: [&str; 6] = ["t_ms", "robot_id", "x_mm", "y_mm", "theta_rad", "zone_id"];
const DIGEST_PREFIX: &str = "# session_config_sha256=";

fn csv_error(e: csv::Error) -> TraceError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => TraceError::Io(io),
        other => TraceError::Malformed(format!("{other:?}")),
    }
}

/// Streaming CSV writer enforcing per-robot timestamp order.
pub struct TraceWriter<W: Write> {
    out: csv::Writer<W>,
    last: [Option<u64>; 2],
}

impl<W: Write> TraceWriter<W> {
    /// Writes the optional config digest line and the header row.
    pub fn new(mut sink: W, config_digest: Option<&str>) -> Result<Self, TraceError> {
        if let Some(d) = config_digest {
            writeln!(sink, "{DIGEST_PREFIX}{d}")?;
        }
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(sink);
        out.write_record(TRACE_HEADER).map_err(csv_error)?;
        Ok(Self { out, last: [None; 2] })
    }

    pub fn write(&mut self, s: &TraceSample) -> Result<(), TraceError> {
        let slot = &mut self.last[s.robot_id as usize];
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
        self.out
            .write_record([
                s.t_ms.to_string(),
                s.robot_id.to_string(),
                format!("{:.3}", s.x_mm),
                format!("{:.3}", s.y_mm),
                format!("{:.3}", s.theta_rad),
                s.zone_id.clone(),
            ])
            .map_err(csv_error)
    }

    pub fn finish(self) -> Result<W, TraceError> {
        self.out
            .into_inner()
            .map_err(|e| TraceError::Io(std::io::Error::other(e.to_string())))
    }
}

pub fn write_trace<W: Write>(sink: W, samples: &[TraceSample], config_digest: Option<&str>) -> Result<(), TraceError> {
    let mut w = TraceWriter::new(sink, config_digest)?;
    for s in samples {
        w.write(s)?;
    }
    w.finish()?.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct Row {
    t_ms: u64,
    robot_id: Participant,
    x_mm: f64,
    y_mm: f64,
    theta_rad: f64,
    zone_id: String,
}

/// Loads a trace CSV; returns the samples and the config digest if present.
pub fn read_trace<R: Read>(source: R) -> Result<(Vec<TraceSample>, Option<String>), TraceError> {
    let mut text = String::new();
    BufReader::new(source).read_to_string(&mut text)?;
    let digest = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.strip_prefix(DIGEST_PREFIX))
        .map(|d| d.trim().to_string());
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = reader.headers().map_err(csv_error)?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(TraceError::Malformed(format!(
            "expected header {}, got {}",
            TRACE_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut samples = Vec::new();
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(csv_error)?;
        samples.push(TraceSample {
            t_ms: row.t_ms,
            robot_id: row.robot_id,
            x_mm: row.x_mm,
            y_mm: row.y_mm,
            theta_rad: row.theta_rad,
            zone_id: row.zone_id,
        });
    }
    check_monotone(&samples)?;
    Ok((samples, digest))
}

/// One envelope per line.
pub fn write_events<W: Write>(mut sink: W, events: &[Envelope]) -> Result<(), TraceError> {
    for e in events {
        writeln!(sink, "{}", e.to_json())?;
    }
    sink.flush()?;
    Ok(())
}

pub fn read_events<R: Read>(source: R) -> Result<Vec<Envelope>, TraceError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(decode(line.as_bytes()).map_err(|e| TraceError::Malformed(format!("events line {}: {e}", i + 1)))?);
    }
    Ok(out)
}
