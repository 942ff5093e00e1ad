//! Autonomy periods from the robot_moving / robot_idle event stream.

use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{EventKind, ExecutionEvent};
use crate::protocol::LogEntry;

pub const AUTONOMY_THRESHOLD: f64 = 10.0;
pub const GAP_TOLERANCE: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("malformed log: {0}")]
    MalformedLog(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutonomyPeriod {
    pub start: f64,
    pub end: f64,
}

impl AutonomyPeriod {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Incremental period extraction over event batches of any size.
#[derive(Debug, Clone)]
pub struct PeriodTracker {
    threshold: f64,
    gap: f64,
    since: Option<f64>,
    last_t: f64,
    current: Option<AutonomyPeriod>,
    periods: Vec<AutonomyPeriod>,
}

impl PeriodTracker {
    pub fn new(threshold: f64, gap: f64) -> Self {
        Self {
            threshold,
            gap,
            since: None,
            last_t: f64::NEG_INFINITY,
            current: None,
            periods: Vec::new(),
        }
    }

    pub fn feed(&mut self, events: &[ExecutionEvent]) -> Result<(), MetricsError> {
        for ev in events {
            if ev.sim_time < self.last_t {
                return Err(MetricsError::MalformedLog(format!("time goes back at {}", ev.sim_time)));
            }
            self.last_t = ev.sim_time;
            match ev.kind {
                EventKind::RobotMoving => {
                    if self.since.is_some() {
                        return Err(MetricsError::MalformedLog(format!("robot_moving twice at {}", ev.sim_time)));
                    }
                    self.since = Some(ev.sim_time);
                }
                EventKind::RobotIdle => {
                    let start = self.since.take().ok_or_else(|| {
                        MetricsError::MalformedLog(format!("robot_idle without motion at {}", ev.sim_time))
                    })?;
                    self.push_interval(start, ev.sim_time);
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn push_interval(&mut self, start: f64, end: f64) {
        match self.current.as_mut() {
            Some(p) if start - p.end <= self.gap => p.end = p.end.max(end),
            _ => {
                if let Some(p) = self.current.take() {
                    self.keep(p);
                }
                self.current = Some(AutonomyPeriod { start, end });
            }
        }
    }

    fn keep(&mut self, p: AutonomyPeriod) {
        if p.duration() > self.threshold {
            self.periods.push(p);
        }
    }

    /// Closes the stream; motion still running is cut at `end` when given.
    pub fn finish(mut self, end: Option<f64>) -> Vec<AutonomyPeriod> {
        if let (Some(start), Some(end)) = (self.since.take(), end) {
            self.push_interval(start, end.max(start));
        }
        if let Some(p) = self.current.take() {
            self.keep(p);
        }
        self.periods
    }
}

pub fn autonomy_periods(
    events: &[ExecutionEvent],
    threshold: f64,
    gap: f64,
) -> Result<Vec<AutonomyPeriod>, MetricsError> {
    let mut t = PeriodTracker::new(threshold, gap);
    t.feed(events)?;
    Ok(t.finish(None))
}

pub fn total_autonomy(periods: &[AutonomyPeriod]) -> f64 {
    periods.iter().fold(0.0, |acc, p| acc + p.duration())
}

pub fn mean_period(periods: &[AutonomyPeriod]) -> f64 {
    if periods.is_empty() {
        0.0
    } else {
        total_autonomy(periods) / periods.len() as f64
    }
}

/// Execution events of a JSONL session log; command lines are skipped.
pub fn read_log<R: BufRead>(reader: R) -> Result<Vec<ExecutionEvent>, MetricsError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| MetricsError::MalformedLog(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: LogEntry = serde_json::from_str(&line)
            .map_err(|e| MetricsError::MalformedLog(format!("line {}: {e}", i + 1)))?;
        if let LogEntry::Event { event, .. } = entry {
            out.push(event);
        }
    }
    Ok(out)
}
