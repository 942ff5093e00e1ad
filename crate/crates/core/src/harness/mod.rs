//! Desk-scale replication of the operator study: tasks, scripted agents,
//! metrics and reports.

mod agents;
mod link;
mod metrics;
mod oracle;
mod profile;
mod tasks;

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use agents::{AgentError, Operator, BOX_GOALS, SETTLE_TIMEOUT};
pub use link::{LinkError, OperatorLink, RemoteLink, SimulatedLink};
pub use metrics::{
    autonomy_periods, mean_period, read_log, total_autonomy, AutonomyPeriod, MetricsError,
    PeriodTracker, AUTONOMY_THRESHOLD, GAP_TOLERANCE,
};
pub use oracle::{algorithm1_oracle, OracleError, OracleOutcome};
pub use profile::{Gesture, HumanLatencyProfile};
pub use tasks::{
    pick_and_place_done, screws_done, target_drawer, task_score, training_done, wipe_done,
    ExplorationStage, TaskDefinition, TaskMonitor, TASKS, TASK_COUNT,
};

use crate::protocol::{LinkConfig, Mode, SessionConfig};
use crate::world::{WorkspaceSpec, WorkspaceState};

/// Session length of the study.
pub const STUDY_BUDGET: f64 = 900.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub mode: Mode,
    pub score: u32,
    pub total_autonomy: f64,
    pub periods: Vec<AutonomyPeriod>,
    pub wall_time: f64,
    pub command_count: u64,
}

impl SessionReport {
    pub fn mean_period(&self) -> f64 {
        mean_period(&self.periods)
    }
}

#[derive(Debug, Serialize)]
struct ReportRow {
    mode: Mode,
    score: u32,
    total_autonomy_s: f64,
    n_periods: usize,
    mean_period_s: f64,
    wall_time_s: f64,
    command_count: u64,
}

pub fn write_report<W: Write>(reports: &[SessionReport], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(ReportRow {
            mode: r.mode,
            score: r.score,
            total_autonomy_s: r.total_autonomy,
            n_periods: r.periods.len(),
            mean_period_s: r.mean_period(),
            wall_time_s: r.wall_time,
            command_count: r.command_count,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub profile: HumanLatencyProfile,
    /// Session length in seconds; unlimited when absent.
    pub budget: Option<f64>,
    pub link: LinkConfig,
    pub session: SessionConfig,
    pub tasks: Vec<u8>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            profile: HumanLatencyProfile::default(),
            budget: Some(STUDY_BUDGET),
            link: LinkConfig::default(),
            session: SessionConfig::default(),
            tasks: (0..TASK_COUNT as u8).collect(),
        }
    }
}

/// Outcome of one scripted session.
#[derive(Debug, Clone)]
pub struct AgentRun {
    pub report: SessionReport,
    pub item_count: Option<u32>,
    pub failures: Vec<(u8, String)>,
}

/// Runs the mode's script over `link` until it finishes or the budget is spent.
pub fn drive(link: &mut dyn OperatorLink, spec: &WorkspaceSpec, config: &StudyConfig) -> Result<AgentRun, AgentError> {
    let mode = link.mode();
    let mut op = Operator::new(link, spec, config.profile);
    match op.run(&config.tasks) {
        Ok(()) => {}
        Err(e) if e.is_out_of_time() => {}
        Err(e) => return Err(e),
    }
    let item_count = op.item_count;
    let failures = std::mem::take(&mut op.failures);
    drop(op);
    let end = link.now();
    let mut tracker = PeriodTracker::new(AUTONOMY_THRESHOLD, GAP_TOLERANCE);
    let events: Vec<_> = link.events().iter().filter(|e| e.sim_time <= end).cloned().collect();
    tracker
        .feed(&events)
        .map_err(|e| AgentError::Script(e.to_string()))?;
    let periods = tracker.finish(Some(end));
    Ok(AgentRun {
        report: SessionReport {
            mode,
            score: link.score(),
            total_autonomy: total_autonomy(&periods),
            periods,
            wall_time: end,
            command_count: link.commands_sent(),
        },
        item_count,
        failures,
    })
}

/// Runs one agent against an in-process session; returns the final world too.
pub fn run_agent(spec: Arc<WorkspaceSpec>, mode: Mode, config: &StudyConfig) -> Result<(AgentRun, WorkspaceState), AgentError> {
    let mut link = SimulatedLink::new(spec.clone(), mode, config.link, config.session)?;
    link.set_deadline(config.budget);
    let run = drive(&mut link, &spec, config)?;
    Ok((run, link.world_state().clone()))
}
