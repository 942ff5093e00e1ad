use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    nudged, CommandBody, CommandMsg, EntryStatus, ErrorCode, ErrorMsg, Mode, PlanViewEntry,
    SceneObject, StateMsg, PROTOCOL_VERSION,
};
use crate::executor::{EventKind, ExecState, ExecutionEvent, Executor, ExecutorError, ExecutorStatus, PlanId};
use crate::harness::TaskMonitor;
use crate::perception::{describe, FrameDescription};
use crate::plan::{author_plan, single_action_program, PlanError, Primitive, PrimitiveProgram};
use crate::world::{World, WorkspaceSpec, WorkspaceState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionConfig {
    /// Detection pose noise, meters.
    pub sigma: f64,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self { sigma: 0.0, seed: 0 }
    }
}

/// One line of the JSONL session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogEntry {
    Event {
        sim_time: f64,
        wall_time: f64,
        event: ExecutionEvent,
    },
    Command {
        sim_time: f64,
        wall_time: f64,
        command: CommandMsg,
    },
}

#[derive(Debug, Clone)]
struct PlanRecord {
    labels: Vec<String>,
    spans: Vec<(usize, usize)>,
    finished: bool,
    cancelled: bool,
}

/// Everything bound to one operator connection: the executor, the mode and
/// sequence gate, the current frame and the plan view.
pub struct Session {
    spec: Arc<WorkspaceSpec>,
    config: SessionConfig,
    exec: Executor,
    mode: Option<Mode>,
    last_seq: Option<u64>,
    ack: Option<u64>,
    frame: FrameDescription,
    frame_tick: u64,
    plans: BTreeMap<PlanId, PlanRecord>,
    monitor: TaskMonitor,
    log: Option<Box<dyn Write + Send>>,
    commands_applied: u64,
}

fn error_code(e: &ExecutorError) -> ErrorCode {
    match e {
        ExecutorError::SafetyLocked => ErrorCode::SafetyLocked,
        ExecutorError::NotLocked => ErrorCode::NotLocked,
        ExecutorError::NoSuchPlan(_) => ErrorCode::NoSuchPlan,
    }
}

impl Session {
    pub fn new(spec: Arc<WorkspaceSpec>, config: SessionConfig) -> Self {
        let world = World::new(spec.clone());
        let frame = describe(&spec, world.state(), 1, config.sigma, config.seed);
        let monitor = TaskMonitor::new(&spec);
        Self {
            spec,
            config,
            exec: Executor::new(world),
            mode: None,
            last_seq: None,
            ack: None,
            frame,
            frame_tick: 0,
            plans: BTreeMap::new(),
            monitor,
            log: None,
            commands_applied: 0,
        }
    }

    pub fn with_log(mut self, log: Box<dyn Write + Send>) -> Self {
        self.log = Some(log);
        self
    }

    pub fn spec(&self) -> &Arc<WorkspaceSpec> {
        &self.spec
    }

    pub fn executor(&self) -> &Executor {
        &self.exec
    }

    pub fn state(&self) -> &WorkspaceState {
        self.exec.world().state()
    }

    pub fn monitor(&self) -> &TaskMonitor {
        &self.monitor
    }

    pub fn mode(&self) -> Option<Mode> {
        self.mode
    }

    pub fn commands_applied(&self) -> u64 {
        self.commands_applied
    }

    /// Forgets the mode and sequence numbers when a new operator connects.
    pub fn reset_link(&mut self) {
        self.mode = None;
        self.last_seq = None;
        self.ack = None;
    }

    /// Frame of the current tick; the id only advances when the view changes.
    pub fn frame(&mut self) -> &FrameDescription {
        let tick = self.state().tick;
        if tick != self.frame_tick {
            let next = describe(&self.spec, self.exec.world().state(), self.frame.frame_id, self.config.sigma, self.config.seed);
            if !next.same_view(&self.frame) {
                self.frame = FrameDescription {
                    frame_id: self.frame.frame_id + 1,
                    ..next
                };
            }
            self.frame_tick = tick;
        }
        &self.frame
    }

    fn write_log(&mut self, entry: &LogEntry) {
        if let Some(log) = self.log.as_mut() {
            let line = serde_json::to_string(entry).expect("log entry serializes");
            if let Err(e) = writeln!(log, "{line}") {
                tracing::warn!("session log write failed: {e}");
                self.log = None;
            }
        }
    }

    /// Validates and applies one command at the current tick.
    pub fn handle(&mut self, msg: &CommandMsg, wall_time: f64) -> Result<(), ErrorMsg> {
        let seq = Some(msg.seq);
        if msg.v != PROTOCOL_VERSION {
            return Err(ErrorMsg::new(seq, ErrorCode::UnsupportedVersion, format!("version {}", msg.v)));
        }
        if self.last_seq.is_some_and(|last| msg.seq <= last) {
            return Err(ErrorMsg::new(
                seq,
                ErrorCode::DuplicateSeq,
                format!("seq {} not after {}", msg.seq, self.last_seq.unwrap_or(0)),
            ));
        }
        self.last_seq = Some(msg.seq);
        let mode = *self.mode.get_or_insert(msg.mode);
        if msg.mode != mode || !msg.body.allowed_in(mode) {
            return Err(ErrorMsg::new(
                seq,
                ErrorCode::ModeViolation,
                format!("{} is not available in {} mode", msg.body.name(), mode),
            ));
        }
        self.apply(&msg.body).map_err(|(code, m)| ErrorMsg::new(seq, code, m))?;
        self.ack = Some(msg.seq);
        self.commands_applied += 1;
        let entry = LogEntry::Command {
            sim_time: self.exec.sim_time(),
            wall_time,
            command: msg.clone(),
        };
        self.write_log(&entry);
        Ok(())
    }

    fn direct(&mut self, primitives: Vec<Primitive>) -> Result<(), (ErrorCode, String)> {
        if self.exec.is_locked() {
            return Err((ErrorCode::SafetyLocked, "robot is safety locked".into()));
        }
        if !self.exec.is_idle() {
            return Err((ErrorCode::RobotBusy, "a plan is executing".into()));
        }
        self.exec
            .enqueue(PrimitiveProgram::new(primitives))
            .map_err(|e| (error_code(&e), e.to_string()))?;
        Ok(())
    }

    fn check_frame(&mut self, frame_id: u64) -> Result<(), (ErrorCode, String)> {
        let latest = self.frame().frame_id;
        if frame_id != latest {
            let e = PlanError::StaleFrame { seen: frame_id, latest };
            return Err((ErrorCode::StaleFrame, e.to_string()));
        }
        Ok(())
    }

    fn enqueue_plan(&mut self, labels: Vec<String>, program: PrimitiveProgram) -> Result<(), (ErrorCode, String)> {
        let spans = program.spans.iter().map(|s| (s.start, s.end)).collect();
        let id = self
            .exec
            .enqueue(program)
            .map_err(|e| (error_code(&e), e.to_string()))?;
        self.plans.insert(
            id,
            PlanRecord {
                labels,
                spans,
                finished: false,
                cancelled: false,
            },
        );
        Ok(())
    }

    fn apply(&mut self, body: &CommandBody) -> Result<(), (ErrorCode, String)> {
        let grounding = |e: PlanError| {
            let code = if matches!(e, PlanError::StaleFrame { .. }) {
                ErrorCode::StaleFrame
            } else {
                ErrorCode::Grounding
            };
            (code, e.to_string())
        };
        let physics = *self.exec.world().physics();
        match body {
            CommandBody::CartesianGoto { pose } => self.direct(vec![Primitive::MoveTo { pose: *pose }]),
            CommandBody::CameraNudge { axis, positive } => {
                let ee = self.state().ee_pose;
                let pose = nudged(&ee, *axis, *positive, physics.nudge_step, physics.nudge_angle);
                self.direct(vec![Primitive::MoveTo { pose }])
            }
            CommandBody::Grasp => self.direct(vec![Primitive::Grasp]),
            CommandBody::Release => self.direct(vec![Primitive::Release]),
            CommandBody::Reset => {
                let home = self.spec.home;
                self.direct(vec![Primitive::MoveTo { pose: home }])
            }
            CommandBody::SingleAction { frame_id, action } => {
                self.check_frame(*frame_id)?;
                let frame = self.frame().clone();
                let (plan, program) =
                    single_action_program(action, &frame, &self.spec, self.exec.world().state()).map_err(grounding)?;
                self.enqueue_plan(plan.labels(), program)
            }
            CommandBody::SubmitPlan { frame_id, areas } => {
                self.check_frame(*frame_id)?;
                let frame = self.frame().clone();
                let (plan, program) =
                    author_plan(areas, &frame, frame.frame_id, &self.spec, self.exec.world().state())
                        .map_err(grounding)?;
                self.enqueue_plan(plan.labels(), program)
            }
            CommandBody::Cancel { plan } => {
                let id = plan
                    .or(self.exec.status().current_plan)
                    .ok_or((ErrorCode::NoSuchPlan, "no plan is running".to_string()))?;
                self.exec.cancel(id).map_err(|e| (error_code(&e), e.to_string()))?;
                Ok(())
            }
            CommandBody::Resume => {
                self.exec.resume().map_err(|e| (error_code(&e), e.to_string()))?;
                Ok(())
            }
        }
    }

    /// Events produced outside a tick, such as by an applied command.
    pub fn drain_events(&mut self, wall_time: f64) -> Vec<ExecutionEvent> {
        let events = self.exec.drain_events();
        self.record(&events, wall_time);
        events
    }

    pub fn tick(&mut self, wall_time: f64) -> Vec<ExecutionEvent> {
        let events = self.exec.run_tick();
        self.monitor.observe(&self.spec, self.exec.world().state());
        self.record(&events, wall_time);
        events
    }

    fn record(&mut self, events: &[ExecutionEvent], wall_time: f64) {
        for ev in events {
            match ev.kind {
                EventKind::PlanFinished { plan } => {
                    if let Some(r) = self.plans.get_mut(&plan) {
                        r.finished = true;
                    }
                }
                EventKind::Cancelled { plan } => {
                    if let Some(r) = self.plans.get_mut(&plan) {
                        r.cancelled = true;
                    }
                }
                _ => {}
            }
            let entry = LogEntry::Event {
                sim_time: ev.sim_time,
                wall_time,
                event: ev.clone(),
            };
            self.write_log(&entry);
        }
    }

    pub fn game_plan_view(&self) -> Vec<PlanViewEntry> {
        let status = self.exec.status();
        let mut out = Vec::new();
        for (id, r) in &self.plans {
            let active_action = (status.current_plan == Some(*id))
                .then(|| status.current_primitive)
                .flatten()
                .and_then(|p| r.spans.iter().position(|(s, e)| *s <= p && p < *e));
            let running = status.current_plan == Some(*id);
            for (i, label) in r.labels.iter().enumerate() {
                let status = if r.finished {
                    EntryStatus::Done
                } else if r.cancelled {
                    EntryStatus::Cancelled
                } else if running {
                    match active_action {
                        Some(a) if i < a => EntryStatus::Done,
                        Some(a) if i == a => EntryStatus::Active,
                        _ => EntryStatus::Pending,
                    }
                } else {
                    EntryStatus::Pending
                };
                out.push(PlanViewEntry {
                    plan: *id,
                    label: label.clone(),
                    status,
                });
            }
        }
        out
    }

    pub fn executor_status(&self) -> ExecutorStatus {
        self.exec.status()
    }

    pub fn is_quiet(&self) -> bool {
        self.exec.status().state == ExecState::Idle && !self.exec.is_moving()
    }

    pub fn state_msg(&mut self) -> StateMsg {
        let frame = self.frame().clone();
        let state = self.exec.world().state();
        StateMsg {
            sim_time: state.sim_time,
            frame,
            scene: state.objects.iter().map(SceneObject::from).collect(),
            dirt_cleared: state.dirt_field.cleared_fraction(),
            executor: self.exec.status(),
            moving: self.exec.is_moving(),
            game_plan_view: self.game_plan_view(),
            ack: self.ack,
            tasks_done: self.monitor.done(),
        }
    }

    /// Fields whose change triggers an immediate state message.
    pub fn publish_key(&self) -> (ExecutorStatus, bool, Option<u64>, Vec<u8>) {
        (self.exec.status(), self.exec.is_moving(), self.ack, self.monitor.done())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::NudgeAxis;
    use crate::ObjectClass;
    use crate::plan::{ActionKind, ActionSpec};

    fn session() -> Session {
        Session::new(Arc::new(WorkspaceSpec::default_layout()), SessionConfig::default())
    }

    fn settle(s: &mut Session) {
        for _ in 0..200_000 {
            s.tick(0.0);
            if s.is_quiet() {
                return;
            }
        }
        panic!("session did not settle");
    }

    #[test]
    fn first_command_fixes_mode() {
        let mut s = session();
        s.handle(&CommandMsg::new(1, Mode::Cc, CommandBody::Reset), 0.0).unwrap();
        let err = s
            .handle(&CommandMsg::new(2, Mode::Tla, CommandBody::Reset), 0.0)
            .unwrap_err();
        assert_eq!(err.code, ErrorCode::ModeViolation);
        let err = s
            .handle(
                &CommandMsg::new(3, Mode::Cc, CommandBody::SubmitPlan { frame_id: 1, areas: vec![] }),
                0.0,
            )
            .unwrap_err();
        assert_eq!(err.code, ErrorCode::ModeViolation);
    }

    #[test]
    fn duplicate_seq_is_rejected_once_applied() {
        let mut s = session();
        let msg = CommandMsg::new(5, Mode::Cc, CommandBody::Release);
        s.handle(&msg, 0.0).unwrap();
        settle(&mut s);
        assert_eq!(s.handle(&msg, 0.0).unwrap_err().code, ErrorCode::DuplicateSeq);
        assert_eq!(s.commands_applied(), 1);
        assert_eq!(s.state_msg().ack, Some(5));
    }

    #[test]
    fn direct_commands_need_idle_robot() {
        let mut s = session();
        let up = CommandBody::CameraNudge { axis: NudgeAxis::Z, positive: true };
        s.handle(&CommandMsg::new(1, Mode::Pc, up.clone()), 0.0).unwrap();
        s.tick(0.0);
        let err = s.handle(&CommandMsg::new(2, Mode::Pc, up), 0.0).unwrap_err();
        assert_eq!(err.code, ErrorCode::RobotBusy);
    }

    #[test]
    fn nudge_moves_five_centimeters_up() {
        let mut s = session();
        let before = s.state().ee_pose;
        let up = CommandBody::CameraNudge { axis: NudgeAxis::Z, positive: true };
        s.handle(&CommandMsg::new(1, Mode::Tla, up), 0.0).unwrap();
        settle(&mut s);
        let after = s.state().ee_pose;
        assert!(((after.position - before.position).norm() - 0.05).abs() <= 1e-12);
    }

    #[test]
    fn single_loosen_enqueues_four_primitives() {
        let mut s = session();
        let frame_id = s.frame().frame_id;
        let screw = s.frame().markers.iter().find(|m| m.class == ObjectClass::Screw).unwrap().object_id.clone();
        let action = ActionSpec::on_object(ActionKind::Loosen, &screw);
        s.handle(&CommandMsg::new(1, Mode::Pc, CommandBody::SingleAction { frame_id, action }), 0.0)
            .unwrap();
        let (_, program, _) = s
            .executor()
            .queued()
            .next()
            .map(|(id, p)| (*id, p, 0))
            .unwrap();
        assert_eq!(program.len(), 4);
        assert_eq!(s.game_plan_view().len(), 1);
        settle(&mut s);
        assert_eq!(s.state().object(&screw).unwrap().articulation_value(), Some(0.0));
        assert_eq!(s.game_plan_view()[0].status, EntryStatus::Done);
    }

    #[test]
    fn stale_frame_is_reported() {
        let mut s = session();
        let frame_id = s.frame().frame_id;
        s.handle(&CommandMsg::new(1, Mode::Tla, CommandBody::CameraNudge { axis: NudgeAxis::X, positive: true }), 0.0)
            .unwrap();
        settle(&mut s);
        let err = s
            .handle(&CommandMsg::new(2, Mode::Tla, CommandBody::SubmitPlan { frame_id, areas: vec![] }), 0.0)
            .unwrap_err();
        assert_eq!(err.code, ErrorCode::StaleFrame);
    }

    #[test]
    fn frame_id_is_stable_while_view_is_unchanged() {
        let mut s = session();
        let a = s.frame().frame_id;
        s.tick(0.0);
        s.tick(0.0);
        assert_eq!(s.frame().frame_id, a);
    }

    #[test]
    fn cancel_without_plan_errors() {
        let mut s = session();
        let err = s.handle(&CommandMsg::new(1, Mode::Tla, CommandBody::Cancel { plan: None }), 0.0).unwrap_err();
        assert_eq!(err.code, ErrorCode::NoSuchPlan);
        let err = s.handle(&CommandMsg::new(2, Mode::Tla, CommandBody::Resume), 0.0).unwrap_err();
        assert_eq!(err.code, ErrorCode::NotLocked);
    }

    #[test]
    fn log_lines_are_json() {
        let buf = Arc::new(std::sync::Mutex::new(Vec::<u8>::new()));
        struct Shared(Arc<std::sync::Mutex<Vec<u8>>>);
        impl Write for Shared {
            fn write(&mut self, b: &[u8]) -> std::io::Result<usize> {
                self.0.lock().unwrap().write(b)
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }
        let mut s = session().with_log(Box::new(Shared(buf.clone())));
        s.handle(&CommandMsg::new(1, Mode::Cc, CommandBody::Reset), 0.0).unwrap();
        s.drain_events(0.0);
        settle(&mut s);
        let text = String::from_utf8(buf.lock().unwrap().clone()).unwrap();
        let entries: Vec<LogEntry> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert!(matches!(entries[0], LogEntry::Command { .. }));
        assert!(entries.iter().any(|e| matches!(e, LogEntry::Event { event, .. } if matches!(event.kind, EventKind::PlanFinished { .. }))));
    }
}
