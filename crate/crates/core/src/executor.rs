//! Asynchronous execution of primitive programs against the world tick loop,
//! with the safety lock and the timestamped event stream.

use std::collections::VecDeque;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose6D, Vec3};
use crate::plan::{Primitive, PrimitiveProgram};
use crate::world::World;

pub type PlanId = u64;

/// Position tolerance for completing a move.
pub const POSITION_TOLERANCE: f64 = 1e-3;
/// Orientation tolerance for completing a move.
pub const ANGLE_TOLERANCE: f64 = 1e-2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExecutorError {
    #[error("executor is safety locked")]
    SafetyLocked,
    #[error("executor is not locked")]
    NotLocked,
    #[error("no such plan {0}")]
    NoSuchPlan(PlanId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    PlanAccepted { plan: PlanId },
    PrimitiveStarted { plan: PlanId, index: usize },
    PrimitiveFinished { plan: PlanId, index: usize },
    PlanFinished { plan: PlanId },
    SafetyLock {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        plan: Option<PlanId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        index: Option<usize>,
        force: f64,
    },
    Resumed {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        plan: Option<PlanId>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        index: Option<usize>,
    },
    Cancelled { plan: PlanId },
    RobotMoving,
    RobotIdle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionEvent {
    pub sim_time: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecState {
    Idle,
    Executing,
    SafetyLocked,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutorStatus {
    pub state: ExecState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current_plan: Option<PlanId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub current_primitive: Option<usize>,
    pub queue_depth: usize,
}

/// Progress within the running primitive.
#[derive(Debug, Clone, PartialEq)]
enum Phase {
    /// Waiting before the primitive at `index` starts.
    Dwell(u64),
    Move(Pose6D),
    Contact { origin: Vec3, axis: Vec3, force_limit: f64 },
    Fingers,
    Turn {
        screw: Option<usize>,
        from: f64,
        to: f64,
        ticks: u64,
        elapsed: u64,
    },
    Stroke { legs: [Pose6D; 2], leg: usize },
}

#[derive(Debug, Clone)]
struct Active {
    id: PlanId,
    program: PrimitiveProgram,
    index: usize,
    phase: Phase,
}

#[derive(Debug, Clone)]
pub struct Executor {
    world: World,
    queue: VecDeque<(PlanId, PrimitiveProgram)>,
    active: Option<Active>,
    next_id: PlanId,
    pending: Vec<ExecutionEvent>,
    locked: bool,
    /// Retract target driven before the locked primitive restarts.
    recovery: Option<Pose6D>,
    moving: bool,
    contact_z: Option<f64>,
}

impl Executor {
    pub fn new(world: World) -> Self {
        Self {
            world,
            queue: VecDeque::new(),
            active: None,
            next_id: 1,
            pending: Vec::new(),
            locked: false,
            recovery: None,
            moving: false,
            contact_z: None,
        }
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn sim_time(&self) -> f64 {
        self.world.state().sim_time
    }

    pub fn status(&self) -> ExecutorStatus {
        let state = if self.locked {
            ExecState::SafetyLocked
        } else if self.active.is_some() || !self.queue.is_empty() || self.recovery.is_some() {
            ExecState::Executing
        } else {
            ExecState::Idle
        };
        ExecutorStatus {
            state,
            current_plan: self.active.as_ref().map(|a| a.id),
            current_primitive: self.active.as_ref().map(|a| a.index),
            queue_depth: self.queue.len(),
        }
    }

    /// No plan running or queued and not locked.
    pub fn is_idle(&self) -> bool {
        self.status().state == ExecState::Idle
    }

    pub fn active_program(&self) -> Option<(PlanId, &PrimitiveProgram, usize)> {
        self.active.as_ref().map(|a| (a.id, &a.program, a.index))
    }

    pub fn queued(&self) -> impl Iterator<Item = &(PlanId, PrimitiveProgram)> {
        self.queue.iter()
    }

    fn emit(&mut self, kind: EventKind) {
        let sim_time = self.sim_time();
        self.pending.push(ExecutionEvent { sim_time, kind });
    }

    pub fn enqueue(&mut self, program: PrimitiveProgram) -> Result<PlanId, ExecutorError> {
        if self.locked {
            return Err(ExecutorError::SafetyLocked);
        }
        let id = self.next_id;
        self.next_id += 1;
        self.queue.push_back((id, program));
        self.emit(EventKind::PlanAccepted { plan: id });
        Ok(id)
    }

    pub fn cancel(&mut self, plan: PlanId) -> Result<ExecutorStatus, ExecutorError> {
        if self.active.as_ref().is_some_and(|a| a.id == plan) {
            self.active = None;
            self.world.set_target(None);
            self.world.set_tool_spin(0.0);
            if self.locked {
                self.locked = false;
                self.begin_recovery();
            }
            self.emit(EventKind::Cancelled { plan });
        } else if let Some(pos) = self.queue.iter().position(|(id, _)| *id == plan) {
            self.queue.remove(pos);
            self.emit(EventKind::Cancelled { plan });
        } else {
            return Err(ExecutorError::NoSuchPlan(plan));
        }
        Ok(self.status())
    }

    pub fn resume(&mut self) -> Result<ExecutorStatus, ExecutorError> {
        if !self.locked {
            return Err(ExecutorError::NotLocked);
        }
        self.locked = false;
        self.begin_recovery();
        if let Some(a) = self.active.as_mut() {
            a.phase = Phase::Dwell(0);
        }
        let (plan, index) = match &self.active {
            Some(a) => (Some(a.id), Some(a.index)),
            None => (None, None),
        };
        self.emit(EventKind::Resumed { plan, index });
        Ok(self.status())
    }

    /// Lets go of a drawer handle and backs off along the approach axis.
    fn begin_recovery(&mut self) {
        self.world.release_handle();
        let ee = self.world.state().ee_pose;
        let back = ee.rotation() * Vec3::new(0.0, 0.0, self.world.physics().resume_retract);
        let target = ee.translated(back);
        self.world.set_target(Some(target));
        self.recovery = Some(target);
    }

    /// Advances the world one tick and returns every event since the last call.
    pub fn run_tick(&mut self) -> Vec<ExecutionEvent> {
        if !self.locked && self.recovery.is_none() {
            self.advance_schedule();
        }
        let t0 = self.sim_time();
        self.world.step();

        let moving = self.world.state().motion.moving();
        if moving != self.moving {
            self.moving = moving;
            self.pending.push(ExecutionEvent {
                sim_time: t0,
                kind: if moving {
                    EventKind::RobotMoving
                } else {
                    EventKind::RobotIdle
                },
            });
        }

        if let Some(target) = self.recovery {
            if self.reached(&target) {
                self.recovery = None;
            }
        } else if !self.locked {
            self.check_completion();
        }

        let force = self.world.state().contact_force.norm();
        if !self.locked && force > self.world.physics().f_max {
            self.locked = true;
            self.recovery = None;
            self.world.set_target(None);
            self.world.set_tool_spin(0.0);
            let (plan, index) = match &self.active {
                Some(a) => (Some(a.id), Some(a.index)),
                None => (None, None),
            };
            self.emit(EventKind::SafetyLock { plan, index, force });
        }
        std::mem::take(&mut self.pending)
    }

    /// Events emitted outside a tick, such as by enqueue or cancel.
    pub fn drain_events(&mut self) -> Vec<ExecutionEvent> {
        std::mem::take(&mut self.pending)
    }

    /// Starts the next primitive or plan when the current one allows it.
    fn advance_schedule(&mut self) {
        loop {
            match &mut self.active {
                None => {
                    let Some((id, program)) = self.queue.pop_front() else {
                        return;
                    };
                    if program.is_empty() {
                        self.emit(EventKind::PlanFinished { plan: id });
                        continue;
                    }
                    self.active = Some(Active {
                        id,
                        program,
                        index: 0,
                        phase: Phase::Dwell(0),
                    });
                }
                Some(a) => match a.phase {
                    Phase::Dwell(0) => {
                        let (plan, index) = (a.id, a.index);
                        self.start_primitive();
                        self.emit(EventKind::PrimitiveStarted { plan, index });
                        return;
                    }
                    Phase::Dwell(ref mut n) => {
                        *n -= 1;
                        return;
                    }
                    _ => return,
                },
            }
        }
    }

    fn start_primitive(&mut self) {
        let a = self.active.as_ref().expect("active plan");
        let prim = a.program.primitives[a.index].clone();
        let p = *self.world.physics();
        let ee = self.world.state().ee_pose;
        let phase = match prim {
            Primitive::MoveAbove { pose } => {
                Phase::Move(pose.translated(Vec3::new(0.0, 0.0, p.approach_height)))
            }
            Primitive::MoveTo { pose } => Phase::Move(pose),
            Primitive::Retreat => Phase::Move(ee.translated(Vec3::new(0.0, 0.0, p.approach_height))),
            Primitive::LookAt { pose } => Phase::Move(self.world.spec().camera.ee_for_camera(&pose)),
            Primitive::MoveToContact { axis, force_limit } => {
                let axis = axis.normalize();
                self.world
                    .set_target(Some(ee.translated(axis * p.contact_search_travel)));
                Phase::Contact {
                    origin: ee.position,
                    axis,
                    force_limit,
                }
            }
            Primitive::Grasp => {
                let _ = self.world.grasp_attempt();
                Phase::Fingers
            }
            Primitive::Release => {
                self.world.release();
                Phase::Fingers
            }
            Primitive::Turn { count } => {
                let screw = self.world.engaged_screw();
                let from = screw
                    .and_then(|i| self.world.state().objects[i].articulation_value())
                    .unwrap_or(0.0);
                let to = screw
                    .and_then(|i| self.world.state().objects[i].articulation)
                    .map(|a| a.clamp(from + count))
                    .unwrap_or(from);
                let ticks = p.ticks_for(count.abs() * p.turn_duration).max(1);
                self.world
                    .set_tool_spin(count.signum() * TAU / p.turn_duration);
                Phase::Turn {
                    screw,
                    from,
                    to,
                    ticks,
                    elapsed: 0,
                }
            }
            Primitive::WipeStroke { start, end } => {
                let z = self.contact_z.unwrap_or(start.z);
                let leg = |v: Vec3| Pose6D::new(Vec3::new(v.x, v.y, z), ee.yaw, ee.pitch, ee.roll);
                Phase::Stroke {
                    legs: [leg(start), leg(end)],
                    leg: 0,
                }
            }
        };
        match &phase {
            Phase::Move(target) => self.world.set_target(Some(*target)),
            Phase::Stroke { legs, .. } => self.world.set_target(Some(legs[0])),
            _ => {}
        }
        self.active.as_mut().expect("active plan").phase = phase;
    }

    fn reached(&self, target: &Pose6D) -> bool {
        let ee = self.world.state().ee_pose;
        (ee.position - target.position).norm() < POSITION_TOLERANCE
            && ee.angle_error_to(target).norm() < ANGLE_TOLERANCE
    }

    fn contact_done(&self, origin: &Vec3, axis: &Vec3, force_limit: f64) -> bool {
        let s = self.world.state();
        if -s.contact_force.dot(axis) >= force_limit {
            return true;
        }
        if let Some(b) = &s.binding {
            let d = &s.objects[b.object];
            if let Some(art) = d.articulation {
                let along = axis.dot(&d.drawer_axis());
                if (along > 0.0 && art.value >= art.range[1]) || (along < 0.0 && art.value <= art.range[0]) {
                    return true;
                }
            }
        }
        (s.ee_pose.position - origin).norm() >= self.world.physics().contact_search_travel - 1e-9
            || s.ee_target.is_some_and(|t| t.position == s.ee_pose.position)
    }

    fn check_completion(&mut self) {
        let Some(a) = self.active.as_ref() else {
            return;
        };
        let done = match &a.phase {
            Phase::Dwell(_) => false,
            Phase::Move(target) => self.reached(target),
            Phase::Contact {
                origin,
                axis,
                force_limit,
            } => {
                let done = self.contact_done(origin, axis, *force_limit);
                if done {
                    let ee = self.world.state().ee_pose;
                    self.contact_z = Some(ee.position.z);
                    self.world.set_target(Some(ee));
                }
                done
            }
            Phase::Fingers => {
                let s = self.world.state();
                s.gripper.aperture == s.aperture_goal
            }
            Phase::Turn {
                screw,
                from,
                to,
                ticks,
                elapsed,
            } => {
                let (screw, from, to, ticks, elapsed) = (*screw, *from, *to, *ticks, elapsed + 1);
                if let Some(i) = screw {
                    let v = if elapsed >= ticks {
                        to
                    } else {
                        from + (to - from) * elapsed as f64 / ticks as f64
                    };
                    self.world.set_screw_turns(i, v);
                }
                let a = self.active.as_mut().expect("active plan");
                if let Phase::Turn { elapsed: e, .. } = &mut a.phase {
                    *e = elapsed;
                }
                if elapsed >= ticks {
                    self.world.set_tool_spin(0.0);
                    true
                } else {
                    false
                }
            }
            Phase::Stroke { legs, leg } => {
                let (legs, leg) = (*legs, *leg);
                if self.reached(&legs[leg]) {
                    if leg == 0 {
                        self.world.set_target(Some(legs[1]));
                        let a = self.active.as_mut().expect("active plan");
                        a.phase = Phase::Stroke { legs, leg: 1 };
                        false
                    } else {
                        true
                    }
                } else {
                    false
                }
            }
        };
        if !done {
            return;
        }
        let dwell = self.world.physics().ticks_for(self.world.physics().dwell);
        let a = self.active.as_mut().expect("active plan");
        let (plan, index) = (a.id, a.index);
        let last = index + 1 >= a.program.len();
        if !last {
            a.index += 1;
            a.phase = Phase::Dwell(dwell);
        }
        self.emit(EventKind::PrimitiveFinished { plan, index });
        if last {
            self.active = None;
            self.emit(EventKind::PlanFinished { plan });
        }
    }

    /// Ticks until idle or locked, up to `max_ticks`; returns all events.
    pub fn run_until_settled(&mut self, max_ticks: u64) -> Vec<ExecutionEvent> {
        let mut events = self.drain_events();
        for _ in 0..max_ticks {
            events.extend(self.run_tick());
            if self.locked || (self.is_idle() && !self.moving) {
                break;
            }
        }
        events
    }

    /// Direct access for the operator harness and recovery paths.
    pub fn world_mut(&mut self) -> &mut World {
        &mut self.world
    }

    pub fn is_locked(&self) -> bool {
        self.locked
    }

    pub fn is_moving(&self) -> bool {
        self.moving
    }
}
