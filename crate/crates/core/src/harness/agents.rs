//! Scripted operators, one per interaction mode. They see only what the
//! server streams: the frame and the scene geometry, never drawer contents.

use thiserror::Error;

use super::link::{LinkError, OperatorLink};
use super::profile::{Gesture, HumanLatencyProfile};
use crate::executor::ExecState;
use crate::geometry::{Pose6D, Vec2, Vec3};
use crate::perception::project;
use crate::plan::{wipe_lanes, ActionKind, ActionSpec, ActionTarget, Handle, PixelRect, SelectionArea, SelectionTarget};
use crate::protocol::{CommandBody, ErrorCode, Mode, NudgeAxis, SceneObject, StateMsg};
use crate::world::{ObjectClass, WorkspaceSpec};

/// Longest wait for the robot to come to rest after a command.
pub const SETTLE_TIMEOUT: f64 = 600.0;
const MAX_RESUMES: u32 = 2;
/// Extra hold over the inspection dwell while counting drawer contents.
const COUNT_MARGIN: f64 = 0.5;
/// Camera height above the drawer tops when reading labels.
const READ_HEIGHT: f64 = 0.25;
/// How far the cartesian operator presses the eraser into the table.
const CC_WIPE_PRESS: f64 = 0.001;
/// Resolution of the cartesian operator's first approach guess.
const CC_ROUGH: f64 = 0.01;
const SCREW_PAD_PX: f64 = 25.0;

/// Where each box is put inside the goal region.
pub const BOX_GOALS: [(&str, f64, f64); 3] = [
    ("box_a", -0.16, 0.57),
    ("box_b", -0.07, 0.57),
    ("box_c", -0.12, 0.64),
];

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error("{0}")]
    Script(String),
}

impl AgentError {
    pub fn is_out_of_time(&self) -> bool {
        matches!(self, AgentError::Link(LinkError::OutOfTime))
    }
}

type Step<T = ()> = Result<T, AgentError>;

fn script(msg: impl Into<String>) -> AgentError {
    AgentError::Script(msg.into())
}

pub struct Operator<'a> {
    link: &'a mut dyn OperatorLink,
    spec: &'a WorkspaceSpec,
    profile: HumanLatencyProfile,
    /// Item count read in the exploration task.
    pub item_count: Option<u32>,
    /// Tasks the script gave up on, with the reason.
    pub failures: Vec<(u8, String)>,
}

impl<'a> Operator<'a> {
    pub fn new(link: &'a mut dyn OperatorLink, spec: &'a WorkspaceSpec, profile: HumanLatencyProfile) -> Self {
        Self {
            link,
            spec,
            profile,
            item_count: None,
            failures: Vec::new(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.link.mode()
    }

    fn state(&self) -> &StateMsg {
        self.link.state()
    }

    fn scene(&self, id: &str) -> Step<SceneObject> {
        self.state()
            .scene_object(id)
            .cloned()
            .ok_or_else(|| script(format!("{id} is not in the scene")))
    }

    fn ee(&self) -> Pose6D {
        self.spec.camera.ee_for_camera(&self.state().frame.camera_pose)
    }

    fn pixel(&self, p: Vec3) -> Step<Vec2> {
        project(&p, &self.state().frame.camera_pose, &self.spec.camera)
            .map(|q| q.pixel)
            .map_err(|_| script(format!("point {p:?} is out of view")))
    }

    fn think(&mut self, seconds: f64) -> Step {
        Ok(self.link.think(seconds)?)
    }

    /// Charges the decision pause and the gestures, sends the command built
    /// from the latest state and waits for the robot to come to rest.
    fn act(&mut self, gestures: &[Gesture], build: impl Fn(&StateMsg) -> CommandBody) -> Step {
        self.think(self.profile.pause + self.profile.total(gestures))?;
        for attempt in 0.. {
            let body = build(self.state());
            match self.link.command(body) {
                Ok(seq) => return self.settle(seq),
                Err(LinkError::Rejected(e)) if e.code == ErrorCode::StaleFrame && attempt < 3 => {
                    let t = self.state().sim_time;
                    self.link.wait_until(1.0, &mut |s| s.sim_time > t)?;
                }
                Err(LinkError::Rejected(e)) => return Err(script(format!("{:?}: {}", e.code, e.message))),
                Err(e) => return Err(e.into()),
            }
        }
        unreachable!()
    }

    fn settle(&mut self, seq: u64) -> Step {
        let mut last = seq;
        let mut resumes = 0;
        loop {
            let ok = self.link.wait_until(SETTLE_TIMEOUT, &mut |s| {
                s.acked(last) && (s.settled() || s.executor.state == ExecState::SafetyLocked)
            })?;
            if !ok {
                return Err(script("robot did not come to rest"));
            }
            if self.state().executor.state != ExecState::SafetyLocked {
                return Ok(());
            }
            self.think(self.profile.cost(Gesture::Click))?;
            let body = if resumes < MAX_RESUMES {
                resumes += 1;
                CommandBody::Resume
            } else {
                CommandBody::Cancel { plan: None }
            };
            last = match self.link.command(body) {
                Ok(s) => s,
                Err(LinkError::Rejected(e)) => return Err(script(format!("{:?}: {}", e.code, e.message))),
                Err(e) => return Err(e.into()),
            };
        }
    }

    fn nudge(&mut self, axis: NudgeAxis, positive: bool) -> Step {
        self.act(&[Gesture::Click], |_| CommandBody::CameraNudge { axis, positive })
    }

    fn reset(&mut self) -> Step {
        self.act(&[Gesture::Click], |_| CommandBody::Reset)
    }

    /// Nudges the end-effector toward `target` until `done` holds or no
    /// nudge gets closer.
    fn nudge_toward(&mut self, target: Vec3, done: &dyn Fn(&StateMsg) -> bool) -> Step<bool> {
        let step = self.spec.physics.nudge_step;
        for _ in 0..64 {
            if done(self.state()) {
                return Ok(true);
            }
            let d = target - self.ee().position;
            // height first so the camera never sweeps low over the table
            let axis = [(NudgeAxis::Z, d.z), (NudgeAxis::X, d.x), (NudgeAxis::Y, d.y)]
                .into_iter()
                .find(|(_, v)| v.abs() >= step / 2.0);
            let Some((axis, v)) = axis else {
                return Ok(done(self.state()));
            };
            self.nudge(axis, v > 0.0)?;
        }
        Ok(done(self.state()))
    }

    /// Looks at the drawers in order until the target label is read.
    fn find_target_drawer(&mut self) -> Step<String> {
        let mut drawers: Vec<SceneObject> = self
            .state()
            .scene
            .iter()
            .filter(|o| o.class == ObjectClass::Drawer)
            .cloned()
            .collect();
        drawers.sort_by(|a, b| a.id.cmp(&b.id));
        let mount = self.spec.camera.mount.position;
        let want = self.spec.target_label.clone();
        for d in drawers {
            let p = d.pose.position;
            let target = Vec3::new(p.x, p.y - mount.y, p.z + READ_HEIGHT - mount.z);
            let id = d.id.clone();
            let read = move |s: &StateMsg| s.frame.poi(&id).is_some_and(|m| m.label.is_some());
            if !self.nudge_toward(target, &read)? {
                continue;
            }
            let label = self.state().frame.poi(&d.id).and_then(|m| m.label.clone());
            if label.as_deref() == Some(want.as_str()) {
                return Ok(d.id);
            }
        }
        Err(script(format!("no drawer labelled {want}")))
    }

    /// Nudges over the open drawer, holds still to count, returns the count.
    fn inspect(&mut self, drawer: &str) -> Step<u32> {
        let d = self.scene(drawer)?;
        let open = d.articulation.unwrap_or(0.0);
        let yaw = d.pose.yaw;
        let axis = Vec3::new(yaw.cos(), yaw.sin(), 0.0);
        let centre = d.pose.position + axis * (open / 2.0);
        let mount = self.spec.camera.mount.position;
        let ee = self.ee().position;
        let target = Vec3::new(centre.x, centre.y - mount.y, ee.z);
        let id = drawer.to_string();
        let counted = move |s: &StateMsg| s.frame.poi(&id).is_some_and(|m| m.item_count.is_some());
        if !self.nudge_toward(target, &counted)? {
            return Err(script(format!("cannot see into {drawer}")));
        }
        let hold = self.profile.pause.max(self.spec.physics.inspect_dwell + COUNT_MARGIN);
        self.think(hold)?;
        self.state()
            .frame
            .poi(drawer)
            .and_then(|m| m.item_count)
            .ok_or_else(|| script(format!("lost sight of {drawer}")))
    }

    pub fn run(&mut self, tasks: &[u8]) -> Step {
        for &task in tasks {
            let r = match (self.mode(), task) {
                (_, 0) => self.task_boxes(&BOX_GOALS[..1]),
                (_, 1) => self.task_boxes(&BOX_GOALS[1..]),
                (Mode::Cc, 2) => Ok(()),
                (_, 2) => self.task_screws(),
                (_, 3) => self.task_explore(),
                (_, 4) => self.task_wipe(),
                _ => Err(script(format!("no task {task}"))),
            };
            match r {
                Ok(()) => {}
                Err(e) if e.is_out_of_time() => return Err(e),
                Err(AgentError::Link(e)) => return Err(AgentError::Link(e)),
                Err(AgentError::Script(m)) => {
                    tracing::warn!("{} agent gave up on task {task}: {m}", self.mode());
                    self.failures.push((task, m));
                    // back to the overview so the next task starts clean
                    if self.state().executor.state == ExecState::SafetyLocked {
                        self.act(&[Gesture::Click], |_| CommandBody::Cancel { plan: None })?;
                    }
                    let _ = self.link.command(CommandBody::Release);
                    self.reset()?;
                }
            }
        }
        Ok(())
    }

    fn task_boxes(&mut self, goals: &[(&str, f64, f64)]) -> Step {
        self.think(self.profile.pause)?;
        match self.mode() {
            Mode::Tla => {
                let mut areas = Vec::new();
                let mut gestures = vec![Gesture::Click];
                for (id, x, y) in goals {
                    areas.push(self.box_area(id, *x, *y)?);
                    gestures.extend([Gesture::Click, Gesture::Click, Gesture::Handle, Gesture::Handle]);
                }
                self.submit(&gestures, areas)?;
                self.reset()
            }
            Mode::Pc => {
                for (id, x, y) in goals {
                    let area = self.box_area(id, *x, *y)?;
                    let handles = area.handles.unwrap_or_default();
                    let action = ActionSpec::new(
                        ActionKind::MoveUnknown,
                        ActionTarget::Handles {
                            start: handles.start,
                            goal: handles.goal,
                        },
                    );
                    self.single(&[Gesture::Click, Gesture::Handle, Gesture::Handle], action)?;
                    self.reset()?;
                }
                Ok(())
            }
            Mode::Cc => {
                for (id, x, y) in goals {
                    let o = self.scene(id)?;
                    let top = o.pose.position.z + o.size.z / 2.0;
                    let grasp = Pose6D::new(
                        Vec3::new(o.pose.position.x, o.pose.position.y, top - self.spec.physics.grasp_depth),
                        o.pose.yaw,
                        0.0,
                        0.0,
                    );
                    let release = Pose6D::new(
                        Vec3::new(*x, *y, grasp.position.z + self.spec.physics.release_clearance),
                        0.0,
                        0.0,
                        0.0,
                    );
                    self.cc_pick(grasp)?;
                    self.cc_place(release)?;
                }
                self.reset()
            }
        }
    }

    fn box_area(&self, id: &str, x: f64, y: f64) -> Step<SelectionArea> {
        let o = self.scene(id)?;
        let top = o.pose.position + Vec3::new(0.0, 0.0, o.size.z / 2.0);
        let start = self.pixel(top)?;
        let goal = self.pixel(Vec3::new(x, y, 0.0))?;
        Ok(SelectionArea::new(PixelRect::point(start), &[ActionKind::MoveUnknown])
            .with_target(SelectionTarget::Unknown)
            .with_handles(Some(Handle::new(start, o.pose.yaw)), Some(Handle::new(goal, 0.0))))
    }

    fn submit(&mut self, gestures: &[Gesture], areas: Vec<SelectionArea>) -> Step {
        let mut g = gestures.to_vec();
        g.push(Gesture::Click);
        self.act(&g, |s| CommandBody::SubmitPlan {
            frame_id: s.frame.frame_id,
            areas: areas.clone(),
        })
    }

    fn single(&mut self, gestures: &[Gesture], action: ActionSpec) -> Step {
        let mut g = gestures.to_vec();
        g.push(Gesture::Click);
        self.act(&g, |s| CommandBody::SingleAction {
            frame_id: s.frame.frame_id,
            action: action.clone(),
        })
    }

    fn task_screws(&mut self) -> Step {
        self.think(self.profile.pause)?;
        let screws: Vec<(String, Vec2)> = self
            .state()
            .frame
            .markers
            .iter()
            .filter(|m| m.class == ObjectClass::Screw)
            .map(|m| (m.object_id.clone(), m.anchor_pixel))
            .collect();
        if screws.is_empty() {
            return Err(script("no screws in view"));
        }
        match self.mode() {
            Mode::Tla => {
                let min = screws.iter().fold(Vec2::repeat(f64::INFINITY), |a, (_, p)| a.inf(p));
                let max = screws.iter().fold(Vec2::repeat(f64::NEG_INFINITY), |a, (_, p)| a.sup(p));
                let pad = Vec2::repeat(SCREW_PAD_PX);
                let area = SelectionArea::new(PixelRect::new(min - pad, max + pad), &[ActionKind::Loosen, ActionKind::MoveKnown])
                    .with_target(SelectionTarget::Class(ObjectClass::Screw));
                self.submit(&[Gesture::Drag, Gesture::Click, Gesture::Click], vec![area])?;
                self.reset()
            }
            _ => {
                for (id, _) in screws {
                    for kind in [ActionKind::Loosen, ActionKind::MoveKnown] {
                        self.single(&[Gesture::Click], ActionSpec::on_object(kind, &id))?;
                        self.reset()?;
                    }
                }
                Ok(())
            }
        }
    }

    fn task_explore(&mut self) -> Step {
        self.think(self.profile.pause)?;
        let drawer = self.find_target_drawer()?;
        self.drawer(ActionKind::Pull, &drawer)?;
        self.item_count = Some(self.inspect(&drawer)?);
        self.drawer(ActionKind::Push, &drawer)?;
        self.reset()
    }

    fn drawer(&mut self, kind: ActionKind, id: &str) -> Step {
        match self.mode() {
            Mode::Tla => {
                let handle = self.drawer_handle(id)?;
                let area = SelectionArea::new(PixelRect::point(self.pixel(handle)?), &[kind])
                    .with_target(SelectionTarget::Static(id.to_string()));
                self.submit(&[Gesture::Click, Gesture::Click], vec![area])
            }
            Mode::Pc => self.single(&[Gesture::Click], ActionSpec::on_object(kind, id)),
            Mode::Cc => {
                let d = self.scene(id)?;
                let handle = self.drawer_handle(id)?;
                let yaw = d.pose.yaw;
                let axis = Vec3::new(yaw.cos(), yaw.sin(), 0.0);
                let range = self.spec.objects.iter().find(|o| o.id == id).and_then(|o| o.articulation).map(|a| a.range);
                let [lo, hi] = range.ok_or_else(|| script(format!("{id} is not a drawer")))?;
                let value = d.articulation.unwrap_or(lo);
                let travel = if kind == ActionKind::Pull { hi - value } else { lo - value };
                let at = Pose6D::new(handle, yaw, 0.0, 0.0);
                let above = self.raised(&at);
                self.goto(above)?;
                self.goto(at)?;
                self.click(CommandBody::Grasp)?;
                self.goto(Pose6D::new(handle + axis * travel, yaw, 0.0, 0.0))?;
                self.click(CommandBody::Release)?;
                let ee = self.ee();
                self.goto(self.raised(&ee))
            }
        }
    }

    fn drawer_handle(&self, id: &str) -> Step<Vec3> {
        let d = self.scene(id)?;
        let yaw = d.pose.yaw;
        let axis = Vec3::new(yaw.cos(), yaw.sin(), 0.0);
        Ok(d.pose.position + axis * (d.articulation.unwrap_or(0.0) + crate::world::HANDLE_PROTRUSION))
    }

    fn task_wipe(&mut self) -> Step {
        self.think(self.profile.pause)?;
        let e = self
            .state()
            .scene
            .iter()
            .find(|o| o.class == ObjectClass::Eraser)
            .cloned()
            .ok_or_else(|| script("no eraser"))?;
        let top = e.pose.position + Vec3::new(0.0, 0.0, e.size.z / 2.0);
        let rest = Vec3::new(e.pose.position.x, e.pose.position.y, 0.0);
        let blue = self
            .state()
            .scene
            .iter()
            .find(|o| o.class == ObjectClass::BlueArea)
            .cloned()
            .ok_or_else(|| script("no blue area"))?;
        match self.mode() {
            Mode::Tla => {
                let start = self.pixel(top)?;
                let goal = self.pixel(rest)?;
                let blue_px = self.pixel(blue.pose.position)?;
                let handles = (Some(Handle::new(start, e.pose.yaw)), Some(Handle::new(goal, e.pose.yaw)));
                let areas = vec![
                    SelectionArea::new(PixelRect::point(start), &[ActionKind::Pick])
                        .with_target(SelectionTarget::Unknown)
                        .with_handles(handles.0, None),
                    SelectionArea::new(PixelRect::point(blue_px), &[ActionKind::Wipe])
                        .with_target(SelectionTarget::Static(blue.id.clone())),
                    SelectionArea::new(PixelRect::point(goal), &[ActionKind::Place])
                        .with_target(SelectionTarget::Unknown)
                        .with_handles(None, handles.1),
                ];
                let gestures = [
                    Gesture::Click,
                    Gesture::Click,
                    Gesture::Handle,
                    Gesture::Click,
                    Gesture::Click,
                    Gesture::Click,
                    Gesture::Click,
                    Gesture::Handle,
                ];
                self.submit(&gestures, areas)?;
                self.reset()
            }
            Mode::Pc => {
                let start = Handle::new(self.pixel(top)?, e.pose.yaw);
                let goal = Handle::new(self.pixel(rest)?, e.pose.yaw);
                self.single(
                    &[Gesture::Click, Gesture::Handle],
                    ActionSpec::new(ActionKind::Pick, ActionTarget::Handles { start: Some(start), goal: None }),
                )?;
                self.single(&[Gesture::Click], ActionSpec::on_object(ActionKind::Wipe, &blue.id))?;
                self.single(
                    &[Gesture::Click, Gesture::Handle],
                    ActionSpec::new(ActionKind::Place, ActionTarget::Handles { start: None, goal: Some(goal) }),
                )?;
                self.reset()
            }
            Mode::Cc => {
                let p = self.spec.physics;
                let grasp_z = top.z - p.grasp_depth;
                let grip = grasp_z - (e.pose.position.z - e.size.z / 2.0);
                let grasp = Pose6D::new(Vec3::new(e.pose.position.x, e.pose.position.y, grasp_z), e.pose.yaw, 0.0, 0.0);
                self.cc_pick(grasp)?;
                let z = grip - CC_WIPE_PRESS;
                let lanes = wipe_lanes(&self.spec.dirt_rect, p.wipe_spacing);
                let first = lanes[0].0;
                let entry = Pose6D::new(Vec3::new(first.x, first.y, z), e.pose.yaw, 0.0, 0.0);
                self.goto(self.raised(&entry))?;
                self.goto(entry)?;
                for (i, (s, t)) in lanes.iter().enumerate() {
                    if i > 0 {
                        self.goto(Pose6D::new(Vec3::new(s.x, s.y, z), e.pose.yaw, 0.0, 0.0))?;
                    }
                    self.goto(Pose6D::new(Vec3::new(t.x, t.y, z), e.pose.yaw, 0.0, 0.0))?;
                }
                let ee = self.ee();
                self.goto(self.raised(&ee))?;
                let release = Pose6D::new(Vec3::new(rest.x, rest.y, grip + p.release_clearance), e.pose.yaw, 0.0, 0.0);
                self.cc_place(release)?;
                self.reset()
            }
        }
    }

    fn raised(&self, pose: &Pose6D) -> Pose6D {
        let mut p = *pose;
        p.position.z += self.spec.physics.approach_height;
        p
    }

    /// Typed pose entry: only the fields that differ from the current pose are typed.
    fn goto(&mut self, pose: Pose6D) -> Step {
        let ee = self.ee();
        let changed = [
            ee.position.x - pose.position.x,
            ee.position.y - pose.position.y,
            ee.position.z - pose.position.z,
            ee.yaw - pose.yaw,
            ee.pitch - pose.pitch,
            ee.roll - pose.roll,
        ]
        .iter()
        .filter(|d| d.abs() > 1e-6)
        .count()
        .max(1) as u32;
        self.act(&[Gesture::Fields(changed)], |_| CommandBody::CartesianGoto { pose })
    }

    fn click(&mut self, body: CommandBody) -> Step {
        self.act(&[Gesture::Click], |_| body.clone())
    }

    /// Approach with a rough guess, correct, descend, close the gripper and lift.
    fn cc_pick(&mut self, grasp: Pose6D) -> Step {
        let above = self.raised(&grasp);
        let rough = |v: f64| (v / CC_ROUGH).round() * CC_ROUGH;
        let guess = Pose6D::new(
            Vec3::new(rough(above.position.x), rough(above.position.y), above.position.z),
            above.yaw,
            0.0,
            0.0,
        );
        self.goto(guess)?;
        self.goto(above)?;
        self.goto(grasp)?;
        self.click(CommandBody::Grasp)?;
        self.goto(above)
    }

    /// Carry above the release pose, lower, open and back off.
    fn cc_place(&mut self, release: Pose6D) -> Step {
        let above = self.raised(&release);
        self.goto(above)?;
        self.goto(release)?;
        self.click(CommandBody::Release)?;
        self.goto(above)
    }
}
