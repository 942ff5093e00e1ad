//! Fixed-tick simulation of the tabletop: end-effector kinematics, grasping,
//! drawers and screws, surface contact and the dirt field.

mod dirt;
mod spec;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{normalize_angle, Pose6D, UprightBox, Vec2, Vec3};

pub use dirt::DirtField;
pub use spec::{
    Legibility, NamedRegion, Physics, PoiKind, PointOfInterest, WorkspaceSpec, SCHEMA_VERSION,
};

/// Distance the handle bar sticks out of a drawer front.
pub const HANDLE_PROTRUSION: f64 = 0.02;
/// Thickness of drawer front panels and of drawer floors.
pub const PANEL_THICKNESS: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("gripper is already holding {0}")]
    GraspWhileHolding(String),
    #[error("no screw head within reach of the tool")]
    NoScrewEngaged,
    #[error("unknown object {0}")]
    UnknownObject(String),
    #[error("invalid workspace file: {0}")]
    InvalidWorkspace(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    Screw,
    Box,
    Eraser,
    Drawer,
    Grid,
    ScrewBox,
    BlueArea,
}

impl ObjectClass {
    pub const ALL: [ObjectClass; 7] = [
        ObjectClass::Screw,
        ObjectClass::Box,
        ObjectClass::Eraser,
        ObjectClass::Drawer,
        ObjectClass::Grid,
        ObjectClass::ScrewBox,
        ObjectClass::BlueArea,
    ];

    /// Drawers, grid, screw box and blue area never move.
    pub fn is_static(self) -> bool {
        matches!(
            self,
            ObjectClass::Drawer | ObjectClass::Grid | ObjectClass::ScrewBox | ObjectClass::BlueArea
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectClass::Screw => "screw",
            ObjectClass::Box => "box",
            ObjectClass::Eraser => "eraser",
            ObjectClass::Drawer => "drawer",
            ObjectClass::Grid => "grid",
            ObjectClass::ScrewBox => "screw_box",
            ObjectClass::BlueArea => "blue_area",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArticulationKind {
    Prismatic,
    ScrewJoint,
}

fn default_resistance() -> f64 {
    5.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArticulationState {
    pub kind: ArticulationKind,
    /// Drawer extension in meters, or screw turns remaining.
    pub value: f64,
    pub range: [f64; 2],
    pub axis: Vec3,
    /// Force needed to slide a drawer, newtons.
    #[serde(default = "default_resistance")]
    pub resistance: f64,
}

impl ArticulationState {
    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.range[0], self.range[1])
    }
}

/// Label and contents of a drawer, visible only to a reader close enough.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawerContents {
    pub label: String,
    pub items: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: String,
    pub class: ObjectClass,
    pub pose: Pose6D,
    /// Full extents; for drawers `(depth along axis, width, height)`.
    pub size: Vec3,
    pub detectable: bool,
    pub movable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub articulation: Option<ArticulationState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contents: Option<DrawerContents>,
    /// Static object this one rests in (screw box or drawer).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub container: Option<String>,
}

impl ObjectInstance {
    pub fn is_graspable_body(&self) -> bool {
        matches!(
            self.class,
            ObjectClass::Screw | ObjectClass::Box | ObjectClass::Eraser
        )
    }

    pub fn articulation_value(&self) -> Option<f64> {
        self.articulation.map(|a| a.value)
    }

    /// Horizontal unit vector a drawer slides out along.
    pub fn drawer_axis(&self) -> Vec3 {
        let a = self.articulation.map(|a| a.axis).unwrap_or(Vec3::x());
        let h = Vec3::new(a.x, a.y, 0.0);
        if h.norm() > 0.0 {
            h.normalize()
        } else {
            Vec3::x()
        }
    }

    pub fn handle_point_at(&self, value: f64) -> Vec3 {
        self.pose.position + self.drawer_axis() * (value + HANDLE_PROTRUSION)
    }

    /// Grasp point of a drawer handle at its current extension.
    pub fn handle_point(&self) -> Vec3 {
        self.handle_point_at(self.articulation_value().unwrap_or(0.0))
    }

    pub fn front_panel(&self) -> UprightBox {
        let a = self.drawer_axis();
        let v = self.articulation_value().unwrap_or(0.0);
        UprightBox {
            center: self.pose.position + a * (v - PANEL_THICKNESS / 2.0),
            half_extents: Vec3::new(PANEL_THICKNESS / 2.0, self.size.y / 2.0, self.size.z / 2.0),
            yaw: a.y.atan2(a.x),
        }
    }

    /// Drawer-local `(s, lateral)` of a horizontal point; `s` measured outward from the closed front.
    pub fn drawer_coords(&self, p: &Vec2) -> (f64, f64) {
        let a = self.drawer_axis();
        let d = Vec2::new(p.x - self.pose.position.x, p.y - self.pose.position.y);
        (d.x * a.x + d.y * a.y, -d.x * a.y + d.y * a.x)
    }

    /// Whether `p` lies over the part of the drawer pulled out of the cabinet.
    pub fn exposed_interior_contains(&self, p: &Vec2) -> bool {
        let v = self.articulation_value().unwrap_or(0.0);
        let (s, lateral) = self.drawer_coords(p);
        let inner = self.size.y / 2.0 - PANEL_THICKNESS / 2.0;
        s >= 0.0 && s <= v - PANEL_THICKNESS && lateral.abs() <= inner
    }

    pub fn floor_z(&self) -> f64 {
        self.pose.position.z - self.size.z / 2.0 + PANEL_THICKNESS
    }

    pub fn bounding_box(&self) -> UprightBox {
        UprightBox {
            center: self.pose.position,
            half_extents: self.size / 2.0,
            yaw: self.pose.yaw,
        }
    }

    pub fn bottom_z(&self) -> f64 {
        self.pose.position.z - self.size.z / 2.0
    }

    pub fn top_z(&self) -> f64 {
        self.pose.position.z + self.size.z / 2.0
    }

    /// Point a tool must reach to turn a screw.
    pub fn screw_head(&self) -> Vec3 {
        self.pose.position + Vec3::new(0.0, 0.0, self.size.z / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripperStatus {
    Open,
    ClosedEmpty,
    Holding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GripperState {
    pub status: GripperStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub held_object: Option<String>,
    pub aperture: f64,
}

/// Rigid grasp of a movable object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub object: usize,
    /// Object pose in the end-effector frame.
    pub offset: Pose6D,
}

/// Grasp of a drawer handle: the end-effector is constrained to the drawer axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawerBinding {
    pub object: usize,
    /// Accumulated commanded displacement the drawer could not follow.
    pub overshoot: Vec3,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MotionSample {
    pub linear_speed: f64,
    pub angular_speed: f64,
    pub fingers_moving: bool,
}

impl MotionSample {
    pub const THRESHOLD: f64 = 1e-6;

    pub fn moving(&self) -> bool {
        self.linear_speed > Self::THRESHOLD
            || self.angular_speed > Self::THRESHOLD
            || self.fingers_moving
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceState {
    pub objects: Vec<ObjectInstance>,
    pub ee_pose: Pose6D,
    pub ee_target: Option<Pose6D>,
    pub gripper: GripperState,
    pub contact_force: Vec3,
    pub dirt_field: DirtField,
    pub sim_time: f64,
    pub tick: u64,
    pub attachment: Option<Attachment>,
    pub binding: Option<DrawerBinding>,
    pub aperture_goal: f64,
    /// Wrist spin rate while a screw is being turned, rad/s.
    pub tool_spin: f64,
    pub motion: MotionSample,
}

impl WorkspaceState {
    pub fn object(&self, id: &str) -> Option<&ObjectInstance> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn object_index(&self, id: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.id == id)
    }

    pub fn objects_of(&self, class: ObjectClass) -> impl Iterator<Item = &ObjectInstance> {
        self.objects.iter().filter(move |o| o.class == class)
    }

    pub fn held_index(&self) -> Option<usize> {
        self.attachment.as_ref().map(|a| a.object)
    }

    /// Height of the support surface under `xy` and the container providing it.
    pub fn support_at(&self, xy: &Vec2) -> (f64, Option<String>) {
        let mut support = 0.0;
        let mut container = None;
        for o in &self.objects {
            match o.class {
                ObjectClass::Drawer if o.exposed_interior_contains(xy) => {
                    support = o.floor_z();
                    container = Some(o.id.clone());
                }
                ObjectClass::ScrewBox if o.bounding_box().footprint_contains(xy) => {
                    support = o.bottom_z().max(0.0);
                    container = Some(o.id.clone());
                }
                _ => {}
            }
        }
        (support, container)
    }

    /// Hex SHA-256 of the canonical JSON encoding, ignoring the clock.
    pub fn content_hash(&self) -> String {
        let mut copy = self.clone();
        copy.sim_time = 0.0;
        copy.tick = 0;
        let bytes = serde_json::to_vec(&copy).expect("state serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Outcome of closing the gripper.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraspOutcome {
    Object(String),
    Handle(String),
    Empty,
}

/// Moves `from` toward `to` by at most `max_lin` meters and `max_ang` radians.
pub fn step_toward(from: &Pose6D, to: &Pose6D, max_lin: f64, max_ang: f64) -> Pose6D {
    let d = to.position - from.position;
    let dist = d.norm();
    let position = if dist <= max_lin {
        to.position
    } else {
        from.position + d * (max_lin / dist)
    };
    let err = from.angle_error_to(to);
    let ang = err.norm();
    let (yaw, pitch, roll) = if ang <= max_ang {
        (to.yaw, to.pitch, to.roll)
    } else {
        let e = err * (max_ang / ang);
        (from.yaw + e.x, from.pitch + e.y, normalize_angle(from.roll + e.z))
    };
    Pose6D::new(position, yaw, pitch, roll)
}

#[derive(Debug, Clone)]
pub struct World {
    spec: Arc<WorkspaceSpec>,
    state: WorkspaceState,
}

impl World {
    pub fn new(spec: Arc<WorkspaceSpec>) -> Self {
        let state = Self::initial_state(&spec);
        Self { spec, state }
    }

    pub fn initial_state(spec: &WorkspaceSpec) -> WorkspaceState {
        let p = &spec.physics;
        WorkspaceState {
            objects: spec.objects.clone(),
            ee_pose: spec.home,
            ee_target: None,
            gripper: GripperState {
                status: GripperStatus::Open,
                held_object: None,
                aperture: p.gripper_open_width,
            },
            contact_force: Vec3::zeros(),
            dirt_field: DirtField::new(spec.dirt_rect, p.dirt_cell),
            sim_time: 0.0,
            tick: 0,
            attachment: None,
            binding: None,
            aperture_goal: p.gripper_open_width,
            tool_spin: 0.0,
            motion: MotionSample::default(),
        }
    }

    pub fn from_state(spec: Arc<WorkspaceSpec>, state: WorkspaceState) -> Self {
        Self { spec, state }
    }

    pub fn spec(&self) -> &Arc<WorkspaceSpec> {
        &self.spec
    }

    pub fn physics(&self) -> &Physics {
        &self.spec.physics
    }

    pub fn state(&self) -> &WorkspaceState {
        &self.state
    }

    pub fn snapshot(&self) -> WorkspaceState {
        self.state.clone()
    }

    pub fn set_target(&mut self, target: Option<Pose6D>) {
        self.state.ee_target = target;
    }

    pub fn set_tool_spin(&mut self, rate: f64) {
        self.state.tool_spin = rate;
    }

    /// Advances the world by one tick.
    pub fn step(&mut self) {
        let p = self.spec.physics;
        let dt = p.tick_dt;
        let before = self.state.ee_pose;
        let aperture_before = self.state.gripper.aperture;

        match self.state.ee_target {
            Some(target) => {
                let desired = step_toward(&before, &target, p.v_max * dt, p.omega_max * dt);
                if self.state.binding.is_some() {
                    self.constrained_move(&before, desired);
                } else {
                    self.state.ee_pose = desired;
                }
            }
            None => {
                if let Some(b) = self.state.binding.as_mut() {
                    b.overshoot = Vec3::zeros();
                }
            }
        }

        let rate = p.gripper_open_width / p.gripper_actuation_time * dt;
        let g = &mut self.state.gripper;
        let diff = self.state.aperture_goal - g.aperture;
        g.aperture = if diff.abs() <= rate {
            self.state.aperture_goal
        } else {
            g.aperture + rate * diff.signum()
        };

        if let Some(att) = &self.state.attachment {
            let pose = self.state.ee_pose.compose(&att.offset);
            self.state.objects[att.object].pose = pose;
        }

        self.update_contact_force();
        self.wipe_dirt();

        let after = self.state.ee_pose;
        let ang = before.angle_error_to(&after).norm() / dt;
        self.state.motion = MotionSample {
            linear_speed: (after.position - before.position).norm() / dt,
            angular_speed: ang.max(self.state.tool_spin.abs()),
            fingers_moving: self.state.gripper.aperture != aperture_before,
        };
        self.state.tick += 1;
        self.state.sim_time = self.state.tick as f64 * dt;
    }

    fn constrained_move(&mut self, before: &Pose6D, desired: Pose6D) {
        let p = self.spec.physics;
        let binding = self.state.binding.clone().expect("bound");
        let drawer = &mut self.state.objects[binding.object];
        let axis = drawer.drawer_axis();
        let mut art = drawer.articulation.expect("drawer articulation");
        let delta = desired.position - before.position;
        let along = delta.dot(&axis);
        let mut achieved = 0.0;
        if along != 0.0 && art.resistance < p.f_slide {
            let new = art.clamp(art.value + along);
            achieved = new - art.value;
            art.value = new;
        }
        drawer.articulation = Some(art);
        let handle = drawer.handle_point();
        let shortfall = delta - axis * achieved;
        let b = self.state.binding.as_mut().expect("bound");
        b.overshoot = if shortfall.norm() > 1e-12 {
            b.overshoot + shortfall
        } else {
            Vec3::zeros()
        };
        self.state.ee_pose = Pose6D::new(handle, desired.yaw, desired.pitch, desired.roll);
    }

    /// Lowest point of the end-effector and anything it holds.
    fn lowest_point(&self) -> f64 {
        let mut z = self.state.ee_pose.position.z;
        if let Some(att) = &self.state.attachment {
            z = z.min(self.state.objects[att.object].bottom_z());
        }
        z
    }

    fn update_contact_force(&mut self) {
        let p = self.spec.physics;
        let mut force = Vec3::zeros();
        let penetration = -self.lowest_point();
        if penetration > 0.0 {
            force.z += p.k_contact * penetration;
        }
        if let Some(b) = &self.state.binding {
            force -= b.overshoot * p.k_contact;
        }
        self.state.contact_force = force;
    }

    fn wipe_dirt(&mut self) {
        let Some(att) = &self.state.attachment else {
            return;
        };
        let eraser = &self.state.objects[att.object];
        if eraser.class != ObjectClass::Eraser || eraser.bottom_z() > 1e-9 {
            return;
        }
        let footprint = eraser.bounding_box();
        let held = att.object;
        let covers: Vec<UprightBox> = self
            .state
            .objects
            .iter()
            .enumerate()
            .filter(|(i, o)| *i != held && o.class == ObjectClass::Box && o.bottom_z() <= 1e-6)
            .map(|(_, o)| o.bounding_box())
            .collect();
        self.state.dirt_field.clear_under(&footprint, |c| {
            covers.iter().all(|b| !b.footprint_contains(c))
        });
    }

    /// Closes the gripper; attaches the nearest graspable object or drawer handle in reach.
    pub fn grasp_attempt(&mut self) -> Result<GraspOutcome, WorldError> {
        if self.state.gripper.status == GripperStatus::Holding {
            let held = self.state.gripper.held_object.clone().unwrap_or_default();
            return Err(WorldError::GraspWhileHolding(held));
        }
        let tol = self.spec.physics.grasp_tolerance;
        let tip = self.state.ee_pose.position;
        let best = self
            .state
            .objects
            .iter()
            .enumerate()
            .filter_map(|(i, o)| {
                let point = if o.class == ObjectClass::Drawer {
                    o.handle_point()
                } else if o.movable && o.is_graspable_body() {
                    o.pose.position
                } else {
                    return None;
                };
                let d = (point - tip).norm();
                (d <= tol).then_some((d, i))
            })
            .min_by(|a, b| {
                a.0.total_cmp(&b.0)
                    .then_with(|| self.state.objects[a.1].id.cmp(&self.state.objects[b.1].id))
            });

        let g = &mut self.state.gripper;
        let Some((_, idx)) = best else {
            g.status = GripperStatus::ClosedEmpty;
            g.held_object = None;
            self.state.aperture_goal = 0.0;
            return Ok(GraspOutcome::Empty);
        };
        let obj = &mut self.state.objects[idx];
        g.status = GripperStatus::Holding;
        g.held_object = Some(obj.id.clone());
        if obj.class == ObjectClass::Drawer {
            self.state.aperture_goal = 0.01;
            self.state.binding = Some(DrawerBinding {
                object: idx,
                overshoot: Vec3::zeros(),
            });
            Ok(GraspOutcome::Handle(obj.id.clone()))
        } else {
            self.state.aperture_goal = obj.size.x.min(obj.size.y);
            obj.container = None;
            let offset = self.state.ee_pose.inverse().compose(&obj.pose);
            self.state.attachment = Some(Attachment {
                object: idx,
                offset,
            });
            Ok(GraspOutcome::Object(obj.id.clone()))
        }
    }

    /// Opens the gripper; a held object drops onto whatever supports it.
    pub fn release(&mut self) {
        self.state.binding = None;
        if let Some(att) = self.state.attachment.take() {
            self.settle(att.object);
        }
        let open = self.spec.physics.gripper_open_width;
        let g = &mut self.state.gripper;
        g.status = GripperStatus::Open;
        g.held_object = None;
        self.state.aperture_goal = open;
        self.update_contact_force();
    }

    fn settle(&mut self, idx: usize) {
        let xy = self.state.objects[idx].pose.xy();
        let (support, container) = self.state.support_at(&xy);
        let obj = &mut self.state.objects[idx];
        let pose = obj.pose;
        obj.pose = Pose6D::new(
            Vec3::new(pose.position.x, pose.position.y, support + obj.size.z / 2.0),
            pose.yaw,
            0.0,
            0.0,
        );
        obj.container = container;
    }

    /// Turns the screw under the tool; negative counts loosen.
    pub fn turn_tool(&mut self, turns: f64) -> Result<f64, WorldError> {
        let idx = self.engaged_screw().ok_or(WorldError::NoScrewEngaged)?;
        let screw = &mut self.state.objects[idx];
        let mut art = screw.articulation.expect("screw articulation");
        let mut value = art.clamp(art.value + turns);
        for bound in art.range {
            if (value - bound).abs() < 1e-9 {
                value = bound;
            }
        }
        art.value = value;
        screw.articulation = Some(art);
        screw.movable = value <= art.range[0];
        Ok(value)
    }

    /// Sets a screw's turns remaining directly, used to finish a timed turn exactly.
    pub fn set_screw_turns(&mut self, idx: usize, value: f64) {
        let screw = &mut self.state.objects[idx];
        if let Some(mut art) = screw.articulation {
            art.value = art.clamp(value);
            screw.articulation = Some(art);
            screw.movable = art.value <= art.range[0];
        }
    }

    /// Index of the screw whose head is within grasp tolerance of the tool tip.
    pub fn engaged_screw(&self) -> Option<usize> {
        let tol = self.spec.physics.grasp_tolerance;
        let tip = self.state.ee_pose.position;
        self.state
            .objects
            .iter()
            .enumerate()
            .filter(|(_, o)| o.class == ObjectClass::Screw)
            .map(|(i, o)| ((o.screw_head() - tip).norm(), i))
            .filter(|(d, _)| *d <= tol)
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, i)| i)
    }

    /// Clears a held drawer handle without touching held objects.
    pub fn release_handle(&mut self) {
        if self.state.binding.take().is_some() {
            self.release();
        }
    }

    /// Ground-truth label of a drawer; what a reader in front of it would see.
    pub fn read_label(&self, drawer_id: &str) -> Option<&str> {
        self.state
            .object(drawer_id)
            .and_then(|o| o.contents.as_ref())
            .map(|c| c.label.as_str())
    }

    pub fn count_items(&self, drawer_id: &str) -> Option<u32> {
        self.state
            .object(drawer_id)
            .and_then(|o| o.contents.as_ref())
            .map(|c| c.items)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn world() -> World {
        World::new(Arc::new(WorkspaceSpec::default_layout()))
    }

    fn run_until_idle(w: &mut World, max: usize) {
        for _ in 0..max {
            w.step();
            if let Some(t) = w.state().ee_target {
                if (t.position - w.state().ee_pose.position).norm() == 0.0
                    && w.state().ee_pose.angle_error_to(&t).norm() == 0.0
                {
                    return;
                }
            }
        }
    }

    #[test]
    fn velocity_limited_step() {
        let mut w = world();
        w.state.ee_pose = Pose6D::from_xyz_yaw(0.0, 0.0, 0.3, 0.0);
        w.set_target(Some(Pose6D::from_xyz_yaw(0.0, 0.0, 0.2, 0.0)));
        w.step();
        assert!((w.state().ee_pose.position.z - 0.298).abs() < 1e-12);
        assert!((w.state().sim_time - 0.01).abs() < 1e-15);
    }

    #[test]
    fn target_at_current_pose_only_advances_time() {
        let mut w = world();
        let before = w.snapshot();
        w.set_target(Some(before.ee_pose));
        w.step();
        let after = w.snapshot();
        assert_eq!(after.ee_pose, before.ee_pose);
        assert_eq!(after.objects, before.objects);
        assert!(!after.motion.moving());
        assert_eq!(after.tick, 1);
    }

    #[test]
    fn pressing_two_millimeters_into_table_gives_ten_newtons() {
        let mut w = world();
        let target = Pose6D::from_xyz_yaw(0.6, 0.8, -0.002, 0.0);
        w.state.ee_pose = target.translated(Vec3::new(0.0, 0.0, 0.01));
        w.set_target(Some(target));
        run_until_idle(&mut w, 100);
        let k = w.physics().k_contact;
        assert!((w.state().contact_force.z - k * 0.002).abs() < 1e-9);
        assert!((w.state().contact_force.z - 10.0).abs() < 1e-9);
    }

    #[test]
    fn no_force_without_overlap() {
        let mut w = world();
        w.step();
        assert_eq!(w.state().contact_force, Vec3::zeros());
    }

    fn place_ee_at(w: &mut World, p: Vec3) {
        w.state.ee_pose = Pose6D::new(p, 0.0, 0.0, 0.0);
        w.state.ee_target = None;
    }

    #[test]
    fn grasp_within_tolerance_holds_box() {
        let mut w = world();
        let b = w.state().object("box_a").unwrap().pose.position;
        place_ee_at(&mut w, b + Vec3::new(0.01, 0.0, 0.0));
        assert_eq!(w.grasp_attempt().unwrap(), GraspOutcome::Object("box_a".into()));
        assert_eq!(w.state().gripper.status, GripperStatus::Holding);
        assert_eq!(w.state().gripper.held_object.as_deref(), Some("box_a"));
    }

    #[test]
    fn empty_grasp_closes_gripper() {
        let mut w = world();
        place_ee_at(&mut w, Vec3::new(0.6, 0.85, 0.2));
        assert_eq!(w.grasp_attempt().unwrap(), GraspOutcome::Empty);
        assert_eq!(w.state().gripper.status, GripperStatus::ClosedEmpty);
        assert!(w.state().gripper.held_object.is_none());
    }

    #[test]
    fn grasp_while_holding_is_an_error() {
        let mut w = world();
        let b = w.state().object("box_a").unwrap().pose.position;
        place_ee_at(&mut w, b);
        w.grasp_attempt().unwrap();
        assert!(matches!(w.grasp_attempt(), Err(WorldError::GraspWhileHolding(_))));
    }

    #[test]
    fn nearest_screw_wins() {
        let mut w = world();
        let ids: Vec<String> = w.state().objects_of(ObjectClass::Screw).map(|s| s.id.clone()).collect();
        for id in &ids {
            let i = w.state().object_index(id).unwrap();
            let mut art = w.state.objects[i].articulation.unwrap();
            art.value = 0.0;
            w.state.objects[i].articulation = Some(art);
            w.state.objects[i].movable = true;
        }
        let tip = Vec3::new(0.5, 0.8, 0.015);
        let i0 = w.state().object_index(&ids[0]).unwrap();
        let i1 = w.state().object_index(&ids[1]).unwrap();
        w.state.objects[i0].pose.position = tip + Vec3::new(0.015, 0.0, 0.0);
        w.state.objects[i1].pose.position = tip + Vec3::new(0.0, -0.005, 0.0);
        place_ee_at(&mut w, tip);
        // independent nearest-neighbour search over every object's grasp point
        let expected = w
            .state()
            .objects
            .iter()
            .filter(|o| o.movable)
            .map(|o| ((o.pose.position - tip).norm(), o.id.clone()))
            .filter(|(d, _)| *d <= 0.02)
            .fold(None::<(f64, String)>, |acc, c| match acc {
                Some(a) if a.0 <= c.0 => Some(a),
                _ => Some(c),
            })
            .unwrap()
            .1;
        assert_eq!(expected, ids[1]);
        assert_eq!(w.grasp_attempt().unwrap(), GraspOutcome::Object(ids[1].clone()));
    }

    #[test]
    fn held_object_follows_rigidly() {
        let mut w = world();
        let b = w.state().object("box_a").unwrap().pose;
        place_ee_at(&mut w, b.position + Vec3::new(0.0, 0.0, 0.005));
        w.grasp_attempt().unwrap();
        let idx = w.state().held_index().unwrap();
        let offset = w.state().attachment.clone().unwrap().offset;
        w.set_target(Some(Pose6D::new(Vec3::new(0.1, 0.5, 0.2), 1.2, 0.0, 0.0)));
        for _ in 0..200 {
            w.step();
            let s = w.state();
            let rel = s.ee_pose.inverse().compose(&s.objects[idx].pose);
            assert!((rel.position - offset.position).norm() < 1e-12);
            assert!(rel.angle_error_to(&offset).norm() < 1e-12);
        }
    }

    #[test]
    fn release_over_table_settles_on_surface() {
        let mut w = world();
        let b = w.state().object("box_a").unwrap().clone();
        place_ee_at(&mut w, b.pose.position);
        w.grasp_attempt().unwrap();
        w.set_target(Some(Pose6D::from_xyz_yaw(0.5, 0.8, 0.15, 0.0)));
        run_until_idle(&mut w, 1000);
        w.release();
        let after = w.state().object("box_a").unwrap();
        assert!((after.pose.position.z - b.size.z / 2.0).abs() < 1e-12);
        assert_eq!(w.state().gripper.status, GripperStatus::Open);
    }

    #[test]
    fn release_while_open_is_noop() {
        let mut w = world();
        let before = w.snapshot();
        w.release();
        assert_eq!(w.snapshot(), before);
    }

    #[test]
    fn screw_released_over_screw_box_is_contained() {
        let mut w = world();
        let sb = w.state().objects_of(ObjectClass::ScrewBox).next().unwrap().clone();
        let sid = w.state().objects_of(ObjectClass::Screw).next().unwrap().id.clone();
        let i = w.state().object_index(&sid).unwrap();
        w.state.objects[i].movable = true;
        w.state.objects[i].articulation.as_mut().unwrap().value = 0.0;
        let p = w.state.objects[i].pose.position;
        place_ee_at(&mut w, p);
        w.grasp_attempt().unwrap();
        let drop = Vec3::new(sb.pose.position.x + 0.03, sb.pose.position.y - 0.02, 0.1);
        w.set_target(Some(Pose6D::new(drop, 0.0, 0.0, 0.0)));
        run_until_idle(&mut w, 1000);
        w.release();
        // point-in-rectangle oracle on the axis-aligned screw box footprint
        let inside = (drop.x - sb.pose.position.x).abs() <= sb.size.x / 2.0
            && (drop.y - sb.pose.position.y).abs() <= sb.size.y / 2.0;
        assert!(inside);
        assert_eq!(w.state.objects[i].container.as_deref(), Some(sb.id.as_str()));
    }

    fn engage_first_screw(w: &mut World) -> usize {
        let s = w.state().objects_of(ObjectClass::Screw).next().unwrap().id.clone();
        let i = w.state().object_index(&s).unwrap();
        let head = w.state.objects[i].screw_head();
        place_ee_at(w, head);
        i
    }

    #[test]
    fn loosen_fully_makes_screw_movable() {
        let mut w = world();
        let i = engage_first_screw(&mut w);
        assert_eq!(w.state.objects[i].articulation_value(), Some(4.0));
        assert_eq!(w.turn_tool(-4.0).unwrap(), 0.0);
        assert!(w.state.objects[i].movable);
    }

    #[test]
    fn loosen_clamps_at_zero() {
        let mut w = world();
        let i = engage_first_screw(&mut w);
        assert_eq!(w.turn_tool(-10.0).unwrap(), 0.0);
        assert!(w.state.objects[i].movable);
    }

    #[test]
    fn tighten_then_loosen_restores() {
        let mut w = world();
        let i = engage_first_screw(&mut w);
        w.turn_tool(-3.0).unwrap();
        let before = w.snapshot();
        w.turn_tool(2.0).unwrap();
        w.turn_tool(-2.0).unwrap();
        assert_eq!(w.snapshot(), before);
        assert!(!w.state.objects[i].movable);
    }

    #[test]
    fn turn_without_screw_fails() {
        let mut w = world();
        place_ee_at(&mut w, Vec3::new(0.6, 0.85, 0.2));
        assert_eq!(w.turn_tool(-1.0), Err(WorldError::NoScrewEngaged));
    }

    #[test]
    fn drawer_follows_handle_and_clamps() {
        let mut w = world();
        let id = w.spec().drawer_ids()[0].clone();
        let i = w.state().object_index(&id).unwrap();
        let handle = w.state.objects[i].handle_point();
        place_ee_at(&mut w, handle);
        assert_eq!(w.grasp_attempt().unwrap(), GraspOutcome::Handle(id.clone()));
        let axis = w.state.objects[i].drawer_axis();
        w.set_target(Some(Pose6D::new(handle + axis * 0.10, 0.0, 0.0, 0.0)));
        run_until_idle(&mut w, 200);
        assert!((w.state.objects[i].articulation_value().unwrap() - 0.10).abs() < 1e-12);
        assert!(w.state().contact_force.norm() < 1e-9);
        // pulling past the end of travel builds an opposing spring force
        w.set_target(Some(Pose6D::new(handle + axis * 0.30, 0.0, 0.0, 0.0)));
        for _ in 0..100 {
            w.step();
        }
        let art = w.state.objects[i].articulation.unwrap();
        assert_eq!(art.value, art.range[1]);
        assert!(w.state().contact_force.dot(&axis) < -w.physics().f_max);
    }

    #[test]
    fn eraser_in_contact_clears_dirt() {
        let mut w = world();
        let e = w.state().objects_of(ObjectClass::Eraser).next().unwrap().clone();
        place_ee_at(&mut w, e.pose.position);
        w.grasp_attempt().unwrap();
        let dirty = w.state().dirt_field.dirty_count();
        let c = w.spec().dirt_rect.min + Vec2::new(0.02, 0.02);
        let z = e.size.z / 2.0 - 0.001;
        w.set_target(Some(Pose6D::new(Vec3::new(c.x, c.y, z + 0.05), 0.0, 0.0, 0.0)));
        run_until_idle(&mut w, 1000);
        assert_eq!(w.state().dirt_field.dirty_count(), dirty);
        w.set_target(Some(Pose6D::new(Vec3::new(c.x, c.y, z), 0.0, 0.0, 0.0)));
        run_until_idle(&mut w, 1000);
        assert!(w.state().dirt_field.dirty_count() < dirty);
    }

    #[test]
    fn hash_ignores_clock_only() {
        let mut w = world();
        let h0 = w.state().content_hash();
        w.step();
        assert_eq!(w.state().content_hash(), h0);
        w.set_target(Some(Pose6D::from_xyz_yaw(0.0, 0.4, 0.3, 0.0)));
        w.step();
        assert_ne!(w.state().content_hash(), h0);
    }

    fn arb_pose() -> impl Strategy<Value = Pose6D> {
        (-0.7f64..0.7, -0.1f64..0.9, -0.05f64..0.6, -3.0f64..3.0)
            .prop_map(|(x, y, z, yaw)| Pose6D::from_xyz_yaw(x, y, z, yaw))
    }

    #[derive(Debug, Clone)]
    enum Cmd {
        Goto(Pose6D),
        Grasp,
        Release,
        Turn(f64),
        Steps(usize),
    }

    fn arb_cmd() -> impl Strategy<Value = Cmd> {
        prop_oneof![
            arb_pose().prop_map(Cmd::Goto),
            Just(Cmd::Grasp),
            Just(Cmd::Release),
            (-6.0f64..6.0).prop_map(Cmd::Turn),
            (1usize..80).prop_map(Cmd::Steps),
        ]
    }

    fn apply(w: &mut World, cmds: &[Cmd], mut check: impl FnMut(&WorkspaceState, &WorkspaceState)) {
        for c in cmds {
            match c {
                Cmd::Goto(p) => w.set_target(Some(*p)),
                Cmd::Grasp => {
                    let _ = w.grasp_attempt();
                }
                Cmd::Release => w.release(),
                Cmd::Turn(t) => {
                    let _ = w.turn_tool(*t);
                }
                Cmd::Steps(n) => {
                    for _ in 0..*n {
                        let before = w.snapshot();
                        w.step();
                        check(&before, w.state());
                    }
                }
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn fuzzed_commands_respect_invariants(cmds in proptest::collection::vec(arb_cmd(), 1..40)) {
            let mut w = world();
            let n = w.state().objects.len();
            let vmax = w.physics().v_max * w.physics().tick_dt;
            let mut violations = Vec::new();
            apply(&mut w, &cmds, |before, after| {
                let d = (after.ee_pose.position - before.ee_pose.position).norm();
                if d > vmax + 1e-12 { violations.push(format!("speed {d}")); }
                if (after.sim_time - before.sim_time - 0.01).abs() > 1e-9 { violations.push("clock".into()); }
                if !(-std::f64::consts::PI..std::f64::consts::PI).contains(&after.ee_pose.yaw) {
                    violations.push("yaw".into());
                }
            });
            prop_assert!(violations.is_empty(), "{:?}", violations);
            let s = w.state();
            prop_assert_eq!(s.objects.len(), n);
            for o in &s.objects {
                if let Some(a) = o.articulation {
                    prop_assert!(a.value >= a.range[0] && a.value <= a.range[1]);
                    if a.kind == ArticulationKind::ScrewJoint {
                        prop_assert_eq!(o.movable, a.value <= a.range[0]);
                    }
                }
                if s.held_index().map(|i| s.objects[i].id != o.id).unwrap_or(true) {
                    prop_assert!(o.bottom_z() >= -1e-9 || o.class == ObjectClass::Drawer);
                }
            }
            prop_assert_eq!(s.gripper.status == GripperStatus::Holding, s.gripper.held_object.is_some());
        }

        #[test]
        fn identical_streams_are_bit_identical(cmds in proptest::collection::vec(arb_cmd(), 1..30)) {
            let mut a = world();
            let mut b = world();
            apply(&mut a, &cmds, |_, _| {});
            apply(&mut b, &cmds, |_, _| {});
            prop_assert_eq!(a.snapshot(), b.snapshot());
        }
    }
}
