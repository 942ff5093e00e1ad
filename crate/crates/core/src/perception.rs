//! Simulated eye-in-hand camera: pinhole projection, ray-cast depth,
//! ground-truth detection with optional pose noise, and the scene
//! description sent to operators.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose6D, Rect2, UprightBox, Vec2, Vec3};
use crate::world::{
    GripperStatus, ObjectClass, ObjectInstance, PoiKind, PointOfInterest, WorkspaceSpec,
    WorkspaceState,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("point is out of view")]
    OutOfView,
    #[error("no surface along the pixel ray")]
    NoSurface,
    #[error("invalid camera model: {0}")]
    InvalidModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub focal: f64,
    pub principal: Vec2,
    pub width: u32,
    pub height: u32,
    /// Camera frame in the end-effector frame.
    pub mount: Pose6D,
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), PerceptionError> {
        if !(self.focal > 0.0) {
            return Err(PerceptionError::InvalidModel("focal must be positive".into()));
        }
        if !self.in_bounds(&self.principal) {
            return Err(PerceptionError::InvalidModel(
                "principal point outside the image".into(),
            ));
        }
        Ok(())
    }

    pub fn in_bounds(&self, px: &Vec2) -> bool {
        px.x >= 0.0 && px.y >= 0.0 && px.x <= self.width as f64 && px.y <= self.height as f64
    }

    pub fn camera_pose(&self, ee: &Pose6D) -> Pose6D {
        ee.compose(&self.mount)
    }

    /// End-effector pose that puts the camera at `camera`.
    pub fn ee_for_camera(&self, camera: &Pose6D) -> Pose6D {
        camera.compose(&self.mount.inverse())
    }

    /// Unnormalized world ray direction whose camera-frame z component is 1.
    pub fn ray_direction(&self, pixel: &Vec2, camera_pose: &Pose6D) -> Vec3 {
        let local = Vec3::new(
            (pixel.x - self.principal.x) / self.focal,
            (pixel.y - self.principal.y) / self.focal,
            1.0,
        );
        camera_pose.rotation() * local
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub pixel: Vec2,
    pub depth: f64,
}

pub fn project(
    point: &Vec3,
    camera_pose: &Pose6D,
    model: &CameraModel,
) -> Result<Projection, PerceptionError> {
    let c = camera_pose.inverse_transform_point(point);
    if c.z <= 0.0 {
        return Err(PerceptionError::OutOfView);
    }
    let pixel = model.principal + Vec2::new(c.x / c.z, c.y / c.z) * model.focal;
    if !model.in_bounds(&pixel) {
        return Err(PerceptionError::OutOfView);
    }
    Ok(Projection {
        pixel,
        depth: c.z,
    })
}

/// Solid geometry a camera ray can hit besides the table plane.
pub fn surfaces(state: &WorkspaceState) -> impl Iterator<Item = (usize, UprightBox)> + '_ {
    state
        .objects
        .iter()
        .enumerate()
        .filter_map(|(i, o)| match o.class {
            ObjectClass::Box | ObjectClass::Eraser | ObjectClass::Screw => {
                Some((i, o.bounding_box()))
            }
            ObjectClass::Drawer => Some((i, o.front_panel())),
            _ => None,
        })
}

fn table_hit(origin: &Vec3, dir: &Vec3, table: &Rect2) -> Option<f64> {
    if dir.z >= 0.0 || origin.z <= 0.0 {
        return None;
    }
    let t = -origin.z / dir.z;
    let p = origin + dir * t;
    table.contains(&Vec2::new(p.x, p.y)).then_some(t)
}

/// Camera-frame depth of the first surface along the ray through `pixel`.
pub fn depth_at(
    pixel: &Vec2,
    state: &WorkspaceState,
    camera_pose: &Pose6D,
    model: &CameraModel,
    table: &Rect2,
) -> Result<f64, PerceptionError> {
    if !model.in_bounds(pixel) {
        return Err(PerceptionError::OutOfView);
    }
    let origin = camera_pose.position;
    let dir = model.ray_direction(pixel, camera_pose);
    let mut best = table_hit(&origin, &dir, table);
    for (_, b) in surfaces(state) {
        if let Some(t) = b.ray_entry(&origin, &dir, 0.0) {
            best = Some(best.map_or(t, |bt: f64| bt.min(t)));
        }
    }
    best.ok_or(PerceptionError::NoSurface)
}

pub fn unproject(
    pixel: &Vec2,
    state: &WorkspaceState,
    camera_pose: &Pose6D,
    model: &CameraModel,
    table: &Rect2,
) -> Result<Vec3, PerceptionError> {
    let depth = depth_at(pixel, state, camera_pose, model, table)?;
    Ok(camera_pose.position + model.ray_direction(pixel, camera_pose) * depth)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMarker {
    pub object_id: String,
    pub class: ObjectClass,
    pub anchor_pixel: Vec2,
    pub outline: Vec<Vec2>,
    pub estimated_pose: Pose6D,
}

fn id_seed(seed: u64, id: &str) -> u64 {
    // FNV-1a so the stream per object does not depend on detection order
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed
}

fn occluded(state: &WorkspaceState, idx: usize, origin: &Vec3, target: &Vec3) -> bool {
    let dir = target - origin;
    surfaces(state)
        .filter(|(i, _)| *i != idx)
        .any(|(_, b)| matches!(b.ray_entry(origin, &dir, 0.0), Some(t) if t < 1.0 - 1e-9))
}

fn noisy_pose(o: &ObjectInstance, sigma: f64, seed: u64) -> Pose6D {
    if sigma <= 0.0 {
        return o.pose;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(id_seed(seed, &o.id));
    let pos = Normal::new(0.0, sigma).expect("sigma is finite");
    let yaw = Normal::new(0.0, sigma * 10.0).expect("sigma is finite");
    let d = Vec3::new(pos.sample(&mut rng), pos.sample(&mut rng), pos.sample(&mut rng));
    Pose6D::new(
        o.pose.position + d,
        o.pose.yaw + yaw.sample(&mut rng),
        o.pose.pitch,
        o.pose.roll,
    )
}

/// One marker per detectable object that is in view, not held and not occluded.
pub fn detect(
    state: &WorkspaceState,
    camera_pose: &Pose6D,
    model: &CameraModel,
    sigma: f64,
    seed: u64,
) -> Vec<DetectionMarker> {
    let held = state.held_index();
    let origin = camera_pose.position;
    state
        .objects
        .iter()
        .enumerate()
        .filter(|(i, o)| o.detectable && Some(*i) != held)
        .filter_map(|(i, o)| {
            let anchor = project(&o.pose.position, camera_pose, model).ok()?;
            if occluded(state, i, &origin, &o.pose.position) {
                return None;
            }
            let outline = o
                .bounding_box()
                .footprint_corners()
                .iter()
                .filter_map(|c| project(c, camera_pose, model).ok().map(|p| p.pixel))
                .collect();
            Some(DetectionMarker {
                object_id: o.id.clone(),
                class: o.class,
                anchor_pixel: anchor.pixel,
                outline,
                estimated_pose: noisy_pose(o, sigma, seed),
            })
        })
        .collect()
}

/// Snaps screw estimates onto the nearest grid hole within `snap_radius`.
pub fn filter_with_pois(
    markers: Vec<DetectionMarker>,
    pois: &[PointOfInterest],
    snap_radius: f64,
) -> Vec<DetectionMarker> {
    markers
        .into_iter()
        .map(|mut m| {
            if m.class != ObjectClass::Screw {
                return m;
            }
            let p = m.estimated_pose.position;
            let nearest = pois
                .iter()
                .filter(|q| q.kind == PoiKind::GridHole)
                .map(|q| ((q.position.xy() - p.xy()).norm(), q))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            if let Some((d, q)) = nearest {
                if d <= snap_radius {
                    m.estimated_pose.position = Vec3::new(q.position.x, q.position.y, p.z);
                }
            }
            m
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorKind {
    Drawer,
    Grid,
    ScrewBox,
    BlueArea,
    GridHole,
    ScrewBoxCell,
}

impl AnchorKind {
    /// Static objects an operator can target with a selection area.
    pub fn selectable(self) -> bool {
        matches!(self, AnchorKind::Drawer | AnchorKind::ScrewBox | AnchorKind::BlueArea)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiMarker {
    pub name: String,
    pub kind: AnchorKind,
    pub pixel: Vec2,
    /// Drawer label, present when the camera is close enough to read it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Drawer item count, present while the camera looks into the open drawer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_count: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDescription {
    pub frame_id: u64,
    pub camera_pose: Pose6D,
    pub markers: Vec<DetectionMarker>,
    pub gripper_status: GripperStatus,
    pub poi_markers: Vec<PoiMarker>,
}

impl FrameDescription {
    /// Equal apart from the frame id.
    pub fn same_view(&self, other: &FrameDescription) -> bool {
        self.camera_pose == other.camera_pose
            && self.markers == other.markers
            && self.gripper_status == other.gripper_status
            && self.poi_markers == other.poi_markers
    }

    pub fn marker(&self, id: &str) -> Option<&DetectionMarker> {
        self.markers.iter().find(|m| m.object_id == id)
    }

    pub fn poi(&self, name: &str) -> Option<&PoiMarker> {
        self.poi_markers.iter().find(|m| m.name == name)
    }
}

/// Whether a drawer's label can be read from `camera_pose`.
pub fn label_legible(spec: &WorkspaceSpec, drawer: &ObjectInstance, camera_pose: &Pose6D) -> bool {
    let Ok(p) = project(&drawer.pose.position, camera_pose, &spec.camera) else {
        return false;
    };
    p.depth <= spec.legibility.label_distance
        && (p.pixel - spec.camera.principal).norm() <= spec.legibility.label_radius_px
}

/// The drawer whose open interior the camera is looking into, if any.
pub fn inspected_drawer<'a>(
    spec: &WorkspaceSpec,
    state: &'a WorkspaceState,
    camera_pose: &Pose6D,
) -> Option<&'a ObjectInstance> {
    let origin = camera_pose.position;
    let axis = camera_pose.rotation() * Vec3::z();
    state.objects_of(ObjectClass::Drawer).find(|d| {
        let Some(a) = d.articulation else {
            return false;
        };
        if a.value < spec.physics.drawer_open_fraction * a.range[1] {
            return false;
        }
        let floor = d.floor_z();
        if axis.z >= 0.0 || origin.z - floor > spec.legibility.inspect_height {
            return false;
        }
        let t = (floor - origin.z) / axis.z;
        let hit = origin + axis * t;
        d.exposed_interior_contains(&hit.xy())
    })
}

fn anchor_kind(class: ObjectClass) -> Option<AnchorKind> {
    match class {
        ObjectClass::Drawer => Some(AnchorKind::Drawer),
        ObjectClass::Grid => Some(AnchorKind::Grid),
        ObjectClass::ScrewBox => Some(AnchorKind::ScrewBox),
        ObjectClass::BlueArea => Some(AnchorKind::BlueArea),
        _ => None,
    }
}

/// World point a static object's on-screen anchor sits on.
pub fn static_anchor(o: &ObjectInstance) -> Vec3 {
    if o.class == ObjectClass::Drawer {
        o.handle_point()
    } else {
        o.pose.position
    }
}

/// Renders the operator's view of `state` with the given frame id.
pub fn describe(
    spec: &WorkspaceSpec,
    state: &WorkspaceState,
    frame_id: u64,
    sigma: f64,
    seed: u64,
) -> FrameDescription {
    let model = &spec.camera;
    let camera_pose = model.camera_pose(&state.ee_pose);
    let markers = filter_with_pois(
        detect(state, &camera_pose, model, sigma, seed),
        &spec.points_of_interest,
        spec.physics.snap_radius,
    );
    let inspected = inspected_drawer(spec, state, &camera_pose).map(|d| d.id.clone());
    let mut poi_markers = Vec::new();
    for o in &state.objects {
        let Some(kind) = anchor_kind(o.class) else {
            continue;
        };
        let Ok(p) = project(&static_anchor(o), &camera_pose, model) else {
            continue;
        };
        let contents = o.contents.as_ref();
        poi_markers.push(PoiMarker {
            name: o.id.clone(),
            kind,
            pixel: p.pixel,
            label: contents
                .filter(|_| label_legible(spec, o, &camera_pose))
                .map(|c| c.label.clone()),
            item_count: contents
                .filter(|_| inspected.as_deref() == Some(o.id.as_str()))
                .map(|c| c.items),
        });
    }
    for q in &spec.points_of_interest {
        let Ok(p) = project(&q.position, &camera_pose, model) else {
            continue;
        };
        poi_markers.push(PoiMarker {
            name: q.name.clone(),
            kind: match q.kind {
                PoiKind::GridHole => AnchorKind::GridHole,
                PoiKind::ScrewBoxCell => AnchorKind::ScrewBoxCell,
            },
            pixel: p.pixel,
            label: None,
            item_count: None,
        });
    }
    FrameDescription {
        frame_id,
        camera_pose,
        markers,
        gripper_status: state.gripper.status,
        poi_markers,
    }
}
