//! The versioned workspace file: layout, camera, points of interest and
//! physics constants.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ArticulationKind, ObjectClass, ObjectInstance, WorldError};
use crate::geometry::{Pose6D, Rect2, Vec3};
use crate::perception::CameraModel;

pub const SCHEMA_VERSION: u32 = 1;

const DEFAULT_WORKSPACE: &str = include_str!("../../assets/workspace.json");

/// Physical and control constants shared by the world, executor and planner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Physics {
    pub tick_dt: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub k_contact: f64,
    pub f_slide: f64,
    pub f_max: f64,
    pub grasp_tolerance: f64,
    pub gripper_open_width: f64,
    pub gripper_actuation_time: f64,
    pub approach_height: f64,
    pub wipe_force: f64,
    pub wipe_spacing: f64,
    pub turn_duration: f64,
    pub dwell: f64,
    pub resume_retract: f64,
    pub snap_radius: f64,
    pub grasp_depth: f64,
    pub release_clearance: f64,
    pub dirt_cell: f64,
    pub contact_search_travel: f64,
    pub drawer_open_fraction: f64,
    pub drawer_closed_tolerance: f64,
    pub inspect_dwell: f64,
    pub nudge_step: f64,
    pub nudge_angle: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self {
            tick_dt: 0.01,
            v_max: 0.2,
            omega_max: PI / 4.0,
            k_contact: 5000.0,
            f_slide: 15.0,
            f_max: 30.0,
            grasp_tolerance: 0.02,
            gripper_open_width: 0.08,
            gripper_actuation_time: 0.5,
            approach_height: 0.10,
            wipe_force: 10.0,
            wipe_spacing: 0.02,
            turn_duration: 1.5,
            dwell: 0.2,
            resume_retract: 0.05,
            snap_radius: 0.015,
            grasp_depth: 0.02,
            release_clearance: 0.005,
            dirt_cell: 0.01,
            contact_search_travel: 0.30,
            drawer_open_fraction: 0.9,
            drawer_closed_tolerance: 0.005,
            inspect_dwell: 2.0,
            nudge_step: 0.05,
            nudge_angle: PI / 16.0,
        }
    }
}

impl Physics {
    /// Number of whole ticks covering `seconds`.
    pub fn ticks_for(&self, seconds: f64) -> u64 {
        (seconds / self.tick_dt).round().max(0.0) as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoiKind {
    GridHole,
    ScrewBoxCell,
}

/// A named static location used as a grounding reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointOfInterest {
    pub name: String,
    pub kind: PoiKind,
    pub position: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedRegion {
    pub name: String,
    pub rect: Rect2,
}

/// Legibility thresholds for what an operator can read off the camera view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Legibility {
    /// Maximum camera depth at which a drawer label can be read.
    pub label_distance: f64,
    /// Maximum pixel distance from the image center for a readable label.
    pub label_radius_px: f64,
    /// Maximum camera height above a drawer floor to count its contents.
    pub inspect_height: f64,
}

impl Default for Legibility {
    fn default() -> Self {
        Self {
            label_distance: 0.32,
            label_radius_px: 150.0,
            inspect_height: 0.45,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceSpec {
    pub schema_version: u32,
    pub name: String,
    pub table: Rect2,
    pub home: Pose6D,
    pub camera: CameraModel,
    #[serde(default)]
    pub physics: Physics,
    #[serde(default)]
    pub legibility: Legibility,
    pub dirt_rect: Rect2,
    pub points_of_interest: Vec<PointOfInterest>,
    #[serde(default)]
    pub regions: Vec<NamedRegion>,
    pub target_label: String,
    pub objects: Vec<ObjectInstance>,
}

impl WorkspaceSpec {
    /// The built-in desk layout: drawers on the left, boxes over the blue
    /// area in the middle, grid and screw box on the right.
    pub fn default_layout() -> Self {
        Self::from_json(DEFAULT_WORKSPACE).expect("bundled workspace file is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let spec: WorkspaceSpec =
            serde_json::from_str(text).map_err(|e| WorldError::InvalidWorkspace(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, WorldError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| WorldError::InvalidWorkspace(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("workspace spec serializes")
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let invalid = |msg: String| Err(WorldError::InvalidWorkspace(msg));
        if self.schema_version != SCHEMA_VERSION {
            return invalid(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        self.camera
            .validate()
            .map_err(|e| WorldError::InvalidWorkspace(e.to_string()))?;
        let mut ids = std::collections::BTreeSet::new();
        for o in &self.objects {
            if !ids.insert(o.id.as_str()) {
                return invalid(format!("duplicate object id {}", o.id));
            }
            let expect_detectable = o.class == ObjectClass::Screw;
            if o.detectable != expect_detectable {
                return invalid(format!("{}: detectable must be {expect_detectable}", o.id));
            }
            if o.class.is_static() && o.movable {
                return invalid(format!("{}: static objects are not movable", o.id));
            }
            if o.pose.position.z < -1e-9 {
                return invalid(format!("{}: below the table", o.id));
            }
            match (&o.class, &o.articulation) {
                (ObjectClass::Drawer, Some(a)) if a.kind == ArticulationKind::Prismatic => {}
                (ObjectClass::Screw, Some(a)) if a.kind == ArticulationKind::ScrewJoint => {
                    let loose = a.value <= a.range[0];
                    if o.movable != loose {
                        return invalid(format!("{}: movable must match turns remaining", o.id));
                    }
                }
                (ObjectClass::Drawer | ObjectClass::Screw, _) => {
                    return invalid(format!("{}: missing or wrong articulation", o.id));
                }
                (_, Some(_)) => return invalid(format!("{}: unexpected articulation", o.id)),
                _ => {}
            }
            if let Some(a) = &o.articulation {
                if a.range[0] > a.range[1] || a.value < a.range[0] || a.value > a.range[1] {
                    return invalid(format!("{}: articulation value outside range", o.id));
                }
            }
        }
        if self.objects_of(ObjectClass::ScrewBox).count() > 1
            || self.objects_of(ObjectClass::BlueArea).count() > 1
        {
            return invalid("at most one screw_box and one blue_area".into());
        }
        Ok(())
    }

    pub fn objects_of(&self, class: ObjectClass) -> impl Iterator<Item = &ObjectInstance> {
        self.objects.iter().filter(move |o| o.class == class)
    }

    pub fn object(&self, id: &str) -> Option<&ObjectInstance> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn pois(&self, kind: PoiKind) -> impl Iterator<Item = &PointOfInterest> {
        self.points_of_interest.iter().filter(move |p| p.kind == kind)
    }

    pub fn region(&self, name: &str) -> Option<Rect2> {
        self.regions.iter().find(|r| r.name == name).map(|r| r.rect)
    }

    /// Ids of drawers in file order.
    pub fn drawer_ids(&self) -> Vec<String> {
        self.objects_of(ObjectClass::Drawer).map(|o| o.id.clone()).collect()
    }

    /// Moves `label` onto `drawer_id`, swapping with whichever drawer held it.
    pub fn with_label_on(&self, drawer_id: &str, label: &str) -> Result<Self, WorldError> {
        let mut out = self.clone();
        let target = out
            .objects
            .iter()
            .position(|o| o.id == drawer_id && o.class == ObjectClass::Drawer)
            .ok_or_else(|| WorldError::UnknownObject(drawer_id.to_string()))?;
        let previous = out.objects[target]
            .contents
            .as_ref()
            .map(|c| c.label.clone())
            .unwrap_or_default();
        for o in out.objects.iter_mut() {
            if let Some(c) = o.contents.as_mut() {
                if c.label == label {
                    c.label = previous.clone();
                }
            }
        }
        if let Some(c) = out.objects[target].contents.as_mut() {
            c.label = label.to_string();
        }
        out.target_label = label.to_string();
        Ok(out)
    }
}
