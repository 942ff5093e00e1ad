//! Authoring core: selection areas over the camera view, grounding of
//! pixel annotations into workspace poses, generalization of checklists
//! over groups, and decomposition into robot primitives.

mod compile;
mod ground;
mod selection;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{normalize_angle, Pose6D, Rect2, Vec2, Vec3};
use crate::perception::{FrameDescription, PerceptionError};
use crate::world::{ObjectClass, WorkspaceSpec, WorkspaceState};

pub use compile::{compile, compile_action, wipe_lanes, ActionSpan, Primitive, PrimitiveProgram};
pub use ground::{ground, ground_plan, GroundingContext};
pub use selection::{generalize, resolve_selection, Resolution, POINT_SELECT_RADIUS_PX};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("frame {seen} is stale (latest is {latest})")]
    StaleFrame { seen: u64, latest: u64 },
    #[error("selection area has an empty checklist")]
    EmptyChecklist,
    #[error("checklist order must be a permutation of 1..k: {0}")]
    InvalidChecklist(String),
    #[error("no surface under the annotated pixel")]
    NoSurface,
    #[error("object {0} can no longer be grounded")]
    UngroundableObject(String),
    #[error("action {0} is not grounded")]
    UngroundedAction(usize),
    #[error("{0} handle is required")]
    MissingHandle(&'static str),
    #[error("no free cell left in the screw box")]
    NoFreeCell,
    #[error("{kind} cannot act on {target}")]
    Incompatible { kind: ActionKind, target: String },
    #[error("selection target {0} is not in the selection")]
    UnknownTarget(String),
}

impl From<PerceptionError> for PlanError {
    fn from(_: PerceptionError) -> Self {
        PlanError::NoSurface
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    MoveKnown,
    MoveUnknown,
    Pick,
    Place,
    Pull,
    Push,
    Tighten,
    Loosen,
    Wipe,
}

impl ActionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::MoveKnown => "move_known",
            ActionKind::MoveUnknown => "move_unknown",
            ActionKind::Pick => "pick",
            ActionKind::Place => "place",
            ActionKind::Pull => "pull",
            ActionKind::Push => "push",
            ActionKind::Tighten => "tighten",
            ActionKind::Loosen => "loosen",
            ActionKind::Wipe => "wipe",
        }
    }

    pub fn is_move(self) -> bool {
        matches!(self, ActionKind::MoveKnown | ActionKind::MoveUnknown)
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Axis-aligned rectangle in image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelRect {
    pub min: Vec2,
    pub max: Vec2,
}

impl PixelRect {
    pub fn new(a: Vec2, b: Vec2) -> Self {
        Self {
            min: Vec2::new(a.x.min(b.x), a.y.min(b.y)),
            max: Vec2::new(a.x.max(b.x), a.y.max(b.y)),
        }
    }

    pub fn point(p: Vec2) -> Self {
        Self { min: p, max: p }
    }

    pub fn around(center: Vec2, half: f64) -> Self {
        Self::new(center - Vec2::new(half, half), center + Vec2::new(half, half))
    }

    pub fn is_point(&self) -> bool {
        self.min == self.max
    }

    pub fn contains(&self, p: &Vec2) -> bool {
        if self.is_point() {
            return (p - self.min).norm() <= POINT_SELECT_RADIUS_PX;
        }
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn corners(&self) -> [Vec2; 4] {
        [
            self.min,
            Vec2::new(self.max.x, self.min.y),
            self.max,
            Vec2::new(self.min.x, self.max.y),
        ]
    }
}

/// Interaction point plus orientation about the vertical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Handle {
    pub anchor: Vec2,
    pub yaw: f64,
}

impl Handle {
    pub fn new(anchor: Vec2, yaw: f64) -> Self {
        Self {
            anchor,
            yaw: normalize_angle(yaw),
        }
    }

    /// Interaction point and the two finger points drawn around it.
    pub fn triple(&self, finger_halfwidth_px: f64) -> [Vec2; 3] {
        let perp = Vec2::new(-self.yaw.sin(), self.yaw.cos()) * finger_halfwidth_px;
        [self.anchor, self.anchor + perp, self.anchor - perp]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HandlePair {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Handle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<Handle>,
}

/// What a selection area is bound to.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", from = "String")]
pub enum SelectionTarget {
    /// A detectable class; members are the detections inside the area.
    Class(ObjectClass),
    /// A named static object such as a drawer or the blue area.
    Static(String),
    Unknown,
}

impl SelectionTarget {
    pub const UNKNOWN: &'static str = "unknown_object";

    fn rank(&self) -> u8 {
        match self {
            SelectionTarget::Class(_) => 0,
            SelectionTarget::Static(_) => 1,
            SelectionTarget::Unknown => 2,
        }
    }

    pub fn name(&self) -> String {
        String::from(self.clone())
    }
}

impl From<SelectionTarget> for String {
    fn from(t: SelectionTarget) -> Self {
        match t {
            SelectionTarget::Class(c) => c.as_str().to_string(),
            SelectionTarget::Static(id) => id,
            SelectionTarget::Unknown => SelectionTarget::UNKNOWN.to_string(),
        }
    }
}

impl From<String> for SelectionTarget {
    fn from(s: String) -> Self {
        if s == SelectionTarget::UNKNOWN {
            return SelectionTarget::Unknown;
        }
        ObjectClass::ALL
            .into_iter()
            .find(|c| !c.is_static() && c.as_str() == s)
            .map(SelectionTarget::Class)
            .unwrap_or(SelectionTarget::Static(s))
    }
}

impl fmt::Display for SelectionTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChecklistItem {
    pub action: ActionKind,
    /// 1-based position among the area's checked actions.
    pub order: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionParams {
    /// Screw turns; the sign is implied by the action.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turns: Option<f64>,
    /// Wipe lane spacing in meters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionArea {
    pub rect: PixelRect,
    /// Bound target; the resolved default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_class: Option<SelectionTarget>,
    pub checklist: Vec<ChecklistItem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub handles: Option<HandlePair>,
    #[serde(default)]
    pub params: ActionParams,
}

impl SelectionArea {
    /// Area with a checklist in the given order.
    pub fn new(rect: PixelRect, actions: &[ActionKind]) -> Self {
        Self {
            rect,
            chosen_class: None,
            checklist: actions
                .iter()
                .enumerate()
                .map(|(i, a)| ChecklistItem {
                    action: *a,
                    order: i as u32 + 1,
                })
                .collect(),
            handles: None,
            params: ActionParams::default(),
        }
    }

    pub fn with_target(mut self, target: SelectionTarget) -> Self {
        self.chosen_class = Some(target);
        self
    }

    pub fn with_handles(mut self, start: Option<Handle>, goal: Option<Handle>) -> Self {
        self.handles = Some(HandlePair { start, goal });
        self
    }

    pub fn with_params(mut self, params: ActionParams) -> Self {
        self.params = params;
        self
    }
}

/// A fully grounded interaction, in workspace coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundedTarget {
    Transfer { grasp: Pose6D, release: Pose6D },
    Grasp { pose: Pose6D },
    Release { pose: Pose6D },
    Screw { pose: Pose6D, turns: f64 },
    Drawer { handle: Pose6D, axis: Vec3 },
    Area { rect: Rect2, contact_z: f64, yaw: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ActionTarget {
    /// A detected object or a known static object.
    Object {
        id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        goal: Option<Handle>,
    },
    /// Pixel-space handles for objects the robot does not detect.
    Handles {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        start: Option<Handle>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        goal: Option<Handle>,
    },
    /// Pixel rectangle, used for wiping.
    Area { rect: PixelRect },
    Grounded(GroundedTarget),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub kind: ActionKind,
    pub target: ActionTarget,
    #[serde(default)]
    pub params: ActionParams,
    /// Human-readable entry for the plan view.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub label: String,
}

impl ActionSpec {
    pub fn new(kind: ActionKind, target: ActionTarget) -> Self {
        let mut s = Self {
            kind,
            target,
            params: ActionParams::default(),
            label: String::new(),
        };
        s.label = s.default_label();
        s
    }

    pub fn on_object(kind: ActionKind, id: &str) -> Self {
        Self::new(
            kind,
            ActionTarget::Object {
                id: id.to_string(),
                goal: None,
            },
        )
    }

    pub fn with_params(mut self, params: ActionParams) -> Self {
        self.params = params;
        self
    }

    pub fn default_label(&self) -> String {
        match &self.target {
            ActionTarget::Object { id, .. } => format!("{} {id}", self.kind),
            ActionTarget::Handles { .. } => format!("{} object", self.kind),
            ActionTarget::Area { .. } => format!("{} area", self.kind),
            ActionTarget::Grounded(_) => self.kind.to_string(),
        }
    }

    pub fn is_grounded(&self) -> bool {
        matches!(self.target, ActionTarget::Grounded(_))
    }
}

/// The operator's ordered plan, before or after grounding.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GamePlan {
    pub actions: Vec<ActionSpec>,
    #[serde(default)]
    pub provenance: Vec<SelectionArea>,
}

impl GamePlan {
    pub fn single(action: ActionSpec) -> Self {
        Self {
            actions: vec![action],
            provenance: Vec::new(),
        }
    }

    pub fn labels(&self) -> Vec<String> {
        self.actions.iter().map(|a| a.label.clone()).collect()
    }
}

/// Resolves, generalizes, grounds and compiles selection areas in creation order.
pub fn author_plan(
    areas: &[SelectionArea],
    frame: &FrameDescription,
    latest_frame_id: u64,
    spec: &WorkspaceSpec,
    state: &WorkspaceState,
) -> Result<(GamePlan, PrimitiveProgram), PlanError> {
    let mut plan = GamePlan {
        actions: Vec::new(),
        provenance: areas.to_vec(),
    };
    for area in areas {
        let resolution = resolve_selection(&area.rect, frame, latest_frame_id)?;
        let target = area.chosen_class.clone().unwrap_or(resolution.default.clone());
        let members = resolution
            .members_of(&target)
            .ok_or_else(|| PlanError::UnknownTarget(target.name()))?;
        plan.actions.extend(generalize(area, &target, members)?);
    }
    let mut ctx = GroundingContext::new(spec, state, frame);
    let grounded = ground_plan(&plan, &mut ctx)?;
    let program = compile(&grounded, &spec.physics)?;
    Ok((grounded, program))
}

/// Grounds and compiles a single directly executed action.
pub fn single_action_program(
    action: &ActionSpec,
    frame: &FrameDescription,
    spec: &WorkspaceSpec,
    state: &WorkspaceState,
) -> Result<(GamePlan, PrimitiveProgram), PlanError> {
    let mut ctx = GroundingContext::new(spec, state, frame);
    let grounded = ground_plan(&GamePlan::single(action.clone()), &mut ctx)?;
    let program = compile(&grounded, &spec.physics)?;
    Ok((grounded, program))
}
