use serde::{Deserialize, Serialize};

use super::{ActionSpec, ActionTarget, GamePlan, GroundedTarget, PlanError};
use crate::geometry::{Pose6D, Rect2, Vec2, Vec3};
use crate::world::Physics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Primitive {
    /// Go to `pose` raised by the approach height.
    MoveAbove { pose: Pose6D },
    MoveTo { pose: Pose6D },
    /// Advance along `axis` until the opposing force reaches `force_limit`.
    MoveToContact { axis: Vec3, force_limit: f64 },
    Grasp,
    Release,
    /// Signed screw turns; negative loosens.
    Turn { count: f64 },
    /// Back off vertically by the approach height.
    Retreat,
    /// Place the camera at `pose`.
    LookAt { pose: Pose6D },
    /// Slide from `start` to `end` at the recorded contact height.
    WipeStroke { start: Vec3, end: Vec3 },
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::MoveAbove { .. } => "move_above",
            Primitive::MoveTo { .. } => "move_to",
            Primitive::MoveToContact { .. } => "move_to_contact",
            Primitive::Grasp => "grasp",
            Primitive::Release => "release",
            Primitive::Turn { .. } => "turn",
            Primitive::Retreat => "retreat",
            Primitive::LookAt { .. } => "look_at",
            Primitive::WipeStroke { .. } => "wipe_stroke",
        }
    }
}

/// Range of primitives produced by one action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpan {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveProgram {
    pub primitives: Vec<Primitive>,
    #[serde(default)]
    pub spans: Vec<ActionSpan>,
}

impl PrimitiveProgram {
    pub fn new(primitives: Vec<Primitive>) -> Self {
        let spans = if primitives.is_empty() {
            Vec::new()
        } else {
            vec![ActionSpan {
                label: "program".into(),
                start: 0,
                end: primitives.len(),
            }]
        };
        Self { primitives, spans }
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    /// Index of the action owning primitive `i`.
    pub fn action_of(&self, i: usize) -> Option<usize> {
        self.spans.iter().position(|s| s.start <= i && i < s.end)
    }
}

/// Serpentine strokes covering `rect` along its longer side.
pub fn wipe_lanes(rect: &Rect2, spacing: f64) -> Vec<(Vec2, Vec2)> {
    let along_x = rect.width() >= rect.height();
    let (long_min, long_max, short_min, short) = if along_x {
        (rect.min.x, rect.max.x, rect.min.y, rect.height())
    } else {
        (rect.min.y, rect.max.y, rect.min.x, rect.width())
    };
    let n = ((short / spacing) - 1e-9).ceil().max(1.0) as usize;
    (0..n)
        .map(|i| {
            let lateral = short_min + (i as f64 + 0.5) * short / n as f64;
            let (a, b) = if i % 2 == 0 {
                (long_min, long_max)
            } else {
                (long_max, long_min)
            };
            if along_x {
                (Vec2::new(a, lateral), Vec2::new(b, lateral))
            } else {
                (Vec2::new(lateral, a), Vec2::new(lateral, b))
            }
        })
        .collect()
}

fn pick(grasp: Pose6D) -> [Primitive; 4] {
    [
        Primitive::MoveAbove { pose: grasp },
        Primitive::MoveTo { pose: grasp },
        Primitive::Grasp,
        Primitive::MoveAbove { pose: grasp },
    ]
}

fn place(release: Pose6D) -> [Primitive; 4] {
    [
        Primitive::MoveAbove { pose: release },
        Primitive::MoveTo { pose: release },
        Primitive::Release,
        Primitive::MoveAbove { pose: release },
    ]
}

/// Decomposes one grounded action into primitives.
pub fn compile_action(action: &ActionSpec, physics: &Physics) -> Option<Vec<Primitive>> {
    let ActionTarget::Grounded(target) = &action.target else {
        return None;
    };
    let prims = match target {
        GroundedTarget::Transfer { grasp, release } => {
            let mut v = pick(*grasp).to_vec();
            v.extend(place(*release));
            v
        }
        GroundedTarget::Grasp { pose } => pick(*pose).to_vec(),
        GroundedTarget::Release { pose } => place(*pose).to_vec(),
        GroundedTarget::Screw { pose, turns } => vec![
            Primitive::MoveAbove { pose: *pose },
            Primitive::MoveTo { pose: *pose },
            Primitive::Turn { count: *turns },
            Primitive::Retreat,
        ],
        GroundedTarget::Drawer { handle, axis } => vec![
            Primitive::MoveAbove { pose: *handle },
            Primitive::MoveTo { pose: *handle },
            Primitive::Grasp,
            Primitive::MoveToContact {
                axis: *axis,
                force_limit: physics.f_slide,
            },
            Primitive::Release,
            Primitive::Retreat,
        ],
        GroundedTarget::Area {
            rect,
            contact_z,
            yaw,
        } => {
            let spacing = action.params.spacing.unwrap_or(physics.wipe_spacing);
            let lanes = wipe_lanes(rect, spacing);
            let at = |p: Vec2| Vec3::new(p.x, p.y, *contact_z);
            let entry = Pose6D::new(at(lanes[0].0), *yaw, 0.0, 0.0);
            let mut v = vec![
                Primitive::MoveAbove { pose: entry },
                Primitive::MoveToContact {
                    axis: -Vec3::z(),
                    force_limit: physics.wipe_force,
                },
            ];
            v.extend(lanes.into_iter().map(|(s, e)| Primitive::WipeStroke {
                start: at(s),
                end: at(e),
            }));
            v.push(Primitive::Retreat);
            v
        }
    };
    Some(prims)
}

/// Concatenates the decompositions of every action in order.
pub fn compile(plan: &GamePlan, physics: &Physics) -> Result<PrimitiveProgram, PlanError> {
    let mut program = PrimitiveProgram::default();
    for (i, action) in plan.actions.iter().enumerate() {
        let prims = compile_action(action, physics).ok_or(PlanError::UngroundedAction(i))?;
        let start = program.primitives.len();
        program.primitives.extend(prims);
        program.spans.push(ActionSpan {
            label: action.label.clone(),
            start,
            end: program.primitives.len(),
        });
    }
    Ok(program)
}
