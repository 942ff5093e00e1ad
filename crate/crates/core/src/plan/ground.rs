use std::collections::BTreeMap;

use super::{ActionKind, ActionSpec, ActionTarget, GamePlan, GroundedTarget, Handle, PixelRect, PlanError};
use crate::geometry::{Pose6D, Rect2, Vec2, Vec3};
use crate::perception::{unproject, FrameDescription};
use crate::world::{ObjectClass, PoiKind, WorkspaceSpec, WorkspaceState};

/// Cells closer than this to a resting object count as occupied.
const CELL_OCCUPIED_RADIUS: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Held {
    /// End-effector height above the held object's bottom.
    height: f64,
    yaw: f64,
}

/// Snapshot plus what earlier actions of the same plan will have changed.
#[derive(Debug, Clone)]
pub struct GroundingContext<'a> {
    spec: &'a WorkspaceSpec,
    state: &'a WorkspaceState,
    frame: &'a FrameDescription,
    held: Option<Held>,
    reserved_cells: Vec<String>,
    drawer_values: BTreeMap<String, f64>,
}

impl<'a> GroundingContext<'a> {
    pub fn new(spec: &'a WorkspaceSpec, state: &'a WorkspaceState, frame: &'a FrameDescription) -> Self {
        let held = state.held_index().map(|i| Held {
            height: state.ee_pose.position.z - state.objects[i].bottom_z(),
            yaw: state.ee_pose.yaw,
        });
        Self {
            spec,
            state,
            frame,
            held,
            reserved_cells: Vec::new(),
            drawer_values: BTreeMap::new(),
        }
    }

    fn surface_point(&self, pixel: &Vec2) -> Result<Vec3, PlanError> {
        Ok(unproject(
            pixel,
            self.state,
            &self.frame.camera_pose,
            &self.spec.camera,
            &self.spec.table,
        )?)
    }

    /// Grasp a little below the clicked top surface.
    fn unknown_grasp(&self, h: &Handle) -> Result<(Pose6D, Held), PlanError> {
        let p = self.surface_point(&h.anchor)?;
        let z = (p.z - self.spec.physics.grasp_depth).max(self.spec.physics.release_clearance);
        let (support, _) = self.state.support_at(&Vec2::new(p.x, p.y));
        let pose = Pose6D::new(Vec3::new(p.x, p.y, z), h.yaw, 0.0, 0.0);
        Ok((pose, Held { height: z - support, yaw: h.yaw }))
    }

    fn known_grasp(&self, id: &str) -> Result<(Pose6D, Held), PlanError> {
        let marker = self
            .frame
            .marker(id)
            .ok_or_else(|| PlanError::UngroundableObject(id.to_string()))?;
        let obj = self
            .state
            .object(id)
            .ok_or_else(|| PlanError::UngroundableObject(id.to_string()))?;
        let pose = marker.estimated_pose;
        let height = obj.size.z / 2.0;
        Ok((pose, Held { height, yaw: pose.yaw }))
    }

    fn release_at(&self, goal: &Handle, held: Held) -> Result<Pose6D, PlanError> {
        let q = self.surface_point(&goal.anchor)?;
        let z = q.z + held.height + self.spec.physics.release_clearance;
        Ok(Pose6D::new(Vec3::new(q.x, q.y, z), goal.yaw, 0.0, 0.0))
    }

    /// Next free screw-box cell in raster order of the current view.
    fn screw_box_release(&mut self, moving: &str, held: Held) -> Result<Pose6D, PlanError> {
        let mut cells: Vec<_> = self.spec.pois(PoiKind::ScrewBoxCell).collect();
        let key = |name: &str| {
            self.frame
                .poi(name)
                .map(|m| (0u8, m.pixel.y, m.pixel.x))
                .unwrap_or((1, 0.0, 0.0))
        };
        cells.sort_by(|a, b| {
            let (ka, kb) = (key(&a.name), key(&b.name));
            ka.0.cmp(&kb.0)
                .then(ka.1.total_cmp(&kb.1))
                .then(ka.2.total_cmp(&kb.2))
                .then_with(|| a.name.cmp(&b.name))
        });
        let cell = cells
            .into_iter()
            .find(|c| {
                !self.reserved_cells.contains(&c.name)
                    && !self.state.objects.iter().any(|o| {
                        o.id != moving
                            && !o.class.is_static()
                            && (o.pose.xy() - c.position.xy()).norm() < CELL_OCCUPIED_RADIUS
                    })
            })
            .ok_or(PlanError::NoFreeCell)?;
        self.reserved_cells.push(cell.name.clone());
        let z = cell.position.z + held.height + self.spec.physics.release_clearance;
        Ok(Pose6D::new(
            Vec3::new(cell.position.x, cell.position.y, z),
            held.yaw,
            0.0,
            0.0,
        ))
    }

    fn is_screw(&self, id: &str) -> bool {
        self.state
            .object(id)
            .is_some_and(|o| o.class == ObjectClass::Screw)
    }

    fn known_release(&mut self, id: &str, goal: Option<Handle>, held: Held) -> Result<Pose6D, PlanError> {
        match goal {
            Some(g) => self.release_at(&g, held),
            None if self.is_screw(id) => self.screw_box_release(id, held),
            None => Err(PlanError::MissingHandle("goal")),
        }
    }

    fn held_or_default(&self) -> Held {
        self.held.unwrap_or(Held {
            height: 0.0,
            yaw: self.state.ee_pose.yaw,
        })
    }

    fn drawer_target(&mut self, kind: ActionKind, id: &str) -> Result<GroundedTarget, PlanError> {
        let drawer = self
            .state
            .object(id)
            .filter(|o| o.class == ObjectClass::Drawer)
            .ok_or_else(|| PlanError::Incompatible {
                kind,
                target: id.to_string(),
            })?;
        let art = drawer.articulation.expect("drawers are articulated");
        let value = *self.drawer_values.get(id).unwrap_or(&art.value);
        let axis = drawer.drawer_axis();
        let handle = Pose6D::new(drawer.handle_point_at(value), axis.y.atan2(axis.x), 0.0, 0.0);
        let (axis, next) = if kind == ActionKind::Pull {
            (axis, art.range[1])
        } else {
            (-axis, art.range[0])
        };
        self.drawer_values.insert(id.to_string(), next);
        Ok(GroundedTarget::Drawer { handle, axis })
    }

    fn screw_target(&self, kind: ActionKind, id: &str, turns: Option<f64>) -> Result<GroundedTarget, PlanError> {
        if !self.is_screw(id) {
            return Err(PlanError::Incompatible {
                kind,
                target: id.to_string(),
            });
        }
        let (pose, _) = self.known_grasp(id)?;
        let art = self
            .state
            .object(id)
            .and_then(|o| o.articulation)
            .expect("screws are articulated");
        let n = turns.map(f64::abs).unwrap_or(art.range[1] - art.range[0]);
        let turns = if kind == ActionKind::Loosen { -n } else { n };
        Ok(GroundedTarget::Screw { pose, turns })
    }

    fn wipe_target(&self, rect: Rect2, surface_z: f64) -> GroundedTarget {
        let held = self.held_or_default();
        GroundedTarget::Area {
            rect,
            contact_z: surface_z + held.height,
            yaw: held.yaw,
        }
    }

    fn pixel_area(&self, rect: &PixelRect) -> Result<(Rect2, f64), PlanError> {
        let pts = rect
            .corners()
            .iter()
            .map(|c| self.surface_point(c))
            .collect::<Result<Vec<_>, _>>()?;
        let min = Vec2::new(
            pts.iter().map(|p| p.x).fold(f64::INFINITY, f64::min),
            pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min),
        );
        let max = Vec2::new(
            pts.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max),
            pts.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max),
        );
        let z = pts.iter().map(|p| p.z).sum::<f64>() / pts.len() as f64;
        Ok((Rect2::new(min, max), z))
    }

    fn track(&mut self, target: &GroundedTarget) {
        match target {
            GroundedTarget::Transfer { .. } | GroundedTarget::Release { .. } => self.held = None,
            _ => {}
        }
    }
}

fn incompatible(kind: ActionKind, target: &ActionTarget) -> PlanError {
    PlanError::Incompatible {
        kind,
        target: serde_json::to_string(target).unwrap_or_default(),
    }
}

/// Grounds one action against the snapshot in `ctx`.
pub fn ground(action: &ActionSpec, ctx: &mut GroundingContext<'_>) -> Result<ActionSpec, PlanError> {
    use ActionKind as K;
    use ActionTarget as T;
    let target = match (action.kind, &action.target) {
        (_, T::Grounded(g)) => {
            if let GroundedTarget::Grasp { pose } = g {
                ctx.held = Some(Held {
                    height: pose.position.z,
                    yaw: pose.yaw,
                });
            }
            g.clone()
        }
        (K::MoveUnknown, T::Handles { start, goal }) => {
            let start = start.ok_or(PlanError::MissingHandle("start"))?;
            let goal = goal.ok_or(PlanError::MissingHandle("goal"))?;
            let (grasp, held) = ctx.unknown_grasp(&start)?;
            let release = ctx.release_at(&goal, held)?;
            GroundedTarget::Transfer { grasp, release }
        }
        (K::MoveKnown, T::Object { id, goal }) => {
            let (grasp, held) = ctx.known_grasp(id)?;
            let release = ctx.known_release(id, *goal, held)?;
            GroundedTarget::Transfer { grasp, release }
        }
        (K::Pick, T::Object { id, .. }) => {
            let (pose, held) = ctx.known_grasp(id)?;
            ctx.held = Some(held);
            GroundedTarget::Grasp { pose }
        }
        (K::Pick, T::Handles { start, .. }) => {
            let start = start.ok_or(PlanError::MissingHandle("start"))?;
            let (pose, held) = ctx.unknown_grasp(&start)?;
            ctx.held = Some(held);
            GroundedTarget::Grasp { pose }
        }
        (K::Place, T::Object { id, goal }) => {
            let held = ctx.held_or_default();
            GroundedTarget::Release {
                pose: ctx.known_release(id, *goal, held)?,
            }
        }
        (K::Place, T::Handles { goal, .. }) => {
            let goal = goal.ok_or(PlanError::MissingHandle("goal"))?;
            let held = ctx.held_or_default();
            GroundedTarget::Release {
                pose: ctx.release_at(&goal, held)?,
            }
        }
        (K::Pull | K::Push, T::Object { id, .. }) => ctx.drawer_target(action.kind, id)?,
        (K::Loosen | K::Tighten, T::Object { id, .. }) => {
            ctx.screw_target(action.kind, id, action.params.turns)?
        }
        (K::Wipe, T::Object { id, .. }) => {
            let area = ctx
                .state
                .object(id)
                .filter(|o| o.class == ObjectClass::BlueArea)
                .ok_or_else(|| incompatible(action.kind, &action.target))?;
            ctx.wipe_target(ctx.spec.dirt_rect, area.top_z())
        }
        (K::Wipe, T::Area { rect }) => {
            let (rect, z) = ctx.pixel_area(rect)?;
            ctx.wipe_target(rect, z)
        }
        (kind, target) => return Err(incompatible(kind, target)),
    };
    ctx.track(&target);
    Ok(ActionSpec {
        kind: action.kind,
        target: ActionTarget::Grounded(target),
        params: action.params,
        label: action.label.clone(),
    })
}

pub fn ground_plan(plan: &GamePlan, ctx: &mut GroundingContext<'_>) -> Result<GamePlan, PlanError> {
    Ok(GamePlan {
        actions: plan
            .actions
            .iter()
            .map(|a| ground(a, ctx))
            .collect::<Result<_, _>>()?,
        provenance: plan.provenance.clone(),
    })
}
