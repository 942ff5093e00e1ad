//! Ground-truth exploration: look at each drawer in turn, read its label, and
//! open, inspect and close the first one that matches.

use std::sync::Arc;

use thiserror::Error;

use crate::executor::Executor;
use crate::geometry::{Pose6D, Vec3};
use crate::perception::describe;
use crate::plan::{single_action_program, ActionKind, ActionSpec, Primitive, PrimitiveProgram};
use crate::world::{ObjectClass, World, WorkspaceSpec, WorkspaceState};

const MAX_TICKS: u64 = 200_000;
/// Camera height above a drawer when reading its label.
const READ_DEPTH: f64 = 0.25;
/// Camera height above the drawer floor when looking inside.
const INSPECT_DEPTH: f64 = 0.2;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("no drawer is labelled {label}")]
    LabelNotFound {
        label: String,
        final_state: Box<WorkspaceState>,
    },
    #[error("oracle step failed: {0}")]
    Stuck(String),
}

#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub drawer: String,
    pub item_count: u32,
    /// Drawers whose label was read, in order.
    pub visited: Vec<String>,
    pub final_state: WorkspaceState,
}

fn run(exec: &mut Executor, program: PrimitiveProgram) -> Result<(), OracleError> {
    exec.enqueue(program).map_err(|e| OracleError::Stuck(e.to_string()))?;
    exec.run_until_settled(MAX_TICKS);
    if !exec.is_idle() {
        return Err(OracleError::Stuck("program did not finish".into()));
    }
    Ok(())
}

fn look_at(exec: &mut Executor, point: Vec3, depth: f64) -> Result<(), OracleError> {
    let pose = Pose6D::new(point + Vec3::new(0.0, 0.0, depth), 0.0, 0.0, std::f64::consts::PI);
    run(exec, PrimitiveProgram::new(vec![Primitive::LookAt { pose }]))
}

fn drawer_action(exec: &mut Executor, kind: ActionKind, id: &str) -> Result<(), OracleError> {
    let world = exec.world();
    let frame = describe(world.spec(), world.state(), 0, 0.0, 0);
    let (_, program) = single_action_program(&ActionSpec::on_object(kind, id), &frame, world.spec(), world.state())
        .map_err(|e| OracleError::Stuck(e.to_string()))?;
    run(exec, program)
}

pub fn algorithm1_oracle(spec: Arc<WorkspaceSpec>, label: &str) -> Result<OracleOutcome, OracleError> {
    let mut exec = Executor::new(World::new(spec.clone()));
    let mut drawers: Vec<_> = spec.objects_of(ObjectClass::Drawer).map(|d| d.id.clone()).collect();
    drawers.sort();
    let mut visited = Vec::new();
    for id in drawers {
        let front = exec.world().state().object(&id).expect("drawer").pose.position;
        look_at(&mut exec, front, READ_DEPTH)?;
        visited.push(id.clone());
        if exec.world().read_label(&id) != Some(label) {
            continue;
        }
        drawer_action(&mut exec, ActionKind::Pull, &id)?;
        let d = exec.world().state().object(&id).expect("drawer").clone();
        let inside = d.pose.position + d.drawer_axis() * (d.articulation_value().unwrap_or(0.0) / 2.0);
        look_at(&mut exec, Vec3::new(inside.x, inside.y, d.floor_z()), INSPECT_DEPTH)?;
        let dwell = (spec.physics.inspect_dwell / spec.physics.tick_dt).ceil() as u64;
        for _ in 0..dwell {
            exec.run_tick();
        }
        let item_count = exec.world().count_items(&id).unwrap_or(0);
        drawer_action(&mut exec, ActionKind::Push, &id)?;
        return Ok(OracleOutcome {
            drawer: id,
            item_count,
            visited,
            final_state: exec.world().snapshot(),
        });
    }
    Err(OracleError::LabelNotFound {
        label: label.to_string(),
        final_state: Box::new(exec.world().snapshot()),
    })
}
