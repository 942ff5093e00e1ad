//! The five study tasks and their goal predicates.

use serde::{Deserialize, Serialize};

use crate::perception::inspected_drawer;
use crate::world::{ObjectClass, WorkspaceSpec, WorkspaceState};

pub const TASK_COUNT: usize = 5;

/// Box the training task moves; the other two belong to task 1.
pub const TRAINING_BOX: &str = "box_a";
pub const GOAL_REGION: &str = "box_goal";
pub const WIPE_TARGET: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskDefinition {
    pub id: u8,
    pub name: &'static str,
}

pub const TASKS: [TaskDefinition; TASK_COUNT] = [
    TaskDefinition { id: 0, name: "training" },
    TaskDefinition { id: 1, name: "pick_and_place" },
    TaskDefinition { id: 2, name: "repeated_actions" },
    TaskDefinition { id: 3, name: "exploration" },
    TaskDefinition { id: 4, name: "continuous_action" },
];

fn box_in_goal(spec: &WorkspaceSpec, state: &WorkspaceState, id: &str) -> bool {
    let Some(region) = spec.region(GOAL_REGION) else {
        return false;
    };
    let held = state.held_index().map(|i| state.objects[i].id.as_str());
    state
        .object(id)
        .is_some_and(|o| held != Some(id) && region.contains(&o.pose.xy()) && o.bottom_z() <= 1e-6)
}

pub fn training_done(spec: &WorkspaceSpec, state: &WorkspaceState) -> bool {
    box_in_goal(spec, state, TRAINING_BOX)
}

pub fn pick_and_place_done(spec: &WorkspaceSpec, state: &WorkspaceState) -> bool {
    let others: Vec<_> = state
        .objects_of(ObjectClass::Box)
        .filter(|o| o.id != TRAINING_BOX)
        .map(|o| o.id.clone())
        .collect();
    !others.is_empty() && others.iter().all(|id| box_in_goal(spec, state, id))
}

pub fn screws_done(state: &WorkspaceState) -> bool {
    let held = state.held_index();
    let mut screws = state
        .objects
        .iter()
        .enumerate()
        .filter(|(_, o)| o.class == ObjectClass::Screw)
        .peekable();
    screws.peek().is_some()
        && screws.all(|(i, o)| {
            Some(i) != held
                && o.articulation_value() == Some(0.0)
                && o.container.as_deref().is_some_and(|c| {
                    state.object(c).is_some_and(|b| b.class == ObjectClass::ScrewBox)
                })
        })
}

pub fn wipe_done(state: &WorkspaceState) -> bool {
    state.dirt_field.cleared_fraction() >= WIPE_TARGET
}

pub fn target_drawer(spec: &WorkspaceSpec) -> Option<String> {
    spec.objects_of(ObjectClass::Drawer)
        .find(|d| d.contents.as_ref().is_some_and(|c| c.label == spec.target_label))
        .map(|d| d.id.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplorationStage {
    Closed,
    Opened,
    Inspected,
    Done,
}

/// Tracks which tasks have been satisfied at any point of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMonitor {
    target: Option<String>,
    stage: ExplorationStage,
    inspect_since: Option<f64>,
    done: [bool; TASK_COUNT],
}

impl TaskMonitor {
    pub fn new(spec: &WorkspaceSpec) -> Self {
        Self {
            target: target_drawer(spec),
            stage: ExplorationStage::Closed,
            inspect_since: None,
            done: [false; TASK_COUNT],
        }
    }

    pub fn stage(&self) -> ExplorationStage {
        self.stage
    }

    pub fn observe(&mut self, spec: &WorkspaceSpec, state: &WorkspaceState) {
        self.done[0] |= training_done(spec, state);
        self.done[1] |= pick_and_place_done(spec, state);
        self.done[2] |= screws_done(state);
        self.done[4] |= wipe_done(state);
        self.observe_exploration(spec, state);
        self.done[3] |= self.stage == ExplorationStage::Done;
    }

    fn observe_exploration(&mut self, spec: &WorkspaceSpec, state: &WorkspaceState) {
        let Some(target) = &self.target else {
            return;
        };
        let Some(art) = state.object(target).and_then(|d| d.articulation) else {
            return;
        };
        let p = &spec.physics;
        match self.stage {
            ExplorationStage::Closed => {
                if art.value >= p.drawer_open_fraction * art.range[1] {
                    self.stage = ExplorationStage::Opened;
                }
            }
            ExplorationStage::Opened => {
                let camera = spec.camera.camera_pose(&state.ee_pose);
                let looking = inspected_drawer(spec, state, &camera).is_some_and(|d| &d.id == target);
                if looking {
                    let since = *self.inspect_since.get_or_insert(state.sim_time);
                    if state.sim_time - since >= p.inspect_dwell - 1e-9 {
                        self.stage = ExplorationStage::Inspected;
                    }
                } else {
                    self.inspect_since = None;
                }
            }
            ExplorationStage::Inspected => {
                if art.value <= art.range[0] + p.drawer_closed_tolerance {
                    self.stage = ExplorationStage::Done;
                }
            }
            ExplorationStage::Done => {}
        }
    }

    pub fn done(&self) -> Vec<u8> {
        (0..TASK_COUNT as u8).filter(|i| self.done[*i as usize]).collect()
    }

    pub fn is_done(&self, task: u8) -> bool {
        self.done.get(task as usize).copied().unwrap_or(false)
    }

    pub fn score(&self) -> u32 {
        self.done.iter().filter(|d| **d).count() as u32
    }
}

/// Number of tasks satisfied anywhere in a trace of snapshots.
pub fn task_score<'a>(spec: &WorkspaceSpec, trace: impl IntoIterator<Item = &'a WorkspaceState>) -> u32 {
    let mut m = TaskMonitor::new(spec);
    for s in trace {
        m.observe(spec, s);
    }
    m.score()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Pose6D, Vec3};
    use crate::world::World;
    use std::sync::Arc;

    fn spec() -> Arc<WorkspaceSpec> {
        Arc::new(WorkspaceSpec::default_layout())
    }

    #[test]
    fn fresh_workspace_scores_zero() {
        let s = spec();
        let state = World::initial_state(&s);
        assert_eq!(task_score(&s, [&state]), 0);
    }

    #[test]
    fn only_training_box_moved_scores_one() {
        let s = spec();
        let mut state = World::initial_state(&s);
        let goal = s.region(GOAL_REGION).unwrap().center();
        let i = state.object_index(TRAINING_BOX).unwrap();
        let z = state.objects[i].pose.position.z;
        state.objects[i].pose = Pose6D::new(Vec3::new(goal.x, goal.y, z), 0.0, 0.0, 0.0);
        assert_eq!(task_score(&s, [&state]), 1);
    }

    #[test]
    fn score_is_order_independent_and_sticky() {
        let s = spec();
        let fresh = World::initial_state(&s);
        let mut moved = fresh.clone();
        let goal = s.region(GOAL_REGION).unwrap().center();
        let i = moved.object_index(TRAINING_BOX).unwrap();
        moved.objects[i].pose.position.x = goal.x;
        moved.objects[i].pose.position.y = goal.y;
        assert_eq!(task_score(&s, [&moved, &fresh]), 1);
        assert_eq!(task_score(&s, [&fresh, &moved]), 1);
    }

    #[test]
    fn exploration_needs_open_inspect_close() {
        let s = spec();
        let target = target_drawer(&s).unwrap();
        let mut state = World::initial_state(&s);
        let mut m = TaskMonitor::new(&s);
        let di = state.object_index(&target).unwrap();
        let mut art = state.objects[di].articulation.unwrap();
        art.value = art.range[1];
        state.objects[di].articulation = Some(art);
        m.observe(&s, &state);
        assert_eq!(m.stage(), ExplorationStage::Opened);
        // closing without looking inside does not count
        let mut closed = state.clone();
        art.value = 0.0;
        closed.objects[di].articulation = Some(art);
        m.observe(&s, &closed);
        assert!(!m.is_done(3));
    }

    #[test]
    fn target_is_the_labelled_drawer() {
        let s = spec();
        let t = target_drawer(&s).unwrap();
        assert_eq!(s.object(&t).unwrap().contents.as_ref().unwrap().label, s.target_label);
        let moved = s.with_label_on("drawer_1", &s.target_label).unwrap();
        assert_eq!(target_drawer(&moved).as_deref(), Some("drawer_1"));
    }
}
