use std::cmp::Ordering;
use std::collections::BTreeMap;

use super::{ActionKind, ActionSpec, ActionTarget, PixelRect, PlanError, SelectionArea, SelectionTarget};
use crate::geometry::Vec2;
use crate::perception::FrameDescription;

/// Radius around a single click that counts as inside the selection.
pub const POINT_SELECT_RADIUS_PX: f64 = 12.0;

/// Candidate targets of a selection area, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    pub candidates: Vec<(SelectionTarget, Vec<String>)>,
    pub default: SelectionTarget,
    pub members: Vec<String>,
}

impl Resolution {
    pub fn members_of(&self, target: &SelectionTarget) -> Option<&[String]> {
        self.candidates
            .iter()
            .find(|(t, _)| t == target)
            .map(|(_, m)| m.as_slice())
    }
}

fn raster_cmp(a: &(Vec2, String), b: &(Vec2, String)) -> Ordering {
    a.0.y
        .total_cmp(&b.0.y)
        .then(a.0.x.total_cmp(&b.0.x))
        .then_with(|| a.1.cmp(&b.1))
}

fn raster_ids(mut v: Vec<(Vec2, String)>) -> Vec<String> {
    v.sort_by(raster_cmp);
    v.into_iter().map(|(_, id)| id).collect()
}

pub fn resolve_selection(
    rect: &PixelRect,
    frame: &FrameDescription,
    latest_frame_id: u64,
) -> Result<Resolution, PlanError> {
    if frame.frame_id != latest_frame_id {
        return Err(PlanError::StaleFrame {
            seen: frame.frame_id,
            latest: latest_frame_id,
        });
    }
    let mut by_class: BTreeMap<_, Vec<(Vec2, String)>> = BTreeMap::new();
    for m in frame.markers.iter().filter(|m| rect.contains(&m.anchor_pixel)) {
        by_class
            .entry(m.class)
            .or_default()
            .push((m.anchor_pixel, m.object_id.clone()));
    }
    let mut candidates: Vec<(SelectionTarget, Vec<String>)> = by_class
        .into_iter()
        .map(|(c, v)| (SelectionTarget::Class(c), raster_ids(v)))
        .collect();
    for p in frame
        .poi_markers
        .iter()
        .filter(|p| p.kind.selectable() && rect.contains(&p.pixel))
    {
        candidates.push((SelectionTarget::Static(p.name.clone()), vec![p.name.clone()]));
    }
    candidates.push((SelectionTarget::Unknown, Vec::new()));
    candidates.sort_by(|a, b| {
        b.1.len()
            .cmp(&a.1.len())
            .then(a.0.rank().cmp(&b.0.rank()))
            .then_with(|| a.0.name().cmp(&b.0.name()))
    });
    let (default, members) = candidates[0].clone();
    Ok(Resolution {
        candidates,
        default,
        members,
    })
}

/// Checklist actions in their numbered order.
fn ordered_checklist(area: &SelectionArea) -> Result<Vec<ActionKind>, PlanError> {
    if area.checklist.is_empty() {
        return Err(PlanError::EmptyChecklist);
    }
    let mut items = area.checklist.clone();
    items.sort_by_key(|i| i.order);
    for (k, item) in items.iter().enumerate() {
        if item.order != k as u32 + 1 {
            let orders: Vec<u32> = area.checklist.iter().map(|i| i.order).collect();
            return Err(PlanError::InvalidChecklist(format!("{orders:?}")));
        }
    }
    Ok(items.into_iter().map(|i| i.action).collect())
}

/// Applies the checklist to every member, object by object.
pub fn generalize(
    area: &SelectionArea,
    target: &SelectionTarget,
    members: &[String],
) -> Result<Vec<ActionSpec>, PlanError> {
    let actions = ordered_checklist(area)?;
    let handles = area.handles.unwrap_or_default();
    let mut out = Vec::new();
    if *target == SelectionTarget::Unknown {
        for kind in actions {
            let (kind, target) = match kind {
                ActionKind::MoveKnown | ActionKind::MoveUnknown => (
                    ActionKind::MoveUnknown,
                    ActionTarget::Handles {
                        start: handles.start,
                        goal: handles.goal,
                    },
                ),
                ActionKind::Pick => (
                    kind,
                    ActionTarget::Handles {
                        start: handles.start,
                        goal: None,
                    },
                ),
                ActionKind::Place => (
                    kind,
                    ActionTarget::Handles {
                        start: None,
                        goal: handles.goal,
                    },
                ),
                ActionKind::Wipe => (kind, ActionTarget::Area { rect: area.rect }),
                _ => {
                    return Err(PlanError::Incompatible {
                        kind,
                        target: target.name(),
                    })
                }
            };
            out.push(ActionSpec::new(kind, target).with_params(area.params));
        }
        return Ok(out);
    }
    for id in members {
        for &kind in &actions {
            let kind = if kind.is_move() {
                ActionKind::MoveKnown
            } else {
                kind
            };
            let goal = matches!(kind, ActionKind::MoveKnown | ActionKind::Place)
                .then_some(handles.goal)
                .flatten();
            let spec = ActionSpec::new(
                kind,
                ActionTarget::Object {
                    id: id.clone(),
                    goal,
                },
            );
            out.push(spec.with_params(area.params));
        }
    }
    Ok(out)
}
