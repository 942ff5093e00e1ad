use serde::{Deserialize, Serialize};

use crate::geometry::{Rect2, UprightBox, Vec2};

/// Boolean grid of dirty cells over the blue area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirtField {
    pub rect: Rect2,
    pub cell: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major, `true` = dirty.
    pub cells: Vec<bool>,
    dirty: usize,
}

impl DirtField {
    pub fn new(rect: Rect2, cell: f64) -> Self {
        let nx = (rect.width() / cell).round().max(1.0) as usize;
        let ny = (rect.height() / cell).round().max(1.0) as usize;
        Self {
            rect,
            cell,
            nx,
            ny,
            cells: vec![true; nx * ny],
            dirty: nx * ny,
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn dirty_count(&self) -> usize {
        self.dirty
    }

    pub fn cleared_fraction(&self) -> f64 {
        1.0 - self.dirty as f64 / self.cells.len() as f64
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Vec2 {
        self.rect.min + Vec2::new((i as f64 + 0.5) * self.cell, (j as f64 + 0.5) * self.cell)
    }

    pub fn is_dirty(&self, i: usize, j: usize) -> bool {
        self.cells[j * self.nx + i]
    }

    /// Clears cells whose centers lie in the footprint and pass `allow`.
    pub fn clear_under(&mut self, footprint: &UprightBox, allow: impl Fn(&Vec2) -> bool) {
        let r = footprint.half_extents.x.hypot(footprint.half_extents.y);
        let c = footprint.center;
        let lo_i = ((c.x - r - self.rect.min.x) / self.cell).floor().max(0.0) as usize;
        let lo_j = ((c.y - r - self.rect.min.y) / self.cell).floor().max(0.0) as usize;
        let hi_i = (((c.x + r - self.rect.min.x) / self.cell).ceil().max(0.0) as usize).min(self.nx);
        let hi_j = (((c.y + r - self.rect.min.y) / self.cell).ceil().max(0.0) as usize).min(self.ny);
        for j in lo_j..hi_j {
            for i in lo_i..hi_i {
                let k = j * self.nx + i;
                if !self.cells[k] {
                    continue;
                }
                let p = self.cell_center(i, j);
                if footprint.footprint_contains(&p) && allow(&p) {
                    self.cells[k] = false;
                    self.dirty -= 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    #[test]
    fn one_centimeter_cells_cover_rect() {
        let f = DirtField::new(Rect2::new(Vec2::new(0.0, 0.0), Vec2::new(0.34, 0.18)), 0.01);
        assert_eq!((f.nx, f.ny), (34, 18));
        assert_eq!(f.dirty_count(), 612);
    }

    #[test]
    fn clearing_counts_once() {
        let mut f = DirtField::new(Rect2::new(Vec2::new(0.0, 0.0), Vec2::new(0.1, 0.1)), 0.01);
        let b = UprightBox {
            center: Vec3::new(0.05, 0.05, 0.0),
            half_extents: Vec3::new(0.02, 0.02, 0.01),
            yaw: 0.0,
        };
        f.clear_under(&b, |_| true);
        let after = f.dirty_count();
        assert_eq!(after, 100 - 16);
        f.clear_under(&b, |_| true);
        assert_eq!(f.dirty_count(), after);
    }
}
