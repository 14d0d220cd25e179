use std::collections::{BTreeMap, HashMap};

use crate::geometry::{Aabb, Point2};

use super::{AreaRegion, Id, LaneShape};

type Cell = (i64, i64);

/// Indexed part (lane strip quad or area piece) with its padded bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    id: Id,
    part: u32,
    bounds: Aabb,
}

/// Padding so points on cell or part borders still find parts that touch them.
const PAD: f64 = 1e-6;

fn padded(b: &Aabb) -> Aabb {
    Aabb {
        min: Point2::new(b.min.x - PAD, b.min.y - PAD),
        max: Point2::new(b.max.x + PAD, b.max.y + PAD),
    }
}

/// Uniform grid over lane strip quads and area pieces. Queries return
/// candidates; callers confirm with exact containment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpatialIndex {
    cell: f64,
    lanes: HashMap<Cell, Vec<Entry>>,
    areas: HashMap<Cell, Vec<Entry>>,
}

impl SpatialIndex {
    pub(crate) fn build(
        cell: f64,
        shapes: &BTreeMap<Id, LaneShape>,
        areas: &BTreeMap<Id, AreaRegion>,
    ) -> Self {
        let mut idx = Self {
            cell,
            lanes: HashMap::new(),
            areas: HashMap::new(),
        };
        for (id, shape) in shapes {
            for q in 0..shape.quad_count() {
                let bounds = padded(&Aabb::from_points(&shape.quad(q)));
                let entry = Entry {
                    id: *id,
                    part: q as u32,
                    bounds,
                };
                for c in idx.cells(&bounds) {
                    idx.lanes.entry(c).or_default().push(entry);
                }
            }
        }
        for (id, area) in areas {
            for (k, piece) in area.outer.iter().enumerate() {
                let bounds = padded(&piece.bounds());
                let entry = Entry {
                    id: *id,
                    part: k as u32,
                    bounds,
                };
                for c in idx.cells(&bounds) {
                    idx.areas.entry(c).or_default().push(entry);
                }
            }
        }
        idx
    }

    fn cell_of(&self, p: Point2) -> Cell {
        (
            (p.x / self.cell).floor() as i64,
            (p.y / self.cell).floor() as i64,
        )
    }

    fn cells(&self, b: &Aabb) -> impl Iterator<Item = Cell> {
        let lo = self.cell_of(b.min);
        let hi = self.cell_of(b.max);
        (lo.0..=hi.0).flat_map(move |x| (lo.1..=hi.1).map(move |y| (x, y)))
    }

    fn point_candidates<'a>(
        &'a self,
        grid: &'a HashMap<Cell, Vec<Entry>>,
        p: Point2,
    ) -> impl Iterator<Item = (Id, u32)> + 'a {
        let entries = if self.cell == 0.0 {
            &[][..]
        } else {
            grid.get(&self.cell_of(p)).map_or(&[][..], Vec::as_slice)
        };
        entries
            .iter()
            .filter(move |e| e.bounds.contains(p))
            .map(|e| (e.id, e.part))
    }

    /// `(lane id, quad index)` pairs whose bounds contain `p`.
    pub(crate) fn lane_candidates(&self, p: Point2) -> impl Iterator<Item = (Id, u32)> + '_ {
        self.point_candidates(&self.lanes, p)
    }

    /// `(area id, piece index)` pairs whose bounds contain `p`.
    pub(crate) fn area_candidates(&self, p: Point2) -> impl Iterator<Item = (Id, u32)> + '_ {
        self.point_candidates(&self.areas, p)
    }

    fn collect(&self, grid: &HashMap<Cell, Vec<Entry>>, b: &Aabb) -> Vec<Id> {
        if self.cell == 0.0 || b.is_empty() {
            return Vec::new();
        }
        let mut out: Vec<Id> = self
            .cells(b)
            .filter_map(|c| grid.get(&c))
            .flat_map(|v| v.iter().filter(|e| e.bounds.intersects(b)).map(|e| e.id))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub(crate) fn lanes_in(&self, b: &Aabb) -> Vec<Id> {
        self.collect(&self.lanes, b)
    }

    pub(crate) fn areas_in(&self, b: &Aabb) -> Vec<Id> {
        self.collect(&self.areas, b)
    }
}
