//! Lanelet-style road network: linestrings, lanes built from boundary pairs,
//! area regions, regulatory elements, and the derived routing/spatial views.

mod index;
mod topology;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    angle_diff, point_in_triangle, Aabb, ConvexPolygon, GeometryError, Point2, Polyline, EPS,
};

pub use index::SpatialIndex;
pub use topology::{infer_adjacency, infer_successors};

pub type Id = i64;

/// Sampling step used to derive lane centerlines.
pub const CENTERLINE_STEP: f64 = 0.5;
/// Spatial grid cell edge length.
pub const GRID_CELL: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("malformed map: {element}: {reason}")]
    Malformed { element: String, reason: String },
    #[error("unknown id {0}")]
    UnknownId(Id),
    #[error("arc length {s} outside [0, {length}]")]
    OutOfRange { s: f64, length: f64 },
    #[error("xml error: {0}")]
    Xml(String),
    #[error("json error: {0}")]
    Json(String),
}

impl MapError {
    pub fn malformed(element: impl Into<String>, reason: impl Into<String>) -> Self {
        MapError::Malformed {
            element: element.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linestring {
    pub id: Id,
    pub geometry: Polyline,
    #[serde(default)]
    pub tags: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneSubtype {
    Road,
    Highway,
    ParkingAisle,
    Bicycle,
    Crosswalk,
}

impl LaneSubtype {
    /// Lanes that count toward the drivable union for motor vehicles.
    pub fn is_vehicle_drivable(self) -> bool {
        matches!(
            self,
            LaneSubtype::Road | LaneSubtype::Highway | LaneSubtype::ParkingAisle
        )
    }
}

/// Reference to a boundary linestring; `inverted` means the lane travels
/// against the linestring's point order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryRef {
    pub id: Id,
    #[serde(default)]
    pub inverted: bool,
}

impl BoundaryRef {
    pub fn forward(id: Id) -> Self {
        Self {
            id,
            inverted: false,
        }
    }
}

/// Lane attributes as produced by a parser, before geometry is derived.
#[derive(Debug, Clone, PartialEq)]
pub struct LaneDraft {
    pub id: Id,
    pub left_boundary: BoundaryRef,
    pub right_boundary: BoundaryRef,
    pub subtype: LaneSubtype,
    pub one_way: bool,
    pub speed_limit: Option<f64>,
    pub successors: Vec<Id>,
    pub adjacent_left: Option<Id>,
    pub adjacent_right: Option<Id>,
    pub junction: Option<Id>,
    pub tags: BTreeMap<String, String>,
}

impl LaneDraft {
    pub fn new(id: Id, left: BoundaryRef, right: BoundaryRef) -> Self {
        Self {
            id,
            left_boundary: left,
            right_boundary: right,
            subtype: LaneSubtype::Road,
            one_way: true,
            speed_limit: None,
            successors: Vec::new(),
            adjacent_left: None,
            adjacent_right: None,
            junction: None,
            tags: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub id: Id,
    pub left_boundary: BoundaryRef,
    pub right_boundary: BoundaryRef,
    pub centerline: Polyline,
    pub subtype: LaneSubtype,
    pub one_way: bool,
    pub speed_limit: Option<f64>,
    pub successors: Vec<Id>,
    pub adjacent_left: Option<Id>,
    pub adjacent_right: Option<Id>,
    #[serde(default)]
    pub junction: Option<Id>,
    #[serde(default)]
    pub tags: BTreeMap<String, String>,
}

impl Lane {
    fn draft(&self) -> LaneDraft {
        LaneDraft {
            id: self.id,
            left_boundary: self.left_boundary,
            right_boundary: self.right_boundary,
            subtype: self.subtype,
            one_way: self.one_way,
            speed_limit: self.speed_limit,
            successors: self.successors.clone(),
            adjacent_left: self.adjacent_left,
            adjacent_right: self.adjacent_right,
            junction: self.junction,
            tags: self.tags.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AreaSubtype {
    ParkingSpot,
    Keepout,
    Freespace,
}

impl AreaSubtype {
    pub fn is_drivable(self) -> bool {
        matches!(self, AreaSubtype::ParkingSpot | AreaSubtype::Freespace)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaRegion {
    pub id: Id,
    pub outer: Vec<ConvexPolygon>,
    pub subtype: AreaSubtype,
    #[serde(default)]
    pub tags: BTreeMap<String, String>,
}

impl AreaRegion {
    pub fn contains(&self, p: Point2) -> bool {
        self.outer.iter().any(|piece| piece.contains(p))
    }

    pub fn area(&self) -> f64 {
        self.outer.iter().map(|p| p.area()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegulatoryKind {
    TrafficLightGroup,
    SpeedLimit,
    RightOfWay,
    TurnRestriction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegulatoryElement {
    pub id: Id,
    pub kind: RegulatoryKind,
    pub stop_line: Option<Id>,
    pub governed_lanes: Vec<Id>,
    #[serde(default)]
    pub parameters: BTreeMap<String, String>,
}

/// Result of testing a footprint against the drivable union.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coverage {
    Inside,
    Partial,
    Outside,
}

/// Per-lane derived geometry: oriented boundaries and the quad strip.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LaneShape {
    pub left: Polyline,
    pub right: Polyline,
    pub left_samples: Vec<Point2>,
    pub right_samples: Vec<Point2>,
}

impl LaneShape {
    pub fn quad_count(&self) -> usize {
        self.left_samples.len() - 1
    }

    pub fn quad(&self, i: usize) -> [Point2; 4] {
        [
            self.left_samples[i],
            self.left_samples[i + 1],
            self.right_samples[i + 1],
            self.right_samples[i],
        ]
    }

    pub fn quad_contains(&self, i: usize, p: Point2) -> bool {
        let [a, b, c, d] = self.quad(i);
        tri_contains(p, a, b, c) || tri_contains(p, a, c, d)
    }
}

fn tri_contains(p: Point2, a: Point2, b: Point2, c: Point2) -> bool {
    if ((b - a).cross(c - a)).abs() <= EPS * EPS {
        return false;
    }
    point_in_triangle(p, a, b, c)
}

/// Pointwise midpoint of two boundaries sampled at `n_samples` equal arc-length fractions.
pub fn build_centerline(
    left: &Polyline,
    right: &Polyline,
    n_samples: usize,
) -> Result<Polyline, MapError> {
    if left.length() < 1e-6 || right.length() < 1e-6 {
        return Err(MapError::malformed(
            "centerline",
            "degenerate boundary shorter than 1e-6 m",
        ));
    }
    let n = n_samples.max(2);
    let l = left.resample(n);
    let r = right.resample(n);
    let mids: Vec<Point2> = l.iter().zip(&r).map(|(a, b)| a.lerp(*b, 0.5)).collect();
    Polyline::new_dedup(mids)
        .map_err(|e| MapError::malformed("centerline", format!("collapsed centerline: {e}")))
}

/// Number of centerline samples for boundaries of the given lengths. Lengths
/// within 1e-9 of a step multiple round down so the count does not depend on
/// the map frame.
pub fn centerline_samples(left_len: f64, right_len: f64) -> usize {
    let mean = 0.5 * (left_len + right_len);
    ((mean / CENTERLINE_STEP - 1e-9).ceil() as usize).max(2)
}

#[derive(Debug, Clone, Deserialize)]
struct RawMap {
    linestrings: BTreeMap<Id, Linestring>,
    lanes: BTreeMap<Id, Lane>,
    areas: BTreeMap<Id, AreaRegion>,
    regulatory_elements: BTreeMap<Id, RegulatoryElement>,
    #[serde(default)]
    warnings: Vec<String>,
}

impl TryFrom<RawMap> for TrafficMap {
    type Error = MapError;
    fn try_from(raw: RawMap) -> Result<Self, MapError> {
        TrafficMap::new(
            raw.linestrings.into_values().collect(),
            raw.lanes.values().map(Lane::draft).collect(),
            raw.areas.into_values().collect(),
            raw.regulatory_elements.into_values().collect(),
            raw.warnings,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMap")]
pub struct TrafficMap {
    pub linestrings: BTreeMap<Id, Linestring>,
    pub lanes: BTreeMap<Id, Lane>,
    pub areas: BTreeMap<Id, AreaRegion>,
    pub regulatory_elements: BTreeMap<Id, RegulatoryElement>,
    pub bounds: Option<Aabb>,
    pub warnings: Vec<String>,
    #[serde(skip)]
    shapes: BTreeMap<Id, LaneShape>,
    #[serde(skip)]
    index: SpatialIndex,
}

impl Default for TrafficMap {
    fn default() -> Self {
        TrafficMap::new(Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new())
            .expect("empty map is valid")
    }
}

impl TrafficMap {
    /// Assembles a map, derives centerlines and the spatial index, and checks
    /// that every reference resolves.
    pub fn new(
        linestrings: Vec<Linestring>,
        lanes: Vec<LaneDraft>,
        areas: Vec<AreaRegion>,
        regulatory_elements: Vec<RegulatoryElement>,
        mut warnings: Vec<String>,
    ) -> Result<Self, MapError> {
        let mut ls_map = BTreeMap::new();
        for ls in linestrings {
            let id = ls.id;
            if ls_map.insert(id, ls).is_some() {
                return Err(MapError::malformed(
                    format!("linestring {id}"),
                    "duplicate id",
                ));
            }
        }
        let lane_ids: BTreeSet<Id> = lanes.iter().map(|l| l.id).collect();
        if lane_ids.len() != lanes.len() {
            return Err(MapError::malformed("lanes", "duplicate lane id"));
        }

        let mut lane_map = BTreeMap::new();
        let mut shapes = BTreeMap::new();
        for draft in lanes {
            let elem = format!("lane {}", draft.id);
            let oriented = |b: BoundaryRef| -> Result<Polyline, MapError> {
                let ls = ls_map.get(&b.id).ok_or_else(|| {
                    MapError::malformed(elem.clone(), format!("boundary {} not found", b.id))
                })?;
                Ok(if b.inverted {
                    ls.geometry.reversed()
                } else {
                    ls.geometry.clone()
                })
            };
            let left = oriented(draft.left_boundary)?;
            let right = oriented(draft.right_boundary)?;
            let n = centerline_samples(left.length(), right.length());
            let centerline = build_centerline(&left, &right, n)
                .map_err(|e| MapError::malformed(elem.clone(), e.to_string()))?;
            let mean = 0.5 * (left.length() + right.length());
            if (centerline.length() - mean).abs() > 0.2 * mean {
                warnings.push(format!(
                    "{elem}: centerline length {:.3} deviates more than 20% from boundaries",
                    centerline.length()
                ));
            }
            for s in &draft.successors {
                if !lane_ids.contains(s) {
                    return Err(MapError::malformed(
                        elem.clone(),
                        format!("successor {s} not found"),
                    ));
                }
            }
            for adj in [draft.adjacent_left, draft.adjacent_right]
                .into_iter()
                .flatten()
            {
                if !lane_ids.contains(&adj) {
                    return Err(MapError::malformed(
                        elem.clone(),
                        format!("adjacent lane {adj} not found"),
                    ));
                }
            }
            let shape = LaneShape {
                left_samples: left.resample(n),
                right_samples: right.resample(n),
                left,
                right,
            };
            let mut successors = draft.successors;
            successors.sort_unstable();
            successors.dedup();
            lane_map.insert(
                draft.id,
                Lane {
                    id: draft.id,
                    left_boundary: draft.left_boundary,
                    right_boundary: draft.right_boundary,
                    centerline,
                    subtype: draft.subtype,
                    one_way: draft.one_way,
                    speed_limit: draft.speed_limit,
                    successors,
                    adjacent_left: draft.adjacent_left,
                    adjacent_right: draft.adjacent_right,
                    junction: draft.junction,
                    tags: draft.tags,
                },
            );
            shapes.insert(draft.id, shape);
        }

        let mut area_map = BTreeMap::new();
        for a in areas {
            let id = a.id;
            if a.outer.is_empty() {
                return Err(MapError::malformed(
                    format!("area {id}"),
                    "empty outer ring",
                ));
            }
            if area_map.insert(id, a).is_some() {
                return Err(MapError::malformed(format!("area {id}"), "duplicate id"));
            }
        }

        let mut reg_map = BTreeMap::new();
        for r in regulatory_elements {
            let elem = format!("regulatory element {}", r.id);
            if let Some(sl) = r.stop_line {
                if !ls_map.contains_key(&sl) {
                    return Err(MapError::malformed(
                        elem,
                        format!("stop line {sl} not found"),
                    ));
                }
            } else if r.kind == RegulatoryKind::TrafficLightGroup {
                return Err(MapError::malformed(
                    elem,
                    "traffic light group without stop line",
                ));
            }
            for l in &r.governed_lanes {
                if !lane_ids.contains(l) {
                    return Err(MapError::malformed(
                        elem,
                        format!("governed lane {l} not found"),
                    ));
                }
            }
            let id = r.id;
            if reg_map.insert(id, r).is_some() {
                return Err(MapError::malformed(elem, "duplicate id"));
            }
        }

        let mut bounds = Aabb::empty();
        for ls in ls_map.values() {
            bounds.merge(&ls.geometry.bounds());
        }
        for a in area_map.values() {
            for piece in &a.outer {
                bounds.merge(&piece.bounds());
            }
        }
        let bounds = (!bounds.is_empty()).then_some(bounds);

        let index = SpatialIndex::build(GRID_CELL, &shapes, &area_map);
        Ok(Self {
            linestrings: ls_map,
            lanes: lane_map,
            areas: area_map,
            regulatory_elements: reg_map,
            bounds,
            warnings,
            shapes,
            index,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("map serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MapError> {
        serde_json::from_str(text).map_err(|e| MapError::Json(e.to_string()))
    }

    pub fn is_empty(&self) -> bool {
        self.lanes.is_empty() && self.areas.is_empty() && self.linestrings.is_empty()
    }

    pub fn lane(&self, id: Id) -> Result<&Lane, MapError> {
        self.lanes.get(&id).ok_or(MapError::UnknownId(id))
    }

    /// Left and right boundaries oriented along the lane's travel direction.
    pub fn lane_boundaries(&self, id: Id) -> Option<(&Polyline, &Polyline)> {
        self.shapes.get(&id).map(|s| (&s.left, &s.right))
    }

    /// Lane containing `p` whose travel direction deviates least from
    /// `heading`, with that absolute deviation. Ties go to the lower id.
    pub fn best_aligned_lane(
        &self,
        p: Point2,
        heading: f64,
        filter: impl Fn(&Lane) -> bool,
    ) -> Option<(Id, f64)> {
        self.lanes_at_point(p)
            .into_iter()
            .filter_map(|id| {
                let lane = self.lanes.get(&id).filter(|l| filter(l))?;
                let dir = lane_direction_at(lane, lane.centerline.project(p).s).ok()?;
                Some((id, angle_diff(heading, dir).abs()))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
    }

    /// Lanes whose boundary strip contains `p`, sorted by id.
    pub fn lanes_at_point(&self, p: Point2) -> Vec<Id> {
        let mut out: Vec<Id> = self.lane_hits(p).into_iter().map(|(id, _)| id).collect();
        out.dedup();
        out
    }

    /// `(lane id, strip quad index)` pairs containing `p`, sorted.
    pub fn lane_hits(&self, p: Point2) -> Vec<(Id, usize)> {
        let mut hits: Vec<(Id, usize)> = self
            .index
            .lane_candidates(p)
            .filter(|(id, q)| self.shapes[id].quad_contains(*q as usize, p))
            .map(|(id, q)| (id, q as usize))
            .collect();
        hits.sort_unstable();
        hits.dedup_by_key(|(id, _)| *id);
        hits
    }

    /// Brute-force variant of [`TrafficMap::lanes_at_point`] bypassing the index.
    pub fn lanes_at_point_scan(&self, p: Point2) -> Vec<Id> {
        self.shapes
            .iter()
            .filter(|(_, s)| (0..s.quad_count()).any(|q| s.quad_contains(q, p)))
            .map(|(id, _)| *id)
            .collect()
    }

    /// Areas containing `p`, sorted by id.
    pub fn areas_at_point(&self, p: Point2) -> Vec<Id> {
        let mut out: Vec<Id> = self
            .index
            .area_candidates(p)
            .filter(|(id, piece)| self.areas[id].outer[*piece as usize].contains(p))
            .map(|(id, _)| id)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Lanes whose strip may intersect `bounds` (superset).
    pub fn lanes_in_bounds(&self, bounds: &Aabb) -> Vec<Id> {
        self.index.lanes_in(bounds)
    }

    pub fn areas_in_bounds(&self, bounds: &Aabb) -> Vec<Id> {
        self.index.areas_in(bounds)
    }

    /// Shortest successor path by lane count; ties broken by smallest id.
    pub fn route(&self, from: Id, to: Id) -> Result<Option<Vec<Id>>, MapError> {
        self.lane(from)?;
        self.lane(to)?;
        if from == to {
            return Ok(Some(vec![from]));
        }
        let mut parent: BTreeMap<Id, Id> = BTreeMap::new();
        let mut seen: BTreeSet<Id> = BTreeSet::from([from]);
        let mut queue = VecDeque::from([from]);
        while let Some(cur) = queue.pop_front() {
            // successors are stored sorted, giving smallest-id-first expansion
            for &next in &self.lanes[&cur].successors {
                if seen.insert(next) {
                    parent.insert(next, cur);
                    if next == to {
                        let mut path = vec![to];
                        let mut at = to;
                        while let Some(&p) = parent.get(&at) {
                            path.push(p);
                            at = p;
                        }
                        path.reverse();
                        return Ok(Some(path));
                    }
                    queue.push_back(next);
                }
            }
        }
        Ok(None)
    }

    /// Whether `p` lies in a lane (per `lane_ok`) or drivable area.
    pub fn is_drivable(&self, p: Point2, lane_ok: impl Fn(LaneSubtype) -> bool) -> bool {
        self.lane_hits(p)
            .iter()
            .any(|(id, _)| lane_ok(self.lanes[id].subtype))
            || self
                .areas_at_point(p)
                .iter()
                .any(|id| self.areas[id].subtype.is_drivable())
    }

    /// Vehicle coverage: vertices and center tested against lanes ∪ drivable areas.
    pub fn footprint_coverage(&self, footprint: &ConvexPolygon) -> Coverage {
        self.footprint_coverage_with(footprint, LaneSubtype::is_vehicle_drivable)
    }

    pub fn footprint_coverage_with(
        &self,
        footprint: &ConvexPolygon,
        lane_ok: impl Fn(LaneSubtype) -> bool + Copy,
    ) -> Coverage {
        let center = footprint.centroid();
        let probes = footprint
            .vertices()
            .iter()
            .copied()
            .chain(std::iter::once(center));
        let mut inside = 0usize;
        let mut total = 0usize;
        for p in probes {
            total += 1;
            if self.is_drivable(p, lane_ok) {
                inside += 1;
            }
        }
        if inside == total {
            Coverage::Inside
        } else if inside == 0 {
            Coverage::Outside
        } else {
            Coverage::Partial
        }
    }

    /// Linestrings serving as stop lines of traffic-light groups.
    pub fn stop_lines(&self) -> impl Iterator<Item = (&RegulatoryElement, &Linestring)> {
        self.regulatory_elements.values().filter_map(|r| {
            r.stop_line
                .and_then(|id| self.linestrings.get(&id))
                .map(|ls| (r, ls))
        })
    }
}

/// Tangent heading of the lane centerline at arc length `s`.
pub fn lane_direction_at(lane: &Lane, s: f64) -> Result<f64, MapError> {
    let len = lane.centerline.length();
    if !(-EPS..=len + EPS).contains(&s) || s.is_nan() {
        return Err(MapError::OutOfRange { s, length: len });
    }
    Ok(lane.centerline.heading_at(s.clamp(0.0, len)))
}

impl From<GeometryError> for MapError {
    fn from(e: GeometryError) -> Self {
        MapError::malformed("geometry", e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn ls(id: Id, pts: &[(f64, f64)]) -> Linestring {
        Linestring {
            id,
            geometry: Polyline::new(pts.iter().map(|&(x, y)| Point2::new(x, y)).collect()).unwrap(),
            tags: BTreeMap::new(),
        }
    }

    fn straight_lane_map() -> TrafficMap {
        TrafficMap::new(
            vec![
                ls(1, &[(0.0, 2.0), (20.0, 2.0)]),
                ls(2, &[(0.0, -2.0), (20.0, -2.0)]),
            ],
            vec![LaneDraft::new(
                10,
                BoundaryRef::forward(1),
                BoundaryRef::forward(2),
            )],
            vec![],
            vec![],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn centerline_of_parallel_boundaries() {
        let l = Polyline::new(vec![Point2::new(0.0, 1.0), Point2::new(10.0, 1.0)]).unwrap();
        let r = Polyline::new(vec![Point2::new(0.0, -1.0), Point2::new(10.0, -1.0)]).unwrap();
        let c = build_centerline(&l, &r, 21).unwrap();
        assert!(c.points().iter().all(|p| p.y.abs() < 1e-12));
        assert!((c.first().x).abs() < 1e-12 && (c.last().x - 10.0).abs() < 1e-12);
        let same = build_centerline(&l, &l, 5).unwrap();
        for p in same.points() {
            assert!((p.y - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn centerline_of_concentric_arcs() {
        let arc = |r: f64| {
            Polyline::new(
                (0..=200)
                    .map(|i| {
                        let a = PI / 2.0 * i as f64 / 200.0;
                        Point2::new(r * a.sin(), r * (1.0 - a.cos()) + (10.0 - r))
                    })
                    .collect(),
            )
            .unwrap()
        };
        // common center (0, 10); curve turns left from heading 0
        let left = arc(9.0);
        let right = arc(11.0);
        let n = centerline_samples(left.length(), right.length());
        let c = build_centerline(&left, &right, n).unwrap();
        for p in c.points() {
            let r = p.distance(Point2::new(0.0, 10.0));
            assert!((r - 10.0).abs() < 0.05, "radius {r}");
        }
    }

    #[test]
    fn degenerate_boundary_errors() {
        let tiny = Polyline::new(vec![Point2::ORIGIN, Point2::new(1e-7, 0.0)]).unwrap();
        let ok = Polyline::new(vec![Point2::ORIGIN, Point2::new(1.0, 0.0)]).unwrap();
        assert!(matches!(
            build_centerline(&tiny, &ok, 2),
            Err(MapError::Malformed { .. })
        ));
    }

    #[test]
    fn lanes_at_point_basic() {
        let m = straight_lane_map();
        assert_eq!(m.lanes_at_point(Point2::new(10.0, 0.0)), vec![10]);
        assert!(m.lanes_at_point(Point2::new(500.0, 0.0)).is_empty());
        assert!(m.lanes_at_point(Point2::new(10.0, 2.5)).is_empty());
    }

    #[test]
    fn direction_examples() {
        let m = straight_lane_map();
        let lane = m.lane(10).unwrap();
        assert_eq!(lane_direction_at(lane, 3.0).unwrap(), 0.0);
        assert!(matches!(
            lane_direction_at(lane, 25.0),
            Err(MapError::OutOfRange { .. })
        ));
        assert!(lane_direction_at(lane, -1.0).is_err());
    }

    #[test]
    fn unresolved_references_fail() {
        let e = TrafficMap::new(
            vec![ls(1, &[(0.0, 2.0), (20.0, 2.0)])],
            vec![LaneDraft::new(
                10,
                BoundaryRef::forward(1),
                BoundaryRef::forward(2),
            )],
            vec![],
            vec![],
            vec![],
        )
        .unwrap_err();
        assert!(e.to_string().contains("lane 10"));
        let mut d = LaneDraft::new(10, BoundaryRef::forward(1), BoundaryRef::forward(2));
        d.successors.push(99);
        let e = TrafficMap::new(
            vec![
                ls(1, &[(0.0, 2.0), (20.0, 2.0)]),
                ls(2, &[(0.0, -2.0), (20.0, -2.0)]),
            ],
            vec![d],
            vec![],
            vec![],
            vec![],
        )
        .unwrap_err();
        assert!(e.to_string().contains("successor 99"));
    }

    #[test]
    fn json_round_trip() {
        let m = straight_lane_map();
        let back = TrafficMap::from_json(&m.to_json()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn route_unknown_id() {
        let m = straight_lane_map();
        assert_eq!(m.route(10, 10).unwrap(), Some(vec![10]));
        assert_eq!(m.route(10, 11), Err(MapError::UnknownId(11)));
    }
}
