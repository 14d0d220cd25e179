//! Observation modalities: bird's-eye-view semantic grid, 2D lidar and
//! vectorized polylines, all computed from a [`WorldView`] snapshot.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Footprint, ParticipantClass, ParticipantId, ParticipantView, WorldView};
use crate::geometry::{
    point_segment_distance, raycast, Aabb, Obstacle, OrientedBox, Point2, Polyline, Pose2,
};
use crate::map::LaneSubtype;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensorError {
    #[error("unknown participant {0}")]
    UnknownParticipant(ParticipantId),
    #[error("invalid sensor specification: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticClass {
    Drivable,
    LaneMarking,
    Vehicle,
    PedestrianCyclist,
    Ego,
    Area,
}

impl SemanticClass {
    pub const ALL: [SemanticClass; 6] = [
        SemanticClass::Drivable,
        SemanticClass::LaneMarking,
        SemanticClass::Vehicle,
        SemanticClass::PedestrianCyclist,
        SemanticClass::Ego,
        SemanticClass::Area,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SemanticClass::Drivable => "drivable",
            SemanticClass::LaneMarking => "lane_marking",
            SemanticClass::Vehicle => "vehicle",
            SemanticClass::PedestrianCyclist => "pedestrian_cyclist",
            SemanticClass::Ego => "ego",
            SemanticClass::Area => "area",
        }
    }

    /// Composite image color.
    pub fn color(self) -> [u8; 3] {
        match self {
            SemanticClass::Drivable => [96, 96, 96],
            SemanticClass::LaneMarking => [255, 255, 255],
            SemanticClass::Vehicle => [0, 120, 255],
            SemanticClass::PedestrianCyclist => [255, 160, 0],
            SemanticClass::Ego => [0, 200, 0],
            SemanticClass::Area => [140, 90, 40],
        }
    }

    /// Paint order in composites (higher drawn later).
    fn layer(self) -> u8 {
        match self {
            SemanticClass::Area => 0,
            SemanticClass::Drivable => 1,
            SemanticClass::LaneMarking => 2,
            SemanticClass::Vehicle => 3,
            SemanticClass::PedestrianCyclist => 4,
            SemanticClass::Ego => 5,
        }
    }
}

/// Thickness assigned to rasterized lane markings (meters).
pub const MARKING_WIDTH: f64 = 0.15;

fn default_palette() -> BTreeMap<SemanticClass, usize> {
    SemanticClass::ALL
        .iter()
        .enumerate()
        .map(|(i, c)| (*c, i))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BevSpec {
    pub width_px: usize,
    pub height_px: usize,
    pub resolution: f64,
    #[serde(default = "default_palette")]
    pub palette: BTreeMap<SemanticClass, usize>,
}

impl BevSpec {
    pub fn new(width_px: usize, height_px: usize, resolution: f64) -> Result<Self, SensorError> {
        let s = Self {
            width_px,
            height_px,
            resolution,
            palette: default_palette(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SensorError> {
        if self.width_px == 0 || self.height_px == 0 {
            return Err(SensorError::InvalidSpec("BEV size must be positive".into()));
        }
        if !(self.resolution.is_finite() && self.resolution > 0.0) {
            return Err(SensorError::InvalidSpec(
                "BEV resolution must be positive".into(),
            ));
        }
        let idx: BTreeSet<usize> = self.palette.values().copied().collect();
        if self.palette.is_empty()
            || idx.len() != self.palette.len()
            || idx.iter().copied().ne(0..self.palette.len())
        {
            return Err(SensorError::InvalidSpec(
                "palette channel indices must be dense from 0".into(),
            ));
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.palette.len()
    }

    /// Classes in channel order.
    pub fn classes(&self) -> Vec<SemanticClass> {
        let mut v: Vec<(usize, SemanticClass)> =
            self.palette.iter().map(|(c, i)| (*i, *c)).collect();
        v.sort_unstable();
        v.into_iter().map(|(_, c)| c).collect()
    }
}

impl std::str::FromStr for BevSpec {
    type Err = SensorError;
    /// Parses `WxH,res`, e.g. `200x200,0.1`.
    fn from_str(s: &str) -> Result<Self, SensorError> {
        let bad = || SensorError::InvalidSpec(format!("'{s}': expected WxH,resolution"));
        let (size, res) = s.split_once(',').ok_or_else(bad)?;
        let (w, h) = size.split_once(['x', 'X']).ok_or_else(bad)?;
        Self::new(
            w.trim().parse().map_err(|_| bad())?,
            h.trim().parse().map_err(|_| bad())?,
            res.trim().parse().map_err(|_| bad())?,
        )
    }
}

/// Binary class grid in row-major `height × width × channels` layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BevGrid {
    pub height: usize,
    pub width: usize,
    pub classes: Vec<SemanticClass>,
    data: Vec<u8>,
}

impl BevGrid {
    fn new(spec: &BevSpec) -> Self {
        let classes = spec.classes();
        Self {
            height: spec.height_px,
            width: spec.width_px,
            data: vec![0; spec.height_px * spec.width_px * classes.len()],
            classes,
        }
    }

    pub fn channels(&self) -> usize {
        self.classes.len()
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> u8 {
        self.data[(row * self.width + col) * self.channels() + channel]
    }

    fn set(&mut self, row: usize, col: usize, channel: usize) {
        let c = self.channels();
        self.data[(row * self.width + col) * c + channel] = 1;
    }

    pub fn channel_of(&self, class: SemanticClass) -> Option<usize> {
        self.classes.iter().position(|c| *c == class)
    }

    pub fn count(&self, class: SemanticClass) -> usize {
        let Some(ch) = self.channel_of(class) else {
            return 0;
        };
        self.data
            .chunks_exact(self.channels())
            .filter(|cell| cell[ch] != 0)
            .count()
    }

    /// Binary PGM (P5) of one channel, set cells at 255.
    pub fn channel_pgm(&self, channel: usize) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.chunks_exact(self.channels()).map(|cell| {
            if cell[channel] != 0 {
                255
            } else {
                0
            }
        }));
        out
    }

    /// Binary PPM (P6) painting classes in layer order over black.
    pub fn composite_ppm(&self) -> Vec<u8> {
        let mut order: Vec<usize> = (0..self.channels()).collect();
        order.sort_by_key(|&c| self.classes[c].layer());
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for cell in self.data.chunks_exact(self.channels()) {
            let mut rgb = [0u8; 3];
            for &c in &order {
                if cell[c] != 0 {
                    rgb = self.classes[c].color();
                }
            }
            out.extend_from_slice(&rgb);
        }
        out
    }
}

fn agent<'a>(view: &WorldView<'a>, id: ParticipantId) -> Result<&'a ParticipantView, SensorError> {
    view.get(id).ok_or(SensorError::UnknownParticipant(id))
}

struct Raster<'g> {
    grid: &'g mut BevGrid,
    frame: Pose2,
    res: f64,
}

impl Raster<'_> {
    /// Local (forward, left) coordinates of a cell center.
    fn cell_local(&self, row: usize, col: usize) -> Point2 {
        Point2::new(
            (self.grid.height as f64 / 2.0 - (row as f64 + 0.5)) * self.res,
            (self.grid.width as f64 / 2.0 - (col as f64 + 0.5)) * self.res,
        )
    }

    fn cell_world(&self, row: usize, col: usize) -> Point2 {
        self.frame.transform_from_local(self.cell_local(row, col))
    }

    /// Row and column ranges whose cell centers may fall in a local box.
    fn cell_range(&self, lo: Point2, hi: Point2) -> Option<(usize, usize, usize, usize)> {
        let h = self.grid.height as f64;
        let w = self.grid.width as f64;
        let r0 = (h / 2.0 - hi.x / self.res - 0.5).floor().max(0.0);
        let r1 = (h / 2.0 - lo.x / self.res - 0.5).ceil().min(h - 1.0);
        let c0 = (w / 2.0 - hi.y / self.res - 0.5).floor().max(0.0);
        let c1 = (w / 2.0 - lo.y / self.res - 0.5).ceil().min(w - 1.0);
        (r0 <= r1 && c0 <= c1).then_some((r0 as usize, r1 as usize, c0 as usize, c1 as usize))
    }

    fn fill(&mut self, channel: usize, world_bounds: Aabb, inside: impl Fn(Point2) -> bool) {
        let corners = [
            world_bounds.min,
            Point2::new(world_bounds.max.x, world_bounds.min.y),
            world_bounds.max,
            Point2::new(world_bounds.min.x, world_bounds.max.y),
        ];
        let local: Vec<Point2> = corners
            .iter()
            .map(|p| self.frame.transform_to_local(*p))
            .collect();
        let lb = Aabb::from_points(&local);
        let Some((r0, r1, c0, c1)) = self.cell_range(lb.min, lb.max) else {
            return;
        };
        for r in r0..=r1 {
            for c in c0..=c1 {
                if inside(self.cell_world(r, c)) {
                    self.grid.set(r, c, channel);
                }
            }
        }
    }

    fn fill_footprint(&mut self, channel: usize, f: &Footprint) {
        match f {
            Footprint::Box(b) => {
                let poly = b.to_polygon();
                self.fill(channel, poly.bounds(), |p| poly.contains(p));
            }
            Footprint::Disc(c) => {
                let c = *c;
                self.fill(channel, c.bounds(), move |p| {
                    p.distance(c.center) <= c.radius
                });
            }
        }
    }
}

/// Agent-centered semantic grid; the agent's heading points to image row 0.
pub fn render_bev(
    view: &WorldView,
    id: ParticipantId,
    spec: &BevSpec,
) -> Result<BevGrid, SensorError> {
    spec.validate()?;
    let me = agent(view, id)?;
    let frame = me.center();
    let mut grid = BevGrid::new(spec);
    let channel = |c: SemanticClass| spec.palette.get(&c).copied();
    let half_diag = 0.5 * spec.resolution * (spec.width_px as f64).hypot(spec.height_px as f64);
    let view_bounds = Aabb::around(frame.position, half_diag);
    let map = view.map;
    let mut r = Raster {
        grid: &mut grid,
        frame,
        res: spec.resolution,
    };

    if let Some(ch) = channel(SemanticClass::Area) {
        for aid in map.areas_in_bounds(&view_bounds) {
            for piece in &map.areas[&aid].outer {
                r.fill(ch, piece.bounds(), |p| piece.contains(p));
            }
        }
    }
    if let Some(ch) = channel(SemanticClass::Drivable) {
        if !map.is_empty() {
            r.fill(ch, view_bounds, |p| {
                map.is_drivable(p, LaneSubtype::is_vehicle_drivable)
            });
        }
    }
    if let Some(ch) = channel(SemanticClass::LaneMarking) {
        let mut drawn = BTreeSet::new();
        let half = MARKING_WIDTH.max(spec.resolution) / 2.0;
        for lid in map.lanes_in_bounds(&view_bounds) {
            let lane = &map.lanes[&lid];
            for b in [lane.left_boundary.id, lane.right_boundary.id] {
                if !drawn.insert(b) {
                    continue;
                }
                let pts = map.linestrings[&b].geometry.points();
                for w in pts.windows(2) {
                    let (a, c) = (w[0], w[1]);
                    let Ok(strip) = OrientedBox::new(
                        Pose2::from_parts(a.lerp(c, 0.5), (c - a).angle()),
                        a.distance(c),
                        2.0 * half,
                    ) else {
                        continue;
                    };
                    let poly = strip.to_polygon();
                    r.fill(ch, poly.bounds(), |p| {
                        point_segment_distance(p, a, c) <= half && poly.contains(p)
                    });
                }
            }
        }
    }
    for p in view.participants {
        let f = p.spec.footprint(p.state.pose);
        let class = if p.id == id {
            SemanticClass::Ego
        } else if matches!(
            p.spec.class,
            ParticipantClass::Car | ParticipantClass::Truck
        ) {
            SemanticClass::Vehicle
        } else {
            SemanticClass::PedestrianCyclist
        };
        if let Some(ch) = channel(class) {
            if f.center().distance(frame.position) <= half_diag + f.bounding_radius() {
                r.fill_footprint(ch, &f);
            }
        }
    }
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarSpec {
    pub n_beams: usize,
    pub fov: f64,
    pub max_range: f64,
    #[serde(default)]
    pub noise_sigma: f64,
    /// Adds lane boundaries and keep-out areas as obstacles.
    #[serde(default)]
    pub include_map: bool,
}

impl LidarSpec {
    pub fn new(n_beams: usize, fov: f64, max_range: f64) -> Result<Self, SensorError> {
        let s = Self {
            n_beams,
            fov,
            max_range,
            noise_sigma: 0.0,
            include_map: false,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn with_map_obstacles(mut self, include: bool) -> Self {
        self.include_map = include;
        self
    }

    pub fn validate(&self) -> Result<(), SensorError> {
        if self.n_beams == 0 {
            return Err(SensorError::InvalidSpec(
                "lidar needs at least one beam".into(),
            ));
        }
        if !(self.fov > 0.0 && self.fov <= std::f64::consts::TAU) {
            return Err(SensorError::InvalidSpec(
                "lidar fov must be in (0, 2π]".into(),
            ));
        }
        if !(self.max_range.is_finite() && self.max_range > 0.0) {
            return Err(SensorError::InvalidSpec(
                "lidar range must be positive".into(),
            ));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(SensorError::InvalidSpec(
                "lidar noise must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Beam `k` direction for an agent heading.
    pub fn beam_angle(&self, heading: f64, k: usize) -> f64 {
        if self.n_beams == 1 {
            heading
        } else {
            heading - self.fov / 2.0 + k as f64 * self.fov / (self.n_beams - 1) as f64
        }
    }
}

/// Ranges per beam, `max_range` where nothing is hit. The agent's own
/// footprint is never an obstacle. Noise draws come from `rng` only when
/// `noise_sigma > 0`.
pub fn scan_lidar(
    view: &WorldView,
    id: ParticipantId,
    spec: &LidarSpec,
    rng: &mut impl Rng,
) -> Result<Vec<f64>, SensorError> {
    spec.validate()?;
    let me = agent(view, id)?;
    let origin = me.center();
    let mut obstacles = Vec::new();
    for p in view.participants.iter().filter(|p| p.id != id) {
        let f = p.spec.footprint(p.state.pose);
        if f.center().distance(origin.position) > spec.max_range + f.bounding_radius() {
            continue;
        }
        obstacles.push(match f {
            Footprint::Box(b) => Obstacle::Polygon(b.to_polygon()),
            Footprint::Disc(c) => Obstacle::Circle(c),
        });
    }
    if spec.include_map {
        let bounds = Aabb::around(origin.position, spec.max_range);
        let mut seen = BTreeSet::new();
        for lid in view.map.lanes_in_bounds(&bounds) {
            let lane = &view.map.lanes[&lid];
            for b in [lane.left_boundary.id, lane.right_boundary.id] {
                if seen.insert(b) {
                    for w in view.map.linestrings[&b].geometry.points().windows(2) {
                        obstacles.push(Obstacle::Segment(w[0], w[1]));
                    }
                }
            }
        }
        for aid in view.map.areas_in_bounds(&bounds) {
            let area = &view.map.areas[&aid];
            if !area.subtype.is_drivable() {
                obstacles.extend(area.outer.iter().cloned().map(Obstacle::Polygon));
            }
        }
    }
    let noise = (spec.noise_sigma > 0.0)
        .then(|| Normal::new(0.0, spec.noise_sigma).expect("validated sigma"));
    let mut out = Vec::with_capacity(spec.n_beams);
    for k in 0..spec.n_beams {
        let angle = spec.beam_angle(origin.heading, k);
        let mut r =
            raycast(origin.position, angle, spec.max_range, &obstacles).unwrap_or(spec.max_range);
        if let Some(n) = &noise {
            r = (r + n.sample(rng)).clamp(0.0, spec.max_range);
        }
        out.push(r);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VectorSpec {
    pub radius: f64,
    pub max_polylines: usize,
    pub max_vectors_per_polyline: usize,
}

impl VectorSpec {
    pub fn new(
        radius: f64,
        max_polylines: usize,
        max_vectors_per_polyline: usize,
    ) -> Result<Self, SensorError> {
        let s = Self {
            radius,
            max_polylines,
            max_vectors_per_polyline,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SensorError> {
        if !(self.radius.is_finite() && self.radius > 0.0)
            || self.max_polylines == 0
            || self.max_vectors_per_polyline == 0
        {
            return Err(SensorError::InvalidSpec(
                "vector spec values must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VectorClass {
    LaneBoundary,
    Centerline,
    Vehicle,
    PedestrianCyclist,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VectorFeature {
    pub start: Point2,
    pub end: Point2,
    pub class: VectorClass,
    pub polyline: usize,
}

struct Candidate {
    class: VectorClass,
    id: i64,
    points: Vec<Point2>,
}

const DISTANCE_KEY: f64 = 1e-6;
const DISC_VERTICES: usize = 16;

fn limit_vectors(points: Vec<Point2>, max_vectors: usize) -> Vec<Point2> {
    if points.len() <= max_vectors + 1 {
        return points;
    }
    match Polyline::new_dedup(points) {
        Ok(line) => line.resample(max_vectors + 1),
        Err(_) => Vec::new(),
    }
}

/// Directed segments in the agent frame, grouped into polylines ordered by
/// distance to the agent and then by source id.
pub fn vectorize(
    view: &WorldView,
    id: ParticipantId,
    spec: &VectorSpec,
) -> Result<Vec<VectorFeature>, SensorError> {
    spec.validate()?;
    let me = agent(view, id)?;
    let frame = me.center();
    let o = frame.position;
    let bounds = Aabb::around(o, spec.radius);
    let map = view.map;
    let mut candidates = Vec::new();
    let mut boundaries = BTreeSet::new();
    for lid in map.lanes_in_bounds(&bounds) {
        let lane = &map.lanes[&lid];
        for b in [lane.left_boundary.id, lane.right_boundary.id] {
            if boundaries.insert(b) {
                candidates.push(Candidate {
                    class: VectorClass::LaneBoundary,
                    id: b,
                    points: map.linestrings[&b].geometry.points().to_vec(),
                });
            }
        }
        candidates.push(Candidate {
            class: VectorClass::Centerline,
            id: lid,
            points: lane.centerline.points().to_vec(),
        });
    }
    for p in view.participants.iter().filter(|p| p.id != id) {
        let f = p.spec.footprint(p.state.pose);
        if f.center().distance(o) > spec.radius + f.bounding_radius() {
            continue;
        }
        let class = if matches!(
            p.spec.class,
            ParticipantClass::Car | ParticipantClass::Truck
        ) {
            VectorClass::Vehicle
        } else {
            VectorClass::PedestrianCyclist
        };
        // disc outlines start on the observer's heading so they rotate with the frame
        let mut pts: Vec<Point2> = match f {
            Footprint::Box(_) => f.polygon().vertices().to_vec(),
            Footprint::Disc(c) => (0..DISC_VERTICES)
                .map(|k| {
                    let a = frame.heading + k as f64 * std::f64::consts::TAU / DISC_VERTICES as f64;
                    c.center + Point2::from_angle(a) * c.radius
                })
                .collect(),
        };
        pts.push(pts[0]);
        candidates.push(Candidate {
            class,
            id: p.id.0,
            points: pts,
        });
    }

    let mut polylines: Vec<(f64, VectorClass, i64, Vec<(Point2, Point2)>)> = Vec::new();
    for c in candidates {
        let pts = limit_vectors(c.points, spec.max_vectors_per_polyline);
        let kept: Vec<(Point2, Point2)> = pts
            .windows(2)
            .map(|w| (w[0], w[1]))
            .filter(|(a, b)| a != b && a.lerp(*b, 0.5).distance(o) <= spec.radius)
            .collect();
        if kept.is_empty() {
            continue;
        }
        let d = kept
            .iter()
            .map(|(a, b)| point_segment_distance(o, *a, *b))
            .fold(f64::INFINITY, f64::min);
        polylines.push((d, c.class, c.id, kept));
    }
    // distances are keyed at micrometer resolution so equidistant polylines
    // fall back to class and id regardless of rounding noise
    let key = |d: f64| (d / DISTANCE_KEY).round() as i64;
    polylines.sort_by(|a, b| {
        key(a.0)
            .cmp(&key(b.0))
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    polylines.truncate(spec.max_polylines);
    let mut out = Vec::new();
    for (idx, (_, class, _, segs)) in polylines.into_iter().enumerate() {
        for (a, b) in segs {
            out.push(VectorFeature {
                start: frame.transform_to_local(a),
                end: frame.transform_to_local(b),
                class,
                polyline: idx,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{ParticipantSpec, ParticipantState};
    use crate::map::TrafficMap;
    use crate::rng::substream;

    fn car(id: i64, x: f64, y: f64, h: f64, length: f64, width: f64) -> ParticipantView {
        let spec = ParticipantSpec {
            length,
            width,
            wheelbase: Some(0.6 * length),
            ..ParticipantClass::Car.default_spec()
        };
        let center = Pose2::new(x, y, h);
        ParticipantView {
            id: ParticipantId(id),
            spec,
            state: ParticipantState::at_rest(0.0, spec.reference_from_center(center)),
        }
    }

    #[test]
    fn ego_cell_count() {
        let map = TrafficMap::default();
        let ps = [car(1, 0.0, 0.0, 0.0, 4.0, 2.0)];
        let view = WorldView {
            map: &map,
            time: 0.0,
            dt: 0.1,
            participants: &ps,
        };
        let spec = BevSpec::new(100, 100, 0.1).unwrap();
        let g = render_bev(&view, ParticipantId(1), &spec).unwrap();
        let n = g.count(SemanticClass::Ego);
        assert!((760..=840).contains(&n), "{n}");
        assert_eq!(g.count(SemanticClass::Vehicle), 0);
        assert_eq!(g.count(SemanticClass::Drivable), 0);
    }

    #[test]
    fn ego_heads_up() {
        let map = TrafficMap::default();
        let ps = [
            car(1, 0.0, 0.0, 0.0, 4.0, 2.0),
            car(2, 4.0, 0.0, 0.0, 2.0, 2.0),
        ];
        let view = WorldView {
            map: &map,
            time: 0.0,
            dt: 0.1,
            participants: &ps,
        };
        let g = render_bev(
            &view,
            ParticipantId(1),
            &BevSpec::new(100, 100, 0.1).unwrap(),
        )
        .unwrap();
        let ch = g.channel_of(SemanticClass::Vehicle).unwrap();
        // 4 m ahead is 40 rows above the center row
        assert_eq!(g.get(10, 50, ch), 1);
        assert_eq!(g.get(90, 50, ch), 0);
    }

    #[test]
    fn lidar_wall_ahead() {
        let map = TrafficMap::default();
        let ps = [
            car(1, 0.0, 0.0, 0.0, 4.0, 2.0),
            car(2, 6.0, 0.0, 0.0, 2.0, 4.0),
        ];
        let view = WorldView {
            map: &map,
            time: 0.0,
            dt: 0.1,
            participants: &ps,
        };
        let spec = LidarSpec::new(1, 1.0, 50.0).unwrap();
        let r = scan_lidar(&view, ParticipantId(1), &spec, &mut substream(0, "lidar")).unwrap();
        assert!((r[0] - 5.0).abs() < 1e-12);
        let alone = [ps[0]];
        let empty = WorldView {
            participants: &alone,
            ..view
        };
        let spec = LidarSpec::new(8, 2.0, 30.0).unwrap();
        let r = scan_lidar(&empty, ParticipantId(1), &spec, &mut substream(0, "lidar")).unwrap();
        assert!(r.iter().all(|&x| x == 30.0));
        assert!(matches!(
            scan_lidar(&empty, ParticipantId(5), &spec, &mut substream(0, "lidar")),
            Err(SensorError::UnknownParticipant(_))
        ));
    }

    #[test]
    fn lidar_noise_is_seeded() {
        let map = TrafficMap::default();
        let ps = [
            car(1, 0.0, 0.0, 0.0, 4.0, 2.0),
            car(2, 6.0, 0.0, 0.0, 2.0, 4.0),
        ];
        let view = WorldView {
            map: &map,
            time: 0.0,
            dt: 0.1,
            participants: &ps,
        };
        let spec = LidarSpec::new(16, 1.0, 50.0).unwrap().with_noise(0.1);
        let a = scan_lidar(&view, ParticipantId(1), &spec, &mut substream(3, "lidar")).unwrap();
        let b = scan_lidar(&view, ParticipantId(1), &spec, &mut substream(3, "lidar")).unwrap();
        let c = scan_lidar(&view, ParticipantId(1), &spec, &mut substream(4, "lidar")).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|r| (0.0..=50.0).contains(r)));
    }

    #[test]
    fn vectors_of_nearby_participant() {
        let map = TrafficMap::default();
        let ps = [
            car(1, 0.0, 0.0, 0.0, 4.0, 2.0),
            car(2, 10.0, 0.0, 0.0, 4.0, 2.0),
        ];
        let view = WorldView {
            map: &map,
            time: 0.0,
            dt: 0.1,
            participants: &ps,
        };
        let v = vectorize(
            &view,
            ParticipantId(1),
            &VectorSpec::new(30.0, 8, 16).unwrap(),
        )
        .unwrap();
        assert_eq!(v.len(), 4);
        assert!(v
            .iter()
            .all(|f| f.polyline == 0 && f.class == VectorClass::Vehicle));
        let alone = [ps[0]];
        let none = vectorize(
            &WorldView {
                participants: &alone,
                ..view
            },
            ParticipantId(1),
            &VectorSpec::new(30.0, 8, 16).unwrap(),
        )
        .unwrap();
        assert!(none.is_empty());
    }

    #[test]
    fn bev_spec_parsing() {
        let s: BevSpec = "200x100,0.25".parse().unwrap();
        assert_eq!((s.width_px, s.height_px, s.resolution), (200, 100, 0.25));
        assert!("0x10,1".parse::<BevSpec>().is_err());
        assert!("10x10".parse::<BevSpec>().is_err());
    }

    #[test]
    fn pgm_header() {
        let map = TrafficMap::default();
        let ps = [car(1, 0.0, 0.0, 0.0, 4.0, 2.0)];
        let view = WorldView {
            map: &map,
            time: 0.0,
            dt: 0.1,
            participants: &ps,
        };
        let g = render_bev(&view, ParticipantId(1), &BevSpec::new(30, 20, 0.5).unwrap()).unwrap();
        let pgm = g.channel_pgm(0);
        assert!(pgm.starts_with(b"P5\n30 20\n255\n"));
        assert_eq!(pgm.len(), b"P5\n30 20\n255\n".len() + 600);
        assert_eq!(g.composite_ppm().len(), b"P6\n30 20\n255\n".len() + 1800);
    }
}
