//! 2D primitives shared by every other module: points, poses, polylines,
//! convex footprints, overlap predicates and raycasting.
//!
//! All values are plain immutable data; every operation is a pure function.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for geometric identity (meters).
pub const EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("polyline needs at least 2 distinct points, got {0}")]
    TooFewPoints(usize),
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon is not strictly convex")]
    NotConvex,
    #[error("invalid dimension {0}")]
    InvalidDimension(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector pointing along `heading`.
    pub fn from_angle(heading: f64) -> Self {
        Self::new(heading.cos(), heading.sin())
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Point2) -> f64 {
        (self - other).norm()
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Point2 {
        Point2::new(-self.y, self.x)
    }

    pub fn rotate(self, angle: f64) -> Point2 {
        let (s, c) = angle.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn lerp(self, other: Point2, t: f64) -> Point2 {
        self + (other - self) * t
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

/// Normalizes an angle into (−π, π].
pub fn normalize_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Shortest signed arc from `from` to `to`, in (−π, π].
pub fn angle_diff(to: f64, from: f64) -> f64 {
    normalize_angle(to - from)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub position: Point2,
    pub heading: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            position: Point2::new(x, y),
            heading: normalize_angle(heading),
        }
    }

    pub fn from_parts(position: Point2, heading: f64) -> Self {
        Self {
            position,
            heading: normalize_angle(heading),
        }
    }

    pub fn direction(&self) -> Point2 {
        Point2::from_angle(self.heading)
    }

    /// Maps a point expressed in this frame into the world frame.
    pub fn transform_from_local(&self, p: Point2) -> Point2 {
        self.position + p.rotate(self.heading)
    }

    /// Maps a world point into this frame (origin at `position`, +x along `heading`).
    pub fn transform_to_local(&self, p: Point2) -> Point2 {
        (p - self.position).rotate(-self.heading)
    }
}

/// Expresses world points in the given frame.
pub fn to_local_frame(points: &[Point2], frame: &Pose2) -> Vec<Point2> {
    points
        .iter()
        .map(|p| frame.transform_to_local(*p))
        .collect()
}

/// Inverse of [`to_local_frame`].
pub fn from_local_frame(points: &[Point2], frame: &Pose2) -> Vec<Point2> {
    points
        .iter()
        .map(|p| frame.transform_from_local(*p))
        .collect()
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point2,
    pub max: Point2,
}

impl Aabb {
    pub fn empty() -> Self {
        Self {
            min: Point2::new(f64::INFINITY, f64::INFINITY),
            max: Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point2>) -> Self {
        let mut b = Self::empty();
        for p in points {
            b.include(*p);
        }
        b
    }

    pub fn around(center: Point2, half_extent: f64) -> Self {
        Self {
            min: Point2::new(center.x - half_extent, center.y - half_extent),
            max: Point2::new(center.x + half_extent, center.y + half_extent),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x || self.min.y > self.max.y
    }

    pub fn include(&mut self, p: Point2) {
        self.min.x = self.min.x.min(p.x);
        self.min.y = self.min.y.min(p.y);
        self.max.x = self.max.x.max(p.x);
        self.max.y = self.max.y.max(p.y);
    }

    pub fn merge(&mut self, other: &Aabb) {
        if !other.is_empty() {
            self.include(other.min);
            self.include(other.max);
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.min.x - EPS
            && p.x <= self.max.x + EPS
            && p.y >= self.min.y - EPS
            && p.y <= self.max.y + EPS
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        self.min.x <= other.max.x + EPS
            && other.min.x <= self.max.x + EPS
            && self.min.y <= other.max.y + EPS
            && other.min.y <= self.max.y + EPS
    }
}

/// Ordered point sequence with cached cumulative arc length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point2>", into = "Vec<Point2>")]
pub struct Polyline {
    points: Vec<Point2>,
    cumulative: Vec<f64>,
}

/// Result of projecting a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the closest point.
    pub s: f64,
    /// Signed lateral offset, positive to the left of travel.
    pub d: f64,
    pub segment: usize,
    pub closest: Point2,
}

impl Polyline {
    /// Builds a polyline; consecutive points closer than [`EPS`] are rejected.
    pub fn new(points: Vec<Point2>) -> Result<Self, GeometryError> {
        if points.iter().any(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if points.len() < 2 {
            return Err(GeometryError::TooFewPoints(points.len()));
        }
        let mut cumulative = Vec::with_capacity(points.len());
        cumulative.push(0.0);
        for w in points.windows(2) {
            let len = w[0].distance(w[1]);
            if len <= EPS {
                return Err(GeometryError::TooFewPoints(points.len()));
            }
            cumulative.push(cumulative.last().unwrap() + len);
        }
        Ok(Self { points, cumulative })
    }

    /// Like [`Polyline::new`] but silently drops near-duplicate consecutive points.
    pub fn new_dedup(points: Vec<Point2>) -> Result<Self, GeometryError> {
        let mut kept: Vec<Point2> = Vec::with_capacity(points.len());
        for p in points {
            if kept.last().is_none_or(|q| q.distance(p) > EPS) {
                kept.push(p);
            }
        }
        let n = kept.len();
        Self::new(kept).map_err(|e| match e {
            GeometryError::TooFewPoints(_) => GeometryError::TooFewPoints(n),
            other => other,
        })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn cumulative_lengths(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn segment_count(&self) -> usize {
        self.points.len() - 1
    }

    pub fn first(&self) -> Point2 {
        self.points[0]
    }

    pub fn last(&self) -> Point2 {
        *self.points.last().unwrap()
    }

    pub fn reversed(&self) -> Polyline {
        let mut pts = self.points.clone();
        pts.reverse();
        Polyline::new(pts).expect("reversal preserves validity")
    }

    /// Index of the segment containing arc length `s` (clamped).
    pub fn segment_at(&self, s: f64) -> usize {
        let n = self.segment_count();
        match self.cumulative.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(n - 1),
            Err(i) => i.saturating_sub(1).min(n - 1),
        }
    }

    pub fn segment_heading(&self, i: usize) -> f64 {
        (self.points[i + 1] - self.points[i]).angle()
    }

    /// Point at arc length `s`, clamped to the ends.
    pub fn point_at(&self, s: f64) -> Point2 {
        let s = s.clamp(0.0, self.length());
        let i = self.segment_at(s);
        let seg_len = self.cumulative[i + 1] - self.cumulative[i];
        let t = ((s - self.cumulative[i]) / seg_len).clamp(0.0, 1.0);
        self.points[i].lerp(self.points[i + 1], t)
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        self.segment_heading(self.segment_at(s))
    }

    /// Closest point on the polyline. Ties resolve to the lowest segment index.
    pub fn project(&self, p: Point2) -> Projection {
        let mut best: Option<(f64, usize, f64, Point2)> = None;
        for i in 0..self.segment_count() {
            let a = self.points[i];
            let ab = self.points[i + 1] - a;
            let len = self.cumulative[i + 1] - self.cumulative[i];
            let t = ((p - a).dot(ab) / (len * len)).clamp(0.0, 1.0);
            let closest = a + ab * t;
            let e = p - closest;
            let d2 = e.dot(e);
            let better = best.as_ref().is_none_or(|(bd, ..)| {
                let limit = bd - 1e-12;
                limit > 0.0 && d2 < limit * limit
            });
            if better {
                best = Some((d2.sqrt(), i, t, closest));
            }
        }
        let (dist, i, t, closest) = best.expect("polyline has at least one segment");
        let ab = self.points[i + 1] - self.points[i];
        let d = if ab.cross(p - closest) < 0.0 {
            -dist
        } else {
            dist
        };
        Projection {
            s: self.cumulative[i] + t * (self.cumulative[i + 1] - self.cumulative[i]),
            d,
            segment: i,
            closest,
        }
    }

    /// Resamples at `n` equally spaced arc-length fractions (endpoints included).
    pub fn resample(&self, n: usize) -> Vec<Point2> {
        let n = n.max(2);
        let len = self.length();
        (0..n)
            .map(|i| self.point_at(len * i as f64 / (n - 1) as f64))
            .collect()
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.points)
    }
}

impl TryFrom<Vec<Point2>> for Polyline {
    type Error = GeometryError;
    fn try_from(points: Vec<Point2>) -> Result<Self, Self::Error> {
        Polyline::new(points)
    }
}

impl From<Polyline> for Vec<Point2> {
    fn from(p: Polyline) -> Self {
        p.points
    }
}

/// Projects `p` onto `line` returning `(s, d, segment index)`.
pub fn project_to_polyline(p: Point2, line: &Polyline) -> (f64, f64, usize) {
    let proj = line.project(p);
    (proj.s, proj.d, proj.segment)
}

fn signed_area(vertices: &[Point2]) -> f64 {
    let n = vertices.len();
    (0..n)
        .map(|i| vertices[i].cross(vertices[(i + 1) % n]))
        .sum::<f64>()
        * 0.5
}

/// Counter-clockwise strictly convex polygon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point2>", into = "Vec<Point2>")]
pub struct ConvexPolygon {
    vertices: Vec<Point2>,
}

impl ConvexPolygon {
    /// Accepts either orientation; clockwise input is reversed.
    pub fn new(mut vertices: Vec<Point2>) -> Result<Self, GeometryError> {
        if vertices.iter().any(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        if vertices.len() < 3 {
            return Err(GeometryError::TooFewVertices(vertices.len()));
        }
        let area = signed_area(&vertices);
        if area.abs() <= EPS {
            return Err(GeometryError::NotConvex);
        }
        if area < 0.0 {
            vertices.reverse();
        }
        let n = vertices.len();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            let turn = (b - a).cross(c - b);
            let scale = (b - a).norm() * (c - b).norm();
            if scale <= EPS * EPS || turn <= EPS * scale {
                return Err(GeometryError::NotConvex);
            }
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn centroid(&self) -> Point2 {
        let n = self.vertices.len();
        let mut cx = 0.0;
        let mut cy = 0.0;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let w = a.cross(b);
            cx += (a.x + b.x) * w;
            cy += (a.y + b.y) * w;
        }
        let k = 1.0 / (6.0 * self.area());
        Point2::new(cx * k, cy * k)
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Inclusive containment (boundary within [`EPS`] counts).
    pub fn contains(&self, p: Point2) -> bool {
        self.edges().all(|(a, b)| {
            let e = b - a;
            e.cross(p - a) >= -EPS * e.norm()
        })
    }

    /// Euclidean distance from `p` to the polygon; 0 when inside.
    pub fn distance_to(&self, p: Point2) -> f64 {
        if self.contains(p) {
            return 0.0;
        }
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    pub fn transformed(&self, f: impl Fn(Point2) -> Point2) -> ConvexPolygon {
        // rigid transforms preserve orientation and convexity
        ConvexPolygon {
            vertices: self.vertices.iter().map(|p| f(*p)).collect(),
        }
    }
}

impl TryFrom<Vec<Point2>> for ConvexPolygon {
    type Error = GeometryError;
    fn try_from(v: Vec<Point2>) -> Result<Self, Self::Error> {
        ConvexPolygon::new(v)
    }
}

impl From<ConvexPolygon> for Vec<Point2> {
    fn from(p: ConvexPolygon) -> Self {
        p.vertices
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Pose2,
    pub length: f64,
    pub width: f64,
}

impl OrientedBox {
    pub fn new(center: Pose2, length: f64, width: f64) -> Result<Self, GeometryError> {
        for v in [length, width] {
            if !(v.is_finite() && v > 0.0) {
                return Err(GeometryError::InvalidDimension(v));
            }
        }
        Ok(Self {
            center,
            length,
            width,
        })
    }

    pub fn corners(&self) -> [Point2; 4] {
        let hl = self.length / 2.0;
        let hw = self.width / 2.0;
        [
            Point2::new(hl, hw),
            Point2::new(-hl, hw),
            Point2::new(-hl, -hw),
            Point2::new(hl, -hw),
        ]
        .map(|p| self.center.transform_from_local(p))
    }

    pub fn to_polygon(&self) -> ConvexPolygon {
        ConvexPolygon {
            vertices: self.corners().to_vec(),
        }
    }
}

/// Footprint polygon of an oriented box, CCW starting at the front-left corner.
pub fn box_vertices(b: &OrientedBox) -> ConvexPolygon {
    b.to_polygon()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: Point2,
    pub radius: f64,
}

impl Circle {
    pub fn new(center: Point2, radius: f64) -> Result<Self, GeometryError> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(GeometryError::InvalidDimension(radius));
        }
        Ok(Self { center, radius })
    }

    pub fn bounds(&self) -> Aabb {
        Aabb::around(self.center, self.radius)
    }
}

pub fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

fn project_onto(poly: &ConvexPolygon, axis: Point2) -> (f64, f64) {
    poly.vertices
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            let d = v.dot(axis);
            (lo.min(d), hi.max(d))
        })
}

/// Separating-axis overlap test. Touching boundaries count as overlap.
pub fn convex_overlap(a: &ConvexPolygon, b: &ConvexPolygon) -> bool {
    for poly in [a, b] {
        for (p, q) in poly.edges() {
            let e = q - p;
            let axis = e.perp() * (1.0 / e.norm());
            let (amin, amax) = project_onto(a, axis);
            let (bmin, bmax) = project_onto(b, axis);
            if amax < bmin - EPS || bmax < amin - EPS {
                return false;
            }
        }
    }
    true
}

/// True iff the disc reaches the polygon (touching counts).
pub fn circle_polygon_overlap(c: &Circle, p: &ConvexPolygon) -> bool {
    p.distance_to(c.center) <= c.radius + EPS
}

pub fn circle_circle_overlap(a: &Circle, b: &Circle) -> bool {
    a.center.distance(b.center) <= a.radius + b.radius + EPS
}

/// Intersection of two closed segments, if any (a single point; collinear
/// overlaps return the point of `p`-segment closest to `p0`).
pub fn segment_intersection(p0: Point2, p1: Point2, q0: Point2, q1: Point2) -> Option<Point2> {
    let r = p1 - p0;
    let s = q1 - q0;
    let denom = r.cross(s);
    let qp = q0 - p0;
    if denom.abs() <= 1e-15 * r.norm().max(1.0) * s.norm().max(1.0) {
        if qp.cross(r).abs() > EPS * r.norm().max(1.0) {
            return None;
        }
        let rr = r.dot(r);
        if rr == 0.0 {
            return (point_segment_distance(p0, q0, q1) <= EPS).then_some(p0);
        }
        let t0 = qp.dot(r) / rr;
        let t1 = (q1 - p0).dot(r) / rr;
        let (lo, hi) = (t0.min(t1), t0.max(t1));
        if hi < 0.0 || lo > 1.0 {
            return None;
        }
        return Some(p0 + r * lo.max(0.0));
    }
    let t = qp.cross(s) / denom;
    let u = qp.cross(r) / denom;
    let tol = 1e-12;
    if (-tol..=1.0 + tol).contains(&t) && (-tol..=1.0 + tol).contains(&u) {
        Some(p0 + r * t)
    } else {
        None
    }
}

/// Anything a ray can hit.
#[derive(Debug, Clone, PartialEq)]
pub enum Obstacle {
    Segment(Point2, Point2),
    Polygon(ConvexPolygon),
    Circle(Circle),
}

fn ray_segment(origin: Point2, dir: Point2, a: Point2, b: Point2) -> Option<f64> {
    let s = b - a;
    let denom = dir.cross(s);
    let ao = a - origin;
    if denom.abs() <= 1e-15 {
        // parallel; only a collinear segment can be hit, at its nearest endpoint
        if ao.cross(dir).abs() > EPS {
            return None;
        }
        let ta = ao.dot(dir);
        let tb = (b - origin).dot(dir);
        if ta.max(tb) < 0.0 {
            return None;
        }
        return Some(if ta.min(tb) <= 0.0 { 0.0 } else { ta.min(tb) });
    }
    let t = ao.cross(s) / denom;
    let u = ao.cross(dir) / denom;
    (t >= 0.0 && (-1e-12..=1.0 + 1e-12).contains(&u)).then_some(t)
}

fn ray_circle(origin: Point2, dir: Point2, c: &Circle) -> Option<f64> {
    let oc = origin - c.center;
    let b = oc.dot(dir);
    let cc = oc.dot(oc) - c.radius * c.radius;
    let disc = b * b - cc;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t0 = -b - sq;
    let t1 = -b + sq;
    if t0 >= 0.0 {
        Some(t0)
    } else if t1 >= 0.0 {
        Some(t1)
    } else {
        None
    }
}

/// Distance along the ray to the nearest obstacle, if within `max_range`.
pub fn raycast(
    origin: Point2,
    direction: f64,
    max_range: f64,
    obstacles: &[Obstacle],
) -> Option<f64> {
    let dir = Point2::from_angle(direction);
    let mut best: Option<f64> = None;
    let mut consider = |t: Option<f64>| {
        if let Some(t) = t {
            if t <= max_range && best.is_none_or(|b| t < b) {
                best = Some(t);
            }
        }
    };
    for obs in obstacles {
        match obs {
            Obstacle::Segment(a, b) => consider(ray_segment(origin, dir, *a, *b)),
            Obstacle::Polygon(poly) => {
                for (a, b) in poly.edges() {
                    consider(ray_segment(origin, dir, a, b));
                }
            }
            Obstacle::Circle(c) => consider(ray_circle(origin, dir, c)),
        }
    }
    best
}

/// Ear-clipping triangulation of a simple polygon ring (either orientation).
/// Returns CCW triangles; degenerate input yields an empty list.
pub fn triangulate(ring: &[Point2]) -> Vec<[Point2; 3]> {
    let mut pts: Vec<Point2> = Vec::with_capacity(ring.len());
    for p in ring {
        if pts.last().is_none_or(|q: &Point2| q.distance(*p) > EPS) {
            pts.push(*p);
        }
    }
    if pts.len() > 1 && pts[0].distance(*pts.last().unwrap()) <= EPS {
        pts.pop();
    }
    if pts.len() < 3 {
        return Vec::new();
    }
    if signed_area(&pts) < 0.0 {
        pts.reverse();
    }
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    let mut out = Vec::new();
    let mut guard = 0;
    while idx.len() > 3 && guard < 10 * pts.len() * pts.len() {
        guard += 1;
        let n = idx.len();
        let mut clipped = false;
        for i in 0..n {
            let a = pts[idx[(i + n - 1) % n]];
            let b = pts[idx[i]];
            let c = pts[idx[(i + 1) % n]];
            let turn = (b - a).cross(c - b);
            if turn <= EPS {
                if turn.abs() <= EPS {
                    // collinear vertex contributes no area
                    idx.remove(i);
                    clipped = true;
                    break;
                }
                continue;
            }
            let ear_free = idx.iter().all(|&k| {
                let p = pts[k];
                if p == a || p == b || p == c {
                    return true;
                }
                !point_in_triangle(p, a, b, c)
            });
            if ear_free {
                out.push([a, b, c]);
                idx.remove(i);
                clipped = true;
                break;
            }
        }
        if !clipped {
            break;
        }
    }
    if idx.len() == 3 {
        let tri = [pts[idx[0]], pts[idx[1]], pts[idx[2]]];
        if signed_area(&tri) > EPS {
            out.push(tri);
        }
    }
    out
}

/// Inclusive point-in-triangle test for either orientation.
pub fn point_in_triangle(p: Point2, a: Point2, b: Point2, c: Point2) -> bool {
    let d1 = (b - a).cross(p - a);
    let d2 = (c - b).cross(p - b);
    let d3 = (a - c).cross(p - c);
    let tol = EPS;
    let has_neg = d1 < -tol || d2 < -tol || d3 < -tol;
    let has_pos = d1 > tol || d2 > tol || d3 > tol;
    !(has_neg && has_pos)
}

/// Decomposes a simple ring into convex pieces (triangles merged greedily
/// while the union stays convex).
pub fn convex_decomposition(ring: &[Point2]) -> Vec<ConvexPolygon> {
    let mut clean: Vec<Point2> = ring.to_vec();
    if clean.len() > 1 && clean[0].distance(*clean.last().unwrap()) <= EPS {
        clean.pop();
    }
    if let Ok(whole) = ConvexPolygon::new(clean.clone()) {
        return vec![whole];
    }
    let mut pieces: Vec<Vec<Point2>> = triangulate(ring).into_iter().map(|t| t.to_vec()).collect();
    // Hertel-Mehlhorn style merging across shared edges
    let mut merged = true;
    while merged {
        merged = false;
        'outer: for i in 0..pieces.len() {
            for j in (i + 1)..pieces.len() {
                if let Some(u) = merge_along_shared_edge(&pieces[i], &pieces[j]) {
                    if ConvexPolygon::new(u.clone()).is_ok() {
                        pieces[i] = u;
                        pieces.remove(j);
                        merged = true;
                        break 'outer;
                    }
                }
            }
        }
    }
    pieces
        .into_iter()
        .filter_map(|p| ConvexPolygon::new(p).ok())
        .collect()
}

fn merge_along_shared_edge(a: &[Point2], b: &[Point2]) -> Option<Vec<Point2>> {
    let na = a.len();
    let nb = b.len();
    for i in 0..na {
        let a0 = a[i];
        let a1 = a[(i + 1) % na];
        for j in 0..nb {
            let b0 = b[j];
            let b1 = b[(j + 1) % nb];
            if a0.distance(b1) <= EPS && a1.distance(b0) <= EPS {
                // a: ..., a0, a1, ... ; b: ..., b0(=a1), b1(=a0), ...
                let mut out = Vec::with_capacity(na + nb - 2);
                for k in 0..na {
                    out.push(a[(i + 1 + k) % na]);
                    if k == na - 1 {
                        break;
                    }
                }
                // out now starts at a1 and ends at a0; insert b's vertices after a0 up to before a1
                let mut k = (j + 2) % nb;
                while k != j {
                    out.push(b[k]);
                    k = (k + 1) % nb;
                }
                return Some(out);
            }
        }
    }
    None
}
