//! Topology inference from boundary geometry, used by parsers whose source
//! format leaves connectivity implicit.

use std::collections::BTreeMap;

use crate::geometry::{Point2, Polyline};

use super::{BoundaryRef, Id, LaneDraft, Linestring};

/// Endpoint coincidence tolerance (meters).
const JOIN_TOL: f64 = 1e-6;

fn oriented_ends(ls: &BTreeMap<Id, Linestring>, b: BoundaryRef) -> Option<(Point2, Point2)> {
    let g: &Polyline = &ls.get(&b.id)?.geometry;
    Some(if b.inverted {
        (g.last(), g.first())
    } else {
        (g.first(), g.last())
    })
}

/// Adds `B` to `A.successors` when both of A's oriented boundary ends coincide
/// with B's boundary starts.
pub fn infer_successors(lanes: &mut [LaneDraft], linestrings: &BTreeMap<Id, Linestring>) {
    let ends: Vec<Option<((Point2, Point2), (Point2, Point2))>> = lanes
        .iter()
        .map(|l| {
            Some((
                oriented_ends(linestrings, l.left_boundary)?,
                oriented_ends(linestrings, l.right_boundary)?,
            ))
        })
        .collect();
    for i in 0..lanes.len() {
        let Some(((_, a_left_end), (_, a_right_end))) = ends[i] else {
            continue;
        };
        for j in 0..lanes.len() {
            if i == j {
                continue;
            }
            let Some(((b_left_start, _), (b_right_start, _))) = ends[j] else {
                continue;
            };
            if a_left_end.distance(b_left_start) <= JOIN_TOL
                && a_right_end.distance(b_right_start) <= JOIN_TOL
            {
                let id = lanes[j].id;
                if !lanes[i].successors.contains(&id) {
                    lanes[i].successors.push(id);
                }
            }
        }
        lanes[i].successors.sort_unstable();
    }
}

/// Lanes sharing a boundary linestring with the same orientation become
/// neighbours (A.left == B.right ⇒ B is left of A).
pub fn infer_adjacency(lanes: &mut [LaneDraft]) {
    let snapshot: Vec<(Id, BoundaryRef, BoundaryRef)> = lanes
        .iter()
        .map(|l| (l.id, l.left_boundary, l.right_boundary))
        .collect();
    for lane in lanes.iter_mut() {
        if lane.adjacent_left.is_none() {
            lane.adjacent_left = snapshot
                .iter()
                .filter(|(id, _, right)| *id != lane.id && *right == lane.left_boundary)
                .map(|(id, _, _)| *id)
                .min();
        }
        if lane.adjacent_right.is_none() {
            lane.adjacent_right = snapshot
                .iter()
                .filter(|(id, left, _)| *id != lane.id && *left == lane.right_boundary)
                .map(|(id, _, _)| *id)
                .min();
        }
    }
}
