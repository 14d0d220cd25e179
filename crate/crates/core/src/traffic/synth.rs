//! Synthetic constant-speed traffic along lane centerlines.

use rand::Rng;

use crate::agents::{ParticipantClass, ParticipantId};
use crate::geometry::{convex_overlap, ConvexPolygon, OrientedBox, Point2, Polyline, Pose2};
use crate::map::{Coverage, Id, TrafficMap};
use crate::rng::substream;

use super::{Track, TrackPoint, TrafficError, TrajectoryDataset};

pub const SYNTH_DT: f64 = 0.1;
pub const SYNTH_LENGTH: f64 = 4.5;
pub const SYNTH_WIDTH: f64 = 1.8;

const MAX_ROUTE_LANES: usize = 4;
const ROUTE_ATTEMPTS: usize = 64;
/// Start delay (frames) added when a candidate collides with earlier tracks.
const DELAY_FRAMES: i64 = 10;
const DELAY_ATTEMPTS: usize = 200;
/// Clearance kept between the footprint and the route ends (meters).
const END_CLEARANCE: f64 = 0.25;

struct Candidate {
    frame0: i64,
    poses: Vec<Pose2>,
    speed: f64,
}

fn footprint(pose: Pose2) -> ConvexPolygon {
    OrientedBox::new(pose, SYNTH_LENGTH, SYNTH_WIDTH)
        .expect("positive dimensions")
        .to_polygon()
}

fn collides(a: &Candidate, b: &Candidate) -> bool {
    a.poses.iter().enumerate().any(|(i, pa)| {
        let f = a.frame0 + i as i64 - b.frame0;
        f >= 0 && (f as usize) < b.poses.len() && {
            let pb = b.poses[f as usize];
            pa.position.distance(pb.position) <= SYNTH_LENGTH + SYNTH_WIDTH
                && convex_overlap(&footprint(*pa), &footprint(pb))
        }
    })
}

fn route_path(map: &TrafficMap, lanes: &[Id], rng: &mut impl Rng) -> Option<Polyline> {
    let mut id = lanes[rng.random_range(0..lanes.len())];
    let mut pts: Vec<Point2> = Vec::new();
    for _ in 0..MAX_ROUTE_LANES {
        let lane = map.lanes.get(&id)?;
        pts.extend_from_slice(lane.centerline.points());
        let next: Vec<Id> = lane
            .successors
            .iter()
            .copied()
            .filter(|s| lanes.contains(s))
            .collect();
        if next.is_empty() {
            break;
        }
        id = next[rng.random_range(0..next.len())];
    }
    Polyline::new_dedup(pts).ok()
}

/// Generates `n_tracks` collision-free vehicles driving at constant speed in
/// [5, 15] m/s along random lane routes, sampled every [`SYNTH_DT`] seconds.
pub fn synth_fixture(
    map: &TrafficMap,
    n_tracks: usize,
    seed: u64,
) -> Result<TrajectoryDataset, TrafficError> {
    let lanes: Vec<Id> = map
        .lanes
        .values()
        .filter(|l| l.subtype.is_vehicle_drivable())
        .map(|l| l.id)
        .collect();
    if lanes.is_empty() {
        return Err(TrafficError::Config(
            "synthetic traffic needs at least one drivable lane".into(),
        ));
    }
    let mut rng = substream(seed, "traffic_synth");
    let margin = SYNTH_LENGTH / 2.0 + END_CLEARANCE;
    let mut placed: Vec<Candidate> = Vec::new();
    for i in 0..n_tracks {
        let mut done = false;
        for _ in 0..ROUTE_ATTEMPTS {
            let Some(path) = route_path(map, &lanes, &mut rng) else {
                continue;
            };
            let usable = path.length() - 2.0 * margin;
            let u: f64 = rng.random();
            let speed: f64 = rng.random_range(5.0..=15.0);
            if usable < 1.0 {
                continue;
            }
            let s0 = margin + u * 0.5 * usable;
            let s_end = path.length() - margin;
            let poses: Vec<Pose2> = (0..)
                .map(|k| s0 + speed * SYNTH_DT * k as f64)
                .take_while(|&s| s <= s_end)
                .map(|s| Pose2::from_parts(path.point_at(s), path.heading_at(s)))
                .collect();
            if poses
                .iter()
                .any(|p| map.footprint_coverage(&footprint(*p)) != Coverage::Inside)
            {
                continue;
            }
            let mut cand = Candidate {
                frame0: 0,
                poses,
                speed,
            };
            for _ in 0..DELAY_ATTEMPTS {
                if placed.iter().all(|p| !collides(&cand, p)) {
                    done = true;
                    break;
                }
                cand.frame0 += DELAY_FRAMES;
            }
            if done {
                placed.push(cand);
                break;
            }
        }
        if !done {
            return Err(TrafficError::Config(format!(
                "could not place synthetic track {} without collision",
                i + 1
            )));
        }
    }
    let tracks = placed
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let points = c
                .poses
                .iter()
                .enumerate()
                .map(|(k, pose)| TrackPoint {
                    time: (c.frame0 + k as i64) as f64 * SYNTH_DT,
                    pose: *pose,
                    speed: c.speed,
                    accel: Some(0.0),
                })
                .collect();
            Track::new(
                ParticipantId(i as i64 + 1),
                ParticipantClass::Car,
                SYNTH_LENGTH,
                SYNTH_WIDTH,
                points,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TrajectoryDataset::new(tracks, SYNTH_DT, "synthetic"))
}
