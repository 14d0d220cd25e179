mod common;

use std::f64::consts::PI;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use roadsim_core::agents::{ParticipantClass, ParticipantView, WorldView};
use roadsim_core::geometry::{Point2, Pose2};
use roadsim_core::map::TrafficMap;
use roadsim_core::parsers::{parse_map, MapFormat};
use roadsim_core::sensors::{
    render_bev, scan_lidar, vectorize, BevSpec, LidarSpec, SemanticClass, VectorClass, VectorSpec,
};

use common::{car_at, fixture, local_osm, pedestrian_at, view_at_center};

/// The junction fixture with every local node coordinate moved by `frame`.
fn transformed_junction(frame: Pose2) -> TrafficMap {
    let text = std::fs::read_to_string(fixture("junction.osm")).unwrap();
    let mut out = String::new();
    for line in text.lines() {
        if let (Some(xs), Some(ys)) = (
            line.find("k=\"local_x\" v=\""),
            line.find("k=\"local_y\" v=\""),
        ) {
            let value = |start: usize| -> (usize, usize, f64) {
                let from = start + "k=\"local_x\" v=\"".len();
                let to = from + line[from..].find('"').unwrap();
                (from, to, line[from..to].parse().unwrap())
            };
            let (x0, x1, x) = value(xs);
            let (y0, y1, y) = value(ys);
            let p = frame.transform_from_local(Point2::new(x, y));
            let mut l = line.to_string();
            // replace the later field first so earlier offsets stay valid
            let (first, second) = if x0 < y0 {
                ((x0, x1, p.x), (y0, y1, p.y))
            } else {
                ((y0, y1, p.y), (x0, x1, p.x))
            };
            l.replace_range(second.0..second.1, &format!("{:.12}", second.2));
            l.replace_range(first.0..first.1, &format!("{:.12}", first.2));
            out.push_str(&l);
        } else {
            out.push_str(line);
        }
        out.push('\n');
    }
    parse_map(&out, MapFormat::Osm, None, None).unwrap()
}

fn move_view(p: &ParticipantView, frame: Pose2) -> ParticipantView {
    let c = p.center();
    let moved = Pose2::from_parts(
        frame.transform_from_local(c.position),
        c.heading + frame.heading,
    );
    view_at_center(p.id.0, p.spec, moved, p.state.speed)
}

fn scene(offsets: &[(f64, f64, f64)]) -> Vec<ParticipantView> {
    let mut v = vec![car_at(1, -5.0, 1.75, 0.05, 5.0)];
    for (i, (x, y, h)) in offsets.iter().enumerate() {
        let id = i as i64 + 2;
        if i % 3 == 2 {
            v.push(pedestrian_at(id, *x, *y));
        } else {
            v.push(car_at(id, *x, *y, *h, 3.0));
        }
    }
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn observations_are_frame_invariant(
        dx in -200.0..200.0f64,
        dy in -200.0..200.0f64,
        dh in -PI..PI,
        others in prop::collection::vec((-30.0..40.0f64, -8.0..8.0f64, -PI..PI), 0..5),
    ) {
        let frame = Pose2::new(dx, dy, dh);
        let base_map = transformed_junction(Pose2::new(0.0, 0.0, 0.0));
        let moved_map = transformed_junction(frame);
        let base: Vec<_> = scene(&others);
        let moved: Vec<_> = base.iter().map(|p| move_view(p, frame)).collect();
        let a = WorldView { map: &base_map, time: 0.0, dt: 0.1, participants: &base };
        let b = WorldView { map: &moved_map, time: 0.0, dt: 0.1, participants: &moved };
        let ego = base[0].id;

        let bev = BevSpec::new(48, 48, 0.5).unwrap();
        let ga = render_bev(&a, ego, &bev).unwrap();
        let gb = render_bev(&b, ego, &bev).unwrap();
        let differing = ga.data().iter().zip(gb.data()).filter(|(x, y)| x != y).count();
        prop_assert_eq!(differing, 0);

        let lidar = LidarSpec::new(36, 2.0 * PI, 40.0).unwrap();
        let ra = scan_lidar(&a, ego, &lidar, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let rb = scan_lidar(&b, ego, &lidar, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for (x, y) in ra.iter().zip(&rb) {
            prop_assert!((x - y).abs() <= 1e-9);
        }

        let vs = VectorSpec::new(30.0, 32, 16).unwrap();
        let va = vectorize(&a, ego, &vs).unwrap();
        let vb = vectorize(&b, ego, &vs).unwrap();
        prop_assert_eq!(va.len(), vb.len());
        for (x, y) in va.iter().zip(&vb) {
            prop_assert_eq!(x.class, y.class);
            prop_assert_eq!(x.polyline, y.polyline);
            prop_assert!(x.start.distance(y.start) <= 1e-9 && x.end.distance(y.end) <= 1e-9);
        }
    }

    #[test]
    fn vector_count_is_bounded(
        others in prop::collection::vec((-30.0..40.0f64, -8.0..8.0f64, -PI..PI), 0..6),
        polylines in 1usize..6,
        per in 1usize..6,
    ) {
        let map = transformed_junction(Pose2::new(0.0, 0.0, 0.0));
        let ps = scene(&others);
        let view = WorldView { map: &map, time: 0.0, dt: 0.1, participants: &ps };
        let out = vectorize(&view, ps[0].id, &VectorSpec::new(40.0, polylines, per).unwrap()).unwrap();
        prop_assert!(out.len() <= polylines * per);
        prop_assert!(out.iter().all(|v| v.polyline < polylines && v.start != v.end));
    }

    #[test]
    fn vehicle_and_vulnerable_channels_are_disjoint(
        others in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64, -PI..PI), 1..6),
    ) {
        let map = TrafficMap::default();
        let mut ps = scene(&others);
        ps.sort_by_key(|p| p.id);
        let footprints: Vec<_> = ps.iter().map(|p| p.spec.footprint(p.state.pose)).collect();
        let any_overlap = (0..ps.len()).any(|i| (i + 1..ps.len()).any(|j| footprints[i].overlaps(&footprints[j])));
        prop_assume!(!any_overlap);
        let view = WorldView { map: &map, time: 0.0, dt: 0.1, participants: &ps };
        let grid = render_bev(&view, ps[0].id, &BevSpec::new(64, 64, 0.25).unwrap()).unwrap();
        let veh = grid.channel_of(SemanticClass::Vehicle).unwrap();
        let ped = grid.channel_of(SemanticClass::PedestrianCyclist).unwrap();
        for r in 0..grid.height {
            for c in 0..grid.width {
                prop_assert!(!(grid.get(r, c, veh) == 1 && grid.get(r, c, ped) == 1));
            }
        }
    }
}

#[test]
fn sensors_are_deterministic_and_noise_free_lidar_ignores_seed() {
    let map = transformed_junction(Pose2::new(0.0, 0.0, 0.0));
    let ps = scene(&[(8.0, 1.75, 0.0), (3.0, -1.75, PI), (-12.0, 0.0, 0.0)]);
    let view = WorldView {
        map: &map,
        time: 0.0,
        dt: 0.1,
        participants: &ps,
    };
    let noisy = LidarSpec::new(72, 2.0 * PI, 40.0).unwrap().with_noise(0.1);
    let a = scan_lidar(&view, ps[0].id, &noisy, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let b = scan_lidar(&view, ps[0].id, &noisy, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().all(|r| (0.0..=40.0).contains(r)));
    let clean = LidarSpec::new(72, 2.0 * PI, 40.0).unwrap();
    let c = scan_lidar(&view, ps[0].id, &clean, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let d = scan_lidar(&view, ps[0].id, &clean, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
    assert_eq!(c, d);
    let spec = BevSpec::new(40, 30, 0.5).unwrap();
    assert_eq!(
        render_bev(&view, ps[0].id, &spec).unwrap(),
        render_bev(&view, ps[0].id, &spec).unwrap()
    );
}

#[test]
fn empty_world_lidar_reads_max_range() {
    let map = TrafficMap::default();
    let ps = [car_at(1, 0.0, 0.0, 0.0, 0.0)];
    let view = WorldView {
        map: &map,
        time: 0.0,
        dt: 0.1,
        participants: &ps,
    };
    let r = scan_lidar(
        &view,
        ps[0].id,
        &LidarSpec::new(16, PI, 25.0).unwrap(),
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap();
    assert_eq!(r, vec![25.0; 16]);
}

#[test]
fn lidar_can_include_map_boundaries() {
    let map = transformed_junction(Pose2::new(0.0, 0.0, 0.0));
    let ps = [car_at(1, -30.0, 1.75, 0.0, 0.0)];
    let view = WorldView {
        map: &map,
        time: 0.0,
        dt: 0.1,
        participants: &ps,
    };
    let spec = LidarSpec::new(4, 2.0 * PI, 30.0).unwrap();
    let without = scan_lidar(&view, ps[0].id, &spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let with = scan_lidar(
        &view,
        ps[0].id,
        &spec.clone().with_map_obstacles(true),
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap();
    assert!(without.iter().all(|r| *r == 30.0));
    // the beams pointing across the lane reach its boundaries
    assert!(with.iter().any(|r| *r < 30.0));
}

#[test]
fn agent_at_lane_center_sees_road_and_no_other_vehicles() {
    let map = transformed_junction(Pose2::new(0.0, 0.0, 0.0));
    let ps = [car_at(1, -20.0, 1.75, 0.0, 0.0)];
    let view = WorldView {
        map: &map,
        time: 0.0,
        dt: 0.1,
        participants: &ps,
    };
    let grid = render_bev(&view, ps[0].id, &BevSpec::new(40, 40, 0.5).unwrap()).unwrap();
    assert!(grid.count(SemanticClass::Drivable) > 0);
    assert_eq!(grid.count(SemanticClass::Vehicle), 0);
    assert!(grid.count(SemanticClass::Ego) > 0);
}

#[test]
fn single_boundary_yields_one_polyline_of_segments() {
    // One lane whose boundaries have 5 and 2 points; only the 5-point boundary
    // is within a radius that excludes the far boundary.
    let text = local_osm(
        &[(
            1,
            vec![(0.0, 40.0), (10.0, 40.0)],
            vec![(-2.0, 0.0), (-1.0, 0.0), (0.0, 0.0), (1.0, 0.0), (2.0, 0.0)],
            "",
        )],
        "",
    );
    let map = parse_map(&text, MapFormat::Osm, None, None).unwrap();
    let ego = view_at_center(
        1,
        ParticipantClass::Pedestrian.default_spec(),
        Pose2::new(0.0, -1.0, 0.0),
        0.0,
    );
    let ps = [ego];
    let view = WorldView {
        map: &map,
        time: 0.0,
        dt: 0.1,
        participants: &ps,
    };
    let out = vectorize(&view, ego.id, &VectorSpec::new(5.0, 8, 16).unwrap()).unwrap();
    let boundary: Vec<_> = out
        .iter()
        .filter(|v| v.class == VectorClass::LaneBoundary)
        .collect();
    assert_eq!(boundary.len(), 4);
    assert!(boundary.iter().all(|v| v.polyline == boundary[0].polyline));

    let lonely = [view_at_center(
        1,
        ParticipantClass::Pedestrian.default_spec(),
        Pose2::new(500.0, 500.0, 0.0),
        0.0,
    )];
    let view = WorldView {
        map: &map,
        time: 0.0,
        dt: 0.1,
        participants: &lonely,
    };
    assert!(
        vectorize(&view, lonely[0].id, &VectorSpec::new(5.0, 8, 16).unwrap())
            .unwrap()
            .is_empty()
    );
}

#[test]
fn straddling_boundary_keeps_vectors_with_midpoints_inside() {
    let pts: Vec<(f64, f64)> = (0..=10).map(|k| (k as f64 * 2.0, 0.0)).collect();
    let text = local_osm(&[(1, vec![(0.0, 60.0), (20.0, 60.0)], pts, "")], "");
    let map = parse_map(&text, MapFormat::Osm, None, None).unwrap();
    let ego = view_at_center(
        1,
        ParticipantClass::Pedestrian.default_spec(),
        Pose2::new(0.0, 0.0, 0.0),
        0.0,
    );
    let ps = [ego];
    let view = WorldView {
        map: &map,
        time: 0.0,
        dt: 0.1,
        participants: &ps,
    };
    // midpoints at x = 1, 3, 5, ...; radius 8 keeps 1, 3, 5, 7
    let out = vectorize(&view, ego.id, &VectorSpec::new(8.0, 8, 16).unwrap()).unwrap();
    let boundary: Vec<_> = out
        .iter()
        .filter(|v| v.class == VectorClass::LaneBoundary)
        .collect();
    assert_eq!(boundary.len(), 4);
}
