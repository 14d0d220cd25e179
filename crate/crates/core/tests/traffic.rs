mod common;

use proptest::prelude::*;

use roadsim_core::agents::{ParticipantClass, ParticipantId};
use roadsim_core::geometry::{angle_diff, OrientedBox, Pose2};
use roadsim_core::map::Coverage;
use roadsim_core::traffic::{
    align, parse_tracks, state_at, synth_fixture, write_generic_csv, AlignmentSpec, Track,
    TrackPoint, TrajectoryDataset,
};

use common::{fixture_map, local_osm, scenario_map};

fn track_strategy(id: i64) -> impl Strategy<Value = Track> {
    prop::collection::vec(
        (
            0.01..1.0f64,
            -100.0..100.0f64,
            -100.0..100.0f64,
            -3.1..3.1f64,
            0.0..20.0f64,
        ),
        2..12,
    )
    .prop_map(move |rows| {
        let mut t = 0.0;
        let points = rows
            .into_iter()
            .map(|(dt, x, y, h, v)| {
                t += dt;
                TrackPoint {
                    time: t,
                    pose: Pose2::new(x, y, h),
                    speed: v,
                    accel: None,
                }
            })
            .collect();
        Track::new(ParticipantId(id), ParticipantClass::Car, 4.5, 1.8, points).unwrap()
    })
}

fn dataset_strategy() -> impl Strategy<Value = TrajectoryDataset> {
    (track_strategy(1), track_strategy(2), track_strategy(3))
        .prop_map(|(a, b, c)| TrajectoryDataset::new(vec![a, b, c], 0.1, "generic"))
}

fn footprint(p: Pose2) -> roadsim_core::geometry::ConvexPolygon {
    OrientedBox::new(p, 4.5, 1.8).unwrap().to_polygon()
}

proptest! {
    #[test]
    fn alignment_is_invertible(
        d in dataset_strategy(),
        dx in -500.0..500.0f64,
        dy in -500.0..500.0f64,
        dtheta in -3.1..3.1f64,
        dt in -100.0..100.0f64,
    ) {
        let spec = AlignmentSpec::new(dx, dy, dtheta, dt).unwrap();
        let back = align(&align(&d, &spec), &spec.inverse());
        for (id, track) in &d.tracks {
            for (p, q) in track.points().iter().zip(back.tracks[id].points()) {
                prop_assert!(p.pose.position.distance(q.pose.position) <= 1e-9);
                prop_assert!((p.time - q.time).abs() <= 1e-12);
                prop_assert!(angle_diff(p.pose.heading, q.pose.heading).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn state_at_is_continuous(track in track_strategy(1), u in 0.0..1.0f64) {
        let (t0, t1) = (track.start_time(), track.end_time());
        let t = t0 + u * (t1 - t0);
        let eps = 1e-9;
        if t + eps < t1 {
            let a = state_at(&track, t).unwrap();
            let b = state_at(&track, t + eps).unwrap();
            prop_assert!(a.pose.position.distance(b.pose.position) < 1e-4);
            prop_assert!((a.speed - b.speed).abs() < 1e-4);
        }
    }

    #[test]
    fn row_order_does_not_matter(d in dataset_strategy(), seed in any::<u64>()) {
        let csv = write_generic_csv(&d);
        let mut lines: Vec<&str> = csv.lines().collect();
        let header = lines.remove(0);
        let mut shuffled = lines.clone();
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = parse_tracks("generic", &format!("{header}\n{}\n", lines.join("\n"))).unwrap();
        let b = parse_tracks("generic", &format!("{header}\n{}\n", shuffled.join("\n"))).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn synthetic_tracks_stay_inside_lanes(seed in 0u64..1000, n in 0usize..8) {
        let map = scenario_map("highway.osm");
        let d = synth_fixture(&map, n, seed).unwrap();
        for track in d.tracks.values() {
            for p in track.points() {
                prop_assert_eq!(map.footprint_coverage(&footprint(p.pose)), Coverage::Inside);
            }
        }
    }
}

#[test]
fn generic_csv_round_trips() {
    let map = fixture_map("junction.osm");
    let d = synth_fixture(&map, 4, 9).unwrap();
    let back = parse_tracks("generic", &write_generic_csv(&d)).unwrap();
    assert_eq!(d.tracks.len(), back.tracks.len());
    for (id, t) in &d.tracks {
        for (p, q) in t.points().iter().zip(back.tracks[id].points()) {
            assert!(p.pose.position.distance(q.pose.position) < 1e-9);
        }
    }
}

#[test]
fn synth_examples() {
    let map = fixture_map("two_lane.osm");
    assert!(synth_fixture(&map, 0, 1).unwrap().is_empty());
    let a = synth_fixture(&map, 5, 42).unwrap().to_json();
    let b = synth_fixture(&map, 5, 42).unwrap().to_json();
    assert_eq!(a, b);
}

#[test]
fn synth_on_one_lane_stays_in_that_lane() {
    let text = local_osm(
        &[(
            1,
            vec![(0.0, 2.0), (120.0, 2.0)],
            vec![(0.0, -2.0), (120.0, -2.0)],
            "<tag k=\"one_way\" v=\"yes\"/>",
        )],
        "",
    );
    let map =
        roadsim_core::parsers::parse_map(&text, roadsim_core::parsers::MapFormat::Osm, None, None)
            .unwrap();
    let d = synth_fixture(&map, 3, 5).unwrap();
    assert_eq!(d.tracks.len(), 3);
    for track in d.tracks.values() {
        for p in track.points() {
            assert_eq!(map.lanes_at_point(p.pose.position), vec![1]);
        }
    }
}

#[test]
fn synth_needs_a_drivable_lane() {
    let map = roadsim_core::map::TrafficMap::default();
    assert!(synth_fixture(&map, 1, 0).is_err());
}
