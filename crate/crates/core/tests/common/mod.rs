#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use roadsim_core::agents::{
    ParticipantClass, ParticipantId, ParticipantSpec, ParticipantState, ParticipantView,
    SignalColor,
};
use roadsim_core::events::{
    prime_detector, step_detector, DetectorInput, DetectorState, EventRecord,
};
use roadsim_core::geometry::{ConvexPolygon, Pose2};
use roadsim_core::map::{Id, TrafficMap};
use roadsim_core::parsers::{parse_map, MapFormat};

pub const DT: f64 = 0.1;

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn load_map(path: &Path) -> TrafficMap {
    let text = std::fs::read_to_string(path).expect("map readable");
    parse_map(
        &text,
        MapFormat::from_path(path).expect("known extension"),
        None,
        None,
    )
    .expect("map parses")
}

pub fn fixture_map(name: &str) -> TrafficMap {
    load_map(&fixture(name))
}

pub fn scenario_map(name: &str) -> TrafficMap {
    load_map(&repo_root().join("scenarios/maps").join(name))
}

/// Lanelet2 document in local coordinates. `lanes` lists
/// `(lanelet id, left points, right points, extra tags)`; way and node ids are
/// generated.
pub fn local_osm(lanes: &[(i64, Vec<(f64, f64)>, Vec<(f64, f64)>, &str)], extra: &str) -> String {
    let mut nodes = String::new();
    let mut ways = String::new();
    let mut rels = String::new();
    let mut next = 1_000_000i64;
    let mut way = |pts: &[(f64, f64)], nodes: &mut String, ways: &mut String| -> i64 {
        let mut refs = String::new();
        for (x, y) in pts {
            next += 1;
            nodes.push_str(&format!(
                "<node id=\"{next}\" lat=\"0\" lon=\"0\"><tag k=\"local_x\" v=\"{x}\"/><tag k=\"local_y\" v=\"{y}\"/></node>\n"
            ));
            refs.push_str(&format!("<nd ref=\"{next}\"/>"));
        }
        next += 1;
        ways.push_str(&format!(
            "<way id=\"{next}\">{refs}<tag k=\"type\" v=\"line_thin\"/></way>\n"
        ));
        next
    };
    for (id, left, right, tags) in lanes {
        let l = way(left, &mut nodes, &mut ways);
        let r = way(right, &mut nodes, &mut ways);
        rels.push_str(&format!(
            "<relation id=\"{id}\"><member type=\"way\" role=\"left\" ref=\"{l}\"/><member type=\"way\" role=\"right\" ref=\"{r}\"/><tag k=\"type\" v=\"lanelet\"/><tag k=\"subtype\" v=\"road\"/>{tags}</relation>\n"
        ));
    }
    format!("<?xml version=\"1.0\"?>\n<osm version=\"0.6\">\n{nodes}{ways}{rels}{extra}</osm>\n")
}

pub fn view_at_center(
    id: i64,
    spec: ParticipantSpec,
    center: Pose2,
    speed: f64,
) -> ParticipantView {
    ParticipantView {
        id: ParticipantId(id),
        spec,
        state: ParticipantState {
            time: 0.0,
            pose: spec.reference_from_center(center),
            speed,
            accel: 0.0,
            steer: 0.0,
        },
    }
}

pub fn car_at(id: i64, x: f64, y: f64, heading: f64, speed: f64) -> ParticipantView {
    view_at_center(
        id,
        ParticipantClass::Car.default_spec(),
        Pose2::new(x, y, heading),
        speed,
    )
}

pub fn pedestrian_at(id: i64, x: f64, y: f64) -> ParticipantView {
    view_at_center(
        id,
        ParticipantClass::Pedestrian.default_spec(),
        Pose2::new(x, y, 0.0),
        0.0,
    )
}

/// Runs the detector over scripted frames; frame 0 primes the state and the
/// events of frame `k` are tagged with step `k`.
pub fn run_script(
    map: &TrafficMap,
    frames: &[Vec<ParticipantView>],
    signals: &BTreeMap<Id, SignalColor>,
) -> Vec<(usize, EventRecord)> {
    run_script_with(map, frames, signals, &BTreeMap::new(), None)
}

pub fn run_script_with(
    map: &TrafficMap,
    frames: &[Vec<ParticipantView>],
    signals: &BTreeMap<Id, SignalColor>,
    goals: &BTreeMap<ParticipantId, ConvexPolygon>,
    max_steps: Option<usize>,
) -> Vec<(usize, EventRecord)> {
    let mut state = DetectorState::new();
    let mut out = Vec::new();
    let agents: Vec<ParticipantId> = frames
        .first()
        .map(|f| f.iter().map(|p| p.id).collect())
        .unwrap_or_default();
    for (k, frame) in frames.iter().enumerate() {
        let mut frame = frame.clone();
        frame.sort_by_key(|p| p.id);
        let input = DetectorInput {
            map,
            time: k as f64 * DT,
            dt: DT,
            participants: &frame,
            signals,
            goals,
            agents: &agents,
            max_steps,
        };
        if k == 0 {
            prime_detector(&input, &mut state);
        } else {
            out.extend(
                step_detector(&input, &mut state)
                    .into_iter()
                    .map(|e| (k, e)),
            );
        }
    }
    out
}
