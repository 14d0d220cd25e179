//! Traffic event detection with severity grading. Conditions that persist
//! over several steps are reported once, on the step they begin.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::agents::{ParticipantClass, ParticipantId, ParticipantView, SignalColor};
use crate::geometry::{segment_intersection, ConvexPolygon, Point2, Polyline, EPS};
use crate::map::{lane_direction_at, Coverage, Id, LaneSubtype, RegulatoryKind, TrafficMap};

/// Heading deviation beyond which a participant counts as driving against the lane.
pub const WRONG_WAY_ANGLE: f64 = 2.0 * PI / 3.0;
/// Dwell time before a wrong-way violation is reported (seconds).
pub const WRONG_WAY_DWELL: f64 = 2.0;
/// Most internal lanes a legal junction traversal may use.
pub const JUNCTION_DEPTH: usize = 2;
/// Cell size of the collision broad phase (meters).
const COLLISION_CELL: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Collision,
    OffRoad,
    WrongWay,
    RedLightRun,
    IllegalTurn,
    RouteComplete,
    Timeout,
}

impl EventKind {
    pub const ALL: [EventKind; 7] = [
        EventKind::Collision,
        EventKind::OffRoad,
        EventKind::WrongWay,
        EventKind::RedLightRun,
        EventKind::IllegalTurn,
        EventKind::RouteComplete,
        EventKind::Timeout,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Collision => "collision",
            EventKind::OffRoad => "off_road",
            EventKind::WrongWay => "wrong_way",
            EventKind::RedLightRun => "red_light_run",
            EventKind::IllegalTurn => "illegal_turn",
            EventKind::RouteComplete => "route_complete",
            EventKind::Timeout => "timeout",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Info,
    Warning,
    Violation,
    Fatal,
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Info => "info",
            Severity::Warning => "warning",
            Severity::Violation => "violation",
            Severity::Fatal => "fatal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub kind: EventKind,
    pub severity: Severity,
    #[serde(rename = "t")]
    pub time: f64,
    pub participants: Vec<ParticipantId>,
    pub detail: String,
}

impl EventRecord {
    pub fn new(
        kind: EventKind,
        severity: Severity,
        time: f64,
        mut participants: Vec<ParticipantId>,
        detail: impl Into<String>,
    ) -> Self {
        participants.sort_unstable();
        Self {
            kind,
            severity,
            time,
            participants,
            detail: detail.into(),
        }
    }

    /// Whether the severity is admissible for the kind.
    pub fn severity_consistent(&self) -> bool {
        match self.kind {
            EventKind::Collision => self.severity == Severity::Fatal,
            EventKind::RouteComplete | EventKind::Timeout => self.severity == Severity::Info,
            _ => matches!(self.severity, Severity::Warning | Severity::Violation),
        }
    }

    pub fn involves(&self, id: ParticipantId) -> bool {
        self.participants.contains(&id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct WrongWay {
    lane: Option<Id>,
    accumulated: f64,
    fired: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct JunctionTrack {
    last_regular: Option<Id>,
    inside: bool,
    entry: Option<Id>,
}

/// Per-episode memory of all detectors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectorState {
    pub steps: usize,
    wrong_way: BTreeMap<ParticipantId, WrongWay>,
    sides: BTreeMap<(ParticipantId, Id), i8>,
    junction: BTreeMap<ParticipantId, JunctionTrack>,
    coverage: BTreeMap<ParticipantId, Coverage>,
    collisions: BTreeSet<(ParticipantId, ParticipantId)>,
    previous: BTreeMap<ParticipantId, Point2>,
    completed: BTreeSet<ParticipantId>,
    timed_out: bool,
}

impl DetectorState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }

    pub fn wrong_way_time(&self, id: ParticipantId) -> f64 {
        self.wrong_way.get(&id).map_or(0.0, |w| w.accumulated)
    }

    pub fn junction_entry(&self, id: ParticipantId) -> Option<Id> {
        self.junction.get(&id).and_then(|j| j.entry)
    }
}

/// Snapshot of one step as seen by the detectors.
#[derive(Debug, Clone, Copy)]
pub struct DetectorInput<'a> {
    pub map: &'a TrafficMap,
    /// Time at the end of the step.
    pub time: f64,
    pub dt: f64,
    /// Active participants sorted by id.
    pub participants: &'a [ParticipantView],
    /// Current color per traffic-light group id; groups without an entry are never red.
    pub signals: &'a BTreeMap<Id, SignalColor>,
    pub goals: &'a BTreeMap<ParticipantId, ConvexPolygon>,
    /// Participants reported by the timeout event.
    pub agents: &'a [ParticipantId],
    pub max_steps: Option<usize>,
}

/// Lane subtypes a class may occupy; `None` exempts it from road rules.
fn lane_rule(class: ParticipantClass) -> Option<fn(LaneSubtype) -> bool> {
    match class {
        ParticipantClass::Car | ParticipantClass::Truck => Some(LaneSubtype::is_vehicle_drivable),
        ParticipantClass::Cyclist => Some(|s| s.is_vehicle_drivable() || s == LaneSubtype::Bicycle),
        ParticipantClass::Pedestrian => None,
    }
}

/// Every unordered overlapping pair, pruned by a uniform grid.
pub fn detect_collisions(participants: &[ParticipantView], time: f64) -> Vec<EventRecord> {
    let footprints: Vec<_> = participants
        .iter()
        .map(|p| p.spec.footprint(p.state.pose))
        .collect();
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, f) in footprints.iter().enumerate() {
        let c = f.center();
        let r = f.bounding_radius() + EPS;
        let cell = |v: f64| (v / COLLISION_CELL).floor() as i64;
        for gx in cell(c.x - r)..=cell(c.x + r) {
            for gy in cell(c.y - r)..=cell(c.y + r) {
                grid.entry((gx, gy)).or_default().push(i);
            }
        }
    }
    let mut pairs = BTreeSet::new();
    for members in grid.values() {
        for (k, &i) in members.iter().enumerate() {
            for &j in &members[k + 1..] {
                pairs.insert((i.min(j), i.max(j)));
            }
        }
    }
    collision_events(participants, &footprints, pairs.into_iter(), time)
}

/// All-pairs reference for [`detect_collisions`].
pub fn detect_collisions_brute(participants: &[ParticipantView], time: f64) -> Vec<EventRecord> {
    let footprints: Vec<_> = participants
        .iter()
        .map(|p| p.spec.footprint(p.state.pose))
        .collect();
    let n = footprints.len();
    let pairs = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
    collision_events(participants, &footprints, pairs, time)
}

fn collision_events(
    participants: &[ParticipantView],
    footprints: &[crate::agents::Footprint],
    pairs: impl Iterator<Item = (usize, usize)>,
    time: f64,
) -> Vec<EventRecord> {
    let mut out: Vec<EventRecord> = pairs
        .filter(|&(i, j)| {
            let (a, b) = (&footprints[i], &footprints[j]);
            a.center().distance(b.center()) <= a.bounding_radius() + b.bounding_radius() + EPS
                && a.overlaps(b)
        })
        .map(|(i, j)| {
            let (a, b) = (participants[i].id, participants[j].id);
            EventRecord::new(
                EventKind::Collision,
                Severity::Fatal,
                time,
                vec![a, b],
                format!("{} and {} overlap", a.min(b), a.max(b)),
            )
        })
        .collect();
    out.sort_by(|a, b| a.participants.cmp(&b.participants));
    out
}

pub fn detect_off_road(input: &DetectorInput, state: &mut DetectorState) -> Vec<EventRecord> {
    let mut out = Vec::new();
    for p in input.participants {
        let Some(rule) = lane_rule(p.spec.class) else {
            continue;
        };
        let poly = p.spec.footprint(p.state.pose).polygon();
        let cov = input.map.footprint_coverage_with(&poly, rule);
        let last = state.coverage.insert(p.id, cov).unwrap_or(Coverage::Inside);
        if cov == last {
            continue;
        }
        match cov {
            Coverage::Partial => out.push(EventRecord::new(
                EventKind::OffRoad,
                Severity::Warning,
                input.time,
                vec![p.id],
                "footprint partially outside the drivable area",
            )),
            Coverage::Outside => out.push(EventRecord::new(
                EventKind::OffRoad,
                Severity::Violation,
                input.time,
                vec![p.id],
                "footprint outside the drivable area",
            )),
            Coverage::Inside => {}
        }
    }
    out
}

pub fn detect_wrong_way(input: &DetectorInput, state: &mut DetectorState) -> Vec<EventRecord> {
    let mut out = Vec::new();
    for p in input.participants {
        let Some(rule) = lane_rule(p.spec.class) else {
            continue;
        };
        let c = p.center();
        let found = input
            .map
            .best_aligned_lane(c.position, c.heading, |l| l.one_way && rule(l.subtype));
        let w = state.wrong_way.entry(p.id).or_default();
        match found {
            Some((lane, dev)) if dev > WRONG_WAY_ANGLE => {
                if w.lane == Some(lane) {
                    w.accumulated += input.dt;
                } else {
                    *w = WrongWay {
                        lane: Some(lane),
                        accumulated: input.dt,
                        fired: false,
                    };
                }
                if !w.fired && w.accumulated + 1e-9 >= WRONG_WAY_DWELL {
                    w.fired = true;
                    out.push(EventRecord::new(
                        EventKind::WrongWay,
                        Severity::Violation,
                        input.time,
                        vec![p.id],
                        format!("against one-way lane {lane} for {:.1} s", w.accumulated),
                    ));
                }
            }
            Some((lane, _)) => {
                *w = WrongWay {
                    lane: Some(lane),
                    ..WrongWay::default()
                }
            }
            None => *w = WrongWay::default(),
        }
    }
    out
}

fn strict_side(line: &Polyline, p: Point2) -> i8 {
    let d = line.project(p).d;
    if d > EPS {
        1
    } else if d < -EPS {
        -1
    } else {
        0
    }
}

fn crosses(line: &Polyline, a: Point2, b: Point2) -> bool {
    line.points()
        .windows(2)
        .any(|w| segment_intersection(a, b, w[0], w[1]).is_some())
}

/// Side of the stop line that traffic on the governed lanes approaches from.
fn approach_side(map: &TrafficMap, lanes: &[Id], line: &Polyline) -> Option<i8> {
    let mid = line.point_at(line.length() / 2.0);
    lanes.iter().find_map(|id| {
        let lane = map.lanes.get(id)?;
        let s = lane.centerline.project(mid).s;
        let dir = lane_direction_at(lane, s).ok()?;
        let side = strict_side(line, mid - Point2::from_angle(dir));
        (side != 0).then_some(side)
    })
}

pub fn detect_red_light(input: &DetectorInput, state: &mut DetectorState) -> Vec<EventRecord> {
    let mut out = Vec::new();
    let lights: Vec<_> = input
        .map
        .stop_lines()
        .filter(|(r, _)| r.kind == RegulatoryKind::TrafficLightGroup)
        .map(|(r, ls)| {
            (
                r.id,
                &ls.geometry,
                approach_side(input.map, &r.governed_lanes, &ls.geometry),
            )
        })
        .collect();
    if lights.is_empty() {
        return out;
    }
    for p in input.participants {
        if lane_rule(p.spec.class).is_none() {
            continue;
        }
        let cur = p.state.pose.position;
        let prev = state.previous.get(&p.id).copied();
        for &(reg, line, approach) in &lights {
            let side = strict_side(line, cur);
            let key = (p.id, reg);
            let last = state.sides.get(&key).copied();
            if side != 0 {
                state.sides.insert(key, side);
            }
            let (Some(prev), Some(last)) = (prev, last) else {
                continue;
            };
            if side == 0 || side == last || approach.is_some_and(|a| a != last) {
                continue;
            }
            if !crosses(line, prev, cur) {
                continue;
            }
            if input.signals.get(&reg) == Some(&SignalColor::Red) {
                out.push(EventRecord::new(
                    EventKind::RedLightRun,
                    Severity::Violation,
                    input.time,
                    vec![p.id],
                    format!("crossed stop line of signal group {reg} on red"),
                ));
            }
        }
    }
    out
}

pub fn detect_illegal_turn(input: &DetectorInput, state: &mut DetectorState) -> Vec<EventRecord> {
    let mut out = Vec::new();
    for p in input.participants {
        let Some(rule) = lane_rule(p.spec.class) else {
            continue;
        };
        let c = p.center();
        let Some((lane, _)) = input
            .map
            .best_aligned_lane(c.position, c.heading, |l| rule(l.subtype))
        else {
            continue;
        };
        let in_junction = input.map.lanes[&lane].junction.is_some();
        let j = state.junction.entry(p.id).or_default();
        if in_junction {
            if !j.inside {
                j.inside = true;
                j.entry = j.last_regular;
            }
            continue;
        }
        if j.inside {
            if let Some(entry) = j.entry {
                let route = input.map.route(entry, lane).ok().flatten();
                let legal = route.is_some_and(|r| r.len().saturating_sub(2) <= JUNCTION_DEPTH);
                if !legal {
                    out.push(EventRecord::new(
                        EventKind::IllegalTurn,
                        Severity::Violation,
                        input.time,
                        vec![p.id],
                        format!(
                            "junction exit lane {lane} is not reachable from entry lane {entry}"
                        ),
                    ));
                }
            }
            j.inside = false;
            j.entry = None;
        }
        j.last_regular = Some(lane);
    }
    out
}

fn detect_completion(input: &DetectorInput, state: &mut DetectorState) -> Vec<EventRecord> {
    let mut out = Vec::new();
    for p in input.participants {
        let Some(goal) = input.goals.get(&p.id) else {
            continue;
        };
        if !state.completed.contains(&p.id) && goal.contains(p.center().position) {
            state.completed.insert(p.id);
            out.push(EventRecord::new(
                EventKind::RouteComplete,
                Severity::Info,
                input.time,
                vec![p.id],
                "goal region reached",
            ));
        }
    }
    out
}

/// Runs one step of all detectors in fixed order: collision, off-road,
/// wrong-way, red light, illegal turn, completion, timeout.
pub fn step_detector(input: &DetectorInput, state: &mut DetectorState) -> Vec<EventRecord> {
    state.steps += 1;
    let mut out = Vec::new();
    let overlapping = detect_collisions(input.participants, input.time);
    let current: BTreeSet<(ParticipantId, ParticipantId)> = overlapping
        .iter()
        .map(|e| (e.participants[0], e.participants[1]))
        .collect();
    out.extend(overlapping.into_iter().filter(|e| {
        !state
            .collisions
            .contains(&(e.participants[0], e.participants[1]))
    }));
    state.collisions = current;
    out.extend(detect_off_road(input, state));
    out.extend(detect_wrong_way(input, state));
    out.extend(detect_red_light(input, state));
    out.extend(detect_illegal_turn(input, state));
    out.extend(detect_completion(input, state));
    if let Some(max) = input.max_steps {
        if !state.timed_out && state.steps >= max {
            state.timed_out = true;
            out.push(EventRecord::new(
                EventKind::Timeout,
                Severity::Info,
                input.time,
                input.agents.to_vec(),
                format!("step limit {max} reached"),
            ));
        }
    }
    state.previous = input
        .participants
        .iter()
        .map(|p| (p.id, p.state.pose.position))
        .collect();
    out
}

/// Seeds positional memory without counting a step (used at reset).
pub fn prime_detector(input: &DetectorInput, state: &mut DetectorState) {
    for p in input.participants {
        state.previous.insert(p.id, p.state.pose.position);
    }
    for (reg, ls) in input.map.stop_lines().map(|(r, ls)| (r.id, &ls.geometry)) {
        for p in input.participants {
            let side = strict_side(ls, p.state.pose.position);
            if side != 0 {
                state.sides.insert((p.id, reg), side);
            }
        }
    }
    state.collisions = detect_collisions(input.participants, input.time)
        .iter()
        .map(|e| (e.participants[0], e.participants[1]))
        .collect();
}
