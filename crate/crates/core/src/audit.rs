//! Event audit of recorded traffic replayed at its native frame interval.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::agents::{signal_state_at, ParticipantId, ParticipantView, SignalProgram};
use crate::events::{prime_detector, step_detector, DetectorInput, DetectorState, EventRecord};
use crate::map::{Id, TrafficMap};
use crate::traffic::{state_at, TrajectoryDataset};

/// Counts keyed by event kind, then severity.
pub type EventCounts = BTreeMap<String, BTreeMap<String, usize>>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub frames: usize,
    pub frame_interval: f64,
    /// Every track appears, with empty counts when it raised nothing.
    pub tracks: BTreeMap<ParticipantId, EventCounts>,
    /// Sum of the per-track counts; multi-participant events count once per participant.
    pub totals: EventCounts,
    pub events: Vec<EventRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
}

impl AuditReport {
    pub fn total(&self, kind: &str) -> usize {
        self.totals.get(kind).map_or(0, |m| m.values().sum())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn bump(counts: &mut EventCounts, e: &EventRecord) {
    *counts
        .entry(e.kind.as_str().to_string())
        .or_default()
        .entry(e.severity.as_str().to_string())
        .or_default() += 1;
}

/// Frame times `t_min + k·interval` covering the dataset span.
pub fn frame_times(dataset: &TrajectoryDataset) -> Vec<f64> {
    if dataset.is_empty() {
        return Vec::new();
    }
    let n = ((dataset.t_max - dataset.t_min) / dataset.frame_interval + 1e-6).floor() as usize;
    (0..=n)
        .map(|k| dataset.t_min + k as f64 * dataset.frame_interval)
        .collect()
}

/// Participants present at `t`, with reference poses derived from the
/// recorded centers.
pub fn replay_frame(dataset: &TrajectoryDataset, t: f64) -> Vec<ParticipantView> {
    dataset
        .tracks
        .values()
        .filter_map(|track| {
            let p = state_at(track, t)?;
            let spec = track.class.spec_for_size(track.length, track.width);
            Some(ParticipantView {
                id: track.id,
                spec,
                state: crate::agents::ParticipantState {
                    time: t,
                    pose: spec.reference_from_center(p.pose),
                    speed: p.speed,
                    accel: p.accel.unwrap_or(0.0),
                    steer: 0.0,
                },
            })
        })
        .collect()
}

/// Runs the event detector over every frame. `signals` holds programs keyed
/// by traffic-light group id; lights without a program are never red.
pub fn audit_replay(
    map: &TrafficMap,
    dataset: &TrajectoryDataset,
    signals: &BTreeMap<Id, SignalProgram>,
) -> AuditReport {
    let mut tracks: BTreeMap<ParticipantId, EventCounts> = dataset
        .tracks
        .keys()
        .map(|id| (*id, EventCounts::new()))
        .collect();
    let mut totals = EventCounts::new();
    let mut events = Vec::new();
    let mut state = DetectorState::new();
    let goals = BTreeMap::new();
    let times = frame_times(dataset);
    for (k, &t) in times.iter().enumerate() {
        let frame = replay_frame(dataset, t);
        let colors = signals
            .iter()
            .map(|(id, p)| (*id, signal_state_at(p, t)))
            .collect();
        let input = DetectorInput {
            map,
            time: t,
            dt: dataset.frame_interval,
            participants: &frame,
            signals: &colors,
            goals: &goals,
            agents: &[],
            max_steps: None,
        };
        if k == 0 {
            prime_detector(&input, &mut state);
            continue;
        }
        for e in step_detector(&input, &mut state) {
            for id in &e.participants {
                if let Some(c) = tracks.get_mut(id) {
                    bump(c, &e);
                    bump(&mut totals, &e);
                }
            }
            events.push(e);
        }
    }
    AuditReport {
        frames: times.len(),
        frame_interval: dataset.frame_interval,
        tracks,
        totals,
        events,
        duration_s: None,
    }
}
