//! Recorded trajectories: CSV ingestion through schema adapters, alignment to
//! the map frame, time interpolation and synthetic fixtures.

mod schema;
mod synth;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{ParticipantClass, ParticipantId};
use crate::geometry::{angle_diff, normalize_angle, Point2, Pose2};

pub use schema::{
    GenericSchema, InteractionSchema, LevelxSchema, RawSample, Row, SchemaRegistry, TrackSchema,
};
pub use synth::{synth_fixture, SYNTH_DT, SYNTH_LENGTH, SYNTH_WIDTH};

/// Footprint diameter assumed for pedestrians whose rows carry no size.
pub const DEFAULT_PEDESTRIAN_DIAMETER: f64 = 0.6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrafficError {
    #[error("unknown schema adapter '{0}'")]
    UnknownSchema(String),
    #[error("missing required column '{0}'")]
    MissingColumn(String),
    #[error("track {track}: {reason}")]
    Data { track: String, reason: String },
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error("csv: {0}")]
    Csv(String),
    #[error("configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub time: f64,
    /// Footprint center and heading.
    pub pose: Pose2,
    pub speed: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accel: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: ParticipantId,
    pub class: ParticipantClass,
    pub length: f64,
    pub width: f64,
    points: Vec<TrackPoint>,
}

impl Track {
    pub fn new(
        id: ParticipantId,
        class: ParticipantClass,
        length: f64,
        width: f64,
        points: Vec<TrackPoint>,
    ) -> Result<Self, TrafficError> {
        let err = |reason: String| TrafficError::Data {
            track: id.to_string(),
            reason,
        };
        if points.is_empty() {
            return Err(err("no points".into()));
        }
        if !(length.is_finite() && width.is_finite() && length > 0.0 && width > 0.0) {
            return Err(err(format!("invalid dimensions {length} x {width}")));
        }
        if class == ParticipantClass::Pedestrian && length != width {
            return Err(err("pedestrian length and width must be equal".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if !p.time.is_finite() || !p.pose.position.is_finite() || !p.pose.heading.is_finite() {
                return Err(err(format!("non-finite value at point {i}")));
            }
            if !(p.speed >= 0.0 && p.speed.is_finite()) {
                return Err(err(format!("invalid speed {} at t={}", p.speed, p.time)));
            }
            if i > 0 && p.time <= points[i - 1].time {
                return Err(err(format!(
                    "non-monotone time: {} follows {}",
                    p.time,
                    points[i - 1].time
                )));
            }
        }
        Ok(Self {
            id,
            class,
            length,
            width,
            points,
        })
    }

    pub fn points(&self) -> &[TrackPoint] {
        &self.points
    }

    pub fn start_time(&self) -> f64 {
        self.points[0].time
    }

    pub fn end_time(&self) -> f64 {
        self.points[self.points.len() - 1].time
    }
}

/// Interpolated state at `t`; `None` outside the recorded span.
pub fn state_at(track: &Track, t: f64) -> Option<TrackPoint> {
    let pts = &track.points;
    if !(t >= track.start_time() && t <= track.end_time()) {
        return None;
    }
    let i = pts.partition_point(|p| p.time < t);
    if pts[i].time == t {
        return Some(pts[i]);
    }
    let (a, b) = (&pts[i - 1], &pts[i]);
    let u = (t - a.time) / (b.time - a.time);
    let lerp = |x: f64, y: f64| x + (y - x) * u;
    let heading = normalize_angle(a.pose.heading + angle_diff(b.pose.heading, a.pose.heading) * u);
    Some(TrackPoint {
        time: t,
        pose: Pose2::from_parts(a.pose.position.lerp(b.pose.position, u), heading),
        speed: lerp(a.speed, b.speed),
        accel: a.accel.zip(b.accel).map(|(x, y)| lerp(x, y)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDataset {
    pub tracks: BTreeMap<ParticipantId, Track>,
    pub frame_interval: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub schema: String,
}

impl TrajectoryDataset {
    pub fn new(tracks: Vec<Track>, frame_interval: f64, schema: impl Into<String>) -> Self {
        let mut out = Self {
            tracks: tracks.into_iter().map(|t| (t.id, t)).collect(),
            frame_interval,
            t_min: 0.0,
            t_max: 0.0,
            schema: schema.into(),
        };
        out.refresh_span();
        out
    }

    pub fn empty(frame_interval: f64, schema: impl Into<String>) -> Self {
        Self::new(Vec::new(), frame_interval, schema)
    }

    fn refresh_span(&mut self) {
        let mut it = self.tracks.values();
        if let Some(first) = it.next() {
            let (lo, hi) = it.fold((first.start_time(), first.end_time()), |(lo, hi), t| {
                (lo.min(t.start_time()), hi.max(t.end_time()))
            });
            self.t_min = lo;
            self.t_max = hi;
        } else {
            self.t_min = 0.0;
            self.t_max = 0.0;
        }
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("dataset serializes")
    }
}

/// Rigid transform and time shift from a dataset frame into the map frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AlignmentSpec {
    #[serde(default)]
    pub dx: f64,
    #[serde(default)]
    pub dy: f64,
    #[serde(default)]
    pub dtheta: f64,
    #[serde(default)]
    pub time_offset: f64,
}

impl AlignmentSpec {
    pub const IDENTITY: Self = Self {
        dx: 0.0,
        dy: 0.0,
        dtheta: 0.0,
        time_offset: 0.0,
    };

    pub fn new(dx: f64, dy: f64, dtheta: f64, time_offset: f64) -> Result<Self, TrafficError> {
        let s = Self {
            dx,
            dy,
            dtheta,
            time_offset,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), TrafficError> {
        if [self.dx, self.dy, self.dtheta, self.time_offset]
            .iter()
            .all(|v| v.is_finite())
        {
            Ok(())
        } else {
            Err(TrafficError::Config(
                "alignment values must be finite".into(),
            ))
        }
    }

    pub fn inverse(&self) -> Self {
        let t = Point2::new(self.dx, self.dy).rotate(-self.dtheta);
        Self {
            dx: -t.x,
            dy: -t.y,
            dtheta: -self.dtheta,
            time_offset: -self.time_offset,
        }
    }

    pub fn apply(&self, pose: Pose2) -> Pose2 {
        Pose2::from_parts(
            pose.position.rotate(self.dtheta) + Point2::new(self.dx, self.dy),
            normalize_angle(pose.heading + self.dtheta),
        )
    }
}

impl std::str::FromStr for AlignmentSpec {
    type Err = TrafficError;
    /// Parses `dx,dy,dtheta,dt`.
    fn from_str(s: &str) -> Result<Self, TrafficError> {
        let vals = s
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| TrafficError::Config(format!("alignment '{s}': {e}")))?;
        match vals[..] {
            [dx, dy, dtheta, dt] => Self::new(dx, dy, dtheta, dt),
            _ => Err(TrafficError::Config(format!(
                "alignment '{s}': expected dx,dy,dtheta,dt"
            ))),
        }
    }
}

pub fn align(dataset: &TrajectoryDataset, spec: &AlignmentSpec) -> TrajectoryDataset {
    let mut out = dataset.clone();
    for track in out.tracks.values_mut() {
        for p in &mut track.points {
            p.pose = spec.apply(p.pose);
            p.time += spec.time_offset;
        }
    }
    out.refresh_span();
    out
}

/// Parses CSV text with one of the built-in adapters.
pub fn parse_tracks(schema: &str, csv: &str) -> Result<TrajectoryDataset, TrafficError> {
    SchemaRegistry::with_builtins().parse(schema, csv)
}

/// Serializes a dataset in the `generic` column layout.
pub fn write_generic_csv(dataset: &TrajectoryDataset) -> String {
    let mut out = String::from("track_id,t,x,y,heading,speed,class,length,width\n");
    for track in dataset.tracks.values() {
        for p in track.points() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                track.id,
                p.time,
                p.pose.position.x,
                p.pose.position.y,
                p.pose.heading,
                p.speed,
                track.class,
                track.length,
                track.width
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn pt(t: f64, x: f64, h: f64) -> TrackPoint {
        TrackPoint {
            time: t,
            pose: Pose2::new(x, 0.0, h),
            speed: 1.0,
            accel: None,
        }
    }

    fn track(points: Vec<TrackPoint>) -> Track {
        Track::new(ParticipantId(1), ParticipantClass::Car, 4.0, 2.0, points).unwrap()
    }

    #[test]
    fn interpolation() {
        let tr = track(vec![pt(0.0, 0.0, 0.0), pt(1.0, 2.0, 0.0)]);
        assert_eq!(state_at(&tr, 0.0).unwrap(), tr.points()[0]);
        assert!((state_at(&tr, 0.5).unwrap().pose.position.x - 1.0).abs() < 1e-12);
        assert!(state_at(&tr, -0.1).is_none());
        assert!(state_at(&tr, 1.1).is_none());
    }

    #[test]
    fn heading_interpolates_through_pi() {
        let tr = track(vec![pt(0.0, 0.0, -3.0), pt(1.0, 0.0, 3.0)]);
        let h = state_at(&tr, 0.5).unwrap().pose.heading;
        assert!((h.abs() - PI).abs() < 1e-9, "{h}");
    }

    #[test]
    fn non_monotone_rejected() {
        let e = Track::new(
            ParticipantId(9),
            ParticipantClass::Car,
            4.0,
            2.0,
            vec![pt(1.0, 0.0, 0.0), pt(1.0, 1.0, 0.0)],
        )
        .unwrap_err();
        assert!(e.to_string().contains("track 9"));
    }

    #[test]
    fn alignment_examples() {
        let d = TrajectoryDataset::new(vec![track(vec![pt(0.0, 1.0, 0.0)])], 0.1, "generic");
        assert_eq!(align(&d, &AlignmentSpec::IDENTITY), d);
        let r = align(&d, &AlignmentSpec::new(0.0, 0.0, PI / 2.0, 0.0).unwrap());
        let p = r.tracks[&ParticipantId(1)].points()[0].pose;
        assert!(p.position.x.abs() < 1e-12 && (p.position.y - 1.0).abs() < 1e-12);
        assert!((p.heading - PI / 2.0).abs() < 1e-12);
        let mut two = track(vec![pt(0.0, 1.0, 0.0)]);
        two.points[0].pose.position.y = 2.0;
        let d2 = TrajectoryDataset::new(vec![two], 0.1, "generic");
        let t = align(&d2, &AlignmentSpec::new(10.0, -5.0, 0.0, 0.0).unwrap());
        let q = t.tracks[&ParticipantId(1)].points()[0].pose.position;
        assert_eq!(q, Point2::new(11.0, -3.0));
    }

    #[test]
    fn alignment_parse() {
        let a: AlignmentSpec = "1,2,0.5,3".parse().unwrap();
        assert_eq!(a, AlignmentSpec::new(1.0, 2.0, 0.5, 3.0).unwrap());
        assert!("1,2".parse::<AlignmentSpec>().is_err());
    }
}
