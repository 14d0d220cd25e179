//! CSV schema adapters, selectable by name.

use std::collections::{BTreeMap, HashMap};

use crate::agents::{ParticipantClass, ParticipantId};
use crate::geometry::{Point2, Pose2};

use super::{Track, TrackPoint, TrafficError, TrajectoryDataset, DEFAULT_PEDESTRIAN_DIAMETER};

/// Minimum displacement (meters) used to derive a heading from positions.
const HEADING_MIN_DISPLACEMENT: f64 = 1e-6;

/// One CSV record with header-name lookup.
pub struct Row<'a> {
    index: &'a HashMap<String, usize>,
    record: &'a csv::StringRecord,
    /// 1-based data row number (header excluded).
    pub number: usize,
}

impl<'a> Row<'a> {
    pub fn get(&self, column: &str) -> Option<&'a str> {
        let i = *self.index.get(column)?;
        self.record.get(i).map(str::trim).filter(|v| !v.is_empty())
    }

    fn error(&self, reason: String) -> TrafficError {
        TrafficError::Row {
            row: self.number,
            reason,
        }
    }

    pub fn text(&self, column: &str) -> Result<&'a str, TrafficError> {
        self.get(column)
            .ok_or_else(|| self.error(format!("empty value in column '{column}'")))
    }

    pub fn opt_f64(&self, column: &str) -> Result<Option<f64>, TrafficError> {
        match self.get(column) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Some)
                .ok_or_else(|| self.error(format!("invalid number '{raw}' in column '{column}'"))),
        }
    }

    pub fn f64(&self, column: &str) -> Result<f64, TrafficError> {
        self.opt_f64(column)?
            .ok_or_else(|| self.error(format!("empty value in column '{column}'")))
    }

    pub fn id(&self, column: &str) -> Result<ParticipantId, TrafficError> {
        let raw = self.text(column)?;
        raw.parse::<i64>()
            .map(ParticipantId)
            .map_err(|_| self.error(format!("invalid track id '{raw}'")))
    }

    pub fn class(&self, column: &str) -> Result<ParticipantClass, TrafficError> {
        let raw = self.text(column)?;
        ParticipantClass::from_label(raw)
            .ok_or_else(|| self.error(format!("unknown participant class '{raw}'")))
    }
}

/// A single observation before grouping into tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSample {
    pub track: ParticipantId,
    pub time: f64,
    pub position: Point2,
    pub heading: Option<f64>,
    pub speed: Option<f64>,
    pub accel: Option<f64>,
    pub class: ParticipantClass,
    pub length: Option<f64>,
    pub width: Option<f64>,
}

pub trait TrackSchema: Send + Sync {
    fn id(&self) -> &str;
    fn required_columns(&self) -> &[&'static str];
    /// Frame interval reported when the data cannot determine one.
    fn nominal_interval(&self) -> f64;
    fn parse_row(&self, row: &Row) -> Result<RawSample, TrafficError>;
}

/// `track_id, frame_id, timestamp_ms, agent_type, x, y, vx, vy, psi_rad, length, width`.
#[derive(Debug, Default)]
pub struct InteractionSchema;

impl TrackSchema for InteractionSchema {
    fn id(&self) -> &str {
        "interaction_like"
    }

    fn required_columns(&self) -> &[&'static str] {
        &[
            "track_id",
            "frame_id",
            "timestamp_ms",
            "agent_type",
            "x",
            "y",
            "vx",
            "vy",
            "psi_rad",
            "length",
            "width",
        ]
    }

    fn nominal_interval(&self) -> f64 {
        0.1
    }

    fn parse_row(&self, row: &Row) -> Result<RawSample, TrafficError> {
        let vx = row.f64("vx")?;
        let vy = row.f64("vy")?;
        Ok(RawSample {
            track: row.id("track_id")?,
            time: row.f64("timestamp_ms")? / 1000.0,
            position: Point2::new(row.f64("x")?, row.f64("y")?),
            heading: row.opt_f64("psi_rad")?,
            speed: Some(vx.hypot(vy)),
            accel: None,
            class: row.class("agent_type")?,
            length: row.opt_f64("length")?,
            width: row.opt_f64("width")?,
        })
    }
}

/// Frame-indexed center coordinates: `trackId, frame, xCenter, yCenter,
/// length, width`, optional `heading` (degrees), `xVelocity`, `yVelocity`,
/// `lonAcceleration`, `class`.
#[derive(Debug)]
pub struct LevelxSchema {
    pub frame_rate: f64,
}

impl Default for LevelxSchema {
    fn default() -> Self {
        Self { frame_rate: 25.0 }
    }
}

impl TrackSchema for LevelxSchema {
    fn id(&self) -> &str {
        "levelx_like"
    }

    fn required_columns(&self) -> &[&'static str] {
        &["trackId", "frame", "xCenter", "yCenter", "length", "width"]
    }

    fn nominal_interval(&self) -> f64 {
        1.0 / self.frame_rate
    }

    fn parse_row(&self, row: &Row) -> Result<RawSample, TrafficError> {
        let speed = match (row.opt_f64("xVelocity")?, row.opt_f64("yVelocity")?) {
            (Some(vx), Some(vy)) => Some(vx.hypot(vy)),
            _ => None,
        };
        let class = match row.get("class") {
            Some(_) => row.class("class")?,
            None => ParticipantClass::Car,
        };
        Ok(RawSample {
            track: row.id("trackId")?,
            time: row.f64("frame")? / self.frame_rate,
            position: Point2::new(row.f64("xCenter")?, row.f64("yCenter")?),
            heading: row.opt_f64("heading")?.map(f64::to_radians),
            speed,
            accel: row.opt_f64("lonAcceleration")?,
            class,
            length: row.opt_f64("length")?,
            width: row.opt_f64("width")?,
        })
    }
}

/// `track_id, t, x, y, heading, speed, class, length, width`, optional `accel`.
#[derive(Debug, Default)]
pub struct GenericSchema;

impl TrackSchema for GenericSchema {
    fn id(&self) -> &str {
        "generic"
    }

    fn required_columns(&self) -> &[&'static str] {
        &[
            "track_id", "t", "x", "y", "heading", "speed", "class", "length", "width",
        ]
    }

    fn nominal_interval(&self) -> f64 {
        0.1
    }

    fn parse_row(&self, row: &Row) -> Result<RawSample, TrafficError> {
        Ok(RawSample {
            track: row.id("track_id")?,
            time: row.f64("t")?,
            position: Point2::new(row.f64("x")?, row.f64("y")?),
            heading: Some(row.f64("heading")?),
            speed: Some(row.f64("speed")?),
            accel: row.opt_f64("accel")?,
            class: row.class("class")?,
            length: Some(row.f64("length")?),
            width: Some(row.f64("width")?),
        })
    }
}

/// Adapters keyed by id.
pub struct SchemaRegistry {
    adapters: BTreeMap<String, Box<dyn TrackSchema>>,
}

impl SchemaRegistry {
    pub fn empty() -> Self {
        Self {
            adapters: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(InteractionSchema));
        r.register(Box::new(LevelxSchema::default()));
        r.register(Box::new(GenericSchema));
        r
    }

    /// Adds an adapter, replacing any with the same id.
    pub fn register(&mut self, adapter: Box<dyn TrackSchema>) {
        self.adapters.insert(adapter.id().to_string(), adapter);
    }

    pub fn get(&self, id: &str) -> Option<&dyn TrackSchema> {
        self.adapters.get(id).map(|b| b.as_ref())
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.adapters.keys().map(String::as_str)
    }

    pub fn parse(&self, id: &str, csv: &str) -> Result<TrajectoryDataset, TrafficError> {
        let adapter = self
            .get(id)
            .ok_or_else(|| TrafficError::UnknownSchema(id.to_string()))?;
        parse_with(adapter, csv)
    }
}

impl Default for SchemaRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

fn parse_with(adapter: &dyn TrackSchema, text: &str) -> Result<TrajectoryDataset, TrafficError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| TrafficError::Csv(e.to_string()))?
        .clone();
    let index: HashMap<String, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim_start_matches('\u{feff}').to_string(), i))
        .collect();
    if let Some(missing) = adapter
        .required_columns()
        .iter()
        .find(|c| !index.contains_key(**c))
    {
        return Err(TrafficError::MissingColumn(missing.to_string()));
    }
    let mut groups: BTreeMap<ParticipantId, Vec<RawSample>> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let record = rec.map_err(|e| TrafficError::Csv(e.to_string()))?;
        let row = Row {
            index: &index,
            record: &record,
            number: i + 1,
        };
        let sample = adapter.parse_row(&row)?;
        groups.entry(sample.track).or_default().push(sample);
    }
    let mut tracks = Vec::with_capacity(groups.len());
    let mut min_dt = f64::INFINITY;
    for (id, mut samples) in groups {
        samples.sort_by(|a, b| a.time.total_cmp(&b.time));
        if let Some(w) = samples.windows(2).find(|w| w[1].time <= w[0].time) {
            return Err(TrafficError::Data {
                track: id.to_string(),
                reason: format!("non-monotone time: duplicate timestamp {}", w[0].time),
            });
        }
        for w in samples.windows(2) {
            min_dt = min_dt.min(w[1].time - w[0].time);
        }
        tracks.push(build_track(id, &samples)?);
    }
    let interval = if min_dt.is_finite() {
        min_dt
    } else {
        adapter.nominal_interval()
    };
    Ok(TrajectoryDataset::new(tracks, interval, adapter.id()))
}

fn build_track(id: ParticipantId, samples: &[RawSample]) -> Result<Track, TrafficError> {
    let first = &samples[0];
    let class = first.class;
    let (length, width) = if class == ParticipantClass::Pedestrian {
        let d = first
            .length
            .into_iter()
            .chain(first.width)
            .fold(None, |acc: Option<f64>, v| {
                Some(acc.map_or(v, |a| a.max(v)))
            })
            .unwrap_or(DEFAULT_PEDESTRIAN_DIAMETER);
        (d, d)
    } else {
        let defaults = class.default_spec();
        (
            first.length.unwrap_or(defaults.length),
            first.width.unwrap_or(defaults.width),
        )
    };
    let n = samples.len();
    // central differences over neighbouring frames, one-sided at the ends
    let neighbours = |i: usize| (i.saturating_sub(1), (i + 1).min(n - 1));
    let mut points = Vec::with_capacity(n);
    let mut last_heading: Option<f64> = None;
    let derived: Vec<Option<f64>> = (0..n)
        .map(|i| {
            let (a, b) = neighbours(i);
            let d = samples[b].position - samples[a].position;
            (d.norm() > HEADING_MIN_DISPLACEMENT).then(|| d.angle())
        })
        .collect();
    for (i, s) in samples.iter().enumerate() {
        let heading = s
            .heading
            .or(derived[i])
            .or(last_heading)
            .or_else(|| derived.iter().flatten().next().copied())
            .unwrap_or(0.0);
        last_heading = Some(heading);
        let speed = s.speed.unwrap_or_else(|| {
            let (a, b) = neighbours(i);
            if a == b {
                0.0
            } else {
                samples[b].position.distance(samples[a].position)
                    / (samples[b].time - samples[a].time)
            }
        });
        points.push(TrackPoint {
            time: s.time,
            pose: Pose2::from_parts(s.position, crate::geometry::normalize_angle(heading)),
            speed,
            accel: s.accel,
        });
    }
    Track::new(id, class, length, width, points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generic_two_rows() {
        let csv = "track_id,t,x,y,heading,speed,class,length,width\n1,0.0,0,0,0,1,car,4,2\n1,0.1,0.1,0,0,1,car,4,2\n";
        let d = super::super::parse_tracks("generic", csv).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.tracks[&ParticipantId(1)].points().len(), 2);
        assert!((d.frame_interval - 0.1).abs() < 1e-12);
    }

    #[test]
    fn generic_missing_heading() {
        let csv = "track_id,t,x,y,speed,class,length,width\n1,0,0,0,1,car,4,2\n";
        let e = super::super::parse_tracks("generic", csv).unwrap_err();
        assert_eq!(e, TrafficError::MissingColumn("heading".into()));
        assert!(e.to_string().contains("heading"));
    }

    #[test]
    fn interaction_speed_from_velocity() {
        let csv = "track_id,frame_id,timestamp_ms,agent_type,x,y,vx,vy,psi_rad,length,width\n3,1,100,car,1,2,3,4,0.5,4.5,1.8\n";
        let d = super::super::parse_tracks("interaction_like", csv).unwrap();
        let p = d.tracks[&ParticipantId(3)].points()[0];
        assert_eq!(p.speed, 5.0);
        assert!((p.time - 0.1).abs() < 1e-12);
    }

    #[test]
    fn interaction_pedestrian_defaults() {
        let csv = "track_id,frame_id,timestamp_ms,agent_type,x,y,vx,vy,psi_rad,length,width\n\
                   7,1,0,pedestrian/bicycle,0,0,1,0,,,\n7,2,100,pedestrian/bicycle,0.1,0,1,0,,,\n";
        let d = super::super::parse_tracks("interaction_like", csv).unwrap();
        let t = &d.tracks[&ParticipantId(7)];
        assert_eq!(t.class, ParticipantClass::Pedestrian);
        assert_eq!(t.length, DEFAULT_PEDESTRIAN_DIAMETER);
        assert!(t.points()[0].pose.heading.abs() < 1e-12);
    }

    #[test]
    fn levelx_degrees_and_frames() {
        let csv = "trackId,frame,xCenter,yCenter,heading,length,width,xVelocity,yVelocity\n\
                   2,0,0,0,90,4,2,0,5\n2,1,0,0.2,90,4,2,0,5\n";
        let d = super::super::parse_tracks("levelx_like", csv).unwrap();
        let t = &d.tracks[&ParticipantId(2)];
        assert!((t.points()[0].pose.heading - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!((t.points()[1].time - 0.04).abs() < 1e-12);
        assert_eq!(t.points()[0].speed, 5.0);
    }

    #[test]
    fn levelx_heading_derived_when_absent() {
        let csv = "trackId,frame,xCenter,yCenter,length,width\n\
                   2,0,0,0,4,2\n2,1,0,1,4,2\n2,2,0,2,4,2\n";
        let d = super::super::parse_tracks("levelx_like", csv).unwrap();
        let t = &d.tracks[&ParticipantId(2)];
        for p in t.points() {
            assert!((p.pose.heading - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
            assert!((p.speed - 25.0).abs() < 1e-9);
        }
    }

    #[test]
    fn unknown_schema() {
        assert!(matches!(
            super::super::parse_tracks("nope", ""),
            Err(TrafficError::UnknownSchema(_))
        ));
    }

    #[test]
    fn duplicate_timestamps_name_track() {
        let csv = "track_id,t,x,y,heading,speed,class,length,width\n5,0,0,0,0,1,car,4,2\n5,0,1,0,0,1,car,4,2\n";
        let e = super::super::parse_tracks("generic", csv).unwrap_err();
        assert!(e.to_string().contains("track 5"), "{e}");
    }
}
