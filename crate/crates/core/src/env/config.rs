//! Scenario configuration documents.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::{
    BehaviorConfig, ParticipantClass, ParticipantId, ParticipantSpec, SignalProgram,
};
use crate::geometry::{ConvexPolygon, Point2, Polyline, Pose2};
use crate::map::Id;
use crate::parsers::MapFormat;
use crate::sensors::{BevSpec, LidarSpec, VectorSpec};
use crate::traffic::AlignmentSpec;

use super::EnvError;

pub const DEFAULT_DT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Racing,
    Parking,
    Highway,
    Urban,
    Roundabout,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::Racing,
        ScenarioKind::Parking,
        ScenarioKind::Highway,
        ScenarioKind::Urban,
        ScenarioKind::Roundabout,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Racing => "racing",
            ScenarioKind::Parking => "parking",
            ScenarioKind::Highway => "highway",
            ScenarioKind::Urban => "urban",
            ScenarioKind::Roundabout => "roundabout",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown scenario kind '{s}'"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSource {
    pub path: PathBuf,
    /// Inferred from the file extension when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<MapFormat>,
    /// Projection origin `[lat, lon]` for OSM maps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<[f64; 2]>,
    /// Plan-view sampling step for OpenDrive maps (meters).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficSource {
    Dataset {
        path: PathBuf,
        schema: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        align: Option<AlignmentSpec>,
        /// Shift recorded times so the dataset starts at episode time 0.
        #[serde(default = "yes")]
        rebase_time: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        behavior: Option<BehaviorConfig>,
    },
    Synthetic {
        tracks: usize,
        /// Generation seed; the episode seed is used when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        behavior: Option<BehaviorConfig>,
    },
}

fn yes() -> bool {
    true
}

/// Spawn pose of the footprint center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpawnPose {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub heading: f64,
    #[serde(default)]
    pub speed: f64,
}

impl SpawnPose {
    pub fn pose(&self) -> Pose2 {
        Pose2::new(self.x, self.y, self.heading)
    }
}

/// Uniform perturbation of a spawn pose drawn from the spawn substream.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpawnJitter {
    #[serde(default)]
    pub position: f64,
    #[serde(default)]
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSuite {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bev: Option<BevSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lidar: Option<LidarSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<VectorSpec>,
}

impl SensorSuite {
    pub fn is_empty(&self) -> bool {
        self.bev.is_none() && self.lidar.is_none() && self.vector.is_none()
    }
}

fn default_class() -> ParticipantClass {
    ParticipantClass::Car
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub id: ParticipantId,
    #[serde(default = "default_class")]
    pub class: ParticipantClass,
    /// Overrides the class defaults (or the recorded size of `track`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<ParticipantSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spawn: Option<SpawnPose>,
    /// Takes over a recorded track from its first sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub track: Option<ParticipantId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jitter: Option<SpawnJitter>,
    #[serde(default)]
    pub sensors: SensorSuite,
}

/// Scripted participant driven by a behavior model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NpcConfig {
    pub id: ParticipantId,
    #[serde(default = "default_class")]
    pub class: ParticipantClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<ParticipantSpec>,
    pub spawn: SpawnPose,
    pub behavior: BehaviorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalConfig {
    pub region: Vec<Point2>,
    /// Target heading used by parking scoring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading: Option<f64>,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub map: MapSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traffic: Option<TrafficSource>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub npcs: Vec<NpcConfig>,
    pub agents: Vec<AgentConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<GoalConfig>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub max_steps: usize,
    /// Scoring id; defaults to the scenario kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scoring: Option<String>,
    /// Traffic-light programs keyed by regulatory element id.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub signals: BTreeMap<Id, SignalProgram>,
    /// Progress reference for racing scoring; lane centerlines are chained when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_line: Option<Vec<Point2>>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ScenarioConfig {
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, EnvError> {
        let mut c: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| EnvError::Config(e.to_string()))?;
        c.base_dir = base_dir.into();
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EnvError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| EnvError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let c: ScenarioConfig = serde_json::from_str(&text).map_err(|e| EnvError::load(path, e))?;
        let c = ScenarioConfig {
            base_dir: base,
            ..c
        };
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn scoring_id(&self) -> &str {
        self.scoring.as_deref().unwrap_or(self.kind.as_str())
    }

    pub fn goal_region(&self) -> Result<Option<ConvexPolygon>, EnvError> {
        self.goal
            .as_ref()
            .map(|g| {
                ConvexPolygon::new(g.region.clone())
                    .map_err(|e| EnvError::Config(format!("goal region: {e}")))
            })
            .transpose()
    }

    pub fn reference_polyline(&self) -> Result<Option<Polyline>, EnvError> {
        self.reference_line
            .as_ref()
            .map(|pts| {
                Polyline::new_dedup(pts.clone())
                    .map_err(|e| EnvError::Config(format!("reference line: {e}")))
            })
            .transpose()
    }

    /// Static checks; file existence is verified when the environment loads.
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(EnvError::Config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.max_steps == 0 {
            return Err(EnvError::Config("max_steps must be positive".into()));
        }
        if self.agents.is_empty() {
            return Err(EnvError::Config("at least one agent is required".into()));
        }
        let mut ids = std::collections::BTreeSet::new();
        for id in self
            .agents
            .iter()
            .map(|a| a.id)
            .chain(self.npcs.iter().map(|n| n.id))
        {
            if !ids.insert(id) {
                return Err(EnvError::Config(format!("duplicate participant id {id}")));
            }
        }
        for a in &self.agents {
            if a.spawn.is_some() == a.track.is_some() {
                return Err(EnvError::Config(format!(
                    "agent {} needs exactly one of 'spawn' or 'track'",
                    a.id
                )));
            }
            if let Some(spec) = &a.spec {
                spec.validate()?;
            }
            if let Some(b) = &a.sensors.bev {
                b.validate()?;
            }
            if let Some(l) = &a.sensors.lidar {
                l.validate()?;
            }
            if let Some(v) = &a.sensors.vector {
                v.validate()?;
            }
        }
        for n in &self.npcs {
            if let Some(spec) = &n.spec {
                spec.validate()?;
            }
        }
        if let Some(TrafficSource::Dataset { align: Some(a), .. }) = &self.traffic {
            a.validate()?;
        }
        self.goal_region()?;
        self.reference_polyline()?;
        Ok(())
    }
}
