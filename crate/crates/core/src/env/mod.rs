//! Seeded episodic reset/step loop over a world of agents and scripted traffic.

mod catalog;
mod config;
mod log;
mod policy;
mod scoring;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use thiserror::Error;

use crate::agents::{
    signal_state_at, step_bicycle, Action, AgentError, BehaviorConfig, BehaviorModel,
    BehaviorRegistry, Decision, ParticipantId, ParticipantSpec, ParticipantState, ParticipantView,
    SignalColor, WorldView,
};
use crate::events::{
    prime_detector, step_detector, DetectorInput, DetectorState, EventKind, EventRecord, Severity,
};
use crate::geometry::{Point2, Polyline, Pose2};
use crate::map::{Id, MapError, TrafficMap};
use crate::parsers::{parse_map, MapFormat};
use crate::rng::{substream, SimRng};
use crate::sensors::{render_bev, scan_lidar, vectorize, BevGrid, SensorError, VectorFeature};
use crate::traffic::{
    align, parse_tracks, synth_fixture, AlignmentSpec, Track, TrafficError, TrajectoryDataset,
};

pub use catalog::{scenario_catalog, CatalogEntry, DatasetPairing};
pub use config::{
    AgentConfig, GoalConfig, MapSource, NpcConfig, ScenarioConfig, ScenarioKind, SensorSuite,
    SpawnJitter, SpawnPose, TrafficSource, DEFAULT_DT,
};
pub use log::{format_number, log_line, EpisodeLog};
pub use policy::{IdlePolicy, IdmPolicy, Policy, PolicyFactory, PolicyRegistry, RandomPolicy};
pub use scoring::{
    default_scoring, progress, Goal, ParkingScoring, RacingScoring, ScoreContext, Scoring,
    ScoringRegistry, TrafficScoring, COLLISION_PENALTY, COMPLETION_BONUS, DEFAULT_SPEED_LIMIT,
    VIOLATION_PENALTY,
};

/// Upper bound on lanes chained into a derived racing reference.
const MAX_REFERENCE_LANES: usize = 64;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("cannot read {path}: {cause}")]
    Io { path: String, cause: String },
    #[error("failed to load {path}: {cause}")]
    Load { path: String, cause: String },
    #[error("invalid scenario config: {0}")]
    Config(String),
    #[error("spawn of participant {id} collides with participant {other}")]
    Spawn {
        id: ParticipantId,
        other: ParticipantId,
    },
    #[error("missing action for live agent {0}")]
    MissingAction(ParticipantId),
    #[error("{0}")]
    Contract(String),
    #[error("scoring '{0}' is not registered")]
    UnknownScoring(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Sensor(#[from] SensorError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
}

impl EnvError {
    pub fn io(path: &Path, cause: impl std::fmt::Display) -> Self {
        EnvError::Io {
            path: path.display().to_string(),
            cause: cause.to_string(),
        }
    }

    pub fn load(path: &Path, cause: impl std::fmt::Display) -> Self {
        EnvError::Load {
            path: path.display().to_string(),
            cause: cause.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Agent,
    Scripted,
    Replay,
}

pub struct Participant {
    pub id: ParticipantId,
    pub spec: ParticipantSpec,
    pub state: ParticipantState,
    pub active: bool,
    pub role: Role,
    behavior: Option<Box<dyn BehaviorModel>>,
}

impl std::fmt::Debug for Participant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Participant")
            .field("id", &self.id)
            .field("role", &self.role)
            .field("active", &self.active)
            .field("state", &self.state)
            .field("behavior", &self.behavior)
            .finish()
    }
}

impl Participant {
    pub fn view(&self) -> ParticipantView {
        ParticipantView {
            id: self.id,
            spec: self.spec,
            state: self.state,
        }
    }

    pub fn behavior_name(&self) -> Option<&str> {
        self.behavior.as_ref().map(|b| b.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSlot {
    pub sensors: SensorSuite,
    pub terminated: bool,
    pub truncated: bool,
    /// Progress reference for racing scoring.
    pub reference: Option<Polyline>,
}

impl AgentSlot {
    pub fn is_live(&self) -> bool {
        !self.terminated && !self.truncated
    }
}

/// Mutable simulation state of one episode.
#[derive(Debug)]
pub struct World {
    pub map: Arc<TrafficMap>,
    participants: BTreeMap<ParticipantId, Participant>,
    agents: BTreeMap<ParticipantId, AgentSlot>,
    signals: BTreeMap<Id, SignalColor>,
    steps: usize,
    dt: f64,
    sensor_rng: SimRng,
    detector: DetectorState,
    views: Vec<ParticipantView>,
}

impl World {
    pub fn time(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn participants(&self) -> impl Iterator<Item = &Participant> {
        self.participants.values()
    }

    pub fn participant(&self, id: ParticipantId) -> Option<&Participant> {
        self.participants.get(&id)
    }

    pub fn agents(&self) -> &BTreeMap<ParticipantId, AgentSlot> {
        &self.agents
    }

    pub fn live_agents(&self) -> impl Iterator<Item = ParticipantId> + '_ {
        self.agents
            .iter()
            .filter(|(_, a)| a.is_live())
            .map(|(id, _)| *id)
    }

    pub fn is_done(&self) -> bool {
        self.agents.values().all(|a| !a.is_live())
    }

    pub fn signals(&self) -> &BTreeMap<Id, SignalColor> {
        &self.signals
    }

    pub fn detector(&self) -> &DetectorState {
        &self.detector
    }

    /// Active participants sorted by id.
    pub fn view(&self) -> WorldView<'_> {
        WorldView {
            map: &self.map,
            time: self.time(),
            dt: self.dt,
            participants: &self.views,
        }
    }

    fn refresh_views(&mut self) {
        self.views = self
            .participants
            .values()
            .filter(|p| p.active)
            .map(Participant::view)
            .collect();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub state: ParticipantState,
    pub bev: Option<BevGrid>,
    pub lidar: Option<Vec<f64>>,
    pub vectors: Option<Vec<VectorFeature>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentStep {
    pub observation: Observation,
    pub action: Action,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub events: Vec<EventRecord>,
    pub active_participants: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub step: usize,
    pub time: f64,
    /// Agents that were live when the step began.
    pub agents: BTreeMap<ParticipantId, AgentStep>,
    pub info: StepInfo,
}

/// Axis-aligned value box; `low`/`high` hold one broadcast value or one value
/// per entry of the last axis.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSpace {
    pub shape: Vec<usize>,
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl BoxSpace {
    pub fn contains(&self, values: &[f64]) -> bool {
        let last = *self.shape.last().unwrap_or(&1);
        values.len() == self.shape.iter().product::<usize>()
            && values.iter().enumerate().all(|(i, v)| {
                let k = if self.low.len() == 1 { 0 } else { i % last };
                (self.low[k]..=self.high[k]).contains(v)
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSpace {
    pub bev: Option<BoxSpace>,
    pub lidar: Option<BoxSpace>,
    /// Rows of `[x0, y0, x1, y1, class, polyline]`.
    pub vectors: Option<BoxSpace>,
}

pub fn action_space(spec: &ParticipantSpec) -> BoxSpace {
    BoxSpace {
        shape: vec![2],
        low: vec![-spec.max_decel, -spec.max_steer],
        high: vec![spec.max_accel, spec.max_steer],
    }
}

pub fn observation_space(sensors: &SensorSuite) -> ObservationSpace {
    ObservationSpace {
        bev: sensors.bev.as_ref().map(|b| BoxSpace {
            shape: vec![b.height_px, b.width_px, b.channels()],
            low: vec![0.0],
            high: vec![1.0],
        }),
        lidar: sensors.lidar.as_ref().map(|l| BoxSpace {
            shape: vec![l.n_beams],
            low: vec![0.0],
            high: vec![l.max_range],
        }),
        vectors: sensors.vector.as_ref().map(|v| {
            let r = v.radius;
            BoxSpace {
                shape: vec![v.max_polylines * v.max_vectors_per_polyline, 6],
                low: vec![-r, -r, -r, -r, 0.0, 0.0],
                high: vec![r, r, r, r, 3.0, v.max_polylines as f64],
            }
        }),
    }
}

/// An environment instance: loaded sources, registries and the current episode.
pub struct Environment {
    config: ScenarioConfig,
    map: Arc<TrafficMap>,
    dataset: Option<Arc<TrajectoryDataset>>,
    goal: Option<Goal>,
    behaviors: BehaviorRegistry,
    scorings: ScoringRegistry,
    world: Option<World>,
}

impl std::fmt::Debug for Environment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Environment")
            .field("kind", &self.config.kind)
            .field("world", &self.world)
            .finish()
    }
}

fn rebase(dataset: TrajectoryDataset, enabled: bool) -> TrajectoryDataset {
    if !enabled || dataset.is_empty() || dataset.t_min == 0.0 {
        return dataset;
    }
    let shift = AlignmentSpec {
        time_offset: -dataset.t_min,
        ..AlignmentSpec::IDENTITY
    };
    align(&dataset, &shift)
}

impl Environment {
    /// Loads the map and any recorded dataset referenced by the config.
    pub fn new(config: ScenarioConfig) -> Result<Self, EnvError> {
        config.validate()?;
        let map_path = config.resolve(&config.map.path);
        let format = match config.map.format {
            Some(f) => f,
            None => MapFormat::from_path(&map_path).ok_or_else(|| {
                EnvError::load(&map_path, "cannot infer map format from the file extension")
            })?,
        };
        let text = std::fs::read_to_string(&map_path).map_err(|e| EnvError::io(&map_path, e))?;
        let origin = config.map.origin.map(|[lat, lon]| (lat, lon));
        let map = parse_map(&text, format, origin, config.map.sample_step)
            .map_err(|e| EnvError::load(&map_path, e))?;
        let dataset = match &config.traffic {
            Some(TrafficSource::Dataset {
                path,
                schema,
                align: alignment,
                rebase_time,
                ..
            }) => {
                let path = config.resolve(path);
                let csv = std::fs::read_to_string(&path).map_err(|e| EnvError::io(&path, e))?;
                let mut ds = parse_tracks(schema, &csv).map_err(|e| EnvError::load(&path, e))?;
                if let Some(a) = alignment {
                    ds = align(&ds, a);
                }
                Some(rebase(ds, *rebase_time))
            }
            _ => None,
        };
        Self::from_parts(config, map, dataset)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EnvError> {
        Self::new(ScenarioConfig::load(path)?)
    }

    /// Builds an environment from already-loaded sources; the config's file
    /// references are not read.
    pub fn from_parts(
        config: ScenarioConfig,
        map: TrafficMap,
        dataset: Option<TrajectoryDataset>,
    ) -> Result<Self, EnvError> {
        config.validate()?;
        let goal = config.goal_region()?.map(|region| Goal {
            region,
            heading: config.goal.as_ref().and_then(|g| g.heading),
        });
        Ok(Self {
            map: Arc::new(map),
            dataset: dataset.map(Arc::new),
            goal,
            behaviors: BehaviorRegistry::with_builtins(),
            scorings: ScoringRegistry::with_builtins(),
            world: None,
            config,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn map(&self) -> &TrafficMap {
        &self.map
    }

    pub fn world(&self) -> Option<&World> {
        self.world.as_ref()
    }

    pub fn behaviors_mut(&mut self) -> &mut BehaviorRegistry {
        &mut self.behaviors
    }

    pub fn scorings_mut(&mut self) -> &mut ScoringRegistry {
        &mut self.scorings
    }

    /// Adds or replaces a scoring function under `id`.
    pub fn register_scoring(
        &mut self,
        id: &str,
        scoring: Arc<dyn Scoring>,
    ) -> Result<(), EnvError> {
        self.scorings
            .register(id, scoring)
            .map_err(EnvError::Config)
    }

    pub fn agent_ids(&self) -> Vec<ParticipantId> {
        self.config
            .agents
            .iter()
            .map(|a| a.id)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    fn agent_spec(&self, agent: &AgentConfig) -> ParticipantSpec {
        if let Some(spec) = agent.spec {
            return spec;
        }
        let track = agent
            .track
            .and_then(|t| self.dataset.as_ref().and_then(|d| d.tracks.get(&t)));
        match track {
            Some(t) => t.class.spec_for_size(t.length, t.width),
            None => agent.class.default_spec(),
        }
    }

    pub fn action_space(&self, id: ParticipantId) -> Option<BoxSpace> {
        let agent = self.config.agents.iter().find(|a| a.id == id)?;
        Some(action_space(&self.agent_spec(agent)))
    }

    pub fn observation_space(&self, id: ParticipantId) -> Option<ObservationSpace> {
        let agent = self.config.agents.iter().find(|a| a.id == id)?;
        Some(observation_space(&agent.sensors))
    }

    /// Starts a new episode; every random draw derives from `seed`.
    pub fn reset(&mut self, seed: u64) -> Result<BTreeMap<ParticipantId, Observation>, EnvError> {
        let cfg = &self.config;
        let dataset: Option<Arc<TrajectoryDataset>> = match &cfg.traffic {
            Some(TrafficSource::Synthetic {
                tracks, seed: s, ..
            }) => Some(Arc::new(synth_fixture(
                &self.map,
                *tracks,
                s.unwrap_or(seed),
            )?)),
            Some(TrafficSource::Dataset { .. }) => self.dataset.clone(),
            None => None,
        };
        let traffic_behavior = match &cfg.traffic {
            Some(
                TrafficSource::Dataset { behavior, .. } | TrafficSource::Synthetic { behavior, .. },
            ) => behavior
                .clone()
                .unwrap_or_else(|| BehaviorConfig::new("replay")),
            None => BehaviorConfig::new("replay"),
        };
        let taken: BTreeSet<ParticipantId> = cfg.agents.iter().filter_map(|a| a.track).collect();
        let configured: BTreeSet<ParticipantId> = cfg
            .agents
            .iter()
            .map(|a| a.id)
            .chain(cfg.npcs.iter().map(|n| n.id))
            .collect();

        let mut participants: BTreeMap<ParticipantId, Participant> = BTreeMap::new();
        let empty = BTreeMap::new();
        let all_tracks = dataset.as_ref().map_or(&empty, |d| &d.tracks);
        for (id, track) in all_tracks {
            if taken.contains(id) {
                continue;
            }
            if configured.contains(id) {
                return Err(EnvError::Config(format!(
                    "participant id {id} is used by both a recorded track and the config"
                )));
            }
            let track = Arc::new(track.clone());
            let behavior = self.behaviors.create(&traffic_behavior, Some(&track))?;
            let spec = track.class.spec_for_size(track.length, track.width);
            let (state, active, role) = match behavior.state_at(0.0) {
                Some(s) => (s, true, Role::Replay),
                None if behavior.name() == "replay" => {
                    (initial_state(&spec, &track), false, Role::Replay)
                }
                None => (initial_state(&spec, &track), true, Role::Scripted),
            };
            participants.insert(
                *id,
                Participant {
                    id: *id,
                    spec,
                    state,
                    active,
                    role,
                    behavior: Some(behavior),
                },
            );
        }

        let mut placed: Vec<ParticipantId> = Vec::new();
        for npc in &cfg.npcs {
            let spec = npc.spec.unwrap_or_else(|| npc.class.default_spec());
            let behavior = self.behaviors.create(&npc.behavior, None)?;
            let state = spawn_state(&spec, npc.spawn.pose(), npc.spawn.speed);
            participants.insert(
                npc.id,
                Participant {
                    id: npc.id,
                    spec,
                    state,
                    active: true,
                    role: Role::Scripted,
                    behavior: Some(behavior),
                },
            );
            placed.push(npc.id);
        }

        let mut jitter_rng = substream(seed, "spawn_jitter");
        let mut agents = BTreeMap::new();
        let mut agent_cfgs: Vec<&AgentConfig> = cfg.agents.iter().collect();
        agent_cfgs.sort_by_key(|a| a.id);
        for agent in agent_cfgs {
            let spec = self.agent_spec(agent);
            let (center, speed) = match (agent.spawn, agent.track) {
                (Some(s), _) => (s.pose(), s.speed),
                (None, Some(t)) => {
                    let track = all_tracks.get(&t).ok_or_else(|| {
                        EnvError::Config(format!("agent {} references unknown track {t}", agent.id))
                    })?;
                    let first = track.points()[0];
                    (first.pose, first.speed)
                }
                (None, None) => unreachable!("validated config"),
            };
            let center = match agent.jitter {
                Some(j) => jittered(center, j, &mut jitter_rng),
                None => center,
            };
            let state = spawn_state(&spec, center, speed);
            participants.insert(
                agent.id,
                Participant {
                    id: agent.id,
                    spec,
                    state,
                    active: true,
                    role: Role::Agent,
                    behavior: None,
                },
            );
            placed.push(agent.id);
            agents.insert(
                agent.id,
                AgentSlot {
                    sensors: agent.sensors.clone(),
                    terminated: false,
                    truncated: false,
                    reference: None,
                },
            );
        }

        let scripted: BTreeSet<ParticipantId> = placed.iter().copied().collect();
        for id in &placed {
            let me = &participants[id];
            let fp = me.spec.footprint(me.state.pose);
            let hit = participants.values().find(|o| {
                o.id != *id
                    && o.active
                    && !(scripted.contains(&o.id) && o.id > *id)
                    && fp.overlaps(&o.spec.footprint(o.state.pose))
            });
            if let Some(other) = hit {
                return Err(EnvError::Spawn {
                    id: *id,
                    other: other.id,
                });
            }
        }

        let reference = cfg.reference_polyline()?;
        for (id, slot) in agents.iter_mut() {
            slot.reference = match &reference {
                Some(r) => Some(r.clone()),
                None if cfg.kind == ScenarioKind::Racing => {
                    derive_reference(&self.map, participants[id].view())
                }
                None => None,
            };
        }

        let mut world = World {
            map: Arc::clone(&self.map),
            participants,
            agents,
            signals: BTreeMap::new(),
            steps: 0,
            dt: cfg.dt,
            sensor_rng: substream(seed, "lidar_noise"),
            detector: DetectorState::new(),
            views: Vec::new(),
        };
        world.signals = self.signal_colors(0.0);
        world.refresh_views();
        let goals = self.goals(&world);
        let agent_ids: Vec<ParticipantId> = world.agents.keys().copied().collect();
        let input = DetectorInput {
            map: &world.map,
            time: 0.0,
            dt: world.dt,
            participants: &world.views,
            signals: &world.signals,
            goals: &goals,
            agents: &agent_ids,
            max_steps: Some(cfg.max_steps),
        };
        let mut detector = DetectorState::new();
        prime_detector(&input, &mut detector);
        world.detector = detector;
        let mut obs = BTreeMap::new();
        for id in agent_ids {
            obs.insert(id, observe(&mut world, id)?);
        }
        self.world = Some(world);
        Ok(obs)
    }

    fn signal_colors(&self, t: f64) -> BTreeMap<Id, SignalColor> {
        self.config
            .signals
            .iter()
            .map(|(id, prog)| (*id, signal_state_at(prog, t)))
            .collect()
    }

    fn goals(&self, world: &World) -> BTreeMap<ParticipantId, crate::geometry::ConvexPolygon> {
        match &self.goal {
            Some(g) => world
                .live_agents()
                .map(|id| (id, g.region.clone()))
                .collect(),
            None => BTreeMap::new(),
        }
    }

    /// Advances the episode by one step with simultaneous agent actions.
    pub fn step(
        &mut self,
        actions: &BTreeMap<ParticipantId, Action>,
    ) -> Result<StepResult, EnvError> {
        let scoring_id = self.config.scoring_id().to_string();
        let scoring = self
            .scorings
            .get(&scoring_id)
            .ok_or(EnvError::UnknownScoring(scoring_id))?;
        let world = self
            .world
            .as_ref()
            .ok_or_else(|| EnvError::Contract("reset must be called before step".into()))?;
        if world.is_done() {
            return Err(EnvError::Contract(
                "episode has finished; call reset before stepping again".into(),
            ));
        }
        let live: Vec<ParticipantId> = world.live_agents().collect();
        for id in &live {
            match actions.get(id) {
                None => return Err(EnvError::MissingAction(*id)),
                Some(a) if !a.is_finite() => {
                    return Err(EnvError::Contract(format!(
                        "non-finite action for agent {id}"
                    )))
                }
                Some(_) => {}
            }
        }
        let goals = self.goals(world);
        let new_signals = self.signal_colors((world.steps + 1) as f64 * world.dt);
        let max_steps = self.config.max_steps;
        let world = self.world.as_mut().expect("checked above");
        let before = world.views.clone();

        let view = WorldView {
            map: &world.map,
            time: world.time(),
            dt: world.dt,
            participants: &before,
        };
        let mut decisions: Vec<(ParticipantId, Decision)> = Vec::new();
        for p in world.participants.values_mut() {
            if let Some(b) = p.behavior.as_mut() {
                decisions.push((p.id, b.decide(&view, p.id)?));
            }
        }

        world.steps += 1;
        let now = world.time();
        let dt = world.dt;
        let mut applied = BTreeMap::new();
        for id in &live {
            let p = world.participants.get_mut(id).expect("agent exists");
            let action = p.spec.clamp_action(actions[id]);
            p.state = ParticipantState {
                time: now,
                ..step_bicycle(&p.state, action, dt, &p.spec)
            };
            applied.insert(*id, action);
        }
        for (id, decision) in decisions {
            let p = world.participants.get_mut(&id).expect("participant exists");
            match decision {
                Decision::Act(a) => {
                    if p.active {
                        p.state = ParticipantState {
                            time: now,
                            ..step_bicycle(&p.state, a, dt, &p.spec)
                        };
                    }
                }
                Decision::Teleport(s) => {
                    p.state = s;
                    p.active = true;
                }
                Decision::Inactive => p.active = false,
            }
        }
        world.signals = new_signals;
        world.refresh_views();

        let input = DetectorInput {
            map: &world.map,
            time: now,
            dt,
            participants: &world.views,
            signals: &world.signals,
            goals: &goals,
            agents: &live,
            max_steps: Some(max_steps),
        };
        let events = step_detector(&input, &mut world.detector);

        let mut observations = BTreeMap::new();
        for id in &live {
            observations.insert(*id, observe(world, *id)?);
        }

        let before_view = WorldView {
            map: &world.map,
            time: now - dt,
            dt,
            participants: &before,
        };
        let after_view = world.view();
        let mut out = BTreeMap::new();
        let goal = self.goal.as_ref();
        for id in &live {
            let mine: Vec<&EventRecord> = events.iter().filter(|e| e.involves(*id)).collect();
            let ctx = ScoreContext {
                agent: *id,
                before: before_view,
                after: after_view,
                events: &mine,
                goal,
                reference: world.agents[id].reference.as_ref(),
            };
            let reward = scoring.score(&ctx);
            if !reward.is_finite() {
                return Err(EnvError::Contract(format!(
                    "scoring '{}' produced a non-finite reward for agent {id}",
                    self.config.scoring_id()
                )));
            }
            let terminated = mine
                .iter()
                .any(|e| e.severity == Severity::Fatal || e.kind == EventKind::RouteComplete);
            let truncated = !terminated && events.iter().any(|e| e.kind == EventKind::Timeout);
            out.insert(
                *id,
                AgentStep {
                    observation: observations.remove(id).expect("observed"),
                    action: applied[id],
                    reward,
                    terminated,
                    truncated,
                },
            );
        }
        for (id, s) in &out {
            let slot = world.agents.get_mut(id).expect("agent slot");
            slot.terminated = s.terminated;
            slot.truncated = s.truncated;
        }
        let active_participants = world.views.len();
        Ok(StepResult {
            step: world.steps,
            time: now,
            agents: out,
            info: StepInfo {
                events,
                active_participants,
            },
        })
    }

    /// Actions for every live agent chosen by `policy`.
    pub fn policy_actions(&self, policy: &mut dyn Policy) -> BTreeMap<ParticipantId, Action> {
        let Some(world) = &self.world else {
            return BTreeMap::new();
        };
        let view = world.view();
        world
            .live_agents()
            .map(|id| {
                let spec = world.participants[&id].spec;
                (id, policy.act(&view, id, &spec))
            })
            .collect()
    }
}

fn initial_state(spec: &ParticipantSpec, track: &Track) -> ParticipantState {
    let first = track.points()[0];
    spawn_state(spec, first.pose, first.speed)
}

fn spawn_state(spec: &ParticipantSpec, center: Pose2, speed: f64) -> ParticipantState {
    ParticipantState {
        speed: speed.clamp(0.0, spec.max_speed),
        ..ParticipantState::at_rest(0.0, spec.reference_from_center(center))
    }
}

fn jittered(pose: Pose2, j: SpawnJitter, rng: &mut SimRng) -> Pose2 {
    let mut draw = |r: f64| {
        if r > 0.0 {
            rng.random_range(-r..=r)
        } else {
            0.0
        }
    };
    let dx = draw(j.position);
    let dy = draw(j.position);
    let dh = draw(j.heading);
    Pose2::from_parts(pose.position + Point2::new(dx, dy), pose.heading + dh)
}

/// Chains centerlines from the best-aligned lane under the participant.
fn derive_reference(map: &TrafficMap, p: ParticipantView) -> Option<Polyline> {
    let c = p.center();
    let (start, _) = map.best_aligned_lane(c.position, c.heading, |_| true)?;
    let mut seen = BTreeSet::new();
    let mut pts: Vec<Point2> = Vec::new();
    let mut id = start;
    for _ in 0..MAX_REFERENCE_LANES {
        if !seen.insert(id) {
            break;
        }
        let lane = map.lanes.get(&id)?;
        pts.extend_from_slice(lane.centerline.points());
        match lane.successors.iter().min() {
            Some(next) => id = *next,
            None => break,
        }
    }
    Polyline::new_dedup(pts).ok()
}

fn observe(world: &mut World, id: ParticipantId) -> Result<Observation, EnvError> {
    let sensors = world.agents[&id].sensors.clone();
    let state = world.participants[&id].state;
    let view = WorldView {
        map: &world.map,
        time: world.steps as f64 * world.dt,
        dt: world.dt,
        participants: &world.views,
    };
    let bev = sensors
        .bev
        .as_ref()
        .map(|s| render_bev(&view, id, s))
        .transpose()?;
    let lidar = sensors
        .lidar
        .as_ref()
        .map(|s| scan_lidar(&view, id, s, &mut world.sensor_rng))
        .transpose()?;
    let vectors = sensors
        .vector
        .as_ref()
        .map(|s| vectorize(&view, id, s))
        .transpose()?;
    Ok(Observation {
        state,
        bev,
        lidar,
        vectors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchReport {
    pub steps: usize,
    pub mean_latency: f64,
    pub p95_latency: f64,
    pub steps_per_second: f64,
}

/// Times `steps` environment steps (reset excluded), resetting with the same
/// seed whenever the episode ends.
pub fn bench(
    env: &mut Environment,
    policy: &mut dyn Policy,
    seed: u64,
    steps: usize,
) -> Result<BenchReport, EnvError> {
    if steps == 0 {
        return Err(EnvError::Config("bench needs at least one step".into()));
    }
    env.reset(seed)?;
    let mut latencies = Vec::with_capacity(steps);
    while latencies.len() < steps {
        if env.world().is_some_and(World::is_done) {
            env.reset(seed)?;
        }
        let actions = env.policy_actions(policy);
        let t0 = Instant::now();
        env.step(&actions)?;
        latencies.push(t0.elapsed().as_secs_f64());
    }
    let total: f64 = latencies.iter().sum();
    let mut sorted = latencies.clone();
    sorted.sort_by(f64::total_cmp);
    let idx = ((0.95 * steps as f64).ceil() as usize).clamp(1, steps) - 1;
    Ok(BenchReport {
        steps,
        mean_latency: total / steps as f64,
        p95_latency: sorted[idx],
        steps_per_second: if total > 0.0 {
            steps as f64 / total
        } else {
            f64::INFINITY
        },
    })
}
