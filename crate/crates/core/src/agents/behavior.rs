//! Behavior models for non-agent participants, created by name from a registry.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::{angle_diff, Point2, Polyline, Pose2};
use crate::map::{lane_direction_at, Id, TrafficMap};
use crate::traffic::{state_at, Track};

use super::{
    idm_accel, pure_pursuit_steer, Action, AgentError, IdmParams, ParticipantClass, ParticipantId,
    ParticipantSpec, ParticipantState, EULER_SUBSTEPS,
};

/// Leader search range along the lane centerline (meters).
pub const LEADER_HORIZON: f64 = 100.0;
/// Maximum number of lanes chained into a lane-keeping path.
const MAX_PATH_LANES: usize = 12;
/// Clearance kept beyond the IDM minimum gap by the one-step stop guard.
const STOP_MARGIN: f64 = 1e-3;
/// Radius within which participants are reported to external policies.
const NEIGHBOUR_RADIUS: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticipantView {
    pub id: ParticipantId,
    pub spec: ParticipantSpec,
    pub state: ParticipantState,
}

impl ParticipantView {
    pub fn center(&self) -> Pose2 {
        self.spec.center_pose(self.state.pose)
    }
}

/// Read-only snapshot handed to behavior models; `participants` is sorted by id
/// and holds only active participants.
#[derive(Debug, Clone, Copy)]
pub struct WorldView<'a> {
    pub map: &'a TrafficMap,
    pub time: f64,
    pub dt: f64,
    pub participants: &'a [ParticipantView],
}

impl<'a> WorldView<'a> {
    pub fn get(&self, id: ParticipantId) -> Option<&'a ParticipantView> {
        self.participants
            .binary_search_by_key(&id, |p| p.id)
            .ok()
            .map(|i| &self.participants[i])
    }

    /// Time at the end of the coming step, on the same `k·dt` grid as `time`.
    pub fn next_time(&self) -> f64 {
        ((self.time / self.dt).round() + 1.0) * self.dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    /// Control input integrated by the kinematic model.
    Act(Action),
    /// State to adopt directly at the end of the step.
    Teleport(ParticipantState),
    /// The participant leaves (or has not yet entered) the scene.
    Inactive,
}

pub trait BehaviorModel: Send {
    fn name(&self) -> &str;

    /// Decision for the step from `view.time` to `view.time + view.dt`.
    fn decide(&mut self, view: &WorldView, id: ParticipantId) -> Result<Decision, AgentError>;

    /// State at `t` for models that dictate state directly (replay).
    fn state_at(&self, _t: f64) -> Option<ParticipantState> {
        None
    }
}

impl fmt::Debug for dyn BehaviorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BehaviorModel({})", self.name())
    }
}

/// Follows a recorded track; absent outside the recorded span.
#[derive(Debug, Clone)]
pub struct ReplayModel {
    track: Arc<Track>,
    spec: ParticipantSpec,
}

impl ReplayModel {
    pub fn new(track: Arc<Track>) -> Self {
        let spec = track.class.spec_for_size(track.length, track.width);
        Self { track, spec }
    }

    pub fn spec(&self) -> ParticipantSpec {
        self.spec
    }

    pub fn track(&self) -> &Track {
        &self.track
    }
}

impl BehaviorModel for ReplayModel {
    fn name(&self) -> &str {
        "replay"
    }

    fn decide(&mut self, view: &WorldView, _id: ParticipantId) -> Result<Decision, AgentError> {
        Ok(match self.state_at(view.next_time()) {
            Some(s) => Decision::Teleport(s),
            None => Decision::Inactive,
        })
    }

    fn state_at(&self, t: f64) -> Option<ParticipantState> {
        let p = state_at(&self.track, t)?;
        Some(ParticipantState {
            time: t,
            pose: self.spec.reference_from_center(p.pose),
            speed: p.speed,
            accel: p.accel.unwrap_or(0.0),
            steer: 0.0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmModelParams {
    #[serde(default)]
    pub idm: IdmParams,
    #[serde(default = "default_lookahead")]
    pub lookahead: f64,
}

fn default_lookahead() -> f64 {
    6.0
}

impl Default for IdmModelParams {
    fn default() -> Self {
        Self {
            idm: IdmParams::default(),
            lookahead: default_lookahead(),
        }
    }
}

/// Car following along the current lane with pure-pursuit lane keeping. The
/// end of a lane chain without successors acts as a stopped leader.
#[derive(Debug, Clone)]
pub struct IdmModel {
    params: IdmModelParams,
    lane: Option<Id>,
    paths: HashMap<Id, (Vec<Id>, Polyline)>,
}

impl IdmModel {
    pub fn new(params: IdmModelParams) -> Result<Self, AgentError> {
        params.idm.validate()?;
        if !(params.lookahead.is_finite() && params.lookahead > 0.0) {
            return Err(AgentError::Config("lookahead must be positive".into()));
        }
        Ok(Self {
            params,
            lane: None,
            paths: HashMap::new(),
        })
    }

    pub fn current_lane(&self) -> Option<Id> {
        self.lane
    }

    fn select_lane(&self, map: &TrafficMap, center: Pose2) -> Option<Id> {
        let candidates = map.lanes_at_point(center.position);
        if let Some(l) = self.lane.filter(|l| candidates.contains(l)) {
            return Some(l);
        }
        let best = candidates
            .iter()
            .filter_map(|&id| {
                let lane = map.lanes.get(&id)?;
                let s = lane.centerline.project(center.position).s;
                let dir = lane_direction_at(lane, s).ok()?;
                Some((angle_diff(center.heading, dir).abs(), id))
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(_, id)| id);
        best.or(self.lane)
    }

    fn path(&mut self, map: &TrafficMap, lane: Id) -> Option<&(Vec<Id>, Polyline)> {
        if !self.paths.contains_key(&lane) {
            let mut chain = vec![lane];
            let mut pts: Vec<Point2> = map.lanes.get(&lane)?.centerline.points().to_vec();
            let mut length = map.lanes[&lane].centerline.length();
            let mut cur = lane;
            while chain.len() < MAX_PATH_LANES
                && length < 2.0 * LEADER_HORIZON + self.params.lookahead
            {
                let Some(&next) = map.lanes[&cur]
                    .successors
                    .iter()
                    .find(|s| !chain.contains(s))
                else {
                    break;
                };
                let cl = &map.lanes[&next].centerline;
                pts.extend_from_slice(cl.points());
                length += cl.length();
                chain.push(next);
                cur = next;
            }
            let line = Polyline::new_dedup(pts).ok()?;
            self.paths.insert(lane, (chain, line));
        }
        self.paths.get(&lane)
    }
}

impl BehaviorModel for IdmModel {
    fn name(&self) -> &str {
        "idm"
    }

    fn decide(&mut self, view: &WorldView, id: ParticipantId) -> Result<Decision, AgentError> {
        let me = view.get(id).ok_or(AgentError::UnknownParticipant(id))?;
        let center = me.center();
        let params = self.params;
        self.lane = self.select_lane(view.map, center);
        let Some(lane) = self.lane else {
            let a = idm_accel(me.state.speed, f64::INFINITY, 0.0, &params.idm);
            return Ok(Decision::Act(Action::new(a, 0.0)));
        };
        let Some((chain, path)) = self.path(view.map, lane) else {
            return Ok(Decision::Act(Action::IDLE));
        };
        let s_self = path.project(center.position).s;
        let mut leader: Option<(f64, f64)> = None;
        for other in view.participants.iter().filter(|p| p.id != id) {
            let oc = other.center();
            if oc.position.distance(center.position) > LEADER_HORIZON + 2.0 * me.spec.length {
                continue;
            }
            let lanes = view.map.lanes_at_point(oc.position);
            if !lanes.iter().any(|l| chain.contains(l)) {
                continue;
            }
            let s_other = path.project(oc.position).s;
            let ds = s_other - s_self;
            if ds <= 0.0 || ds > LEADER_HORIZON {
                continue;
            }
            let gap = ds - me.spec.length / 2.0 - other.spec.length / 2.0;
            let along = other.state.speed * angle_diff(oc.heading, path.heading_at(s_other)).cos();
            if leader.is_none_or(|(g, _)| gap < g) {
                leader = Some((gap, along));
            }
        }
        let dead_end = chain
            .last()
            .is_some_and(|l| view.map.lanes[l].successors.is_empty());
        if dead_end {
            let gap = path.length() - s_self - me.spec.length / 2.0;
            if gap <= LEADER_HORIZON && leader.is_none_or(|(g, _)| gap < g) {
                leader = Some((gap, 0.0));
            }
        }
        let v = me.state.speed;
        let accel = match leader {
            Some((gap, v_lead)) => {
                // Never travel past the minimum gap within one step. With n
                // Euler sub-steps the distance covered is v·dt + a·dt²·(n−1)/(2n).
                let room =
                    (gap + v_lead.max(0.0) * view.dt - params.idm.min_gap - STOP_MARGIN).max(0.0);
                let n = EULER_SUBSTEPS as f64;
                let limit = (room - v * view.dt) * 2.0 * n / ((n - 1.0) * view.dt * view.dt);
                idm_accel(v, gap, v - v_lead, &params.idm).min(limit)
            }
            None => idm_accel(v, f64::INFINITY, 0.0, &params.idm),
        };
        let wheelbase = me.spec.wheelbase.unwrap_or(me.spec.length);
        let steer = pure_pursuit_steer(me.state.pose, path, params.lookahead, wheelbase);
        Ok(Decision::Act(Action::new(accel, steer)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbour {
    pub id: ParticipantId,
    pub class: ParticipantClass,
    pub center: Pose2,
    pub speed: f64,
}

/// What an external policy sees about its participant.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyInput {
    pub id: ParticipantId,
    pub time: f64,
    pub spec: ParticipantSpec,
    pub state: ParticipantState,
    /// Participants within 50 m, sorted by id.
    pub neighbours: Vec<Neighbour>,
}

pub type ExternalPolicy = Arc<dyn Fn(&PolicyInput) -> Action + Send + Sync>;

pub struct ExternalPolicyModel {
    hook: String,
    policy: ExternalPolicy,
}

impl fmt::Debug for ExternalPolicyModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExternalPolicyModel")
            .field("hook", &self.hook)
            .finish()
    }
}

impl ExternalPolicyModel {
    pub fn new(hook: impl Into<String>, policy: ExternalPolicy) -> Self {
        Self {
            hook: hook.into(),
            policy,
        }
    }
}

impl BehaviorModel for ExternalPolicyModel {
    fn name(&self) -> &str {
        "external"
    }

    fn decide(&mut self, view: &WorldView, id: ParticipantId) -> Result<Decision, AgentError> {
        let me = view.get(id).ok_or(AgentError::UnknownParticipant(id))?;
        let c = me.center().position;
        let neighbours = view
            .participants
            .iter()
            .filter(|p| p.id != id && p.center().position.distance(c) <= NEIGHBOUR_RADIUS)
            .map(|p| Neighbour {
                id: p.id,
                class: p.spec.class,
                center: p.center(),
                speed: p.state.speed,
            })
            .collect();
        let input = PolicyInput {
            id,
            time: view.time,
            spec: me.spec,
            state: me.state,
            neighbours,
        };
        let action = (self.policy)(&input);
        if !action.is_finite() {
            return Err(AgentError::Config(format!(
                "external policy '{}' returned a non-finite action",
                self.hook
            )));
        }
        Ok(Decision::Act(action))
    }
}

/// Model selection as written in scenario configs: `{"model": "idm", "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorConfig {
    pub model: String,
    #[serde(default)]
    pub params: serde_json::Value,
}

impl BehaviorConfig {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            params: serde_json::Value::Null,
        }
    }
}

/// Inputs available to factories beyond the model parameters.
pub struct FactoryContext<'a> {
    pub track: Option<&'a Arc<Track>>,
    pub hooks: &'a BTreeMap<String, ExternalPolicy>,
}

pub type BehaviorFactory = Box<
    dyn Fn(&serde_json::Value, &FactoryContext) -> Result<Box<dyn BehaviorModel>, AgentError>
        + Send
        + Sync,
>;

pub struct BehaviorRegistry {
    factories: BTreeMap<String, BehaviorFactory>,
    hooks: BTreeMap<String, ExternalPolicy>,
}

impl fmt::Debug for BehaviorRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BehaviorRegistry")
            .field("models", &self.factories.keys().collect::<Vec<_>>())
            .field("hooks", &self.hooks.keys().collect::<Vec<_>>())
            .finish()
    }
}

fn params_or_default<T: for<'de> Deserialize<'de> + Default>(
    v: &serde_json::Value,
) -> Result<T, AgentError> {
    if v.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(v.clone()).map_err(|e| AgentError::Config(e.to_string()))
}

impl BehaviorRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
            hooks: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(
            "replay",
            Box::new(|_, ctx| {
                let track = ctx.track.ok_or_else(|| {
                    AgentError::Config("replay model needs a recorded track".into())
                })?;
                Ok(Box::new(ReplayModel::new(Arc::clone(track))) as Box<dyn BehaviorModel>)
            }),
        );
        r.register(
            "idm",
            Box::new(|params, _| {
                let p: IdmModelParams = params_or_default(params)?;
                Ok(Box::new(IdmModel::new(p)?) as Box<dyn BehaviorModel>)
            }),
        );
        r.register(
            "external",
            Box::new(|params, ctx| {
                let hook = params
                    .get("hook")
                    .and_then(|h| h.as_str())
                    .unwrap_or("default")
                    .to_string();
                let policy = ctx.hooks.get(&hook).cloned().ok_or_else(|| {
                    AgentError::Config(format!("external policy hook '{hook}' is not registered"))
                })?;
                Ok(Box::new(ExternalPolicyModel::new(hook, policy)) as Box<dyn BehaviorModel>)
            }),
        );
        r
    }

    /// Adds a model factory, replacing any with the same name.
    pub fn register(&mut self, name: impl Into<String>, factory: BehaviorFactory) {
        self.factories.insert(name.into(), factory);
    }

    pub fn register_hook(&mut self, name: impl Into<String>, policy: ExternalPolicy) {
        self.hooks.insert(name.into(), policy);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn create(
        &self,
        config: &BehaviorConfig,
        track: Option<&Arc<Track>>,
    ) -> Result<Box<dyn BehaviorModel>, AgentError> {
        let factory = self
            .factories
            .get(&config.model)
            .ok_or_else(|| AgentError::UnknownBehavior(config.model.clone()))?;
        factory(
            &config.params,
            &FactoryContext {
                track,
                hooks: &self.hooks,
            },
        )
    }
}

impl Default for BehaviorRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}
