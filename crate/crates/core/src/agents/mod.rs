//! Participants: specifications, kinematic integration, car-following and
//! lane keeping laws, signal programs and behavior models.

mod behavior;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    normalize_angle, Circle, ConvexPolygon, OrientedBox, Point2, Polyline, Pose2,
};

pub use behavior::{
    BehaviorConfig, BehaviorFactory, BehaviorModel, BehaviorRegistry, Decision, ExternalPolicy,
    ExternalPolicyModel, FactoryContext, IdmModel, IdmModelParams, Neighbour, ParticipantView,
    PolicyInput, ReplayModel, WorldView, LEADER_HORIZON,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("unknown participant {0}")]
    UnknownParticipant(ParticipantId),
    #[error("unknown behavior model '{0}'")]
    UnknownBehavior(String),
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct ParticipantId(pub i64);

impl fmt::Display for ParticipantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::str::FromStr for ParticipantId {
    type Err = std::num::ParseIntError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim().parse().map(ParticipantId)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticipantClass {
    Car,
    Truck,
    Pedestrian,
    Cyclist,
}

impl ParticipantClass {
    /// Maps dataset labels onto classes.
    pub fn from_label(label: &str) -> Option<Self> {
        Some(match label.trim().to_ascii_lowercase().as_str() {
            "car" | "van" | "vehicle" => ParticipantClass::Car,
            "truck" | "bus" | "truck_bus" | "trailer" => ParticipantClass::Truck,
            "pedestrian" | "pedestrian/bicycle" | "person" => ParticipantClass::Pedestrian,
            "cyclist" | "bicycle" | "bike" | "motorcycle" | "motorbike" => {
                ParticipantClass::Cyclist
            }
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ParticipantClass::Car => "car",
            ParticipantClass::Truck => "truck",
            ParticipantClass::Pedestrian => "pedestrian",
            ParticipantClass::Cyclist => "cyclist",
        }
    }

    pub fn is_vehicle(self) -> bool {
        !matches!(self, ParticipantClass::Pedestrian)
    }

    pub fn default_spec(self) -> ParticipantSpec {
        let (length, width, wheelbase, max_speed, max_accel, max_decel, max_steer) = match self {
            ParticipantClass::Car => (4.5, 1.8, Some(2.7), 50.0, 3.0, 8.0, 0.6),
            ParticipantClass::Truck => (10.0, 2.5, Some(6.0), 30.0, 1.5, 6.0, 0.5),
            ParticipantClass::Cyclist => (1.8, 0.6, Some(1.1), 12.0, 1.5, 4.0, 0.7),
            ParticipantClass::Pedestrian => (0.6, 0.6, None, 3.0, 1.5, 3.0, 2.0),
        };
        ParticipantSpec {
            class: self,
            length,
            width,
            wheelbase,
            max_speed,
            max_accel,
            max_decel,
            max_steer,
        }
    }

    /// Specification scaled to recorded dimensions.
    pub fn spec_for_size(self, length: f64, width: f64) -> ParticipantSpec {
        let base = self.default_spec();
        ParticipantSpec {
            length,
            width,
            wheelbase: base.wheelbase.map(|w| w / base.length * length),
            ..base
        }
    }
}

impl fmt::Display for ParticipantClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticipantSpec {
    pub class: ParticipantClass,
    pub length: f64,
    pub width: f64,
    /// Rear axle to front axle distance; absent for pedestrians.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wheelbase: Option<f64>,
    pub max_speed: f64,
    pub max_accel: f64,
    pub max_decel: f64,
    pub max_steer: f64,
}

impl ParticipantSpec {
    pub fn validate(&self) -> Result<(), AgentError> {
        let vals = [
            ("length", self.length),
            ("width", self.width),
            ("max_speed", self.max_speed),
            ("max_accel", self.max_accel),
            ("max_decel", self.max_decel),
            ("max_steer", self.max_steer),
        ];
        for (name, v) in vals {
            if !(v.is_finite() && v > 0.0) {
                return Err(AgentError::InvalidSpec(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        match (self.class.is_vehicle(), self.wheelbase) {
            (true, Some(wb)) if wb.is_finite() && wb > 0.0 && wb < self.length => Ok(()),
            (true, Some(wb)) => Err(AgentError::InvalidSpec(format!(
                "wheelbase {wb} must be positive and shorter than length {}",
                self.length
            ))),
            (true, None) => Err(AgentError::InvalidSpec("vehicles need a wheelbase".into())),
            (false, _) if self.length != self.width => Err(AgentError::InvalidSpec(
                "pedestrian length and width are one diameter".into(),
            )),
            (false, _) => Ok(()),
        }
    }

    /// Offset from the state reference point to the footprint center.
    pub fn center_offset(&self) -> f64 {
        self.wheelbase.map_or(0.0, |w| w / 2.0)
    }

    pub fn center_pose(&self, reference: Pose2) -> Pose2 {
        Pose2::from_parts(
            reference.position + reference.direction() * self.center_offset(),
            reference.heading,
        )
    }

    /// Inverse of [`Self::center_pose`].
    pub fn reference_from_center(&self, center: Pose2) -> Pose2 {
        Pose2::from_parts(
            center.position - center.direction() * self.center_offset(),
            center.heading,
        )
    }

    pub fn footprint(&self, reference: Pose2) -> Footprint {
        let c = self.center_pose(reference);
        if self.class.is_vehicle() {
            Footprint::Box(OrientedBox::new(c, self.length, self.width).expect("validated spec"))
        } else {
            Footprint::Disc(Circle::new(c.position, self.length / 2.0).expect("validated spec"))
        }
    }

    pub fn clamp_action(&self, action: Action) -> Action {
        Action {
            accel: action.accel.clamp(-self.max_decel, self.max_accel),
            steer: action.steer.clamp(-self.max_steer, self.max_steer),
        }
    }
}

/// Physical outline of a participant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Footprint {
    Box(OrientedBox),
    Disc(Circle),
}

impl Footprint {
    pub fn center(&self) -> Point2 {
        match self {
            Footprint::Box(b) => b.center.position,
            Footprint::Disc(c) => c.center,
        }
    }

    /// Polygon outline; discs are approximated by a 16-gon.
    pub fn polygon(&self) -> ConvexPolygon {
        match self {
            Footprint::Box(b) => b.to_polygon(),
            Footprint::Disc(c) => {
                let pts = (0..16)
                    .map(|k| {
                        c.center
                            + Point2::from_angle(k as f64 * std::f64::consts::TAU / 16.0) * c.radius
                    })
                    .collect();
                ConvexPolygon::new(pts).expect("regular polygon is convex")
            }
        }
    }

    pub fn bounding_radius(&self) -> f64 {
        match self {
            Footprint::Box(b) => 0.5 * b.length.hypot(b.width),
            Footprint::Disc(c) => c.radius,
        }
    }

    pub fn overlaps(&self, other: &Footprint) -> bool {
        use crate::geometry::{circle_circle_overlap, circle_polygon_overlap, convex_overlap};
        match (self, other) {
            (Footprint::Box(a), Footprint::Box(b)) => {
                convex_overlap(&a.to_polygon(), &b.to_polygon())
            }
            (Footprint::Box(a), Footprint::Disc(c)) | (Footprint::Disc(c), Footprint::Box(a)) => {
                circle_polygon_overlap(c, &a.to_polygon())
            }
            (Footprint::Disc(a), Footprint::Disc(b)) => circle_circle_overlap(a, b),
        }
    }
}

/// Kinematic state; `pose` is the rear axle for vehicles and the center for
/// pedestrians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticipantState {
    pub time: f64,
    pub pose: Pose2,
    pub speed: f64,
    #[serde(default)]
    pub accel: f64,
    #[serde(default)]
    pub steer: f64,
}

impl ParticipantState {
    pub fn at_rest(time: f64, pose: Pose2) -> Self {
        Self {
            time,
            pose,
            speed: 0.0,
            accel: 0.0,
            steer: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub accel: f64,
    pub steer: f64,
}

impl Action {
    pub const IDLE: Action = Action {
        accel: 0.0,
        steer: 0.0,
    };

    pub fn new(accel: f64, steer: f64) -> Self {
        Self { accel, steer }
    }

    pub fn is_finite(&self) -> bool {
        self.accel.is_finite() && self.steer.is_finite()
    }
}

pub const EULER_SUBSTEPS: usize = 10;

/// Rear-axle kinematic bicycle with forward-Euler sub-steps of `dt/10`.
/// Pedestrians (no wheelbase) treat the steer command as a yaw rate.
pub fn step_bicycle(
    state: &ParticipantState,
    action: Action,
    dt: f64,
    spec: &ParticipantSpec,
) -> ParticipantState {
    let a = spec.clamp_action(action);
    let h = dt / EULER_SUBSTEPS as f64;
    let (mut x, mut y, mut th) = (
        state.pose.position.x,
        state.pose.position.y,
        state.pose.heading,
    );
    let mut v = state.speed.clamp(0.0, spec.max_speed);
    for _ in 0..EULER_SUBSTEPS {
        let yaw_rate = match spec.wheelbase {
            Some(wb) => v * a.steer.tan() / wb,
            None => a.steer,
        };
        let (s, c) = th.sin_cos();
        x += v * c * h;
        y += v * s * h;
        th += yaw_rate * h;
        v = (v + a.accel * h).clamp(0.0, spec.max_speed);
    }
    ParticipantState {
        time: state.time + dt,
        pose: Pose2::new(x, y, normalize_angle(th)),
        speed: v,
        accel: a.accel,
        steer: a.steer,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdmParams {
    pub desired_speed: f64,
    pub time_headway: f64,
    pub min_gap: f64,
    pub max_accel: f64,
    pub comfort_decel: f64,
    pub exponent: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            desired_speed: 13.9,
            time_headway: 1.5,
            min_gap: 2.0,
            max_accel: 1.5,
            comfort_decel: 2.0,
            exponent: 4.0,
        }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<(), AgentError> {
        let vals = [
            self.desired_speed,
            self.time_headway,
            self.min_gap,
            self.max_accel,
            self.comfort_decel,
            self.exponent,
        ];
        if vals.iter().all(|v| v.is_finite() && *v > 0.0) {
            Ok(())
        } else {
            Err(AgentError::InvalidSpec(
                "IDM parameters must be positive".into(),
            ))
        }
    }
}

/// Intelligent driver model acceleration; pass `f64::INFINITY` as `gap`
/// when there is no leader.
pub fn idm_accel(v: f64, gap: f64, closing_speed: f64, p: &IdmParams) -> f64 {
    let free = 1.0 - (v / p.desired_speed).powf(p.exponent);
    let interaction = if gap.is_finite() {
        let s_star = (p.min_gap
            + v * p.time_headway
            + v * closing_speed / (2.0 * (p.max_accel * p.comfort_decel).sqrt()))
        .max(p.min_gap);
        let gap = gap.max(1e-6);
        (s_star / gap).powi(2)
    } else {
        0.0
    };
    (p.max_accel * (free - interaction)).clamp(-2.0 * p.comfort_decel, p.max_accel)
}

/// Steering angle aiming at the path point `lookahead` meters beyond the
/// projection of `pose` onto `path` (clamped to the path end).
pub fn pure_pursuit_steer(pose: Pose2, path: &Polyline, lookahead: f64, wheelbase: f64) -> f64 {
    let s = path.project(pose.position).s;
    let target = path.point_at((s + lookahead).min(path.length()));
    let local = pose.transform_to_local(target);
    if local.norm() <= 1e-12 {
        return 0.0;
    }
    let alpha = local.y.atan2(local.x);
    (2.0 * wheelbase * alpha.sin() / lookahead).atan()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalColor {
    Red,
    Yellow,
    Green,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalPhase {
    pub color: SignalColor,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProgram")]
pub struct SignalProgram {
    phases: Vec<SignalPhase>,
    #[serde(default)]
    offset: f64,
}

#[derive(Deserialize)]
struct RawProgram {
    phases: Vec<SignalPhase>,
    #[serde(default)]
    offset: f64,
}

impl TryFrom<RawProgram> for SignalProgram {
    type Error = AgentError;
    fn try_from(r: RawProgram) -> Result<Self, AgentError> {
        SignalProgram::new(r.phases, r.offset)
    }
}

impl SignalProgram {
    pub fn new(phases: Vec<SignalPhase>, offset: f64) -> Result<Self, AgentError> {
        if phases.is_empty() {
            return Err(AgentError::Config("signal program without phases".into()));
        }
        if phases
            .iter()
            .any(|p| !(p.duration.is_finite() && p.duration > 0.0))
        {
            return Err(AgentError::Config(
                "signal phase durations must be positive".into(),
            ));
        }
        if !offset.is_finite() {
            return Err(AgentError::Config("signal offset must be finite".into()));
        }
        Ok(Self { phases, offset })
    }

    pub fn phases(&self) -> &[SignalPhase] {
        &self.phases
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn cycle_length(&self) -> f64 {
        self.phases.iter().map(|p| p.duration).sum()
    }
}

pub fn signal_state_at(program: &SignalProgram, t: f64) -> SignalColor {
    let cycle = program.cycle_length();
    let local = (t - program.offset).rem_euclid(cycle);
    let mut end = 0.0;
    for phase in &program.phases {
        end += phase.duration;
        if local < end {
            return phase.color;
        }
    }
    program.phases[program.phases.len() - 1].color
}
