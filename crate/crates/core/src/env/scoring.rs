//! Pluggable per-step reward functions.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::agents::{ParticipantId, ParticipantView, WorldView};
use crate::events::{EventKind, EventRecord, Severity};
use crate::geometry::{angle_diff, ConvexPolygon, Polyline};

use super::config::ScenarioKind;

/// Speed limit assumed on lanes that carry none (m/s).
pub const DEFAULT_SPEED_LIMIT: f64 = 13.89;
pub const COLLISION_PENALTY: f64 = 100.0;
pub const COMPLETION_BONUS: f64 = 100.0;
pub const VIOLATION_PENALTY: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Goal {
    pub region: ConvexPolygon,
    pub heading: Option<f64>,
}

/// Everything a scoring function may read about one agent's step.
#[derive(Debug, Clone, Copy)]
pub struct ScoreContext<'a> {
    pub agent: ParticipantId,
    pub before: WorldView<'a>,
    pub after: WorldView<'a>,
    /// Events of this step involving the agent.
    pub events: &'a [&'a EventRecord],
    pub goal: Option<&'a Goal>,
    pub reference: Option<&'a Polyline>,
}

impl<'a> ScoreContext<'a> {
    pub fn agent_before(&self) -> Option<&'a ParticipantView> {
        self.before.get(self.agent)
    }

    pub fn agent_after(&self) -> Option<&'a ParticipantView> {
        self.after.get(self.agent)
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    pub fn count_severity(&self, severity: Severity) -> usize {
        self.events
            .iter()
            .filter(|e| e.severity == severity)
            .count()
    }
}

/// Reads world snapshots and returns a reward; must not mutate anything.
pub trait Scoring: Send + Sync {
    fn score(&self, ctx: &ScoreContext) -> f64;
}

impl<F> Scoring for F
where
    F: Fn(&ScoreContext) -> f64 + Send + Sync,
{
    fn score(&self, ctx: &ScoreContext) -> f64 {
        self(ctx)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParkingScoring;

impl Scoring for ParkingScoring {
    fn score(&self, ctx: &ScoreContext) -> f64 {
        let mut r = 0.0;
        if let (Some(goal), Some(a)) = (ctx.goal, ctx.agent_after()) {
            let c = a.center();
            r -= c.position.distance(goal.region.centroid()) / 10.0;
            if let Some(h) = goal.heading {
                r -= angle_diff(c.heading, h).abs();
            }
        }
        if ctx.count(EventKind::RouteComplete) > 0 {
            r += COMPLETION_BONUS;
        }
        r
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RacingScoring;

/// Arc-length progress along `line`, wrapped for closed circuits.
pub fn progress(line: &Polyline, before: &ParticipantView, after: &ParticipantView) -> f64 {
    let s0 = line.project(before.center().position).s;
    let s1 = line.project(after.center().position).s;
    let mut ds = s1 - s0;
    let len = line.length();
    if line.first().distance(line.last()) < 1e-6 {
        if ds > len / 2.0 {
            ds -= len;
        } else if ds < -len / 2.0 {
            ds += len;
        }
    }
    ds
}

impl Scoring for RacingScoring {
    fn score(&self, ctx: &ScoreContext) -> f64 {
        let mut r = match (ctx.reference, ctx.agent_before(), ctx.agent_after()) {
            (Some(line), Some(b), Some(a)) => progress(line, b, a),
            _ => 0.0,
        };
        if ctx.count(EventKind::Collision) > 0 {
            r -= COLLISION_PENALTY;
        }
        r
    }
}

/// Speed relative to the local limit with per-violation penalties.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrafficScoring;

fn local_speed_limit(view: &WorldView, agent: &ParticipantView) -> f64 {
    let c = agent.center();
    view.map
        .best_aligned_lane(c.position, c.heading, |_| true)
        .and_then(|(id, _)| view.map.lanes[&id].speed_limit)
        .filter(|l| *l > 0.0)
        .unwrap_or(DEFAULT_SPEED_LIMIT)
}

impl Scoring for TrafficScoring {
    fn score(&self, ctx: &ScoreContext) -> f64 {
        let mut r = match ctx.agent_after() {
            Some(a) => (a.state.speed / local_speed_limit(&ctx.after, a)).clamp(0.0, 1.0),
            None => 0.0,
        };
        r -= VIOLATION_PENALTY * ctx.count_severity(Severity::Violation) as f64;
        if ctx.count(EventKind::Collision) > 0 {
            r -= COLLISION_PENALTY;
        }
        r
    }
}

pub fn default_scoring(kind: ScenarioKind) -> Arc<dyn Scoring> {
    match kind {
        ScenarioKind::Parking => Arc::new(ParkingScoring),
        ScenarioKind::Racing => Arc::new(RacingScoring),
        ScenarioKind::Highway | ScenarioKind::Urban | ScenarioKind::Roundabout => {
            Arc::new(TrafficScoring)
        }
    }
}

#[derive(Clone)]
pub struct ScoringRegistry {
    entries: BTreeMap<String, Arc<dyn Scoring>>,
}

impl fmt::Debug for ScoringRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}

impl ScoringRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    /// One entry per scenario kind, keyed by the kind name.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        for kind in ScenarioKind::ALL {
            r.entries
                .insert(kind.as_str().to_string(), default_scoring(kind));
        }
        r
    }

    /// Adds or replaces a scoring function. Empty ids are rejected.
    pub fn register(
        &mut self,
        id: impl Into<String>,
        scoring: Arc<dyn Scoring>,
    ) -> Result<(), String> {
        let id = id.into();
        if id.is_empty() {
            return Err("scoring id must not be empty".into());
        }
        self.entries.insert(id, scoring);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<Arc<dyn Scoring>> {
        self.entries.get(id).cloned()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

impl Default for ScoringRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}
