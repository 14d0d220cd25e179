//! Built-in agent policies used by headless runs.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;

use crate::agents::{
    Action, BehaviorModel, Decision, IdmModel, IdmModelParams, ParticipantId, ParticipantSpec,
    WorldView,
};
use crate::rng::{substream, SimRng};

pub trait Policy: Send {
    fn name(&self) -> &str;
    fn act(&mut self, view: &WorldView, agent: ParticipantId, spec: &ParticipantSpec) -> Action;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdlePolicy;

impl Policy for IdlePolicy {
    fn name(&self) -> &str {
        "idle"
    }

    fn act(&mut self, _: &WorldView, _: ParticipantId, _: &ParticipantSpec) -> Action {
        Action::IDLE
    }
}

/// Uniform actions within the agent's limits.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: SimRng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: substream(seed, "policy_random"),
        }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn act(&mut self, _: &WorldView, _: ParticipantId, spec: &ParticipantSpec) -> Action {
        let accel = self.rng.random_range(-spec.max_decel..=spec.max_accel);
        let steer = self.rng.random_range(-spec.max_steer..=spec.max_steer);
        Action::new(accel, steer)
    }
}

/// Lane following with the car-following model, one instance per agent.
#[derive(Debug, Default)]
pub struct IdmPolicy {
    models: BTreeMap<ParticipantId, IdmModel>,
}

impl Policy for IdmPolicy {
    fn name(&self) -> &str {
        "idm"
    }

    fn act(&mut self, view: &WorldView, agent: ParticipantId, _: &ParticipantSpec) -> Action {
        let model = self.models.entry(agent).or_insert_with(|| {
            IdmModel::new(IdmModelParams::default()).expect("default parameters are valid")
        });
        match model.decide(view, agent) {
            Ok(Decision::Act(a)) => a,
            _ => Action::IDLE,
        }
    }
}

pub type PolicyFactory = Box<dyn Fn(u64) -> Box<dyn Policy> + Send + Sync>;

pub struct PolicyRegistry {
    factories: BTreeMap<String, PolicyFactory>,
}

impl fmt::Debug for PolicyRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}

impl PolicyRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register("idle", Box::new(|_| Box::new(IdlePolicy)));
        r.register("random", Box::new(|seed| Box::new(RandomPolicy::new(seed))));
        r.register("idm", Box::new(|_| Box::<IdmPolicy>::default()));
        r
    }

    pub fn register(&mut self, name: impl Into<String>, factory: PolicyFactory) {
        self.factories.insert(name.into(), factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    /// Instantiates the policy for an episode seeded with `seed`.
    pub fn create(&self, name: &str, seed: u64) -> Option<Box<dyn Policy>> {
        self.factories.get(name).map(|f| f(seed))
    }
}

impl Default for PolicyRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}
