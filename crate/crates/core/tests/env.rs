mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use proptest::prelude::*;
use serde_json::json;

use roadsim_core::agents::{Action, ParticipantClass, ParticipantId, ParticipantView, WorldView};
use roadsim_core::env::{
    scenario_catalog, EnvError, Environment, Goal, ParkingScoring, PolicyRegistry, RacingScoring,
    ScenarioConfig, ScenarioKind, ScoreContext, Scoring, TrafficScoring, COMPLETION_BONUS,
    DEFAULT_SPEED_LIMIT,
};
use roadsim_core::events::{EventKind, EventRecord, Severity};
use roadsim_core::map::TrafficMap;

use common::{car_at, repo_root, DT};

const SCENARIOS: [&str; 5] = ["highway", "intersection", "parking", "racing", "roundabout"];

fn scenario_path(name: &str) -> std::path::PathBuf {
    repo_root().join("scenarios").join(format!("{name}.json"))
}

/// Merges `body` into a highway scenario on the bundled highway map.
fn config(body: serde_json::Value, base: &Path) -> ScenarioConfig {
    let mut doc = json!({
        "kind": "highway",
        "map": { "path": repo_root().join("scenarios/maps/highway.osm") },
        "dt": DT,
        "max_steps": 200
    });
    for (k, v) in body.as_object().unwrap() {
        doc[k] = v.clone();
    }
    ScenarioConfig::from_json(&doc.to_string(), base).unwrap()
}

/// A generic-schema dataset holding one car parked at `x` in the first lane.
fn parked_car_dataset(dir: &Path, x: f64) -> std::path::PathBuf {
    let path = dir.join("parked.csv");
    let mut csv = String::from("track_id,t,x,y,heading,speed,class,length,width\n");
    for k in 0..400 {
        csv.push_str(&format!(
            "7,{:.1},{x},1.875,0,0,car,4.5,1.8\n",
            k as f64 * DT
        ));
    }
    std::fs::write(&path, csv).unwrap();
    path
}

fn idle(env: &Environment) -> BTreeMap<ParticipantId, Action> {
    env.world()
        .unwrap()
        .live_agents()
        .map(|id| (id, Action::new(0.0, 0.0)))
        .collect()
}

fn lone_agent(kind: &str) -> ScenarioConfig {
    config(
        json!({
            "kind": kind,
            "agents": [{ "id": 1, "spawn": { "x": 50.0, "y": 1.875, "heading": 0.0 } }]
        }),
        &repo_root(),
    )
}

#[test]
fn same_seed_gives_identical_worlds_and_observations() {
    for name in SCENARIOS {
        let mut a = Environment::load(scenario_path(name)).unwrap();
        let mut b = Environment::load(scenario_path(name)).unwrap();
        assert_eq!(a.reset(5).unwrap(), b.reset(5).unwrap(), "{name}");
        for _ in 0..20 {
            let ra = a.step(&idle(&a)).unwrap();
            let rb = b.step(&idle(&b)).unwrap();
            assert_eq!(ra, rb, "{name}");
        }
        let views = |e: &Environment| {
            e.world()
                .unwrap()
                .participants()
                .map(|p| p.view())
                .collect::<Vec<_>>()
        };
        assert_eq!(views(&a), views(&b), "{name}");
    }
}

#[test]
fn spawning_inside_the_goal_completes_on_the_first_step() {
    let cfg = config(
        json!({
            "agents": [{ "id": 1, "spawn": { "x": 50.0, "y": 1.875, "heading": 0.0 } }],
            "goal": { "region": [
                { "x": 45.0, "y": 0.0 }, { "x": 55.0, "y": 0.0 }, { "x": 55.0, "y": 3.75 }, { "x": 45.0, "y": 3.75 }
            ] }
        }),
        &repo_root(),
    );
    let mut env = Environment::new(cfg).unwrap();
    env.reset(0).unwrap();
    let r = env.step(&idle(&env)).unwrap();
    assert_eq!(r.step, 1);
    assert!(r
        .info
        .events
        .iter()
        .any(|e| e.kind == EventKind::RouteComplete));
    assert!(r.agents[&ParticipantId(1)].terminated);
}

#[test]
fn missing_map_error_names_the_path() {
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(scenario_path("racing")).unwrap()).unwrap();
    doc["map"]["path"] = json!("maps/does_not_exist.osm");
    let cfg = ScenarioConfig::from_json(&doc.to_string(), repo_root().join("scenarios")).unwrap();
    let err = Environment::new(cfg)
        .and_then(|mut e| e.reset(0).map(|_| ()))
        .unwrap_err();
    assert!(err.to_string().contains("does_not_exist.osm"), "{err}");
}

#[test]
fn lone_static_agent_gets_the_default_reward() {
    let mut env = Environment::new(lone_agent("highway")).unwrap();
    env.reset(0).unwrap();
    let r = env.step(&idle(&env)).unwrap();
    let me = &r.agents[&ParticipantId(1)];
    assert_eq!(me.reward, 0.0);
    assert!(!me.terminated && !me.truncated);
    assert!(r.info.events.is_empty());
}

#[test]
fn driving_into_a_replay_vehicle_terminates() {
    let dir = tempfile::tempdir().unwrap();
    let data = parked_car_dataset(dir.path(), 80.0);
    let cfg = config(
        json!({
            "traffic": { "dataset": { "path": data, "schema": "generic" } },
            "agents": [{ "id": 1, "spawn": { "x": 60.0, "y": 1.875, "heading": 0.0, "speed": 10.0 } }]
        }),
        dir.path(),
    );
    let mut env = Environment::new(cfg).unwrap();
    env.reset(0).unwrap();
    let mut hit = None;
    for _ in 0..50 {
        let r = env
            .step(&BTreeMap::from([(ParticipantId(1), Action::new(3.0, 0.0))]))
            .unwrap();
        if r.agents[&ParticipantId(1)].terminated {
            hit = Some(r);
            break;
        }
    }
    let r = hit.expect("agent reaches the parked car");
    let collision = r
        .info
        .events
        .iter()
        .find(|e| e.kind == EventKind::Collision)
        .unwrap();
    assert_eq!(
        collision.participants,
        vec![ParticipantId(1), ParticipantId(7)]
    );
    // collision penalty plus a speed term in [0, 1]
    assert!(r.agents[&ParticipantId(1)].reward < -99.0);
    assert!(env.world().unwrap().is_done());
    match env.step(&BTreeMap::new()) {
        Err(EnvError::Contract(_)) => {}
        other => panic!("expected contract error, got {other:?}"),
    }
}

#[test]
fn reaching_max_steps_truncates() {
    let mut cfg = lone_agent("highway");
    cfg.max_steps = 3;
    let mut env = Environment::new(cfg).unwrap();
    env.reset(0).unwrap();
    for k in 1..=3 {
        let r = env.step(&idle(&env)).unwrap();
        let me = &r.agents[&ParticipantId(1)];
        assert_eq!(me.truncated, k == 3);
        assert!(!me.terminated);
    }
    assert!(env.world().unwrap().is_done());
}

#[test]
fn parking_at_the_goal_pose_scores_zero_before_the_bonus() {
    let mut env = Environment::load(scenario_path("parking")).unwrap();
    let goal = env.config().goal_region().unwrap().unwrap();
    let c = goal.centroid();
    let mut cfg = env.config().clone();
    let heading = cfg.goal.as_ref().unwrap().heading.unwrap();
    cfg.agents[0].jitter = None;
    cfg.agents[0].spawn =
        Some(serde_json::from_value(json!({ "x": c.x, "y": c.y, "heading": heading })).unwrap());
    env = Environment::new(cfg).unwrap();
    env.reset(0).unwrap();
    let r = env.step(&idle(&env)).unwrap();
    assert!((r.agents[&ParticipantId(1)].reward - COMPLETION_BONUS).abs() < 1e-9);

    let map = TrafficMap::default();
    let at_goal = [car_at(1, c.x, c.y, heading, 0.0)];
    let view = WorldView {
        map: &map,
        time: 0.0,
        dt: DT,
        participants: &at_goal,
    };
    let g = Goal {
        region: goal,
        heading: Some(heading),
    };
    let ctx = ScoreContext {
        agent: ParticipantId(1),
        before: view,
        after: view,
        events: &[],
        goal: Some(&g),
        reference: None,
    };
    assert!(ParkingScoring.score(&ctx).abs() < 1e-9);
}

#[test]
fn racing_static_agent_makes_no_progress() {
    let mut env = Environment::load(scenario_path("racing")).unwrap();
    env.reset(0).unwrap();
    for _ in 0..5 {
        let r = env.step(&idle(&env)).unwrap();
        assert_eq!(r.agents[&ParticipantId(1)].reward, 0.0);
    }
    let map = TrafficMap::default();
    let me = [car_at(1, 0.0, 0.0, 0.0, 0.0)];
    let view = WorldView {
        map: &map,
        time: 0.0,
        dt: DT,
        participants: &me,
    };
    let ctx = ScoreContext {
        agent: ParticipantId(1),
        before: view,
        after: view,
        events: &[],
        goal: None,
        reference: None,
    };
    assert_eq!(RacingScoring.score(&ctx), 0.0);
}

#[test]
fn red_light_run_costs_one() {
    let map = TrafficMap::default();
    let stopped = [car_at(1, 0.0, 0.0, 0.0, 0.0)];
    let view = WorldView {
        map: &map,
        time: 0.0,
        dt: DT,
        participants: &stopped,
    };
    let event = EventRecord::new(
        EventKind::RedLightRun,
        Severity::Violation,
        0.1,
        vec![ParticipantId(1)],
        "red",
    );
    let events = [&event];
    let ctx = ScoreContext {
        agent: ParticipantId(1),
        before: view,
        after: view,
        events: &events,
        goal: None,
        reference: None,
    };
    assert_eq!(TrafficScoring.score(&ctx), -1.0);

    let moving = [car_at(1, 0.0, 0.0, 0.0, DEFAULT_SPEED_LIMIT / 2.0)];
    let after = WorldView {
        participants: &moving,
        ..view
    };
    let ctx = ScoreContext { after, ..ctx };
    assert!((TrafficScoring.score(&ctx) - (0.5 - 1.0)).abs() < 1e-12);
}

#[test]
fn red_light_run_in_an_episode() {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/two_lane.osm");
    let cfg = config(
        json!({
            "map": { "path": fixture },
            "signals": { "9000": { "phases": [{ "color": "red", "duration": 60.0 }], "offset": 0.0 } },
            "agents": [{ "id": 1, "spawn": { "x": 50.0, "y": 1.75, "heading": 0.0, "speed": 5.0 } }]
        }),
        &repo_root(),
    );
    let mut env = Environment::new(cfg).unwrap();
    env.reset(0).unwrap();
    let mut runs = 0;
    for _ in 0..20 {
        let r = env.step(&idle(&env)).unwrap();
        let me = &r.agents[&ParticipantId(1)];
        if r.info
            .events
            .iter()
            .any(|e| e.kind == EventKind::RedLightRun)
        {
            runs += 1;
            // speed term in [0, 1] minus one violation
            assert!((-1.0..0.0).contains(&me.reward), "{}", me.reward);
        }
    }
    assert_eq!(runs, 1);
}

#[test]
fn catalog_families_and_adapters() {
    let catalog = scenario_catalog();
    let families: Vec<_> = catalog.iter().map(|e| e.family).collect();
    assert_eq!(
        families,
        vec![
            "highway",
            "intersection",
            "roundabout",
            "parking lot",
            "racing"
        ]
    );
    let highway = catalog.iter().find(|e| e.family == "highway").unwrap();
    assert_eq!(highway.kind, ScenarioKind::Highway);
    let adapters = highway.adapters();
    assert!(adapters.contains(&"levelx_like") && adapters.contains(&"interaction_like"));
    let pairs: Vec<(&str, &str, usize)> = catalog
        .iter()
        .flat_map(|e| {
            e.datasets
                .iter()
                .map(move |d| (e.family, d.dataset, d.maps))
        })
        .collect();
    assert_eq!(
        pairs,
        vec![
            ("highway", "highD", 6),
            ("highway", "INTERACTION", 2),
            ("intersection", "inD", 4),
            ("intersection", "INTERACTION", 5),
            ("roundabout", "rounD", 3),
            ("roundabout", "INTERACTION", 5),
            ("parking lot", "ParkPredict", 1),
        ]
    );
    let racing = catalog.iter().find(|e| e.family == "racing").unwrap();
    assert!(racing.adapters().is_empty());
}

#[test]
fn custom_scoring_is_used_and_unknown_ids_fail() {
    let mut cfg = lone_agent("highway");
    cfg.scoring = Some("constant".into());
    let mut env = Environment::new(cfg).unwrap();
    env.reset(0).unwrap();
    assert!(matches!(env.step(&idle(&env)), Err(EnvError::UnknownScoring(id)) if id == "constant"));

    env.register_scoring("constant", Arc::new(|_: &ScoreContext| 2.5))
        .unwrap();
    env.reset(0).unwrap();
    assert_eq!(
        env.step(&idle(&env)).unwrap().agents[&ParticipantId(1)].reward,
        2.5
    );
    assert!(env
        .register_scoring("", Arc::new(|_: &ScoreContext| 0.0))
        .is_err());
}

#[test]
fn overlapping_spawns_are_rejected() {
    let cfg = config(
        json!({
            "agents": [
                { "id": 1, "spawn": { "x": 50.0, "y": 1.875, "heading": 0.0 } },
                { "id": 2, "spawn": { "x": 51.0, "y": 1.875, "heading": 0.0 } }
            ]
        }),
        &repo_root(),
    );
    let err = Environment::new(cfg)
        .and_then(|mut e| e.reset(0).map(|_| ()))
        .unwrap_err();
    assert!(matches!(err, EnvError::Spawn { .. }), "{err}");
}

#[test]
fn missing_actions_and_early_steps_are_errors() {
    let mut env = Environment::new(lone_agent("highway")).unwrap();
    assert!(matches!(
        env.step(&BTreeMap::new()),
        Err(EnvError::Contract(_))
    ));
    env.reset(0).unwrap();
    assert!(matches!(
        env.step(&BTreeMap::new()),
        Err(EnvError::MissingAction(ParticipantId(1)))
    ));
}

#[test]
fn spaces_describe_observations() {
    for name in SCENARIOS {
        let mut env = Environment::load(scenario_path(name)).unwrap();
        let obs = env.reset(1).unwrap();
        for (id, o) in &obs {
            let spec = env.world().unwrap().participant(*id).unwrap().spec;
            let actions = env.action_space(*id).unwrap();
            assert_eq!(actions.low, vec![-spec.max_decel, -spec.max_steer]);
            assert_eq!(actions.high, vec![spec.max_accel, spec.max_steer]);
            let space = env.observation_space(*id).unwrap();
            assert_eq!(space.bev.is_some(), o.bev.is_some(), "{name}");
            if let (Some(s), Some(g)) = (&space.bev, &o.bev) {
                let cells: Vec<f64> = g.data().iter().map(|v| *v as f64).collect();
                assert!(s.contains(&cells), "{name}");
            }
            assert_eq!(space.lidar.is_some(), o.lidar.is_some(), "{name}");
            if let (Some(s), Some(r)) = (&space.lidar, &o.lidar) {
                assert!(s.contains(r), "{name}");
            }
            assert_eq!(space.vectors.is_some(), o.vectors.is_some(), "{name}");
            if let (Some(s), Some(v)) = (&space.vectors, &o.vectors) {
                assert!(v.len() <= s.shape[0], "{name}");
            }
        }
    }
}

/// Agent 1 drives into a parked replay car while agent 2 acts randomly in
/// another lane.
fn absorbing_config(dir: &Path) -> ScenarioConfig {
    let data = parked_car_dataset(dir, 75.0);
    config(
        json!({
            "traffic": { "dataset": { "path": data, "schema": "generic" } },
            "agents": [
                { "id": 1, "spawn": { "x": 60.0, "y": 1.875, "heading": 0.0, "speed": 8.0 } },
                { "id": 2, "spawn": { "x": 60.0, "y": 9.375, "heading": 0.0, "speed": 8.0 } }
            ],
            "max_steps": 80
        }),
        dir,
    )
}

fn state_of(env: &Environment, id: i64) -> ParticipantView {
    env.world()
        .unwrap()
        .participant(ParticipantId(id))
        .unwrap()
        .view()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn time_advances_by_dt_and_the_map_is_untouched(
        scenario in 0usize..SCENARIOS.len(),
        seed in 0u64..1000,
        policy in prop_oneof![Just("idle"), Just("random"), Just("idm")],
    ) {
        let mut env = Environment::load(scenario_path(SCENARIOS[scenario])).unwrap();
        let map_before = env.map().to_json();
        env.reset(seed).unwrap();
        let mut pol = PolicyRegistry::with_builtins().create(policy, seed).unwrap();
        let dt = env.config().dt;
        for k in 1..=60 {
            if env.world().unwrap().is_done() {
                break;
            }
            let actions = env.policy_actions(pol.as_mut());
            let r = env.step(&actions).unwrap();
            prop_assert_eq!(r.step, k);
            prop_assert!((r.time - k as f64 * dt).abs() < 1e-9);
            prop_assert!((env.world().unwrap().time() - r.time).abs() < 1e-12);
            for a in r.agents.values() {
                prop_assert!(a.reward.is_finite());
            }
        }
        prop_assert_eq!(env.map().to_json(), map_before);
    }

    #[test]
    fn termination_is_absorbing(seed in 0u64..1000, push in 0.5..3.0f64) {
        let dir = tempfile::tempdir().unwrap();
        let mut env = Environment::new(absorbing_config(dir.path())).unwrap();
        env.reset(seed).unwrap();
        let mut random = PolicyRegistry::with_builtins().create("random", seed).unwrap();
        let mut frozen: Option<ParticipantView> = None;
        while !env.world().unwrap().is_done() {
            let mut actions = env.policy_actions(random.as_mut());
            if let Some(a) = actions.get_mut(&ParticipantId(1)) {
                *a = Action::new(push, 0.0);
            }
            let r = env.step(&actions).unwrap();
            if let Some(s) = frozen {
                prop_assert_eq!(state_of(&env, 1).state, s.state);
                prop_assert!(!r.agents.contains_key(&ParticipantId(1)) || r.agents[&ParticipantId(1)].reward == 0.0);
            } else if r.agents.get(&ParticipantId(1)).is_some_and(|a| a.terminated) {
                frozen = Some(state_of(&env, 1));
            }
        }
        prop_assert!(frozen.is_some());
    }
}

#[test]
fn pedestrian_agents_are_supported() {
    let cfg = config(
        json!({
            "agents": [{ "id": 1, "class": "pedestrian", "spawn": { "x": 50.0, "y": -3.0, "heading": 0.0 } }]
        }),
        &repo_root(),
    );
    let mut env = Environment::new(cfg).unwrap();
    env.reset(0).unwrap();
    let r = env
        .step(&BTreeMap::from([(ParticipantId(1), Action::new(1.0, 0.5))]))
        .unwrap();
    assert!(r.info.events.is_empty(), "{:?}", r.info.events);
    assert_eq!(
        env.world()
            .unwrap()
            .participant(ParticipantId(1))
            .unwrap()
            .spec
            .class,
        ParticipantClass::Pedestrian
    );
}

#[test]
fn serialized_configs_use_documented_keys() {
    let schema: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(repo_root().join("docs/scenario.schema.json")).unwrap(),
    )
    .unwrap();
    let documented = schema["properties"].as_object().unwrap();
    for name in SCENARIOS {
        let cfg = ScenarioConfig::load(scenario_path(name)).unwrap();
        let doc: serde_json::Value = serde_json::from_str(&cfg.to_json()).unwrap();
        for key in doc.as_object().unwrap().keys() {
            assert!(documented.contains_key(key), "{name}: {key}");
        }
        let back = ScenarioConfig::from_json(&cfg.to_json(), cfg.base_dir.clone()).unwrap();
        assert_eq!(back, cfg, "{name}");
    }
}
