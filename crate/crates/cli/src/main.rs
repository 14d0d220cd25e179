use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use thiserror::Error;

use roadsim_core::agents::{ParticipantId, SignalProgram};
use roadsim_core::audit::audit_replay;
use roadsim_core::env::{
    bench, format_number, EnvError, Environment, EpisodeLog, PolicyRegistry, ScenarioConfig,
};
use roadsim_core::map::{Id, TrafficMap};
use roadsim_core::parsers::{parse_map, MapFormat};
use roadsim_core::sensors::BevSpec;
use roadsim_core::traffic::{align, parse_tracks, AlignmentSpec};

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Invalid(_) => 2,
        }
    }
}

impl From<EnvError> for CliError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn parse_origin(s: &str) -> Result<(f64, f64), String> {
    let (lat, lon) = s.split_once(',').ok_or("expected 'lat,lon'")?;
    let lat: f64 = lat
        .trim()
        .parse()
        .map_err(|_| format!("bad latitude '{lat}'"))?;
    let lon: f64 = lon
        .trim()
        .parse()
        .map_err(|_| format!("bad longitude '{lon}'"))?;
    Ok((lat, lon))
}

#[derive(Debug, Parser)]
#[command(
    name = "roadsim",
    version,
    about = "Driving scenario engine batch tool"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a map and report element counts and warnings.
    ValidateMap {
        file: PathBuf,
        #[arg(long)]
        format: Option<MapFormat>,
        /// Projection origin for OSM maps.
        #[arg(long, value_parser = parse_origin)]
        origin: Option<(f64, f64)>,
        /// Write the parsed map as JSON.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Replay recorded tracks through the event detector and write an audit report.
    Replay {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        schema: String,
        /// Dataset-to-map transform `dx,dy,dtheta,dt`.
        #[arg(long, allow_hyphen_values = true)]
        align: Option<AlignmentSpec>,
        /// JSON object of signal programs keyed by traffic-light group id.
        #[arg(long)]
        signals: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Record wall-clock duration in the report.
        #[arg(long)]
        timing: bool,
    },
    /// Run a scenario with a built-in policy and write an episode log.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "idle")]
        policy: String,
        /// Step budget; defaults to the scenario's max_steps.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Write BEV frames of the first agent as PPM composites and per-channel PGMs.
    ExportFrames {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        steps: u64,
        /// `WxH,resolution`.
        #[arg(long)]
        bev: BevSpec,
        #[arg(long, default_value = "idle")]
        policy: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure step latency and throughput.
    Bench {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        steps: u64,
        #[arg(long, default_value = "idle")]
        policy: String,
        /// Strip all agent sensors.
        #[arg(long)]
        no_sensors: bool,
        /// Give every agent a BEV camera `WxH,resolution`.
        #[arg(long)]
        bev: Option<BevSpec>,
    },
}

fn load_map(
    file: &Path,
    format: Option<MapFormat>,
    origin: Option<(f64, f64)>,
) -> Result<TrafficMap, CliError> {
    let text = read(file)?;
    let format = match format.or_else(|| MapFormat::from_path(file)) {
        Some(f) => f,
        None => {
            return Err(CliError::Invalid(format!(
                "cannot infer map format of {}; pass --format osm|xodr",
                file.display()
            )))
        }
    };
    parse_map(&text, format, origin, None)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", file.display())))
}

fn validate_map(
    file: &Path,
    format: Option<MapFormat>,
    origin: Option<(f64, f64)>,
    dump: Option<&Path>,
) -> Result<(), CliError> {
    let map = load_map(file, format, origin)?;
    println!("lanes: {}", map.lanes.len());
    println!("linestrings: {}", map.linestrings.len());
    println!("regulatory_elements: {}", map.regulatory_elements.len());
    println!("areas: {}", map.areas.len());
    println!("warnings: {}", map.warnings.len());
    for w in &map.warnings {
        println!("  - {w}");
    }
    if let Some(path) = dump {
        write(path, map.to_json())?;
    }
    Ok(())
}

fn replay(
    map: &Path,
    tracks: &Path,
    schema: &str,
    alignment: Option<AlignmentSpec>,
    signals: Option<&Path>,
    out: &Path,
    timing: bool,
) -> Result<(), CliError> {
    let started = Instant::now();
    let map = load_map(map, None, None)?;
    let csv = read(tracks)?;
    let mut dataset = parse_tracks(schema, &csv)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", tracks.display())))?;
    if let Some(a) = alignment {
        dataset = align(&dataset, &a);
    }
    let programs: BTreeMap<Id, SignalProgram> = match signals {
        Some(p) => serde_json::from_str(&read(p)?)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?,
        None => BTreeMap::new(),
    };
    let mut report = audit_replay(&map, &dataset, &programs);
    if timing {
        report.duration_s = Some(started.elapsed().as_secs_f64());
    }
    write(out, report.to_json())?;
    let violations: usize = report
        .totals
        .values()
        .flat_map(|m| m.iter())
        .filter(|(s, _)| s.as_str() == "violation" || s.as_str() == "fatal")
        .map(|(_, n)| n)
        .sum();
    println!("tracks: {}", report.tracks.len());
    println!("frames: {}", report.frames);
    println!("events: {}", report.events.len());
    println!("violations: {violations}");
    Ok(())
}

fn make_policy(name: &str, seed: u64) -> Result<Box<dyn roadsim_core::env::Policy>, CliError> {
    let registry = PolicyRegistry::with_builtins();
    registry.create(name, seed).ok_or_else(|| {
        let known: Vec<&str> = registry.names().collect();
        CliError::Invalid(format!(
            "unknown policy '{name}' (known: {})",
            known.join(", ")
        ))
    })
}

fn run(
    scenario: &Path,
    seed: u64,
    policy: &str,
    steps: Option<usize>,
    log: Option<&Path>,
) -> Result<(), CliError> {
    let mut policy = make_policy(policy, seed)?;
    let mut env = Environment::load(scenario)?;
    let steps = steps.unwrap_or(env.config().max_steps);
    env.reset(seed)?;
    let mut writer = match log {
        Some(p) => Some(EpisodeLog::new(BufWriter::new(
            fs::File::create(p)
                .map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display())))?,
        ))),
        None => None,
    };
    let mut totals: BTreeMap<ParticipantId, f64> =
        env.agent_ids().into_iter().map(|id| (id, 0.0)).collect();
    for _ in 0..steps {
        if env.world().is_some_and(|w| w.is_done()) {
            break;
        }
        let actions = env.policy_actions(policy.as_mut());
        let result = env.step(&actions)?;
        for (id, a) in &result.agents {
            *totals.entry(*id).or_default() += a.reward;
        }
        if let Some(w) = writer.as_mut() {
            w.write_step(&result)
                .map_err(|e| CliError::Io(format!("cannot write log: {e}")))?;
        }
    }
    if let Some(w) = writer {
        w.finish()
            .map_err(|e| CliError::Io(format!("cannot write log: {e}")))?;
    }
    for (id, total) in totals {
        println!("agent {id}: total reward {}", format_number(total));
    }
    Ok(())
}

fn export_frames(
    scenario: &Path,
    seed: u64,
    steps: u64,
    bev: BevSpec,
    policy: &str,
    out: &Path,
) -> Result<(), CliError> {
    let mut policy = make_policy(policy, seed)?;
    let mut config = ScenarioConfig::load(scenario)?;
    let first = config
        .agents
        .iter()
        .map(|a| a.id)
        .min()
        .ok_or_else(|| CliError::Invalid("scenario has no agents".into()))?;
    for a in config.agents.iter_mut().filter(|a| a.id == first) {
        a.sensors.bev = Some(bev.clone());
    }
    let mut env = Environment::new(config)?;
    fs::create_dir_all(out)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", out.display())))?;
    let mut frame = env.reset(seed)?.remove(&first).and_then(|o| o.bev);
    let width = (steps.saturating_sub(1)).to_string().len().max(5);
    for k in 0..steps {
        let Some(grid) = frame.take() else {
            break;
        };
        let stem = format!("frame_{k:0width$}");
        write(&out.join(format!("{stem}.ppm")), grid.composite_ppm())?;
        for (c, class) in grid.classes.iter().enumerate() {
            write(
                &out.join(format!("{stem}_{}.pgm", class.as_str())),
                grid.channel_pgm(c),
            )?;
        }
        if k + 1 == steps || env.world().is_some_and(|w| w.is_done()) {
            break;
        }
        let actions = env.policy_actions(policy.as_mut());
        let mut result = env.step(&actions)?;
        frame = result.agents.remove(&first).and_then(|a| a.observation.bev);
    }
    println!("frames written to {}", out.display());
    Ok(())
}

fn bench_cmd(
    scenario: &Path,
    seed: u64,
    steps: u64,
    policy: &str,
    no_sensors: bool,
    bev: Option<BevSpec>,
) -> Result<(), CliError> {
    let mut policy = make_policy(policy, seed)?;
    let mut config = ScenarioConfig::load(scenario)?;
    for a in &mut config.agents {
        if no_sensors {
            a.sensors = Default::default();
        }
        if let Some(b) = &bev {
            a.sensors.bev = Some(b.clone());
        }
    }
    let mut env = Environment::new(config)?;
    let report = bench(&mut env, policy.as_mut(), seed, steps as usize)?;
    println!("steps: {}", report.steps);
    println!("mean_latency_ms: {:.6}", report.mean_latency * 1e3);
    println!("p95_latency_ms: {:.6}", report.p95_latency * 1e3);
    println!("steps_per_second: {:.1}", report.steps_per_second);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::ValidateMap {
            file,
            format,
            origin,
            dump,
        } => validate_map(&file, format, origin, dump.as_deref()),
        Command::Replay {
            map,
            tracks,
            schema,
            align,
            signals,
            out,
            timing,
        } => replay(
            &map,
            &tracks,
            &schema,
            align,
            signals.as_deref(),
            &out,
            timing,
        ),
        Command::Run {
            scenario,
            seed,
            policy,
            steps,
            log,
        } => run(&scenario, seed, &policy, steps, log.as_deref()),
        Command::ExportFrames {
            scenario,
            seed,
            steps,
            bev,
            policy,
            out,
        } => export_frames(&scenario, seed, steps, bev, &policy, &out),
        Command::Bench {
            scenario,
            seed,
            steps,
            policy,
            no_sensors,
            bev,
        } => bench_cmd(&scenario, seed, steps, &policy, no_sensors, bev),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
