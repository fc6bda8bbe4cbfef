//! Implementations of the `bioskin` verbs.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::atomic::Ordering;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use bioskin_core::calibration::{
    evaluate, CalibrationDataset, CalibrationProfile, DatasetBuilder, EvalReport, SplitMode,
};
use bioskin_core::pipeline::SimulatedSource;
use bioskin_core::recording::{Pacer, RecordingError, RecordingHeader, RecordingWriter};
use bioskin_core::runtime::RuntimeConfig;
use bioskin_core::sim::{write_ground_truth_csv, ScenarioScript, SimParams, Simulator};
use bioskin_core::FilterSpec;

use crate::engine::{Engine, EngineConfig, Outbound, Target};
use crate::protocol::Body;
use crate::server::{serve, ServerConfig};

pub const TRUTH_FILE: &str = "ground_truth.csv";

/// A builtin scenario name or a path to a scenario JSON file.
pub fn load_scenario(name: &str, seed: Option<u64>) -> Result<ScenarioScript> {
    let path = Path::new(name);
    let mut script = if path.extension().is_some_and(|e| e == "json") || path.is_file() {
        ScenarioScript::load(path).with_context(|| format!("loading scenario {}", path.display()))?
    } else {
        ScenarioScript::builtin(name, seed.unwrap_or(1)).with_context(|| {
            format!("unknown scenario '{name}'; builtins: {}", ScenarioScript::BUILTINS.join(", "))
        })?
    };
    if let Some(s) = seed {
        script.seed = s;
    }
    Ok(script)
}

pub fn load_runtime(path: Option<&Path>) -> Result<RuntimeConfig> {
    match path {
        Some(p) => RuntimeConfig::load(p).with_context(|| format!("loading runtime config {}", p.display())),
        None => Ok(RuntimeConfig::default()),
    }
}

pub fn load_profile(path: &Path) -> Result<CalibrationProfile> {
    CalibrationProfile::load(path).with_context(|| format!("loading profile {}", path.display()))
}

pub struct SimArgs {
    pub scenario: String,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub record: Option<PathBuf>,
    pub truth: bool,
}

#[derive(Debug)]
pub struct SimSummary {
    pub frames: u64,
    pub cycles: usize,
    /// Fewest and most rows in a dataset cycle.
    pub rows_per_cycle: Option<(usize, usize)>,
    pub truth_rows: Option<usize>,
}

/// Runs a scenario open-loop and writes the dataset, the ground-truth CSV
/// and optionally a recording.
pub fn sim(args: &SimArgs, out: &mut impl Write) -> Result<SimSummary> {
    let script = load_scenario(&args.scenario, args.seed)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut source = SimulatedSource::new(Simulator::new(&script, SimParams::default())?);
    let mut builder = DatasetBuilder::new(&FilterSpec::default())?;
    let mut recorder = match &args.record {
        Some(p) => Some(
            RecordingWriter::create(p, &RecordingHeader::new(script.name.clone()))
                .with_context(|| format!("creating recording {}", p.display()))?,
        ),
        None => None,
    };
    let has_cycles = script.events.iter().any(|e| matches!(e.event, bioskin_core::sim::Event::CycleStart { .. }));
    let want_truth = args.truth || !has_cycles;
    let total = script.frame_count();
    let mut record_err: Option<RecordingError> = None;
    let frames = (0..total).map(|_| {
        let (frame, raw) = source.next_frame();
        builder.push(&frame);
        if let (Some(r), None) = (&mut recorder, &record_err) {
            if let Err(e) = r.write(&raw) {
                record_err = Some(e);
            }
        }
        frame
    });
    let truth_rows = if want_truth {
        let path = args.out.join(TRUTH_FILE);
        let file = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        Some(write_ground_truth_csv(frames, file)?)
    } else {
        frames.for_each(drop);
        None
    };
    if let Some(e) = record_err {
        return Err(e).context("writing recording");
    }
    if let Some(r) = recorder {
        let frames = r.frames();
        r.finish()?;
        writeln!(out, "recorded {frames} frames to {}", args.record.as_ref().expect("set").display())?;
    }
    let dataset = builder.finish();
    let rows: Vec<usize> = dataset.cycles.iter().map(|c| c.samples.len()).collect();
    if !dataset.cycles.is_empty() {
        dataset.write_dir(&args.out)?;
    }
    let summary = SimSummary {
        frames: total,
        cycles: dataset.cycles.len(),
        rows_per_cycle: rows.iter().min().zip(rows.iter().max()).map(|(a, b)| (*a, *b)),
        truth_rows,
    };
    writeln!(out, "scenario {}: {} frames", script.name.as_deref().unwrap_or(&args.scenario), total)?;
    if let Some((lo, hi)) = summary.rows_per_cycle {
        writeln!(out, "dataset: {} cycles, {lo}..{hi} rows per cycle, in {}", summary.cycles, args.out.display())?;
    }
    if let Some(n) = truth_rows {
        writeln!(out, "ground truth: {n} rows in {}", args.out.join(TRUTH_FILE).display())?;
    }
    Ok(summary)
}

pub struct CalibrateArgs {
    pub dataset: PathBuf,
    pub out: PathBuf,
    pub id: Option<String>,
    pub split_seed: Option<u64>,
    pub report_json: Option<PathBuf>,
}

fn split_mode(seed: Option<u64>) -> SplitMode {
    seed.map_or(SplitMode::FirstThree, |seed| SplitMode::Seeded { seed })
}

fn read_dataset(dir: &Path) -> Result<CalibrationDataset> {
    CalibrationDataset::read_dir(dir).with_context(|| format!("reading dataset {}", dir.display()))
}

/// Fits a profile on the calibration cycles and reports on the rest.
pub fn calibrate(args: &CalibrateArgs, out: &mut impl Write) -> Result<EvalReport> {
    let dataset = read_dataset(&args.dataset)?;
    let (cal, val) = dataset.split(split_mode(args.split_seed))?;
    let id = match &args.id {
        Some(id) => id.clone(),
        None => args.out.file_stem().map_or_else(|| "profile".into(), |s| s.to_string_lossy().into_owned()),
    };
    let start = Instant::now();
    let profile = CalibrationProfile::fit(&cal, FilterSpec::default(), &id)?;
    let fit_time = start.elapsed();
    profile.save(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    let report = evaluate(&profile, &val)?;
    writeln!(out, "profile '{id}' fitted on {} samples in {:.2} s, saved to {}", cal.sample_count(), fit_time.as_secs_f64(), args.out.display())?;
    writeln!(out, "validation on {} samples:", val.sample_count())?;
    write!(out, "{report}")?;
    if let Some(p) = &args.report_json {
        fs::write(p, serde_json::to_string_pretty(&report)?).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(report)
}

pub struct EvaluateArgs {
    pub profile: PathBuf,
    pub dataset: PathBuf,
    /// Use every cycle rather than the validation split.
    pub all: bool,
    pub split_seed: Option<u64>,
    pub json: bool,
}

pub fn evaluate_cmd(args: &EvaluateArgs, out: &mut impl Write) -> Result<EvalReport> {
    let profile = load_profile(&args.profile)?;
    let dataset = read_dataset(&args.dataset)?;
    let valid = if args.all { dataset } else { dataset.split(split_mode(args.split_seed))?.1 };
    let report = evaluate(&profile, &valid)?;
    if args.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    } else {
        writeln!(out, "profile '{}' on {} samples:", profile.id, valid.sample_count())?;
        write!(out, "{report}")?;
    }
    Ok(report)
}

pub struct ServeArgs {
    pub scenario: Option<String>,
    pub recording: Option<PathBuf>,
    pub profile: PathBuf,
    pub bind: IpAddr,
    pub port: u16,
    pub binary_port: Option<u16>,
    pub config: Option<PathBuf>,
    pub speed: f64,
    pub seed: Option<u64>,
    pub record_dir: PathBuf,
    pub duration_s: Option<f64>,
}

pub fn serve_cmd(args: &ServeArgs) -> Result<()> {
    let profile = load_profile(&args.profile)?;
    let cfg = EngineConfig {
        runtime: load_runtime(args.config.as_deref())?,
        profile_dir: args.profile.parent().map(|p| if p.as_os_str().is_empty() { Path::new(".") } else { p }.to_path_buf()),
        record_dir: args.record_dir.clone(),
    };
    let engine = match (&args.scenario, &args.recording) {
        (Some(_), Some(_)) => bail!("--scenario and --recording are mutually exclusive"),
        (_, Some(rec)) => Engine::replay_file(rec, profile, cfg)?,
        (scenario, None) => {
            let script = load_scenario(scenario.as_deref().unwrap_or("idle"), args.seed)?;
            Engine::simulated(&script, SimParams::default(), profile, cfg)?
        }
    };
    let mut server_cfg = ServerConfig::new(SocketAddr::new(args.bind, args.port));
    server_cfg.binary_addr = args.binary_port.map(|p| SocketAddr::new(args.bind, p));
    server_cfg.speed = args.speed;
    server_cfg.max_frames = args.duration_s.map(|d| (d * f64::from(bioskin_core::acquisition::FRAME_RATE_HZ)).round() as u64);
    let handle = serve(engine, server_cfg).context("starting server")?;
    println!("ndjson {}  packets {}", handle.addr(), handle.binary_addr());
    let stop = handle.stop_flag();
    ctrlc::set_handler(move || stop.store(true, Ordering::SeqCst)).context("installing Ctrl-C handler")?;
    let engine = handle.wait();
    log::info!("served {} until t = {:.2} s", engine.source_name(), engine.now_us() as f64 / 1e6);
    Ok(())
}

pub struct ReplayArgs {
    pub recording: PathBuf,
    pub profile: PathBuf,
    pub speed: f64,
    pub config: Option<PathBuf>,
    pub raw: bool,
}

#[derive(Debug)]
pub struct ReplaySummary {
    pub frames: u64,
    pub states: u64,
    pub wall_s: f64,
    /// Why the source stopped: end of file or the first bad packet.
    pub end: String,
}

/// Streams a recording through the pipeline as NDJSON messages.
pub fn replay(args: &ReplayArgs, out: &mut impl Write) -> Result<ReplaySummary> {
    let profile = load_profile(&args.profile)?;
    let cfg = EngineConfig { runtime: load_runtime(args.config.as_deref())?, ..EngineConfig::default() };
    let mut engine = Engine::replay_file(&args.recording, profile, cfg)
        .with_context(|| format!("opening recording {}", args.recording.display()))?;
    if args.raw {
        engine.handle_line(0, r#"{"cmd":"subscribe","raw_frames":true}"#);
    }
    let mut pacer = Pacer::new(args.speed);
    let start = Instant::now();
    let (mut frames, mut states) = (0, 0);
    let mut end = String::new();
    while !engine.is_ended() {
        let step = engine.step();
        if let Some(raw) = &step.frame {
            frames += 1;
            pacer.wait(raw);
        }
        for item in step.out {
            let Outbound::Message(Target::All, msg) = item else { continue };
            match &msg.body {
                Body::ForceState(_) => states += 1,
                Body::Event(crate::protocol::ServiceEvent::SourceEnded { reason }) => end = reason.clone(),
                _ => {}
            }
            out.write_all(msg.to_line().as_bytes())?;
        }
    }
    out.flush()?;
    Ok(ReplaySummary { frames, states, wall_s: start.elapsed().as_secs_f64(), end })
}
