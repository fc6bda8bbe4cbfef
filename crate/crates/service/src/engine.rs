//! The pipeline side of the service: one frame source, one pipeline, and
//! the command handlers. Everything here runs on a single thread, so
//! zeroing, profile swaps and recording never race the data path.
//!
//! The engine is transport-free: it turns frames and command lines into
//! [`Outbound`] items and leaves delivery to the caller.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, ErrorKind};
use std::path::{Path, PathBuf};

use bioskin_core::calibration::{CalibrationError, CalibrationProfile};
use bioskin_core::dsp::TimestampUnwrapper;
use bioskin_core::pipeline::{ClosedLoop, Pipeline, PipelineError};
use bioskin_core::recording::{RecordingError, RecordingHeader, RecordingReader, RecordingWriter};
use bioskin_core::runtime::{MaterialMonitor, RuntimeConfig, RuntimeError, Thermostat};
use bioskin_core::sim::builtin::DEFAULT_INTERFERENCE;
use bioskin_core::sim::{Event, ScenarioScript, SimError, SimParams, Simulator};
use bioskin_core::{ForceState, RawFrame};
use serde_json::{json, Value};
use thiserror::Error;

use crate::protocol::{
    parse_request, Ack, Body, Command, ErrorReason, ErrorReply, RecordAction, Request, ServiceEvent, StreamMessage,
};

pub type ClientId = u64;

/// Filtered frames averaged by a zero calibration (one second).
pub const ZERO_FRAMES: usize = 100;
/// Reason reported when a replay reaches the end of its file.
pub const END_OF_RECORDING: &str = "end of recording";
/// Fastest force-state rate a client can ask for, Hz.
pub const MAX_STATE_RATE_HZ: f64 = 100.0;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Recording(#[from] RecordingError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    All,
    Client(ClientId),
}

/// Per-connection stream options.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Subscription {
    pub max_rate_hz: f64,
    pub raw_frames: bool,
}

impl Default for Subscription {
    fn default() -> Self {
        Subscription { max_rate_hz: MAX_STATE_RATE_HZ, raw_frames: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outbound {
    Message(Target, StreamMessage),
    /// A client changed its stream options.
    Subscribe(ClientId, Subscription),
    /// A raw frame for binary clients.
    Packet(RawFrame),
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub runtime: RuntimeConfig,
    /// Where `load_profile` looks for `<id>.json`.
    pub profile_dir: Option<PathBuf>,
    /// Where recordings go when `record start` names no path.
    pub record_dir: PathBuf,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig { runtime: RuntimeConfig::default(), profile_dir: None, record_dir: PathBuf::from(".") }
    }
}

type FrameIter = Box<dyn Iterator<Item = Result<RawFrame, RecordingError>> + Send>;

enum Source {
    Simulated { lp: Box<ClosedLoop>, name: String, end_frame: u64, frames: u64 },
    Replay { frames: FrameIter, pipeline: Box<Pipeline>, name: String },
}

impl Source {
    fn pipeline(&self) -> &Pipeline {
        match self {
            Source::Simulated { lp, .. } => lp.pipeline(),
            Source::Replay { pipeline, .. } => pipeline,
        }
    }

    fn pipeline_mut(&mut self) -> &mut Pipeline {
        match self {
            Source::Simulated { lp, .. } => lp.pipeline_mut(),
            Source::Replay { pipeline, .. } => pipeline,
        }
    }

    fn name(&self) -> &str {
        match self {
            Source::Simulated { name, .. } | Source::Replay { name, .. } => name,
        }
    }

    fn closed_loop(&mut self) -> Option<&mut ClosedLoop> {
        match self {
            Source::Simulated { lp, .. } => Some(lp),
            Source::Replay { .. } => None,
        }
    }
}

struct Recorder {
    path: PathBuf,
    writer: RecordingWriter<BufWriter<File>>,
}

/// What one call to [`Engine::step`] produced.
#[derive(Debug, Default)]
pub struct Step {
    pub frame: Option<RawFrame>,
    pub state: Option<ForceState>,
    pub out: Vec<Outbound>,
}

pub struct Engine {
    source: Source,
    cfg: EngineConfig,
    material: MaterialMonitor,
    clock: TimestampUnwrapper,
    now_us: u64,
    seq: u64,
    interference: bool,
    pending_zero: Option<(ClientId, Value)>,
    recorder: Option<Recorder>,
    raw_subscribers: HashSet<ClientId>,
    ended: bool,
}

enum Pulled {
    Frame { raw: RawFrame, state: Option<ForceState>, scenario_ended: Option<String> },
    End(String),
}

impl Engine {
    /// Runs `script` in closed loop with the thermostat from `cfg.runtime`.
    pub fn simulated(
        script: &ScenarioScript,
        params: SimParams,
        profile: CalibrationProfile,
        cfg: EngineConfig,
    ) -> Result<Self, EngineError> {
        let pipeline = Pipeline::new(profile, &cfg.runtime)?;
        let thermostat = Thermostat::new(cfg.runtime.thermostat.clone())?;
        let lp = ClosedLoop::new(Simulator::new(script, params)?, pipeline, thermostat);
        let name = script.name.clone().unwrap_or_else(|| "scenario".into());
        let source = Source::Simulated { lp: Box::new(lp), name, end_frame: script.frame_count(), frames: 0 };
        Ok(Engine::with_source(source, cfg))
    }

    /// Streams frames from `frames` through `profile`.
    pub fn replay(
        frames: impl Iterator<Item = Result<RawFrame, RecordingError>> + Send + 'static,
        name: &str,
        profile: CalibrationProfile,
        cfg: EngineConfig,
    ) -> Result<Self, EngineError> {
        let pipeline = Box::new(Pipeline::new(profile, &cfg.runtime)?);
        let source = Source::Replay { frames: Box::new(frames), pipeline, name: name.to_string() };
        Ok(Engine::with_source(source, cfg))
    }

    pub fn replay_file(path: &Path, profile: CalibrationProfile, cfg: EngineConfig) -> Result<Self, EngineError> {
        let reader = RecordingReader::open(path)?;
        let name = reader.header().source.clone().unwrap_or_else(|| path.display().to_string());
        Engine::replay(reader, &name, profile, cfg)
    }

    fn with_source(source: Source, cfg: EngineConfig) -> Self {
        Engine {
            source,
            material: MaterialMonitor::new(cfg.runtime.material.clone()),
            cfg,
            clock: TimestampUnwrapper::default(),
            now_us: 0,
            seq: 0,
            interference: false,
            pending_zero: None,
            recorder: None,
            raw_subscribers: HashSet::new(),
            ended: false,
        }
    }

    pub fn profile(&self) -> &CalibrationProfile {
        self.source.pipeline().profile()
    }

    pub fn source_name(&self) -> &str {
        self.source.name()
    }

    /// True once a replayed recording is exhausted.
    pub fn is_ended(&self) -> bool {
        self.ended
    }

    pub fn is_recording(&self) -> bool {
        self.recorder.is_some()
    }

    pub fn now_us(&self) -> u64 {
        self.now_us
    }

    fn message(&mut self, to: Target, body: Body) -> Outbound {
        self.seq += 1;
        Outbound::Message(to, StreamMessage { seq: self.seq, timestamp_us: self.now_us, body })
    }

    fn event(&mut self, event: ServiceEvent) -> Outbound {
        self.message(Target::All, Body::Event(event))
    }

    fn ack(&mut self, client: ClientId, id: Value, cmd: &str, result: Value) -> Outbound {
        self.message(Target::Client(client), Body::Ack(Ack { id, cmd: cmd.to_string(), result }))
    }

    fn error(&mut self, client: ClientId, id: Value, reason: ErrorReason, message: impl Into<String>) -> Outbound {
        self.message(Target::Client(client), Body::Error(ErrorReply { id, reason, message: message.into() }))
    }

    /// Greeting for a new connection.
    pub fn hello(&mut self, client: ClientId) -> Vec<Outbound> {
        let event = ServiceEvent::Hello {
            version: env!("CARGO_PKG_VERSION").to_string(),
            profile_id: self.profile().id.clone(),
            source: self.source.name().to_string(),
        };
        vec![self.message(Target::Client(client), Body::Event(event))]
    }

    /// Forgets per-client state. A zero calibration the client started
    /// still completes; only its reply is dropped.
    pub fn disconnected(&mut self, client: ClientId) {
        if self.pending_zero.as_ref().is_some_and(|(c, _)| *c == client) {
            self.pending_zero = None;
        }
        self.raw_subscribers.remove(&client);
    }

    fn pull(&mut self) -> Pulled {
        match &mut self.source {
            Source::Simulated { lp, name, end_frame, frames } => {
                let tick = lp.step();
                *frames += 1;
                let scenario_ended = (*frames == *end_frame).then(|| name.clone());
                Pulled::Frame { raw: tick.raw, state: tick.state, scenario_ended }
            }
            Source::Replay { frames, pipeline, .. } => match frames.next() {
                Some(Ok(raw)) => Pulled::Frame { raw, state: pipeline.push(&raw), scenario_ended: None },
                Some(Err(e)) => Pulled::End(e.to_string()),
                None => Pulled::End(END_OF_RECORDING.into()),
            },
        }
    }

    /// Advances the source by one raw frame.
    pub fn step(&mut self) -> Step {
        let mut step = Step::default();
        if self.ended {
            return step;
        }
        let (raw, state, scenario_ended) = match self.pull() {
            Pulled::Frame { raw, state, scenario_ended } => (raw, state, scenario_ended),
            Pulled::End(reason) => {
                log::info!("source ended: {reason}");
                self.ended = true;
                step.out.push(self.event(ServiceEvent::SourceEnded { reason }));
                return step;
            }
        };
        self.now_us = self.clock.unwrap(raw.timestamp_us);
        step.frame = Some(raw);
        self.record(&raw, &mut step.out);
        step.out.push(Outbound::Packet(raw));
        if !self.raw_subscribers.is_empty() {
            step.out.push(self.message(Target::All, Body::RawFrame(raw)));
        }
        if let Some(s) = state {
            self.publish_state(s, &mut step.out);
        }
        if let Some(name) = scenario_ended {
            step.out.push(self.event(ServiceEvent::ScenarioEnded { name }));
        }
        step.state = state;
        step
    }

    fn publish_state(&mut self, s: ForceState, out: &mut Vec<Outbound>) {
        self.seq += 1;
        out.push(Outbound::Message(
            Target::All,
            StreamMessage { seq: self.seq, timestamp_us: s.timestamp_us, body: Body::ForceState(s) },
        ));
        if s.interference != self.interference {
            self.interference = s.interference;
            out.push(self.event(ServiceEvent::Interference { active: s.interference }));
        }
        let t = s.timestamp_us as f64 / 1e6;
        if let Some(verdict) = self.material.push(t, s.temperature, s.peak_normal()) {
            let ev = match verdict {
                Ok(v) => ServiceEvent::Material { class: v.class, features: v.features },
                Err(e) => ServiceEvent::MaterialUnavailable { reason: e.to_string() },
            };
            out.push(self.event(ev));
        }
        if let Some(result) = self.source.pipeline_mut().take_zero_result() {
            if let Some((client, id)) = self.pending_zero.take() {
                out.push(match result {
                    Ok(z) => self.ack(client, id, "zero_cal", json!({ "group": z.group, "offsets": z.offsets })),
                    Err(e) => self.error(client, id, ErrorReason::NotAtRest, e.to_string()),
                });
            }
        }
    }

    fn record(&mut self, raw: &RawFrame, out: &mut Vec<Outbound>) {
        let Some(rec) = &mut self.recorder else { return };
        if let Err(e) = rec.writer.write(raw) {
            log::error!("recording to {} failed: {e}", rec.path.display());
            let rec = self.recorder.take().expect("checked above");
            let frames = rec.writer.frames();
            out.push(self.event(ServiceEvent::RecordingStopped { path: rec.path, frames }));
        }
    }

    /// Flushes an active recording; used at shutdown.
    pub fn finish_recording(&mut self) -> Option<(PathBuf, u64)> {
        let rec = self.recorder.take()?;
        let frames = rec.writer.frames();
        if let Err(e) = rec.writer.finish() {
            log::error!("closing {} failed: {e}", rec.path.display());
        }
        Some((rec.path, frames))
    }

    /// Handles one client line; always yields exactly one ack or error for
    /// it, possibly deferred to a later [`step`](Self::step) for `zero_cal`.
    pub fn handle_line(&mut self, client: ClientId, line: &str) -> Vec<Outbound> {
        match parse_request(line) {
            Ok(req) => self.handle(client, req),
            Err(e) => vec![self.message(Target::Client(client), Body::Error(e))],
        }
    }

    pub fn handle(&mut self, client: ClientId, req: Request) -> Vec<Outbound> {
        let Request { id, name, command } = req;
        let mut out = Vec::new();
        let reply = match command {
            Command::Ping => Ok(Value::Null),
            Command::Status => Ok(self.status()),
            Command::ZeroCal { group } => {
                if self.pending_zero.is_some() || self.source.pipeline().zero_in_progress() {
                    Err((ErrorReason::Busy, "zero calibration already in progress".to_string()))
                } else {
                    match self.source.pipeline_mut().begin_zero(group, ZERO_FRAMES) {
                        Ok(()) => {
                            self.pending_zero = Some((client, id));
                            return out;
                        }
                        Err(e) => Err((ErrorReason::Busy, e.to_string())),
                    }
                }
            }
            Command::SetThermostat { t_stop, t_heat, enabled } => self.set_thermostat(t_stop, t_heat, enabled, &mut out),
            Command::Record { action: RecordAction::Start, path } => self.start_recording(path, &mut out),
            Command::Record { action: RecordAction::Stop, .. } => match self.finish_recording() {
                Some((path, frames)) => {
                    out.push(self.event(ServiceEvent::RecordingStopped { path: path.clone(), frames }));
                    Ok(json!({ "path": path, "frames": frames }))
                }
                None => Err((ErrorReason::NotRecording, "no recording in progress".to_string())),
            },
            Command::LoadProfile { profile } => self.load_profile(&profile, &mut out),
            Command::InjectInterference { on, amplitude_v, frequency_hz } => {
                let event = if on {
                    Event::InterferenceOn {
                        amplitude_v: amplitude_v.unwrap_or(DEFAULT_INTERFERENCE.0),
                        frequency_hz: frequency_hz.unwrap_or(DEFAULT_INTERFERENCE.1),
                    }
                } else {
                    Event::InterferenceOff
                };
                self.apply_sim_event(&event)
            }
            Command::SimEvent { event } => self.apply_sim_event(&event),
            Command::Subscribe { max_rate_hz, raw_frames } => {
                let rate = max_rate_hz.unwrap_or(MAX_STATE_RATE_HZ);
                if !(rate > 0.0 && rate <= MAX_STATE_RATE_HZ) {
                    Err((ErrorReason::InvalidArguments, format!("max_rate_hz must lie in (0, {MAX_STATE_RATE_HZ}]")))
                } else {
                    let sub = Subscription { max_rate_hz: rate, raw_frames: raw_frames.unwrap_or(false) };
                    if sub.raw_frames {
                        self.raw_subscribers.insert(client);
                    } else {
                        self.raw_subscribers.remove(&client);
                    }
                    out.push(Outbound::Subscribe(client, sub));
                    Ok(json!({ "max_rate_hz": sub.max_rate_hz, "raw_frames": sub.raw_frames }))
                }
            }
        };
        let reply = match reply {
            Ok(result) => self.ack(client, id, &name, result),
            Err((reason, message)) => self.error(client, id, reason, message),
        };
        // The reply precedes any broadcast the command caused.
        out.insert(0, reply);
        out
    }

    fn status(&mut self) -> Value {
        let recording = self.recorder.as_ref().map(|r| r.path.clone());
        let thermostat = self.source.closed_loop().map(|lp| {
            json!({ "config": lp.thermostat().config(), "enabled": lp.thermostat().is_enabled(), "duty": lp.thermostat().duty() })
        });
        json!({
            "profile_id": self.profile().id,
            "source": self.source.name(),
            "recording": recording,
            "thermostat": thermostat,
            "interference": self.interference,
            "zeroing": self.source.pipeline().zero_in_progress(),
            "ended": self.ended,
        })
    }

    fn set_thermostat(
        &mut self,
        t_stop: f64,
        t_heat: f64,
        enabled: Option<bool>,
        out: &mut Vec<Outbound>,
    ) -> Result<Value, (ErrorReason, String)> {
        let Some(lp) = self.source.closed_loop() else {
            return Err((ErrorReason::NotSimulated, "no heater on a replayed source".into()));
        };
        let cfg = bioskin_core::runtime::ThermostatConfig { t_stop, t_heat, ..lp.thermostat().config().clone() };
        lp.thermostat_mut().set_config(cfg.clone()).map_err(|e| (ErrorReason::InvalidThermostat, e.to_string()))?;
        if let Some(on) = enabled {
            lp.thermostat_mut().set_enabled(on);
        }
        let enabled = lp.thermostat().is_enabled();
        out.push(self.event(ServiceEvent::ThermostatChanged { config: cfg.clone() }));
        Ok(json!({ "config": cfg, "enabled": enabled }))
    }

    fn start_recording(&mut self, path: Option<PathBuf>, out: &mut Vec<Outbound>) -> Result<Value, (ErrorReason, String)> {
        if let Some(r) = &self.recorder {
            return Err((ErrorReason::AlreadyRecording, format!("already recording to {}", r.path.display())));
        }
        let header = RecordingHeader::new(Some(self.source.name().to_string())).with_profile(&self.profile().id);
        let path = path.unwrap_or_else(|| {
            self.cfg.record_dir.join(format!("recording-{}-{}.bskr", header.created_at, self.seq + 1))
        });
        let writer = RecordingWriter::create(&path, &header).map_err(|e| (ErrorReason::RecordingFailed, e.to_string()))?;
        self.recorder = Some(Recorder { path: path.clone(), writer });
        out.push(self.event(ServiceEvent::RecordingStarted { path: path.clone() }));
        Ok(json!({ "path": path }))
    }

    fn load_profile(&mut self, id: &str, out: &mut Vec<Outbound>) -> Result<Value, (ErrorReason, String)> {
        let valid_id = !id.is_empty()
            && !id.starts_with('.')
            && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
        if !valid_id {
            return Err((ErrorReason::InvalidArguments, format!("invalid profile id '{id}'")));
        }
        let Some(dir) = &self.cfg.profile_dir else {
            return Err((ErrorReason::ProfileNotFound, "no profile directory configured".into()));
        };
        let path = dir.join(format!("{id}.json"));
        let profile = CalibrationProfile::load(&path).map_err(|e| match e {
            CalibrationError::Io(io) if io.kind() == ErrorKind::NotFound => {
                (ErrorReason::ProfileNotFound, format!("{} not found", path.display()))
            }
            other => (ErrorReason::InvalidProfile, format!("{}: {other}", path.display())),
        })?;
        let loaded = profile.id.clone();
        self.source.pipeline_mut().set_profile(profile).map_err(|e| (ErrorReason::InvalidProfile, e.to_string()))?;
        self.material.reset();
        out.push(self.event(ServiceEvent::ProfileLoaded { id: loaded.clone() }));
        Ok(json!({ "id": loaded, "path": path }))
    }

    fn apply_sim_event(&mut self, event: &Event) -> Result<Value, (ErrorReason, String)> {
        let Some(lp) = self.source.closed_loop() else {
            return Err((ErrorReason::NotSimulated, "the source is a recording".into()));
        };
        lp.source_mut().simulator_mut().apply(event).map_err(|e| (ErrorReason::InvalidArguments, e.to_string()))?;
        Ok(Value::Null)
    }
}
