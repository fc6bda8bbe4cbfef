//! Live chain from raw frames to [`ForceState`], and a simulated sensor that
//! closes the heater loop through it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{MuxScheduler, RawFrame};
use crate::calibration::{apply_profile, CalibrationProfile, ChannelGroup};
use crate::dsp::{DspError, FilteredFrame, SignalConditioner};
use crate::runtime::{
    interference_detect, zero_calibrate, Detection, ForceState, GammaWindow, RuntimeConfig, RuntimeError, Thermostat,
    MIN_ZERO_FRAMES,
};
use crate::sim::{SimError, SimFrame, Simulator};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("zero calibration already in progress")]
    ZeroBusy,
}

/// Result of a finished zero calibration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroOutcome {
    pub group: ChannelGroup,
    pub offsets: Vec<f64>,
}

#[derive(Clone, Debug)]
struct ZeroCapture {
    group: ChannelGroup,
    want: usize,
    frames: Vec<FilteredFrame>,
}

/// Raw frames in, calibrated and cross-checked [`ForceState`]s out.
#[derive(Clone, Debug)]
pub struct Pipeline {
    profile: CalibrationProfile,
    conditioner: SignalConditioner,
    gamma: GammaWindow,
    detection: Detection,
    zero: Option<ZeroCapture>,
    zero_result: Option<Result<ZeroOutcome, RuntimeError>>,
    last_filtered: Option<FilteredFrame>,
}

impl Pipeline {
    pub fn new(profile: CalibrationProfile, cfg: &RuntimeConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        Ok(Pipeline {
            conditioner: SignalConditioner::new(&profile.filter_spec)?,
            profile,
            gamma: GammaWindow::new(cfg.gamma.clone()),
            detection: Detection::Indeterminate { gated: 0 },
            zero: None,
            zero_result: None,
            last_filtered: None,
        })
    }

    pub fn profile(&self) -> &CalibrationProfile {
        &self.profile
    }

    /// Swaps the profile; the filters restart if its filter settings differ.
    pub fn set_profile(&mut self, profile: CalibrationProfile) -> Result<(), PipelineError> {
        if profile.filter_spec != self.profile.filter_spec {
            self.conditioner = SignalConditioner::new(&profile.filter_spec)?;
        }
        self.profile = profile;
        self.gamma.clear();
        Ok(())
    }

    pub fn detection(&self) -> Detection {
        self.detection
    }

    pub fn last_filtered(&self) -> Option<&FilteredFrame> {
        self.last_filtered.as_ref()
    }

    /// Non-finite samples seen by the filters.
    pub fn filter_errors(&self) -> u64 {
        self.conditioner.errors()
    }

    /// Feeds one raw frame; returns a state once per filter output.
    pub fn push(&mut self, frame: &RawFrame) -> Option<ForceState> {
        let filtered = self.conditioner.push(frame)?;
        Some(self.push_filtered(filtered))
    }

    pub fn push_filtered(&mut self, filtered: FilteredFrame) -> ForceState {
        let mut state = apply_profile(&self.profile, &filtered);
        self.gamma.push(&state);
        self.detection = interference_detect(&self.gamma);
        state.interference = self.detection.flagged();
        self.capture_zero(filtered);
        self.last_filtered = Some(filtered);
        state
    }

    /// Starts averaging the next `frames` filtered frames into new zero
    /// offsets for `group`. The result is picked up with
    /// [`take_zero_result`](Self::take_zero_result).
    pub fn begin_zero(&mut self, group: ChannelGroup, frames: usize) -> Result<(), PipelineError> {
        if self.zero.is_some() {
            return Err(PipelineError::ZeroBusy);
        }
        let want = frames.max(MIN_ZERO_FRAMES);
        self.zero = Some(ZeroCapture { group, want, frames: Vec::with_capacity(want) });
        Ok(())
    }

    pub fn zero_in_progress(&self) -> bool {
        self.zero.is_some()
    }

    pub fn take_zero_result(&mut self) -> Option<Result<ZeroOutcome, RuntimeError>> {
        self.zero_result.take()
    }

    fn capture_zero(&mut self, filtered: FilteredFrame) {
        let Some(cap) = &mut self.zero else { return };
        cap.frames.push(filtered);
        if cap.frames.len() < cap.want {
            return;
        }
        let cap = self.zero.take().expect("capture present");
        let result = zero_calibrate(&self.profile, &cap.frames, cap.group).map(|offsets| {
            self.profile.set_zero_offsets(cap.group, &offsets);
            ZeroOutcome { group: cap.group, offsets }
        });
        self.zero_result = Some(result);
    }

    pub fn reset(&mut self) {
        self.conditioner.reset();
        self.gamma.clear();
        self.detection = Detection::Indeterminate { gated: 0 };
        self.zero = None;
        self.last_filtered = None;
    }
}

/// The simulator sampled through the MUX and ADC.
#[derive(Clone, Debug)]
pub struct SimulatedSource {
    sim: Simulator,
    mux: MuxScheduler,
}

impl SimulatedSource {
    pub fn new(sim: Simulator) -> Self {
        SimulatedSource { sim, mux: MuxScheduler::default() }
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    pub fn simulator_mut(&mut self) -> &mut Simulator {
        &mut self.sim
    }

    pub fn next_frame(&mut self) -> (SimFrame, RawFrame) {
        let frame = self.sim.step();
        let raw = frame
            .volts
            .iter()
            .fold(None, |raw, &v| self.mux.push_slot(Some(v)).or(raw))
            .expect("ten slots complete one frame");
        (frame, raw)
    }
}

/// One step of a [`ClosedLoop`].
#[derive(Clone, Debug)]
pub struct LoopTick {
    pub sim: SimFrame,
    pub raw: RawFrame,
    pub state: Option<ForceState>,
    pub heater_w: f64,
}

/// Simulated sensor whose heater follows the thermostat acting on the
/// measured, calibrated temperature.
#[derive(Clone, Debug)]
pub struct ClosedLoop {
    source: SimulatedSource,
    pipeline: Pipeline,
    thermostat: Thermostat,
    measured: Option<f64>,
}

impl ClosedLoop {
    pub fn new(sim: Simulator, pipeline: Pipeline, thermostat: Thermostat) -> Self {
        ClosedLoop { source: SimulatedSource::new(sim), pipeline, thermostat, measured: None }
    }

    pub fn source(&self) -> &SimulatedSource {
        &self.source
    }

    pub fn source_mut(&mut self) -> &mut SimulatedSource {
        &mut self.source
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn pipeline_mut(&mut self) -> &mut Pipeline {
        &mut self.pipeline
    }

    pub fn thermostat(&self) -> &Thermostat {
        &self.thermostat
    }

    pub fn thermostat_mut(&mut self) -> &mut Thermostat {
        &mut self.thermostat
    }

    pub fn step(&mut self) -> LoopTick {
        // Until the first filter output the heater stays as configured.
        if let Some(temp) = self.measured {
            let t = self.source.simulator().time();
            let power = self.thermostat.update(t, temp);
            self.source.simulator_mut().set_heater_power(power).expect("thermostat stays within max power");
        }
        let heater_w = self.source.simulator().heater_power();
        let (sim, raw) = self.source.next_frame();
        let state = self.pipeline.push(&raw);
        if let Some(s) = &state {
            self.measured = Some(s.temperature);
        }
        LoopTick { sim, raw, state, heater_w }
    }
}
