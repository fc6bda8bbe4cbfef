//! Software stand-in for the sensor hardware.
//!
//! A [`Simulator`] owns the physical state and steps it one acquisition frame
//! (2 ms) at a time. Each frame carries the ten channel voltages, sampled at
//! their own MUX slot times, together with the ground truth that produced
//! them.

mod geometry;
mod noise;
pub mod scenario;
mod thermal;
mod transduction;

use std::f64::consts::TAU;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use geometry::{distribute_force, SensorGeometry};
pub use noise::{ChannelNoise, NoiseConfig, NoiseSource};
pub use scenario::{builtin, CycleGroup, CycleTag, Event, ScenarioError, ScenarioScript, TimedEvent};
pub use thermal::{thermal_step, MaterialThermal, MaterialThermalParams, ThermalParams, MAX_THERMAL_DT};
pub use transduction::{thermistor_resistance, BetaThermistor, HallModel, PiezoModel, Reading};

use crate::acquisition::{ThermistorDivider, FRAME_RATE_HZ, SLOT_RATE_HZ};
use crate::channels::{
    GridPosition, ShearDirection, CHANNEL_COUNT, GRID_SIZE, HALL_COUNT, PIEZO_BASE, PIEZO_COUNT,
    THERMISTOR_CHANNEL,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("contact point {0:?} mm lies outside the sensor surface")]
    ContactOutsideSurface([f64; 2]),
    #[error("normal force must be non-negative, got {0} N")]
    NegativeForce(f64),
    #[error("thermal step must lie in (0, 0.1] s, got {0}")]
    InvalidTimeStep(f64),
    #[error("heater power must lie in [0, max] W, got {0}")]
    InvalidHeaterPower(f64),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("csv export failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Material {
    #[default]
    None,
    Metal,
    Plastic,
    Cardboard,
    Fiber,
}

impl Material {
    pub const ALL: [Material; 5] =
        [Material::None, Material::Metal, Material::Plastic, Material::Cardboard, Material::Fiber];

    pub fn as_str(self) -> &'static str {
        match self {
            Material::None => "none",
            Material::Metal => "metal",
            Material::Plastic => "plastic",
            Material::Cardboard => "cardboard",
            Material::Fiber => "fiber",
        }
    }
}

impl fmt::Display for Material {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Material {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Material::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown material '{s}'"))
    }
}

/// Physical quantities behind one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorPhysicalState {
    pub contact_point: Option<[f64; 2]>,
    pub normal_force: f64,
    pub shear_vector: [f64; 2],
    pub body_temperature: f64,
    pub ambient_temperature: f64,
    pub contact_material: Material,
    /// Temperature of the contacted object's near-surface region.
    pub material_temperature: f64,
    /// Additive offset on each Hall channel, V.
    pub interference_field: [f64; HALL_COUNT],
}

impl Default for SensorPhysicalState {
    fn default() -> Self {
        SensorPhysicalState {
            contact_point: None,
            normal_force: 0.0,
            shear_vector: [0.0; 2],
            body_temperature: 26.0,
            ambient_temperature: 26.0,
            contact_material: Material::None,
            material_temperature: 26.0,
            interference_field: [0.0; HALL_COUNT],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub geometry: SensorGeometry,
    pub hall: HallModel,
    pub piezo: PiezoModel,
    pub thermistor: BetaThermistor,
    pub divider: ThermistorDivider,
    pub thermal: ThermalParams,
    pub noise: NoiseConfig,
}

impl SimParams {
    pub fn noiseless() -> Self {
        SimParams { noise: NoiseConfig::silent(), ..Default::default() }
    }
}

/// Forces and temperature the calibrated outputs should reproduce.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Normal force per grid position 1–9; only the contacted cell is non-zero.
    pub grid: [f64; GRID_SIZE],
    /// One-sided shear per piezo side, x+, x−, y+, y−.
    pub shear: [f64; PIEZO_COUNT],
    pub temperature: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimFrame {
    pub index: u64,
    /// Frame start time, s.
    pub t: f64,
    /// Channel voltages in MUX slot order.
    pub volts: [f64; CHANNEL_COUNT],
    pub state: SensorPhysicalState,
    pub truth: GroundTruth,
    pub cycle: Option<CycleTag>,
    /// A Hall input left the modelled range this frame.
    pub saturated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interference {
    pub amplitude_v: f64,
    pub frequency_hz: f64,
    pub onset_s: f64,
}

impl Interference {
    /// Per-channel phase so the field is not uniform across the magnets.
    const PHASE_STEP: f64 = 0.7;

    pub fn offset(&self, hall_index: usize, t: f64) -> f64 {
        let phase = TAU * self.frequency_hz * (t - self.onset_s) + Self::PHASE_STEP * hall_index as f64;
        self.amplitude_v * phase.sin()
    }
}

#[derive(Clone, Copy, Debug)]
struct Ramp {
    from: f64,
    to: f64,
    t0: f64,
    duration: f64,
}

impl Ramp {
    fn hold(v: f64) -> Self {
        Ramp { from: v, to: v, t0: 0.0, duration: 0.0 }
    }

    fn at(&self, t: f64) -> f64 {
        if self.duration <= 0.0 || t >= self.t0 + self.duration {
            self.to
        } else if t <= self.t0 {
            self.from
        } else {
            self.from + (self.to - self.from) * (t - self.t0) / self.duration
        }
    }

    fn retarget(&mut self, t: f64, to: f64, duration: f64) {
        *self = Ramp { from: self.at(t), to, t0: t, duration };
    }
}

const FRAME_DT: f64 = 1.0 / FRAME_RATE_HZ as f64;
const SLOT_DT: f64 = 1.0 / SLOT_RATE_HZ as f64;

/// Stepped owner of the simulated physical state.
#[derive(Clone, Debug)]
pub struct Simulator {
    params: SimParams,
    events: Vec<TimedEvent>,
    next_event: usize,
    state: SensorPhysicalState,
    weights: [f64; HALL_COUNT],
    normal: Ramp,
    shear: [Ramp; 2],
    heater_w: f64,
    temperature_hold: Option<f64>,
    interference: Option<Interference>,
    cycle: Option<CycleTag>,
    noise: NoiseSource,
    frame: u64,
}

impl Simulator {
    /// Validates `script` and positions the simulator at t = 0.
    pub fn new(script: &ScenarioScript, params: SimParams) -> Result<Self, SimError> {
        script.validate(&params.geometry, params.thermal.max_power)?;
        let init = &script.initial;
        if !(0.0..=params.thermal.max_power).contains(&init.heater_power_w) {
            return Err(SimError::InvalidHeaterPower(init.heater_power_w));
        }
        let state = SensorPhysicalState {
            body_temperature: init.body_temperature,
            ambient_temperature: init.ambient_temperature,
            material_temperature: init.ambient_temperature,
            ..Default::default()
        };
        Ok(Simulator {
            noise: NoiseSource::new(params.noise, script.seed),
            params,
            events: script.events.clone(),
            next_event: 0,
            state,
            weights: [0.0; HALL_COUNT],
            normal: Ramp::hold(0.0),
            shear: [Ramp::hold(0.0); 2],
            heater_w: init.heater_power_w,
            temperature_hold: None,
            interference: None,
            cycle: None,
            frame: 0,
        })
    }

    /// Simulator without scripted events, driven by [`apply`](Self::apply).
    pub fn free_running(params: SimParams, seed: u64) -> Self {
        Self::new(&ScenarioScript::new(1.0, seed), params).expect("empty script is valid")
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn state(&self) -> &SensorPhysicalState {
        &self.state
    }

    /// Start time of the next frame.
    pub fn time(&self) -> f64 {
        self.frame as f64 * FRAME_DT
    }

    pub fn heater_power(&self) -> f64 {
        self.heater_w
    }

    pub fn set_heater_power(&mut self, watts: f64) -> Result<(), SimError> {
        if !(0.0..=self.params.thermal.max_power).contains(&watts) {
            return Err(SimError::InvalidHeaterPower(watts));
        }
        self.heater_w = watts;
        Ok(())
    }

    /// Applies an event at the current time.
    pub fn apply(&mut self, event: &Event) -> Result<(), SimError> {
        let mut probe = ScenarioScript::new(1.0, 0);
        probe.push(0.0, event.clone());
        if !matches!(event, Event::Press { .. } | Event::CycleStart { .. } | Event::CycleEnd) {
            probe.validate(&self.params.geometry, self.params.thermal.max_power)?;
        }
        if let Event::Press { position: None, point: None, normal, .. } = event {
            if *normal > 0.0 && self.state.contact_point.is_none() {
                return Err(ScenarioError::InvalidEvent {
                    index: 0,
                    reason: "normal force without a contact point".into(),
                }
                .into());
            }
        }
        self.apply_at(event, self.time())
    }

    fn apply_at(&mut self, event: &Event, t: f64) -> Result<(), SimError> {
        match event {
            Event::Press { position, point, normal, shear, ramp_s } => {
                let target = position.map(|p| self.params.geometry.grid_point(p)).or(*point);
                if let Some(p) = target {
                    if !self.params.geometry.contains(p) {
                        return Err(SimError::ContactOutsideSurface(p));
                    }
                    if *normal < 0.0 {
                        return Err(SimError::NegativeForce(*normal));
                    }
                    self.state.contact_point = Some(p);
                    self.weights = self.params.geometry.spread_weights(p);
                }
                self.normal.retarget(t, *normal, *ramp_s);
                self.shear[0].retarget(t, shear[0], *ramp_s);
                self.shear[1].retarget(t, shear[1], *ramp_s);
            }
            Event::Release { ramp_s } => {
                self.normal.retarget(t, 0.0, *ramp_s);
                self.shear[0].retarget(t, 0.0, *ramp_s);
                self.shear[1].retarget(t, 0.0, *ramp_s);
            }
            Event::SetMaterial { material } => {
                self.state.contact_material = *material;
                self.state.material_temperature = self
                    .params
                    .thermal
                    .materials
                    .sink_temperature
                    .unwrap_or(self.state.ambient_temperature);
            }
            Event::SetAmbient { temperature } => self.state.ambient_temperature = *temperature,
            Event::SetBodyTemperature { temperature, hold } => {
                self.state.body_temperature = *temperature;
                self.temperature_hold = hold.then_some(*temperature);
            }
            Event::ReleaseTemperatureHold => self.temperature_hold = None,
            Event::Heater { power_w } => self.set_heater_power(*power_w)?,
            Event::InterferenceOn { amplitude_v, frequency_hz } => {
                self.interference =
                    Some(Interference { amplitude_v: *amplitude_v, frequency_hz: *frequency_hz, onset_s: t });
            }
            Event::InterferenceOff => self.interference = None,
            Event::CycleStart { group, label, index } => {
                self.cycle = Some(CycleTag { group: *group, label: label.clone(), index: *index });
            }
            Event::CycleEnd => self.cycle = None,
        }
        Ok(())
    }

    /// Produces the next frame and advances the state by one frame period.
    pub fn step(&mut self) -> SimFrame {
        let t = self.time();
        while let Some(ev) = self.events.get(self.next_event) {
            if ev.t > t + 1e-9 {
                break;
            }
            let ev = ev.clone();
            self.next_event += 1;
            // Scripts are validated up front, so scripted events cannot fail.
            self.apply_at(&ev.event, t).expect("validated event");
        }

        let mut volts = [0.0; CHANNEL_COUNT];
        let mut saturated = false;
        for (c, v) in volts.iter_mut().enumerate() {
            let ts = t + c as f64 * SLOT_DT;
            let noise = self.noise.sample(c, FRAME_DT);
            *v = if c < HALL_COUNT {
                let force = self.weights[c] * self.normal.at(ts);
                let offset = self.interference.map_or(0.0, |i| i.offset(c, ts));
                let r = self.params.hall.voltage(force, offset, noise);
                saturated |= r.saturated;
                r.volts
            } else if c < PIEZO_BASE + PIEZO_COUNT {
                let sides = ShearDirection::decompose([self.shear[0].at(ts), self.shear[1].at(ts)]);
                self.params.piezo.voltage(sides[c - PIEZO_BASE], noise).volts
            } else {
                debug_assert_eq!(c, THERMISTOR_CHANNEL);
                let r = self.params.thermistor.resistance(self.state.body_temperature);
                (self.params.divider.voltage(r) + noise).clamp(0.0, crate::acquisition::ADC_VREF)
            };
        }

        self.state.normal_force = self.normal.at(t);
        self.state.shear_vector = [self.shear[0].at(t), self.shear[1].at(t)];
        self.state.interference_field =
            std::array::from_fn(|c| self.interference.map_or(0.0, |i| i.offset(c, t)));
        let mut truth = GroundTruth {
            shear: ShearDirection::decompose(self.state.shear_vector),
            temperature: self.state.body_temperature,
            ..Default::default()
        };
        if let Some(p) = self.state.contact_point {
            truth.grid[self.params.geometry.cell_of(p).index()] = self.state.normal_force;
        }
        let frame = SimFrame {
            index: self.frame,
            t,
            volts,
            state: self.state.clone(),
            truth,
            cycle: self.cycle.clone(),
            saturated,
        };

        match self.temperature_hold {
            Some(temp) => self.state.body_temperature = temp,
            None => {
                self.state = thermal_step(&self.state, self.heater_w, FRAME_DT, &self.params.thermal)
                    .expect("frame period and heater power are in range");
            }
        }
        self.frame += 1;
        frame
    }
}

/// Iterator over a finite scripted run.
#[derive(Clone, Debug)]
pub struct ScenarioRun {
    sim: Simulator,
    remaining: u64,
}

impl ScenarioRun {
    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    pub fn simulator_mut(&mut self) -> &mut Simulator {
        &mut self.sim
    }
}

impl Iterator for ScenarioRun {
    type Item = SimFrame;

    fn next(&mut self) -> Option<SimFrame> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        Some(self.sim.step())
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.remaining as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for ScenarioRun {}

/// Validates `script` and returns its frames, 500 per simulated second.
pub fn simulate_scenario(script: &ScenarioScript, params: SimParams) -> Result<ScenarioRun, SimError> {
    Ok(ScenarioRun { sim: Simulator::new(script, params)?, remaining: script.frame_count() })
}

pub fn ground_truth_header() -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((0..CHANNEL_COUNT).map(|c| format!("ch{c}")));
    h.extend(GridPosition::all().map(|p| format!("F_true_{p}")));
    h.extend(ShearDirection::ALL.iter().map(|d| format!("Fs_true_{}", d.slug())));
    h.push("T_true".into());
    h
}

/// Writes frames as ground-truth CSV; returns the number of rows.
pub fn write_ground_truth_csv<W: Write>(
    frames: impl IntoIterator<Item = SimFrame>,
    writer: W,
) -> Result<usize, SimError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ground_truth_header())?;
    let mut rows = 0;
    for f in frames {
        let mut rec = Vec::with_capacity(1 + CHANNEL_COUNT + GRID_SIZE + PIEZO_COUNT + 1);
        rec.push(format!("{:.4}", f.t));
        rec.extend(f.volts.iter().map(|v| format!("{v:.6}")));
        rec.extend(f.truth.grid.iter().map(|v| format!("{v:.6}")));
        rec.extend(f.truth.shear.iter().map(|v| format!("{v:.6}")));
        rec.push(format!("{:.4}", f.truth.temperature));
        w.write_record(&rec)?;
        rows += 1;
    }
    w.flush()?;
    Ok(rows)
}
