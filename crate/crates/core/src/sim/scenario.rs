//! Scripted experiments: timed load, thermal and interference events.
//!
//! Scripts are JSON documents:
//!
//! ```json
//! {
//!   "name": "poke",
//!   "duration_s": 6.0,
//!   "seed": 7,
//!   "events": [
//!     { "t": 1.0, "kind": "press", "position": 5, "normal": 3.0, "ramp_s": 1.0 },
//!     { "t": 4.0, "kind": "release", "ramp_s": 0.5 }
//!   ]
//! }
//! ```
//!
//! Event kinds: `press` (with `position` 1–9 or `point` [x, y] mm, `normal` N,
//! `shear` [x, y] N, `ramp_s`), `release`, `set_material`, `set_ambient`,
//! `set_body_temperature` (optionally `hold`), `release_temperature_hold`,
//! `heater`, `interference_on`, `interference_off`, `cycle_start`,
//! `cycle_end`. Cycle markers tag the frames used to build calibration
//! datasets.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Material, SensorGeometry};
use crate::channels::{GridPosition, ShearDirection};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("duration must be positive and finite, got {0}")]
    InvalidDuration(f64),
    #[error("event {index} at t={t} s precedes the previous event")]
    OutOfOrder { index: usize, t: f64 },
    #[error("event {index} at t={t} s lies outside [0, {duration}] s")]
    OutsideDuration { index: usize, t: f64, duration: f64 },
    #[error("event {index}: {reason}")]
    InvalidEvent { index: usize, reason: String },
    #[error("unknown built-in scenario '{0}'")]
    UnknownBuiltin(String),
    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("scenario io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleGroup {
    Normal,
    Shear,
    Thermistor,
}

impl CycleGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            CycleGroup::Normal => "normal",
            CycleGroup::Shear => "shear",
            CycleGroup::Thermistor => "thermistor",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CycleTag {
    pub group: CycleGroup,
    pub label: String,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Press {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        position: Option<GridPosition>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        point: Option<[f64; 2]>,
        #[serde(default)]
        normal: f64,
        #[serde(default)]
        shear: [f64; 2],
        #[serde(default)]
        ramp_s: f64,
    },
    Release {
        #[serde(default)]
        ramp_s: f64,
    },
    SetMaterial {
        material: Material,
    },
    SetAmbient {
        temperature: f64,
    },
    SetBodyTemperature {
        temperature: f64,
        #[serde(default)]
        hold: bool,
    },
    ReleaseTemperatureHold,
    Heater {
        power_w: f64,
    },
    InterferenceOn {
        amplitude_v: f64,
        frequency_hz: f64,
    },
    InterferenceOff,
    CycleStart {
        group: CycleGroup,
        label: String,
        index: usize,
    },
    CycleEnd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub t: f64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialConditions {
    pub body_temperature: f64,
    pub ambient_temperature: f64,
    pub heater_power_w: f64,
}

impl Default for InitialConditions {
    fn default() -> Self {
        InitialConditions { body_temperature: 26.0, ambient_temperature: 26.0, heater_power_w: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub initial: InitialConditions,
    #[serde(default)]
    pub events: Vec<TimedEvent>,
}

pub const MAX_NORMAL_N: f64 = 20.0;
pub const MAX_SHEAR_N: f64 = 20.0;
const TEMP_RANGE: std::ops::RangeInclusive<f64> = -20.0..=60.0;

impl ScenarioScript {
    pub fn new(duration_s: f64, seed: u64) -> Self {
        ScenarioScript { name: None, duration_s, seed, initial: InitialConditions::default(), events: Vec::new() }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = Some(name.to_string());
        self
    }

    pub fn at(mut self, t: f64, event: Event) -> Self {
        self.events.push(TimedEvent { t, event });
        self
    }

    pub fn push(&mut self, t: f64, event: Event) {
        self.events.push(TimedEvent { t, event });
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Checks ordering, ranges and cycle nesting without simulating.
    pub fn validate(&self, geometry: &SensorGeometry, max_heater_w: f64) -> Result<(), ScenarioError> {
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return Err(ScenarioError::InvalidDuration(self.duration_s));
        }
        let init = &self.initial;
        if !TEMP_RANGE.contains(&init.body_temperature) || !TEMP_RANGE.contains(&init.ambient_temperature) {
            return Err(ScenarioError::InvalidEvent {
                index: 0,
                reason: "initial temperatures must lie within [-20, 60] °C".into(),
            });
        }
        let mut prev_t = 0.0;
        let mut has_point = false;
        let mut open_cycle = false;
        for (index, TimedEvent { t, event }) in self.events.iter().enumerate() {
            let t = *t;
            if !t.is_finite() || t < 0.0 || t > self.duration_s {
                return Err(ScenarioError::OutsideDuration { index, t, duration: self.duration_s });
            }
            if t < prev_t {
                return Err(ScenarioError::OutOfOrder { index, t });
            }
            prev_t = t;
            let bad = |reason: String| Err(ScenarioError::InvalidEvent { index, reason });
            match event {
                Event::Press { position, point, normal, shear, ramp_s } => {
                    if position.is_some() && point.is_some() {
                        return bad("press takes either `position` or `point`, not both".into());
                    }
                    if let Some(p) = point {
                        if !geometry.contains(*p) {
                            return bad(format!("contact point {p:?} outside the surface"));
                        }
                    }
                    has_point |= position.is_some() || point.is_some();
                    if !(0.0..=MAX_NORMAL_N).contains(normal) {
                        return bad(format!("normal force {normal} N outside [0, {MAX_NORMAL_N}] N"));
                    }
                    if *normal > 0.0 && !has_point {
                        return bad("normal force without a contact point".into());
                    }
                    if !shear.iter().all(|s| s.is_finite()) || shear[0].hypot(shear[1]) > MAX_SHEAR_N {
                        return bad(format!("shear {shear:?} N out of range"));
                    }
                    if !(ramp_s.is_finite() && *ramp_s >= 0.0) {
                        return bad(format!("ramp time {ramp_s} s must be non-negative"));
                    }
                }
                Event::Release { ramp_s } => {
                    if !(ramp_s.is_finite() && *ramp_s >= 0.0) {
                        return bad(format!("ramp time {ramp_s} s must be non-negative"));
                    }
                }
                Event::SetAmbient { temperature } | Event::SetBodyTemperature { temperature, .. } => {
                    if !TEMP_RANGE.contains(temperature) {
                        return bad(format!("temperature {temperature} °C outside [-20, 60] °C"));
                    }
                }
                Event::Heater { power_w } => {
                    if !(0.0..=max_heater_w).contains(power_w) {
                        return bad(format!("heater power {power_w} W outside [0, {max_heater_w}] W"));
                    }
                }
                Event::InterferenceOn { amplitude_v, frequency_hz } => {
                    if !(amplitude_v.is_finite() && frequency_hz.is_finite() && *frequency_hz >= 0.0) {
                        return bad("interference parameters must be finite".into());
                    }
                }
                Event::CycleStart { group, label, .. } => {
                    if open_cycle {
                        return bad("cycle_start inside an open cycle".into());
                    }
                    validate_label(*group, label).or_else(bad)?;
                    open_cycle = true;
                }
                Event::CycleEnd => {
                    if !open_cycle {
                        return bad("cycle_end without cycle_start".into());
                    }
                    open_cycle = false;
                }
                Event::SetMaterial { .. }
                | Event::ReleaseTemperatureHold
                | Event::InterferenceOff => {}
            }
        }
        Ok(())
    }

    /// Frames produced at 500 Hz.
    pub fn frame_count(&self) -> u64 {
        (self.duration_s * f64::from(crate::acquisition::FRAME_RATE_HZ)).round() as u64
    }

    pub fn builtin(name: &str, seed: u64) -> Result<Self, ScenarioError> {
        Ok(match name {
            "normal-sweep" => builtin::normal_sweep(seed),
            "shear-sweep" => builtin::shear_sweep(seed),
            "thermistor-sweep" => builtin::thermistor_sweep(seed),
            "calibration" => builtin::calibration_suite(seed),
            "idle" => builtin::idle(10.0, seed),
            "center-press" => builtin::steady_hold(GridPosition::new(5).expect("5"), 4.0, 10.0, seed),
            "uniform-press" => builtin::uniform_press(seed),
            "cross-reference" => builtin::cross_reference(seed, None, 60.0),
            "cross-reference-interference" => {
                builtin::cross_reference(seed, Some(builtin::DEFAULT_INTERFERENCE), 60.0)
            }
            "material-metal" => builtin::material_contact(Material::Metal, seed),
            "material-plastic" => builtin::material_contact(Material::Plastic, seed),
            "material-cardboard" => builtin::material_contact(Material::Cardboard, seed),
            "material-fiber" => builtin::material_contact(Material::Fiber, seed),
            other => return Err(ScenarioError::UnknownBuiltin(other.to_string())),
        })
    }

    pub const BUILTINS: &'static [&'static str] = &[
        "normal-sweep",
        "shear-sweep",
        "thermistor-sweep",
        "calibration",
        "idle",
        "center-press",
        "uniform-press",
        "cross-reference",
        "cross-reference-interference",
        "material-metal",
        "material-plastic",
        "material-cardboard",
        "material-fiber",
    ];
}

fn validate_label(group: CycleGroup, label: &str) -> Result<(), String> {
    let ok = match group {
        CycleGroup::Normal => label.parse::<GridPosition>().is_ok(),
        CycleGroup::Shear => label.parse::<ShearDirection>().is_ok(),
        CycleGroup::Thermistor => label.parse::<u32>().is_ok(),
    };
    if ok {
        Ok(())
    } else {
        Err(format!("label '{label}' invalid for {} cycles", group.as_str()))
    }
}

/// Software versions of the bench protocols.
pub mod builtin {
    use super::*;

    pub const CYCLES: usize = 5;

    pub const NORMAL_MAX_N: f64 = 6.0;
    pub const NORMAL_REST_S: f64 = 1.0;
    pub const NORMAL_RAMP_S: f64 = 9.0;
    pub const NORMAL_HOLD_S: f64 = 4.0;
    /// 24 s, i.e. 12 000 frames at 500 Hz.
    pub const NORMAL_CYCLE_S: f64 = 2.0 * (NORMAL_REST_S + NORMAL_RAMP_S) + NORMAL_HOLD_S;

    pub const SHEAR_MAX_N: f64 = 10.0;
    pub const SHEAR_REST_S: f64 = 0.5;
    pub const SHEAR_RAMP_S: f64 = 4.5;
    pub const SHEAR_HOLD_S: f64 = 2.0;
    /// 12 s, i.e. 6 000 frames at 500 Hz.
    pub const SHEAR_CYCLE_S: f64 = 2.0 * (SHEAR_REST_S + SHEAR_RAMP_S) + SHEAR_HOLD_S;

    pub const THERMISTOR_POINTS: usize = 13;
    pub const THERMISTOR_MIN_C: f64 = -10.0;
    pub const THERMISTOR_MAX_C: f64 = 40.0;
    const THERMISTOR_STEP_S: f64 = 3.0;

    /// Oscillating Hall offset used for interference tests: (amplitude V, frequency Hz).
    pub const DEFAULT_INTERFERENCE: (f64, f64) = (0.2, 1.3);

    fn sweep_cycle(
        script: &mut ScenarioScript,
        t0: f64,
        tag: CycleTag,
        press: impl Fn(f64) -> Event,
        (rest, ramp, hold): (f64, f64, f64),
        max: f64,
    ) -> f64 {
        script.push(t0, Event::CycleStart { group: tag.group, label: tag.label, index: tag.index });
        script.push(t0 + rest, press_ramp(&press, max, ramp));
        script.push(t0 + rest + ramp + hold, Event::Release { ramp_s: ramp });
        let end = t0 + 2.0 * (rest + ramp) + hold;
        script.push(end, Event::CycleEnd);
        end
    }

    fn press_ramp(press: &impl Fn(f64) -> Event, max: f64, ramp: f64) -> Event {
        match press(max) {
            Event::Press { position, point, normal, shear, .. } => {
                Event::Press { position, point, normal, shear, ramp_s: ramp }
            }
            other => other,
        }
    }

    /// Continuous 0→6→0 N presses at each of the 9 grid positions, 5 cycles each.
    pub fn normal_sweep(seed: u64) -> ScenarioScript {
        let mut s = ScenarioScript::new(
            GridPosition::all().count() as f64 * CYCLES as f64 * NORMAL_CYCLE_S,
            seed,
        )
        .named("normal-sweep");
        let mut t = 0.0;
        for position in GridPosition::all() {
            for index in 0..CYCLES {
                let tag = CycleTag { group: CycleGroup::Normal, label: position.to_string(), index };
                t = sweep_cycle(
                    &mut s,
                    t,
                    tag,
                    |f| Event::Press { position: Some(position), point: None, normal: f, shear: [0.0; 2], ramp_s: 0.0 },
                    (NORMAL_REST_S, NORMAL_RAMP_S, NORMAL_HOLD_S),
                    NORMAL_MAX_N,
                );
            }
        }
        s
    }

    /// Horizontal 0→10→0 N pushes through the direction converter, one
    /// direction after another, 5 cycles.
    pub fn shear_sweep(seed: u64) -> ScenarioScript {
        let mut s = ScenarioScript::new(
            ShearDirection::ALL.len() as f64 * CYCLES as f64 * SHEAR_CYCLE_S,
            seed,
        )
        .named("shear-sweep");
        let mut t = 0.0;
        for index in 0..CYCLES {
            for dir in ShearDirection::ALL {
                let tag = CycleTag { group: CycleGroup::Shear, label: dir.label().to_string(), index };
                let u = dir.unit();
                t = sweep_cycle(
                    &mut s,
                    t,
                    tag,
                    |f| Event::Press { position: None, point: None, normal: 0.0, shear: [u[0] * f, u[1] * f], ramp_s: 0.0 },
                    (SHEAR_REST_S, SHEAR_RAMP_S, SHEAR_HOLD_S),
                    SHEAR_MAX_N,
                );
            }
        }
        s
    }

    pub fn thermistor_temperatures() -> [f64; THERMISTOR_POINTS] {
        let step = (THERMISTOR_MAX_C - THERMISTOR_MIN_C) / (THERMISTOR_POINTS - 1) as f64;
        std::array::from_fn(|i| THERMISTOR_MIN_C + step * i as f64)
    }

    /// Heater off, body clamped at 13 set points; the last 2 s of each step
    /// are tagged as one sample.
    pub fn thermistor_sweep(seed: u64) -> ScenarioScript {
        let mut s = ScenarioScript::new(THERMISTOR_POINTS as f64 * THERMISTOR_STEP_S, seed)
            .named("thermistor-sweep");
        for (i, temp) in thermistor_temperatures().into_iter().enumerate() {
            let t0 = i as f64 * THERMISTOR_STEP_S;
            s.push(t0, Event::SetBodyTemperature { temperature: temp, hold: true });
            s.push(
                t0 + 1.0,
                Event::CycleStart { group: CycleGroup::Thermistor, label: (i + 1).to_string(), index: 0 },
            );
            s.push(t0 + THERMISTOR_STEP_S, Event::CycleEnd);
        }
        s
    }

    /// Normal, shear and thermistor protocols back to back.
    pub fn calibration_suite(seed: u64) -> ScenarioScript {
        let parts = [normal_sweep(seed), shear_sweep(seed), thermistor_sweep(seed)];
        let mut s = ScenarioScript::new(parts.iter().map(|p| p.duration_s).sum(), seed).named("calibration");
        let mut offset = 0.0;
        for part in parts {
            for e in part.events {
                s.push(e.t + offset, e.event);
            }
            s.push(offset + part.duration_s, Event::ReleaseTemperatureHold);
            offset += part.duration_s;
        }
        s
    }

    pub fn idle(duration_s: f64, seed: u64) -> ScenarioScript {
        ScenarioScript::new(duration_s, seed).named("idle")
    }

    /// Rest 1 s, 1 s ramp to `force` at `position`, hold until the end.
    pub fn steady_hold(position: GridPosition, force: f64, duration_s: f64, seed: u64) -> ScenarioScript {
        ScenarioScript::new(duration_s, seed).named("steady-hold").at(
            1.0,
            Event::Press { position: Some(position), point: None, normal: force, shear: [0.0; 2], ramp_s: 1.0 },
        )
    }

    /// 5 N centre press held for 8 s.
    pub fn uniform_press(seed: u64) -> ScenarioScript {
        ScenarioScript::new(10.0, seed).named("uniform-press").at(
            1.0,
            Event::Press { position: Some(GridPosition::new(5).expect("5")), point: None, normal: 5.0, shear: [0.0; 2], ramp_s: 1.0 },
        )
    }

    /// (normal N, shear N) pairs spanning γ from 0.25 to 1.2 with shear above
    /// the 4 N gate and normal inside the calibrated range.
    pub const CROSS_REFERENCE_LOADS: [(f64, f64); 4] = [(2.0, 8.0), (3.0, 6.0), (5.0, 5.0), (6.0, 5.0)];
    const XREF_RAMP_S: f64 = 1.0;
    const XREF_HOLD_S: f64 = 20.0;
    const XREF_REST_S: f64 = 1.5;
    /// Interference switches on this long into the first hold.
    pub const XREF_INTERFERENCE_DELAY_S: f64 = 5.0;

    /// Centre presses at several load angles and shear headings, repeated
    /// for at least `min_duration_s`. With `interference`, an oscillating
    /// Hall offset starts during the first hold and stays on.
    pub fn cross_reference(seed: u64, interference: Option<(f64, f64)>, min_duration_s: f64) -> ScenarioScript {
        let headings = [0.0_f64, 90.0, 180.0, 270.0, 45.0, 135.0, 225.0, 315.0];
        let segment = XREF_REST_S + 2.0 * XREF_RAMP_S + XREF_HOLD_S;
        let mut events = Vec::new();
        let mut t = 0.0;
        let mut k = 0usize;
        while t < min_duration_s {
            let (normal, shear) = CROSS_REFERENCE_LOADS[k % CROSS_REFERENCE_LOADS.len()];
            let heading = headings[(k / CROSS_REFERENCE_LOADS.len() + k) % headings.len()].to_radians();
            let press_t = t + XREF_REST_S;
            events.push(TimedEvent {
                t: press_t,
                event: Event::Press {
                    position: Some(GridPosition::new(5).expect("5")),
                    point: None,
                    normal,
                    shear: [shear * heading.cos(), shear * heading.sin()],
                    ramp_s: XREF_RAMP_S,
                },
            });
            if k == 0 {
                if let Some((amplitude_v, frequency_hz)) = interference {
                    events.push(TimedEvent {
                        t: press_t + XREF_RAMP_S + XREF_INTERFERENCE_DELAY_S,
                        event: Event::InterferenceOn { amplitude_v, frequency_hz },
                    });
                }
            }
            events.push(TimedEvent {
                t: press_t + XREF_RAMP_S + XREF_HOLD_S,
                event: Event::Release { ramp_s: XREF_RAMP_S },
            });
            t += segment;
            k += 1;
        }
        let name = if interference.is_some() { "cross-reference-interference" } else { "cross-reference" };
        ScenarioScript { name: Some(name.into()), duration_s: t, seed, initial: InitialConditions::default(), events }
    }

    /// Material contact onset, relative to the scenario start.
    pub const MATERIAL_ONSET_S: f64 = 10.0;
    /// Body temperature the material protocol starts from.
    pub const MATERIAL_BASELINE_C: f64 = 33.0;

    /// Body settled near 33 °C in a 26 °C room, touched by `material` at
    /// 10 s with a light centre press, held for 20 s. The heater is expected
    /// to be driven by a thermostat loop outside the script.
    pub fn material_contact(material: Material, seed: u64) -> ScenarioScript {
        let mut s = ScenarioScript::new(MATERIAL_ONSET_S + 20.0, seed).named("material-contact");
        s.initial.body_temperature = MATERIAL_BASELINE_C;
        s.push(MATERIAL_ONSET_S, Event::SetMaterial { material });
        s.push(
            MATERIAL_ONSET_S,
            Event::Press { position: Some(GridPosition::new(5).expect("5")), point: None, normal: 2.0, shear: [0.0; 2], ramp_s: 0.2 },
        );
        s
    }
}
