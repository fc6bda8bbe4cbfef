//! Calibration models and their fitting.
//!
//! - Positions 1, 3, 5, 7, 9 (a magnet underneath): quintic in the
//!   offset-corrected Hall voltage.
//! - Positions 2, 4, 6, 8: linear combination of the three adjacent direct
//!   estimates.
//! - Shear, per direction: quartic in the offset-corrected piezo voltage.
//! - Temperature: 12 linear segments through 13 (resistance, temperature)
//!   knots.

mod dataset;
mod eval;
pub mod fit;

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{
    build_dataset, channel_columns, CalibrationDataset, CalibrationSample, Cycle, DatasetBuilder, SplitMode,
    CALIBRATION_CYCLES, CYCLES_PER_GROUP, DATASET_SCHEMA_VERSION,
};
pub use eval::{evaluate, EvalGroup, EvalReport, GroupMetrics, LabelMetrics, Metrics, ThermistorMetrics};
pub use fit::{FitDiagnostics, FitError, Multilinear, PiecewiseLinear, Polynomial, Segment};

use crate::acquisition::ThermistorDivider;
use crate::channels::{
    GridPosition, ShearDirection, CHANNEL_COUNT, GRID_SIZE, HALL_BASE, HALL_COUNT, PIEZO_BASE, PIEZO_COUNT,
    THERMISTOR_CHANNEL,
};
use crate::dsp::{DspError, FilterSpec, FilteredFrame};
use crate::runtime::ForceState;
use crate::sim::CycleGroup;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("{group}: expected 5 cycles, found {count}")]
    CycleCount { group: String, count: usize },
    #[error("missing data: {0}")]
    MissingData(String),
    #[error("position {0} needs the direct model of position {1}")]
    MissingModel(GridPosition, GridPosition),
    #[error("schema version {found} not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("validation set is empty")]
    EmptyValidation,
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub const PROFILE_SCHEMA_VERSION: u32 = 1;
pub const NORMAL_DEGREE: usize = 5;
pub const SHEAR_DEGREE: usize = 4;
pub const THERMISTOR_KNOTS: usize = 13;
/// Full-scale ranges of the calibration sweeps, N.
pub const NORMAL_RANGE_N: f64 = 6.0;
pub const SHEAR_RANGE_N: f64 = 10.0;
/// Calibrated forces are clamped to this interval, N.
pub const FORCE_CLAMP: (f64, f64) = (-0.5, 15.0);
/// Fits need this many samples and this fraction of the sweep range.
pub const MIN_FIT_SAMPLES: usize = 100;
pub const MIN_SPAN_FRACTION: f64 = 0.8;
/// Ground truth below this counts as unloaded when estimating offsets, N.
pub const REST_TRUTH_N: f64 = 1e-3;

/// `F = b + Σ a_j·x^j`, x the offset-corrected Hall voltage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectModel {
    pub position: GridPosition,
    pub bias: f64,
    pub coefficients: [f64; NORMAL_DEGREE],
    pub diagnostics: FitDiagnostics,
}

impl DirectModel {
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| (acc + c) * x) + self.bias
    }

    fn from_poly(position: GridPosition, p: Polynomial, diagnostics: FitDiagnostics) -> Self {
        DirectModel {
            position,
            bias: p.coefficients[0],
            coefficients: p.coefficients[1..].try_into().expect("quintic"),
            diagnostics,
        }
    }
}

/// `F = b + Σ d_j·F_rj` over the adjacency triple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpModel {
    pub position: GridPosition,
    pub adjacency: [GridPosition; 3],
    pub bias: f64,
    pub weights: [f64; 3],
    pub diagnostics: FitDiagnostics,
}

impl InterpModel {
    pub fn eval(&self, neighbours: [f64; 3]) -> f64 {
        self.bias + self.weights.iter().zip(neighbours).map(|(d, f)| d * f).sum::<f64>()
    }
}

/// `F = x_k + Σ y_kj·x^j`, x the offset-corrected piezo voltage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShearModel {
    pub direction: ShearDirection,
    pub bias: f64,
    pub coefficients: [f64; SHEAR_DEGREE],
    pub diagnostics: FitDiagnostics,
}

impl ShearModel {
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, &c| (acc + c) * x) + self.bias
    }
}

/// Piecewise-linear temperature in thermistor resistance (Ω).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermistorModel {
    pub table: PiecewiseLinear,
    pub divider: ThermistorDivider,
}

impl ThermistorModel {
    pub fn temperature_at_resistance(&self, ohms: f64) -> f64 {
        self.table.eval(ohms)
    }

    /// Temperature for a divider voltage; at the rails the nearest end knot
    /// is reported.
    pub fn temperature_at_voltage(&self, volts: f64) -> f64 {
        match self.divider.resistance(volts) {
            Some(r) => self.table.eval(r),
            None => {
                let knot = if volts <= 0.0 { 0 } else { self.table.breakpoints.len() - 1 };
                self.table.eval(self.table.breakpoints[knot])
            }
        }
    }
}

/// Channel groups that can be zeroed independently.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelGroup {
    Normal,
    Shear,
}

impl ChannelGroup {
    pub fn channels(self) -> std::ops::Range<usize> {
        match self {
            ChannelGroup::Normal => HALL_BASE..HALL_BASE + HALL_COUNT,
            ChannelGroup::Shear => PIEZO_BASE..PIEZO_BASE + PIEZO_COUNT,
        }
    }
}

impl std::str::FromStr for ChannelGroup {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "normal" => Ok(ChannelGroup::Normal),
            "shear" => Ok(ChannelGroup::Shear),
            other => Err(format!("unknown channel group '{other}'")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProfile {
    pub schema_version: u32,
    pub id: String,
    /// Unix seconds.
    pub created_at: u64,
    pub normal_direct: Vec<DirectModel>,
    pub normal_interp: Vec<InterpModel>,
    pub shear: Vec<ShearModel>,
    pub thermistor: ThermistorModel,
    /// Rest voltage per channel, subtracted before evaluation.
    pub zero_offsets: [f64; CHANNEL_COUNT],
    pub filter_spec: FilterSpec,
}

/// Offsets from unloaded rows: Hall channels from normal cycles, piezo
/// channels from the rows of their own shear direction.
pub fn rest_offsets(calib: &CalibrationDataset) -> Result<[f64; CHANNEL_COUNT], CalibrationError> {
    let mut offsets = [0.0; CHANNEL_COUNT];
    let mean = |rows: Vec<f64>, what: &str| -> Result<f64, CalibrationError> {
        if rows.is_empty() {
            return Err(CalibrationError::MissingData(format!("no rest rows for {what}")));
        }
        Ok(rows.iter().sum::<f64>() / rows.len() as f64)
    };
    for c in ChannelGroup::Normal.channels() {
        let rows = calib
            .of_kind(CycleGroup::Normal)
            .flat_map(|cy| &cy.samples)
            .filter(|s| s.truth.abs() < REST_TRUTH_N)
            .map(|s| s.channels[c])
            .collect();
        offsets[c] = mean(rows, &format!("hall channel {c}"))?;
    }
    for d in ShearDirection::ALL {
        let c = PIEZO_BASE + d.index();
        let rows = calib
            .labelled(CycleGroup::Shear, d.label())
            .flat_map(|cy| &cy.samples)
            .filter(|s| s.truth.abs() < REST_TRUTH_N)
            .map(|s| s.channels[c])
            .collect();
        offsets[c] = mean(rows, &format!("shear {d}"))?;
    }
    Ok(offsets)
}

fn check_span(what: &str, y: &[f64], range: f64) -> Result<(), FitError> {
    if y.len() < MIN_FIT_SAMPLES {
        return Err(FitError::TooFewSamples { what: what.into(), need: MIN_FIT_SAMPLES, got: y.len() });
    }
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let need = MIN_SPAN_FRACTION * range;
    if hi - lo < need {
        return Err(FitError::InsufficientSpan { what: what.into(), span: hi - lo, need });
    }
    Ok(())
}

fn samples_of<'a>(
    calib: &'a CalibrationDataset,
    kind: CycleGroup,
    label: &'a str,
) -> impl Iterator<Item = &'a CalibrationSample> + 'a {
    calib.labelled(kind, label).flat_map(|c| &c.samples)
}

pub fn fit_normal_direct(
    calib: &CalibrationDataset,
    position: GridPosition,
    offsets: &[f64; CHANNEL_COUNT],
) -> Result<DirectModel, CalibrationError> {
    let channel = position
        .hall_index()
        .ok_or_else(|| CalibrationError::InvalidProfile(format!("position {position} has no magnet")))?;
    let what = format!("normal position {position}");
    let label = position.to_string();
    let (x, y): (Vec<f64>, Vec<f64>) = samples_of(calib, CycleGroup::Normal, &label)
        .map(|s| (s.channels[channel] - offsets[channel], s.truth))
        .unzip();
    check_span(&what, &y, NORMAL_RANGE_N)?;
    let (poly, diag) = fit::fit_polynomial(&what, &x, &y, NORMAL_DEGREE)?;
    Ok(DirectModel::from_poly(position, poly, diag))
}

pub fn fit_normal_interp(
    calib: &CalibrationDataset,
    position: GridPosition,
    direct: &[DirectModel],
    offsets: &[f64; CHANNEL_COUNT],
) -> Result<InterpModel, CalibrationError> {
    let adjacency = position
        .adjacency()
        .ok_or_else(|| CalibrationError::InvalidProfile(format!("position {position} is not interpolated")))?;
    let models: Vec<&DirectModel> = adjacency
        .iter()
        .map(|&p| {
            direct.iter().find(|m| m.position == p).ok_or(CalibrationError::MissingModel(position, p))
        })
        .collect::<Result<_, _>>()?;
    let what = format!("normal position {position}");
    let label = position.to_string();
    let (rows, y): (Vec<Vec<f64>>, Vec<f64>) = samples_of(calib, CycleGroup::Normal, &label)
        .map(|s| (direct_estimates(&models, &s.channels, offsets).to_vec(), s.truth))
        .unzip();
    check_span(&what, &y, NORMAL_RANGE_N)?;
    let (m, diag) = fit::fit_multilinear(&what, &rows, &y)?;
    Ok(InterpModel {
        position,
        adjacency,
        bias: m.bias,
        weights: m.weights.try_into().expect("three weights"),
        diagnostics: diag,
    })
}

fn direct_estimates(models: &[&DirectModel], channels: &[f64; CHANNEL_COUNT], offsets: &[f64; CHANNEL_COUNT]) -> [f64; 3] {
    std::array::from_fn(|j| {
        let c = models[j].position.hall_index().expect("direct position");
        models[j].eval(channels[c] - offsets[c])
    })
}

pub fn fit_shear(
    calib: &CalibrationDataset,
    direction: ShearDirection,
    offsets: &[f64; CHANNEL_COUNT],
) -> Result<ShearModel, CalibrationError> {
    let channel = PIEZO_BASE + direction.index();
    let what = format!("shear {direction}");
    let (x, y): (Vec<f64>, Vec<f64>) = samples_of(calib, CycleGroup::Shear, direction.label())
        .map(|s| (s.channels[channel] - offsets[channel], s.truth))
        .unzip();
    check_span(&what, &y, SHEAR_RANGE_N)?;
    let (poly, diag) = fit::fit_polynomial(&what, &x, &y, SHEAR_DEGREE)?;
    Ok(ShearModel {
        direction,
        bias: poly.coefficients[0],
        coefficients: poly.coefficients[1..].try_into().expect("quartic"),
        diagnostics: diag,
    })
}

/// Interpolant through exactly 13 (resistance Ω, temperature °C) samples.
pub fn fit_thermistor(points: &[(f64, f64)], divider: ThermistorDivider) -> Result<ThermistorModel, CalibrationError> {
    if points.len() != THERMISTOR_KNOTS {
        return Err(FitError::WrongCount { what: "thermistor".into(), expected: THERMISTOR_KNOTS, got: points.len() }.into());
    }
    Ok(ThermistorModel { table: PiecewiseLinear::through("thermistor", points)?, divider })
}

impl CalibrationProfile {
    /// Fits every model from the calibration cycles.
    pub fn fit(calib: &CalibrationDataset, filter_spec: FilterSpec, id: &str) -> Result<Self, CalibrationError> {
        let divider = ThermistorDivider::default();
        let zero_offsets = rest_offsets(calib)?;
        let normal_direct = GridPosition::DIRECT
            .iter()
            .map(|&p| fit_normal_direct(calib, p, &zero_offsets))
            .collect::<Result<Vec<_>, _>>()?;
        let normal_interp = GridPosition::INTERPOLATED
            .iter()
            .map(|&p| fit_normal_interp(calib, p, &normal_direct, &zero_offsets))
            .collect::<Result<Vec<_>, _>>()?;
        let shear = ShearDirection::ALL
            .iter()
            .map(|&d| fit_shear(calib, d, &zero_offsets))
            .collect::<Result<Vec<_>, _>>()?;
        let thermistor = fit_thermistor(&calib.thermistor_points(&divider)?, divider)?;
        let profile = CalibrationProfile {
            schema_version: PROFILE_SCHEMA_VERSION,
            id: id.to_string(),
            created_at: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            normal_direct,
            normal_interp,
            shear,
            thermistor,
            zero_offsets,
            filter_spec,
        };
        profile.validate()?;
        Ok(profile)
    }

    /// Checks model coverage, adjacency triples and the thermistor table.
    pub fn validate(&self) -> Result<(), CalibrationError> {
        let bad = |m: String| Err(CalibrationError::InvalidProfile(m));
        if self.schema_version != PROFILE_SCHEMA_VERSION {
            return Err(CalibrationError::SchemaVersion { found: self.schema_version, expected: PROFILE_SCHEMA_VERSION });
        }
        for (i, p) in GridPosition::DIRECT.iter().enumerate() {
            if self.normal_direct.get(i).map(|m| m.position) != Some(*p) {
                return bad(format!("direct model for position {p} missing or out of order"));
            }
        }
        for (i, p) in GridPosition::INTERPOLATED.iter().enumerate() {
            match self.normal_interp.get(i) {
                Some(m) if m.position == *p && Some(m.adjacency) == p.adjacency() => {}
                _ => return bad(format!("interpolation model for position {p} missing or mis-wired")),
            }
        }
        for (i, d) in ShearDirection::ALL.iter().enumerate() {
            if self.shear.get(i).map(|m| m.direction) != Some(*d) {
                return bad(format!("shear model for {d} missing or out of order"));
            }
        }
        let t = &self.thermistor.table;
        if t.breakpoints.len() != THERMISTOR_KNOTS || t.segments.len() != THERMISTOR_KNOTS - 1 {
            return bad("thermistor table must have 13 knots".into());
        }
        if t.breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return bad("thermistor knots not strictly increasing".into());
        }
        if t.continuity_defect() > 1e-6 {
            return bad("thermistor table is discontinuous".into());
        }
        let coefs = self
            .normal_direct
            .iter()
            .flat_map(|m| std::iter::once(m.bias).chain(m.coefficients))
            .chain(self.normal_interp.iter().flat_map(|m| std::iter::once(m.bias).chain(m.weights)))
            .chain(self.shear.iter().flat_map(|m| std::iter::once(m.bias).chain(m.coefficients)))
            .chain(self.zero_offsets);
        if coefs.into_iter().any(|v| !v.is_finite()) {
            return bad("non-finite coefficient".into());
        }
        self.filter_spec.validate()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CalibrationError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let found = value.get("schema_version").and_then(serde_json::Value::as_u64).unwrap_or(0) as u32;
        if found != PROFILE_SCHEMA_VERSION {
            return Err(CalibrationError::SchemaVersion { found, expected: PROFILE_SCHEMA_VERSION });
        }
        let profile: CalibrationProfile = serde_json::from_value(value)?;
        profile.validate()?;
        Ok(profile)
    }

    pub fn save(&self, path: &Path) -> Result<(), CalibrationError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CalibrationError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    /// Replaces the offsets of one channel group, leaving the other intact.
    pub fn set_zero_offsets(&mut self, group: ChannelGroup, offsets: &[f64]) {
        for (c, &v) in group.channels().zip(offsets) {
            self.zero_offsets[c] = v;
        }
    }
}

fn clamp_force(f: f64, saturated: &mut bool) -> f64 {
    let (lo, hi) = FORCE_CLAMP;
    if !(lo..=hi).contains(&f) {
        *saturated = true;
    }
    if f.is_nan() {
        *saturated = true;
        return 0.0;
    }
    f.clamp(lo, hi)
}

/// Converts one conditioned frame to calibrated forces and temperature.
/// Interference is left unset; the runtime detector fills it in.
pub fn apply_profile(profile: &CalibrationProfile, frame: &FilteredFrame) -> ForceState {
    let x: [f64; CHANNEL_COUNT] = std::array::from_fn(|c| frame.channels[c] - profile.zero_offsets[c]);
    let mut saturated = false;

    let direct: [f64; HALL_COUNT] =
        std::array::from_fn(|i| profile.normal_direct[i].eval(x[HALL_BASE + i]));
    let mut grid = [0.0; GRID_SIZE];
    for (m, &f) in profile.normal_direct.iter().zip(&direct) {
        grid[m.position.index()] = f;
    }
    for m in &profile.normal_interp {
        let neighbours = m.adjacency.map(|p| direct[p.hall_index().expect("direct position")]);
        grid[m.position.index()] = m.eval(neighbours);
    }
    let normal_grid = grid.map(|f| clamp_force(f, &mut saturated));

    let shear: [f64; PIEZO_COUNT] = std::array::from_fn(|k| {
        let f = profile.shear[k].eval(x[PIEZO_BASE + k]);
        clamp_force(f, &mut saturated)
    });

    let temperature = profile.thermistor.temperature_at_voltage(frame.channels[THERMISTOR_CHANNEL]);
    ForceState {
        timestamp_us: frame.timestamp_us,
        normal_grid,
        shear,
        shear_vector: [shear[0] - shear[1], shear[2] - shear[3]],
        temperature,
        interference: false,
        saturated,
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn diag() -> FitDiagnostics {
        FitDiagnostics { samples: 0, rmse: 0.0, regularized: false }
    }

    /// A profile whose forces all equal `bias`.
    pub(crate) fn flat_profile(bias: f64) -> CalibrationProfile {
        let knots: Vec<(f64, f64)> = (0..13).map(|i| (10_000.0 + 20_000.0 * i as f64, 40.0 - 4.0 * i as f64)).collect();
        CalibrationProfile {
            schema_version: PROFILE_SCHEMA_VERSION,
            id: "flat".into(),
            created_at: 0,
            normal_direct: GridPosition::DIRECT
                .iter()
                .map(|&position| DirectModel { position, bias, coefficients: [0.0; 5], diagnostics: diag() })
                .collect(),
            normal_interp: GridPosition::INTERPOLATED
                .iter()
                .map(|&position| InterpModel {
                    position,
                    adjacency: position.adjacency().unwrap(),
                    bias,
                    weights: [0.0; 3],
                    diagnostics: diag(),
                })
                .collect(),
            shear: ShearDirection::ALL
                .iter()
                .map(|&direction| ShearModel { direction, bias, coefficients: [0.0; 4], diagnostics: diag() })
                .collect(),
            thermistor: fit_thermistor(&knots, ThermistorDivider::default()).unwrap(),
            zero_offsets: [0.6, 0.6, 0.6, 0.6, 0.6, 1.65, 1.65, 1.65, 1.65, 0.0],
            filter_spec: FilterSpec::default(),
        }
    }

    fn frame(channels: [f64; CHANNEL_COUNT]) -> FilteredFrame {
        FilteredFrame { timestamp_us: 42, channels }
    }

    #[test]
    fn zero_coefficients_give_bias_everywhere() {
        let p = flat_profile(1.25);
        let s = apply_profile(&p, &frame([1.0; CHANNEL_COUNT]));
        assert!(s.normal_grid.iter().all(|&f| f == 1.25));
        assert!(s.shear.iter().all(|&f| f == 1.25));
        assert_eq!(s.shear_vector, [0.0, 0.0]);
        assert!(!s.saturated);
        assert_eq!(s.timestamp_us, 42);
    }

    #[test]
    fn rest_frame_reads_biases() {
        let mut p = flat_profile(0.0);
        p.normal_direct[2].coefficients = [3.0, 0.5, 0.0, 0.0, 0.0];
        p.shear[1].coefficients = [4.0, 0.0, 0.0, 0.0];
        let s = apply_profile(&p, &frame(p.zero_offsets));
        assert!(s.normal_grid.iter().all(|&f| f == 0.0));
        assert!(s.shear.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn forces_clamp_and_flag() {
        let p = flat_profile(20.0);
        let s = apply_profile(&p, &frame([1.0; CHANNEL_COUNT]));
        assert!(s.saturated);
        assert!(s.normal_grid.iter().all(|&f| f == FORCE_CLAMP.1));
        let s = apply_profile(&flat_profile(-3.0), &frame([1.0; CHANNEL_COUNT]));
        assert!(s.normal_grid.iter().all(|&f| f == FORCE_CLAMP.0));
    }

    #[test]
    fn json_round_trip_and_schema_check() {
        let p = flat_profile(0.1);
        let back = CalibrationProfile::from_json(&p.to_json()).unwrap();
        assert_eq!(back, p);
        let mut v: serde_json::Value = serde_json::from_str(&p.to_json()).unwrap();
        v["schema_version"] = 99.into();
        assert!(matches!(
            CalibrationProfile::from_json(&v.to_string()),
            Err(CalibrationError::SchemaVersion { found: 99, .. })
        ));
        let mut broken = p.clone();
        broken.normal_interp[0].adjacency = [GridPosition::new(1).unwrap(); 3];
        assert!(broken.validate().is_err());
    }

    #[test]
    fn zero_offsets_update_one_group() {
        let mut p = flat_profile(0.0);
        p.set_zero_offsets(ChannelGroup::Normal, &[0.7; 5]);
        assert_eq!(&p.zero_offsets[..5], &[0.7; 5]);
        assert_eq!(&p.zero_offsets[5..9], &[1.65; 4]);
    }

    #[test]
    fn interpolated_positions_use_fixed_triples() {
        let mut p = flat_profile(0.0);
        for (i, m) in p.normal_direct.iter_mut().enumerate() {
            m.bias = (i + 1) as f64;
        }
        for m in &mut p.normal_interp {
            m.weights = [0.1, 0.01, 0.001];
        }
        let s = apply_profile(&p, &frame([0.0; CHANNEL_COUNT]));
        // direct biases by magnet: 1→1, 3→2, 5→3, 7→4, 9→5
        let expect = [(1, 0.123), (3, 0.134), (5, 0.235), (7, 0.345)];
        for (idx, f) in expect {
            assert!((s.normal_grid[idx] - f).abs() < 1e-12, "grid[{idx}] = {}", s.normal_grid[idx]);
        }
        assert!(!s.saturated);
    }
}
