//! Live analysis on top of calibrated frames.

mod gamma;
mod material;
mod thermostat;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gamma::{gamma, interference_detect, Detection, GammaConfig, GammaWindow, NormalAggregate, GAMMA_GUARD_N};
pub use material::{
    classify_material, contact_onset, MaterialClass, MaterialConfig, MaterialFeatures, MaterialMonitor, MaterialVerdict,
};
pub use thermostat::{thermostat_duty, Thermostat, ThermostatConfig};

use crate::calibration::{apply_profile, CalibrationProfile, ChannelGroup};
use crate::channels::{GRID_SIZE, PIEZO_COUNT};
use crate::dsp::FilteredFrame;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum RuntimeError {
    #[error("sensor not at rest: {0}")]
    NotAtRest(String),
    #[error("need at least {need} frames, got {got}")]
    TooFewFrames { need: usize, got: usize },
    #[error("invalid thermostat setting: T_H {t_heat} must be below T_S {t_stop}")]
    InvalidThermostat { t_stop: f64, t_heat: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no stable baseline before contact: {0}")]
    NoBaseline(String),
    #[error("trace has no samples after contact onset")]
    EmptyTrace,
}

/// Calibrated sensor output for one filtered frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ForceState {
    pub timestamp_us: u64,
    /// Normal force per grid position 1–9, N.
    pub normal_grid: [f64; GRID_SIZE],
    /// Shear per side x+, x−, y+, y−, N.
    pub shear: [f64; PIEZO_COUNT],
    /// (x+ − x−, y+ − y−), N.
    pub shear_vector: [f64; 2],
    pub temperature: f64,
    pub interference: bool,
    pub saturated: bool,
}

impl ForceState {
    pub fn shear_magnitude(&self) -> f64 {
        self.shear_vector[0].hypot(self.shear_vector[1])
    }

    pub fn total_normal(&self) -> f64 {
        self.normal_grid.iter().sum()
    }

    pub fn peak_normal(&self) -> f64 {
        self.normal_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub const MIN_ZERO_FRAMES: usize = 50;
/// Rest check: per-value std of the calibrated force, N.
pub const REST_STD_N: f64 = 0.5;
/// Rest check: per-value mean of the calibrated force, N.
pub const REST_MEAN_N: f64 = 2.0;

/// Per-channel mean voltage of `frames` for one channel group, after checking
/// that the group's calibrated forces are quiet.
pub fn zero_calibrate(
    profile: &CalibrationProfile,
    frames: &[FilteredFrame],
    group: ChannelGroup,
) -> Result<Vec<f64>, RuntimeError> {
    if frames.len() < MIN_ZERO_FRAMES {
        return Err(RuntimeError::TooFewFrames { need: MIN_ZERO_FRAMES, got: frames.len() });
    }
    let states: Vec<ForceState> = frames.iter().map(|f| apply_profile(profile, f)).collect();
    let values = |s: &ForceState| -> Vec<f64> {
        match group {
            ChannelGroup::Normal => s.normal_grid.to_vec(),
            ChannelGroup::Shear => s.shear.to_vec(),
        }
    };
    let width = values(&states[0]).len();
    let n = states.len() as f64;
    for k in 0..width {
        let mean = states.iter().map(|s| values(s)[k]).sum::<f64>() / n;
        let std = (states.iter().map(|s| (values(s)[k] - mean).powi(2)).sum::<f64>() / n).sqrt();
        if std > REST_STD_N || mean.abs() > REST_MEAN_N {
            return Err(RuntimeError::NotAtRest(format!(
                "{group:?} value {k}: mean {mean:.2} N, std {std:.2} N"
            )));
        }
    }
    Ok(group
        .channels()
        .map(|c| frames.iter().map(|f| f.channels[c]).sum::<f64>() / n)
        .collect())
}

/// Thermostat and detector settings, loadable from JSON.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuntimeConfig {
    pub thermostat: ThermostatConfig,
    pub gamma: GammaConfig,
    pub material: MaterialConfig,
}

impl RuntimeConfig {
    pub fn validate(&self) -> Result<(), RuntimeError> {
        self.thermostat.validate()?;
        self.gamma.validate()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RuntimeError> {
        let text = fs::read_to_string(path).map_err(|e| RuntimeError::InvalidConfig(e.to_string()))?;
        let cfg: RuntimeConfig = serde_json::from_str(&text).map_err(|e| RuntimeError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::tests::flat_profile;
    use crate::channels::CHANNEL_COUNT;

    fn frames(f: impl Fn(usize) -> [f64; CHANNEL_COUNT], n: usize) -> Vec<FilteredFrame> {
        (0..n).map(|i| FilteredFrame { timestamp_us: i as u64 * 10_000, channels: f(i) }).collect()
    }

    fn linear_profile() -> CalibrationProfile {
        let mut p = flat_profile(0.0);
        for m in &mut p.normal_direct {
            m.coefficients[0] = 10.0;
        }
        for m in &mut p.shear {
            m.coefficients[0] = 10.0;
        }
        p
    }

    #[test]
    fn offsets_are_window_means() {
        let p = linear_profile();
        let fs = frames(|i| {
            let mut c = [0.6; CHANNEL_COUNT];
            c[0] = 0.6 + 0.001 * (i % 7) as f64;
            c[3] = 0.62;
            c
        }, 70);
        let offsets = zero_calibrate(&p, &fs, ChannelGroup::Normal).unwrap();
        let oracle: f64 = fs.iter().map(|f| f.channels[0]).sum::<f64>() / 70.0;
        assert_eq!(offsets.len(), 5);
        assert!((offsets[0] - oracle).abs() < 1e-15);
        assert!((offsets[3] - 0.62).abs() < 1e-15);
    }

    #[test]
    fn zeroing_normal_leaves_shear_offsets() {
        let mut p = linear_profile();
        let fs = frames(|_| [0.61; CHANNEL_COUNT], 60);
        let before = p.zero_offsets;
        let offsets = zero_calibrate(&p, &fs, ChannelGroup::Normal).unwrap();
        p.set_zero_offsets(ChannelGroup::Normal, &offsets);
        assert_eq!(p.zero_offsets[5..], before[5..]);
        let s = apply_profile(&p, &fs[0]);
        assert!(s.normal_grid.iter().all(|f| f.abs() < 1e-12));
    }

    #[test]
    fn rejects_loaded_or_short_windows() {
        let p = linear_profile();
        let moving = frames(|i| {
            let mut c = [0.6; CHANNEL_COUNT];
            c[2] = 0.6 + 0.01 * i as f64;
            c
        }, 60);
        assert!(matches!(zero_calibrate(&p, &moving, ChannelGroup::Normal), Err(RuntimeError::NotAtRest(_))));
        // a static 3 N press also fails
        let pressed = frames(|_| {
            let mut c = [0.6; CHANNEL_COUNT];
            c[2] = 0.9;
            c
        }, 60);
        assert!(zero_calibrate(&p, &pressed, ChannelGroup::Normal).is_err());
        // the shear group does not care about the Hall channels
        assert!(zero_calibrate(&p, &moving, ChannelGroup::Shear).is_ok());
        assert_eq!(
            zero_calibrate(&p, &moving[..10], ChannelGroup::Shear),
            Err(RuntimeError::TooFewFrames { need: 50, got: 10 })
        );
    }

    #[test]
    fn config_json_defaults() {
        let cfg: RuntimeConfig = serde_json::from_str(r#"{"thermostat": {"t_stop": 35.0}}"#).unwrap();
        assert_eq!(cfg.thermostat.t_stop, 35.0);
        assert_eq!(cfg.thermostat.t_heat, 32.0);
        assert_eq!(cfg.gamma, GammaConfig::default());
        cfg.validate().unwrap();
    }
}
