//! Normal/shear cross-reference.
//!
//! Under a steady press the ratio γ = F_N / F_S of the Hall-derived normal
//! force to the piezo-derived shear stays put. A magnetic disturbance moves
//! only the Hall side, so γ wanders; the detector flags a large coefficient
//! of variation of γ over the last second of sufficiently sheared frames.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{ForceState, RuntimeError};

/// Below this shear magnitude γ is undefined, N.
pub const GAMMA_GUARD_N: f64 = 0.2;

/// How the 3×3 grid is reduced to one normal force.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalAggregate {
    /// Largest grid value: the contact force of a single press.
    #[default]
    Peak,
    /// Sum over the grid.
    Sum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GammaConfig {
    /// Frames kept in the window.
    pub window: usize,
    /// Only frames with shear magnitude above this enter the window, N.
    pub gate_n: f64,
    /// Coefficient-of-variation threshold.
    pub theta: f64,
    pub min_gated: usize,
    pub aggregate: NormalAggregate,
}

impl Default for GammaConfig {
    fn default() -> Self {
        GammaConfig { window: 100, gate_n: 4.0, theta: 0.25, min_gated: 30, aggregate: NormalAggregate::Peak }
    }
}

impl GammaConfig {
    pub fn validate(&self) -> Result<(), RuntimeError> {
        if self.window == 0 || self.min_gated == 0 || self.min_gated > self.window {
            return Err(RuntimeError::InvalidConfig("need 0 < min_gated <= window".into()));
        }
        if !(self.theta > 0.0 && self.gate_n >= GAMMA_GUARD_N) {
            return Err(RuntimeError::InvalidConfig("theta must be positive and the gate at least the guard".into()));
        }
        Ok(())
    }
}

pub fn gamma(state: &ForceState, aggregate: NormalAggregate) -> Option<f64> {
    let fs = state.shear_magnitude();
    if !(fs >= GAMMA_GUARD_N) {
        return None;
    }
    let fnorm = match aggregate {
        NormalAggregate::Peak => state.peak_normal(),
        NormalAggregate::Sum => state.total_normal(),
    };
    Some(fnorm / fs)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Detection {
    Indeterminate { gated: usize },
    Decided { interference: bool, cv: f64, confidence: f64 },
}

impl Detection {
    pub fn flagged(&self) -> bool {
        matches!(self, Detection::Decided { interference: true, .. })
    }
}

/// The last `window` frames; ungated frames occupy a slot without a value.
#[derive(Clone, Debug)]
pub struct GammaWindow {
    cfg: GammaConfig,
    slots: VecDeque<Option<f64>>,
    gated: usize,
}

impl GammaWindow {
    pub fn new(cfg: GammaConfig) -> Self {
        GammaWindow { slots: VecDeque::with_capacity(cfg.window), cfg, gated: 0 }
    }

    pub fn config(&self) -> &GammaConfig {
        &self.cfg
    }

    pub fn push(&mut self, state: &ForceState) {
        let value = (state.shear_magnitude() > self.cfg.gate_n)
            .then(|| gamma(state, self.cfg.aggregate))
            .flatten();
        self.push_value(value);
    }

    pub fn push_value(&mut self, value: Option<f64>) {
        if self.slots.len() == self.cfg.window && self.slots.pop_front().flatten().is_some() {
            self.gated -= 1;
        }
        self.gated += usize::from(value.is_some());
        self.slots.push_back(value);
    }

    pub fn gated(&self) -> usize {
        self.gated
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.slots.iter().flatten().copied()
    }

    pub fn clear(&mut self) {
        self.slots.clear();
        self.gated = 0;
    }
}

pub fn interference_detect(window: &GammaWindow) -> Detection {
    let cfg = window.config();
    let n = window.gated();
    if n < cfg.min_gated {
        return Detection::Indeterminate { gated: n };
    }
    let mean = window.values().sum::<f64>() / n as f64;
    let var = window.values().map(|g| (g - mean).powi(2)).sum::<f64>() / n as f64;
    let cv = if mean.abs() > 0.0 { var.sqrt() / mean.abs() } else { f64::INFINITY };
    Detection::Decided { interference: cv > cfg.theta, cv, confidence: (cv / cfg.theta).min(1.0) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn state(normal: f64, shear: [f64; 2]) -> ForceState {
        let mut s = ForceState::default();
        s.normal_grid[4] = normal;
        s.shear_vector = shear;
        s
    }

    #[test]
    fn ratio_and_guard() {
        assert_eq!(gamma(&state(2.0, [1.0, 0.0]), NormalAggregate::Peak), Some(2.0));
        assert_eq!(gamma(&state(2.0, [0.1, 0.1]), NormalAggregate::Peak), None);
        let mut s = state(2.0, [0.0, 1.0]);
        s.normal_grid[0] = 1.0;
        assert_eq!(gamma(&s, NormalAggregate::Sum), Some(3.0));
        assert_eq!(gamma(&s, NormalAggregate::Peak), Some(2.0));
    }

    #[test]
    fn constant_window_is_clean() {
        let mut w = GammaWindow::new(GammaConfig::default());
        for _ in 0..100 {
            w.push(&state(5.0, [5.0, 0.0]));
        }
        match interference_detect(&w) {
            Detection::Decided { interference, cv, .. } => {
                assert!(!interference);
                assert_eq!(cv, 0.0);
            }
            d => panic!("{d:?}"),
        }
    }

    #[test]
    fn alternating_window_flags() {
        let mut w = GammaWindow::new(GammaConfig::default());
        for i in 0..100 {
            w.push_value(Some(if i % 2 == 0 { 0.5 } else { 2.0 }));
        }
        // mean 1.25, std 0.75
        match interference_detect(&w) {
            Detection::Decided { interference, cv, confidence } => {
                assert!(interference);
                assert!((cv - 0.6).abs() < 1e-12);
                assert_eq!(confidence, 1.0);
            }
            d => panic!("{d:?}"),
        }
    }

    #[test]
    fn gating_and_eviction() {
        let mut w = GammaWindow::new(GammaConfig::default());
        for _ in 0..29 {
            w.push(&state(5.0, [5.0, 0.0]));
        }
        w.push(&state(5.0, [3.0, 0.0]));
        assert_eq!(interference_detect(&w), Detection::Indeterminate { gated: 29 });
        for _ in 0..100 {
            w.push(&state(1.0, [1.0, 0.0]));
        }
        assert_eq!(w.gated(), 0);
    }

    proptest! {
        #[test]
        fn scale_consistent(n in 0.1..10.0f64, sx in -10.0..10.0f64, sy in -10.0..10.0f64, c in 0.1..10.0f64) {
            let a = gamma(&state(n, [sx, sy]), NormalAggregate::Sum);
            let b = gamma(&state(c * n, [c * sx, c * sy]), NormalAggregate::Sum);
            if let (Some(a), Some(b)) = (a, b) {
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            }
        }
    }
}
