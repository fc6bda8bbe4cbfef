//! Contact material from the body-temperature response to a touch.
//!
//! With the thermostat holding the skin near 33 °C, a good conductor pulls
//! the temperature down hard and keeps it there; a poor one barely dents it
//! and the heater recovers within a couple of seconds. The features depend
//! only on times and temperatures, so any sample rate from 10 to 100 Hz
//! gives the same verdict.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::RuntimeError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialClass {
    Metal,
    Plastic,
    CardboardOrFiber,
}

impl MaterialClass {
    pub fn as_str(self) -> &'static str {
        match self {
            MaterialClass::Metal => "metal",
            MaterialClass::Plastic => "plastic",
            MaterialClass::CardboardOrFiber => "cardboard_or_fiber",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaterialConfig {
    /// Pre-contact span used for the baseline, s.
    pub baseline_window_s: f64,
    /// Largest spread of the smoothed baseline, °C.
    pub baseline_tolerance_c: f64,
    /// Centred smoothing window, s.
    pub smoothing_s: f64,
    pub metal_drop_c: f64,
    pub plastic_drop_c: f64,
    /// Share of the drop that must be regained to count as recovering.
    pub recovery_fraction: f64,
    /// The minimum is reached when the smoothed trace first comes this
    /// close to its lowest value, °C.
    pub minimum_band_c: f64,
    /// Contact starts when the peak normal force stays at or above this, N.
    pub onset_force_n: f64,
    /// for at least this long, s.
    pub onset_hold_s: f64,
    /// A live contact is classified after this long, or at release, s.
    pub observe_s: f64,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        MaterialConfig {
            baseline_window_s: 3.0,
            baseline_tolerance_c: 0.3,
            smoothing_s: 0.5,
            metal_drop_c: 2.5,
            plastic_drop_c: 0.8,
            recovery_fraction: 0.2,
            minimum_band_c: 0.05,
            onset_force_n: 1.0,
            onset_hold_s: 0.2,
            observe_s: 15.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialFeatures {
    pub baseline_c: f64,
    pub minimum_c: f64,
    /// baseline − minimum.
    pub drop_c: f64,
    /// Onset to reaching the minimum; `None` if the trace has not recovered
    /// by its end.
    pub recovery_delay_s: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialVerdict {
    pub class: MaterialClass,
    pub features: MaterialFeatures,
}

fn smooth(trace: &[(f64, f64)], half: f64) -> Vec<f64> {
    let mut lo = 0;
    let mut hi = 0;
    let mut sum = 0.0;
    trace
        .iter()
        .map(|&(t, _)| {
            while hi < trace.len() && trace[hi].0 <= t + half {
                sum += trace[hi].1;
                hi += 1;
            }
            while trace[lo].0 < t - half {
                sum -= trace[lo].1;
                lo += 1;
            }
            sum / (hi - lo) as f64
        })
        .collect()
}

/// Start of the first contact in a `(time s, peak normal force N)` trace.
pub fn contact_onset(force: &[(f64, f64)], cfg: &MaterialConfig) -> Option<f64> {
    let mut start = None;
    for &(t, f) in force {
        if f < cfg.onset_force_n {
            start = None;
            continue;
        }
        let s = *start.get_or_insert(t);
        if t - s >= cfg.onset_hold_s {
            return Some(s);
        }
    }
    None
}

/// Classifies a `(time s, temperature °C)` trace given the contact onset.
pub fn classify_material(
    trace: &[(f64, f64)],
    onset_s: f64,
    cfg: &MaterialConfig,
) -> Result<MaterialVerdict, RuntimeError> {
    let half = cfg.smoothing_s / 2.0;
    let pre: Vec<(f64, f64)> =
        trace.iter().copied().filter(|&(t, _)| t >= onset_s - cfg.baseline_window_s && t < onset_s).collect();
    let covered = pre.last().map_or(0.0, |l| l.0) - pre.first().map_or(0.0, |f| f.0);
    if pre.len() < 2 || covered < cfg.baseline_window_s / 2.0 {
        return Err(RuntimeError::NoBaseline(format!("{:.2} s of pre-contact data", covered.max(0.0))));
    }
    let pre_smooth = smooth(&pre, half);
    let (lo, hi) = pre_smooth.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi - lo > cfg.baseline_tolerance_c {
        return Err(RuntimeError::NoBaseline(format!("baseline moves by {:.2} °C", hi - lo)));
    }
    let baseline = pre.iter().map(|p| p.1).sum::<f64>() / pre.len() as f64;

    let post: Vec<(f64, f64)> = trace.iter().copied().filter(|&(t, _)| t >= onset_s).collect();
    if post.is_empty() {
        return Err(RuntimeError::EmptyTrace);
    }
    let post_smooth = smooth(&post, half);
    let minimum = post_smooth.iter().copied().fold(f64::INFINITY, f64::min);
    let reached = post_smooth.iter().position(|&v| v <= minimum + cfg.minimum_band_c).expect("non-empty");
    let drop_c = baseline - minimum;
    let regained = post_smooth[post_smooth.len() - 1] - minimum;
    let recovery_delay_s =
        (drop_c > 0.0 && regained >= cfg.recovery_fraction * drop_c).then(|| post[reached].0 - onset_s);
    let class = if drop_c >= cfg.metal_drop_c {
        MaterialClass::Metal
    } else if drop_c >= cfg.plastic_drop_c {
        MaterialClass::Plastic
    } else {
        MaterialClass::CardboardOrFiber
    };
    Ok(MaterialVerdict {
        class,
        features: MaterialFeatures { baseline_c: baseline, minimum_c: minimum, drop_c, recovery_delay_s },
    })
}

/// Streaming form of [`contact_onset`] plus [`classify_material`]: one
/// verdict per contact, issued once the contact has lasted `observe_s` or
/// has been released.
#[derive(Clone, Debug)]
pub struct MaterialMonitor {
    cfg: MaterialConfig,
    trace: VecDeque<(f64, f64)>,
    /// Start of the current run above (or, in contact, below) the force
    /// threshold.
    run_start: Option<f64>,
    phase: Phase,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Phase {
    Idle,
    Contact { onset: f64 },
    /// Verdict issued; waiting for the release before re-arming.
    Reported,
}

impl MaterialMonitor {
    pub fn new(cfg: MaterialConfig) -> Self {
        MaterialMonitor { cfg, trace: VecDeque::new(), run_start: None, phase: Phase::Idle }
    }

    pub fn in_contact(&self) -> bool {
        !matches!(self.phase, Phase::Idle)
    }

    pub fn reset(&mut self) {
        self.trace.clear();
        self.run_start = None;
        self.phase = Phase::Idle;
    }

    /// Feeds one state as time s, temperature °C and peak normal force N.
    pub fn push(&mut self, t: f64, temperature: f64, peak_normal: f64) -> Option<Result<MaterialVerdict, RuntimeError>> {
        self.trace.push_back((t, temperature));
        let pressed = peak_normal >= self.cfg.onset_force_n;
        let hold = self.cfg.onset_hold_s;
        match self.phase {
            Phase::Idle => {
                let keep = self.cfg.baseline_window_s + hold + self.cfg.smoothing_s;
                while self.trace.front().is_some_and(|&(t0, _)| t - t0 > keep) {
                    self.trace.pop_front();
                }
                self.run_start = if pressed { self.run_start.or(Some(t)) } else { None };
                if let Some(s) = self.run_start.filter(|&s| t - s >= hold) {
                    self.phase = Phase::Contact { onset: s };
                    self.run_start = None;
                }
                None
            }
            Phase::Contact { onset } => {
                self.run_start = if pressed { None } else { self.run_start.or(Some(t)) };
                let released = self.run_start.is_some_and(|s| t - s >= hold);
                if !released && t - onset < self.cfg.observe_s {
                    return None;
                }
                let trace: Vec<(f64, f64)> = self.trace.iter().copied().collect();
                let verdict = classify_material(&trace, onset, &self.cfg);
                self.trace.clear();
                self.phase = if released { Phase::Idle } else { Phase::Reported };
                self.run_start = None;
                Some(verdict)
            }
            Phase::Reported => {
                self.trace.clear();
                self.run_start = if pressed { None } else { self.run_start.or(Some(t)) };
                if self.run_start.is_some_and(|s| t - s >= hold) {
                    self.phase = Phase::Idle;
                    self.run_start = None;
                }
                None
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Baseline 33 °C, contact at 10 s, then a dip to `33 − drop` reached at
    /// `t_min` s after contact, then recovering with a 3 s time constant.
    fn synthetic(drop: f64, t_min: f64, recover: bool, rate: f64) -> Vec<(f64, f64)> {
        let n = (30.0 * rate) as usize;
        (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                let d = t - 10.0;
                let temp = if d < 0.0 {
                    33.0
                } else if d < t_min || !recover {
                    33.0 - drop * (d / t_min).min(1.0)
                } else {
                    33.0 - drop * (-(d - t_min) / 3.0).exp()
                };
                (t, temp)
            })
            .collect()
    }

    #[test]
    fn reference_profiles() {
        let cfg = MaterialConfig::default();
        let metal = classify_material(&synthetic(4.0, 8.0, false, 100.0), 10.0, &cfg).unwrap();
        assert_eq!(metal.class, MaterialClass::Metal);
        assert_eq!(metal.features.recovery_delay_s, None);
        let plastic = classify_material(&synthetic(1.4, 6.0, true, 100.0), 10.0, &cfg).unwrap();
        assert_eq!(plastic.class, MaterialClass::Plastic);
        assert!((plastic.features.recovery_delay_s.unwrap() - 6.0).abs() < 0.5);
        let card = classify_material(&synthetic(0.4, 1.5, true, 100.0), 10.0, &cfg).unwrap();
        assert_eq!(card.class, MaterialClass::CardboardOrFiber);
        assert!(card.features.recovery_delay_s.unwrap() < 2.0);
    }

    #[test]
    fn rate_invariant() {
        let cfg = MaterialConfig::default();
        for (drop, tm, rec) in [(4.0, 8.0, false), (1.4, 6.0, true), (0.4, 1.5, true)] {
            let reference = classify_material(&synthetic(drop, tm, rec, 100.0), 10.0, &cfg).unwrap();
            for rate in [10.0, 20.0, 25.0, 50.0] {
                let v = classify_material(&synthetic(drop, tm, rec, rate), 10.0, &cfg).unwrap();
                assert_eq!(v.class, reference.class);
                assert!((v.features.drop_c - reference.features.drop_c).abs() < 0.05);
            }
        }
    }

    #[test]
    fn onset_needs_a_sustained_press() {
        let cfg = MaterialConfig::default();
        let mut force: Vec<(f64, f64)> = (0..1000).map(|i| (i as f64 / 100.0, 0.0)).collect();
        force[300].1 = 1.5;
        force[301].1 = 1.5;
        for p in &mut force[500..] {
            p.1 = 2.0;
        }
        assert_eq!(contact_onset(&force, &cfg), Some(5.0));
        assert_eq!(contact_onset(&force[..510], &cfg), None);
    }

    #[test]
    fn unstable_baseline_rejected() {
        let cfg = MaterialConfig::default();
        let ramp: Vec<(f64, f64)> = (0..3000).map(|i| (i as f64 / 100.0, 30.0 + 0.3 * i as f64 / 100.0)).collect();
        assert!(matches!(classify_material(&ramp, 10.0, &cfg), Err(RuntimeError::NoBaseline(_))));
        let late: Vec<(f64, f64)> = (0..3000).map(|i| (10.0 + i as f64 / 100.0, 33.0)).collect();
        assert!(matches!(classify_material(&late, 10.0, &cfg), Err(RuntimeError::NoBaseline(_))));
        let pre_only: Vec<(f64, f64)> = (0..900).map(|i| (i as f64 / 100.0, 33.0)).collect();
        assert_eq!(classify_material(&pre_only, 10.0, &cfg), Err(RuntimeError::EmptyTrace));
    }
    #[test]
    fn monitor_matches_offline_verdict() {
        let cfg = MaterialConfig { observe_s: 12.0, ..MaterialConfig::default() };
        let trace = synthetic(1.4, 6.0, true, 100.0);
        let force = |t: f64| if t >= 10.0 { 2.0 } else { 0.0 };
        let mut m = MaterialMonitor::new(cfg.clone());
        let verdicts: Vec<_> = trace.iter().filter_map(|&(t, temp)| m.push(t, temp, force(t))).collect();
        assert_eq!(verdicts.len(), 1);
        let live = verdicts[0].clone().unwrap();
        let cut: Vec<(f64, f64)> = trace.iter().copied().filter(|&(t, _)| t <= 10.0 + 12.0 + 1e-9).collect();
        let offline = classify_material(&cut, 10.0, &cfg).unwrap();
        assert_eq!(live.class, MaterialClass::Plastic);
        assert_eq!(live.class, offline.class);
        assert!((live.features.drop_c - offline.features.drop_c).abs() < 1e-9);
        assert!(m.in_contact());
    }

    #[test]
    fn monitor_reports_each_contact_once() {
        let cfg = MaterialConfig::default();
        let mut m = MaterialMonitor::new(cfg);
        let mut verdicts = 0;
        // Two 5 s touches of a poor conductor, 10 s apart.
        for i in 0..4000 {
            let t = i as f64 / 100.0;
            let touching = (5.0..10.0).contains(&t) || (20.0..25.0).contains(&t);
            let temp = if touching { 32.8 } else { 33.0 };
            if let Some(v) = m.push(t, temp, if touching { 2.0 } else { 0.0 }) {
                assert_eq!(v.unwrap().class, MaterialClass::CardboardOrFiber);
                verdicts += 1;
            }
        }
        assert_eq!(verdicts, 2);
        assert!(!m.in_contact());
    }
}
