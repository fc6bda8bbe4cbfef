//! Pre-calibration conditioning: 500→100 Hz group-average decimation, a
//! causal moving average and a 4th-order Butterworth low-pass.
//!
//! Both filter stages run at the decimated rate. The Butterworth sections are
//! primed to their DC steady state on the first sample, so a channel resting
//! at a constant level produces that level from the first output on.

use std::collections::VecDeque;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::RawFrame;
use crate::channels::CHANNEL_COUNT;

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("moving-average window must be at least 1")]
    InvalidWindow,
    #[error("butterworth order must be even and positive, got {0}")]
    InvalidOrder(usize),
    #[error("sample rate must be positive and finite, got {0} Hz")]
    InvalidSampleRate(f64),
    #[error("cutoff {cutoff} Hz must lie strictly between 0 and Nyquist ({nyquist} Hz)")]
    InvalidCutoff { cutoff: f64, nyquist: f64 },
    #[error("decimation factor must be at least 1")]
    InvalidDecimation,
    #[error("non-finite input sample")]
    NonFinite,
    #[error("segments differ in length ({raw} vs {filtered})")]
    LengthMismatch { raw: usize, filtered: usize },
    #[error("raw segment has zero fluctuation; reduction is undefined")]
    ZeroRawFluctuation,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageOrder {
    #[default]
    MovingAverageFirst,
    ButterworthFirst,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub ma_window: usize,
    pub butter_order: usize,
    /// Rate the filter stages run at, Hz.
    pub sample_rate: f64,
    pub cutoff: f64,
    /// Acquisition frames averaged into one filter sample.
    #[serde(default = "default_decimation")]
    pub decimation: usize,
    #[serde(default)]
    pub stage_order: StageOrder,
}

fn default_decimation() -> usize {
    5
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec {
            ma_window: 15,
            butter_order: 4,
            sample_rate: 100.0,
            cutoff: 5.0,
            decimation: default_decimation(),
            stage_order: StageOrder::default(),
        }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<(), DspError> {
        if self.ma_window == 0 {
            return Err(DspError::InvalidWindow);
        }
        if self.butter_order == 0 || self.butter_order % 2 != 0 {
            return Err(DspError::InvalidOrder(self.butter_order));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(DspError::InvalidSampleRate(self.sample_rate));
        }
        let nyquist = self.sample_rate / 2.0;
        if !(self.cutoff > 0.0 && self.cutoff < nyquist) {
            return Err(DspError::InvalidCutoff { cutoff: self.cutoff, nyquist });
        }
        if self.decimation == 0 {
            return Err(DspError::InvalidDecimation);
        }
        Ok(())
    }
}

/// Conditioned channel values at the filter rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilteredFrame {
    /// Start of the decimation group, unwrapped to 64 bits.
    pub timestamp_us: u64,
    pub channels: [f64; CHANNEL_COUNT],
}

/// Mean of each complete group of `factor` samples; a trailing partial group
/// is dropped.
pub fn downsample(samples: &[f64], factor: usize) -> Vec<f64> {
    assert!(factor >= 1, "decimation factor must be at least 1");
    samples.chunks_exact(factor).map(|g| g.iter().sum::<f64>() / factor as f64).collect()
}

#[derive(Clone, Debug)]
pub struct MovingAverage {
    window: usize,
    buf: VecDeque<f64>,
    sum: f64,
}

impl MovingAverage {
    pub fn new(window: usize) -> Result<Self, DspError> {
        if window == 0 {
            return Err(DspError::InvalidWindow);
        }
        Ok(MovingAverage { window, buf: VecDeque::with_capacity(window), sum: 0.0 })
    }

    /// Mean of the last `window` samples, or of all samples seen so far
    /// during warm-up.
    pub fn process(&mut self, x: f64) -> f64 {
        if self.buf.len() == self.window {
            self.buf.pop_front();
        }
        self.buf.push_back(x);
        // Summing the buffer keeps the result free of running-sum drift.
        self.sum = self.buf.iter().sum();
        self.sum / self.buf.len() as f64
    }

    pub fn reset(&mut self) {
        self.buf.clear();
        self.sum = 0.0;
    }
}

pub fn moving_average(samples: &[f64], window: usize) -> Result<Vec<f64>, DspError> {
    let mut ma = MovingAverage::new(window)?;
    Ok(samples.iter().map(|&x| ma.process(x)).collect())
}

/// Second-order section `H(z) = (b0 + b1 z⁻¹ + b2 z⁻²) / (1 + a1 z⁻¹ + a2 z⁻²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiquadCoefs {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl BiquadCoefs {
    /// Complex response at normalized angular frequency `omega` (rad/sample),
    /// as (re, im).
    pub fn response(&self, omega: f64) -> (f64, f64) {
        let z1 = (omega.cos(), -omega.sin());
        let z2 = ((2.0 * omega).cos(), -(2.0 * omega).sin());
        let num = (self.b[0] + self.b[1] * z1.0 + self.b[2] * z2.0, self.b[1] * z1.1 + self.b[2] * z2.1);
        let den = (1.0 + self.a[0] * z1.0 + self.a[1] * z2.0, self.a[0] * z1.1 + self.a[1] * z2.1);
        let d2 = den.0 * den.0 + den.1 * den.1;
        ((num.0 * den.0 + num.1 * den.1) / d2, (num.1 * den.0 - num.0 * den.1) / d2)
    }

    /// Pole radius; the section is stable iff this is below 1.
    pub fn pole_radius(&self) -> f64 {
        let (a1, a2) = (self.a[0], self.a[1]);
        let disc = a1 * a1 - 4.0 * a2;
        if disc < 0.0 {
            a2.sqrt()
        } else {
            let s = disc.sqrt();
            ((-a1 + s) / 2.0).abs().max(((-a1 - s) / 2.0).abs())
        }
    }

    pub fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / (1.0 + self.a[0] + self.a[1])
    }
}

/// Low-pass Butterworth as a cascade of biquads, designed from the analog
/// prototype by the bilinear transform with the cutoff pre-warped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ButterworthDesign {
    pub sample_rate: f64,
    pub cutoff: f64,
    pub sections: Vec<BiquadCoefs>,
}

pub fn butterworth_design(spec: &FilterSpec) -> Result<ButterworthDesign, DspError> {
    spec.validate()?;
    let n = spec.butter_order;
    let k = (PI * spec.cutoff / spec.sample_rate).tan();
    let sections = (0..n / 2)
        .map(|i| {
            let q = 1.0 / (2.0 * ((2 * i + 1) as f64 * PI / (2 * n) as f64).cos());
            let norm = 1.0 / (1.0 + k / q + k * k);
            let b0 = k * k * norm;
            BiquadCoefs {
                b: [b0, 2.0 * b0, b0],
                a: [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm],
            }
        })
        .collect();
    Ok(ButterworthDesign { sample_rate: spec.sample_rate, cutoff: spec.cutoff, sections })
}

impl ButterworthDesign {
    pub fn magnitude(&self, freq_hz: f64) -> f64 {
        let omega = 2.0 * PI * freq_hz / self.sample_rate;
        self.sections
            .iter()
            .map(|s| {
                let (re, im) = s.response(omega);
                re.hypot(im)
            })
            .product()
    }

    pub fn magnitude_db(&self, freq_hz: f64) -> f64 {
        20.0 * self.magnitude(freq_hz).log10()
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct BiquadState {
    z1: f64,
    z2: f64,
}

/// Stateful cascade in transposed direct form II.
#[derive(Clone, Debug)]
pub struct Butterworth {
    design: ButterworthDesign,
    state: Vec<BiquadState>,
    primed: bool,
}

impl Butterworth {
    pub fn new(design: ButterworthDesign) -> Self {
        let state = vec![BiquadState::default(); design.sections.len()];
        Butterworth { design, state, primed: false }
    }

    pub fn design(&self) -> &ButterworthDesign {
        &self.design
    }

    /// Sets every section to the steady state of a constant input `x`.
    pub fn prime(&mut self, x: f64) {
        for (c, s) in self.design.sections.iter().zip(&mut self.state) {
            // unit DC gain: each section's steady output equals its input
            s.z2 = (c.b[2] - c.a[1]) * x;
            s.z1 = x - c.b[0] * x;
        }
        self.primed = true;
    }

    pub fn process(&mut self, x: f64) -> f64 {
        if !self.primed {
            self.prime(x);
        }
        let mut v = x;
        for (c, s) in self.design.sections.iter().zip(&mut self.state) {
            let y = c.b[0] * v + s.z1;
            s.z1 = c.b[1] * v - c.a[0] * y + s.z2;
            s.z2 = c.b[2] * v - c.a[1] * y;
            v = y;
        }
        v
    }

    /// Clears the state; the next sample primes it again.
    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|s| *s = BiquadState::default());
        self.primed = false;
    }
}

/// Butterworth cascade applied from a zero initial state, for analysis.
pub fn filter_apply(design: &ButterworthDesign, samples: &[f64]) -> Vec<f64> {
    let mut f = Butterworth::new(design.clone());
    f.primed = true;
    samples.iter().map(|&x| f.process(x)).collect()
}

/// One channel's moving average and low-pass in the configured order.
#[derive(Clone, Debug)]
pub struct ChannelFilter {
    order: StageOrder,
    ma: MovingAverage,
    butter: Butterworth,
    errors: u64,
}

impl ChannelFilter {
    pub fn new(spec: &FilterSpec) -> Result<Self, DspError> {
        Ok(ChannelFilter {
            order: spec.stage_order,
            ma: MovingAverage::new(spec.ma_window)?,
            butter: Butterworth::new(butterworth_design(spec)?),
            errors: 0,
        })
    }

    /// Filters one sample. A non-finite sample resets the state, is counted
    /// and produces no output.
    pub fn process(&mut self, x: f64) -> Result<f64, DspError> {
        if !x.is_finite() {
            self.reset();
            self.errors += 1;
            return Err(DspError::NonFinite);
        }
        Ok(match self.order {
            StageOrder::MovingAverageFirst => self.butter.process(self.ma.process(x)),
            StageOrder::ButterworthFirst => self.ma.process(self.butter.process(x)),
        })
    }

    pub fn reset(&mut self) {
        self.ma.reset();
        self.butter.reset();
    }

    pub fn errors(&self) -> u64 {
        self.errors
    }
}

/// Decimation plus per-channel filtering for an arbitrary channel count.
#[derive(Clone, Debug)]
pub struct FilterBank {
    factor: usize,
    filters: Vec<ChannelFilter>,
    acc: Vec<f64>,
    filled: usize,
}

impl FilterBank {
    pub fn new(spec: &FilterSpec, channels: usize) -> Result<Self, DspError> {
        let proto = ChannelFilter::new(spec)?;
        Ok(FilterBank { factor: spec.decimation, filters: vec![proto; channels], acc: vec![0.0; channels], filled: 0 })
    }

    /// Accumulates one acquisition-rate sample per channel; every
    /// `decimation` samples returns the filtered group means. A group with a
    /// non-finite value resets the affected channels and yields `None`.
    pub fn push(&mut self, samples: &[f64]) -> Option<Vec<f64>> {
        debug_assert_eq!(samples.len(), self.acc.len());
        for (a, &x) in self.acc.iter_mut().zip(samples) {
            *a += x;
        }
        self.filled += 1;
        if self.filled < self.factor {
            return None;
        }
        let n = self.factor as f64;
        let mut out = Vec::with_capacity(self.acc.len());
        let mut ok = true;
        for (f, a) in self.filters.iter_mut().zip(self.acc.iter_mut()) {
            match f.process(*a / n) {
                Ok(y) => out.push(y),
                Err(_) => ok = false,
            }
            *a = 0.0;
        }
        self.filled = 0;
        ok.then_some(out)
    }

    pub fn reset(&mut self) {
        self.filters.iter_mut().for_each(ChannelFilter::reset);
        self.acc.iter_mut().for_each(|a| *a = 0.0);
        self.filled = 0;
    }

    pub fn errors(&self) -> u64 {
        self.filters.iter().map(ChannelFilter::errors).sum()
    }
}

/// Raw frames in, [`FilteredFrame`]s out at the filter rate.
#[derive(Clone, Debug)]
pub struct SignalConditioner {
    bank: FilterBank,
    group_start: Option<u64>,
    clock: TimestampUnwrapper,
}

impl SignalConditioner {
    pub fn new(spec: &FilterSpec) -> Result<Self, DspError> {
        Ok(SignalConditioner {
            bank: FilterBank::new(spec, CHANNEL_COUNT)?,
            group_start: None,
            clock: TimestampUnwrapper::default(),
        })
    }

    pub fn push(&mut self, frame: &RawFrame) -> Option<FilteredFrame> {
        self.push_volts(frame.timestamp_us, &frame.volts())
    }

    pub fn push_volts(&mut self, timestamp_us: u32, volts: &[f64; CHANNEL_COUNT]) -> Option<FilteredFrame> {
        let ts = self.clock.unwrap(timestamp_us);
        let start = *self.group_start.get_or_insert(ts);
        let out = self.bank.push(volts)?;
        self.group_start = None;
        Some(FilteredFrame { timestamp_us: start, channels: out.try_into().expect("channel count") })
    }

    pub fn reset(&mut self) {
        self.bank.reset();
        self.group_start = None;
    }

    pub fn errors(&self) -> u64 {
        self.bank.errors()
    }
}

/// Extends wrapping 32-bit microsecond timestamps to 64 bits.
#[derive(Clone, Copy, Debug, Default)]
pub struct TimestampUnwrapper {
    last: Option<u32>,
    epoch: u64,
}

impl TimestampUnwrapper {
    pub fn unwrap(&mut self, ts: u32) -> u64 {
        if let Some(last) = self.last {
            if ts < last && last - ts > u32::MAX / 2 {
                self.epoch += 1 << 32;
            }
        }
        self.last = Some(ts);
        self.epoch + u64::from(ts)
    }
}

fn detrended_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let tm = (n - 1.0) / 2.0;
    let xm = xs.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &x) in xs.iter().enumerate() {
        let dt = i as f64 - tm;
        sxy += dt * (x - xm);
        sxx += dt * dt;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let ss: f64 = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| (x - xm - slope * (i as f64 - tm)).powi(2))
        .sum();
    (ss / n).sqrt()
}

/// Percent reduction in linearly detrended standard deviation,
/// `100·(1 − σ_filtered/σ_raw)`.
pub fn fluctuation_metric(raw: &[f64], filtered: &[f64]) -> Result<f64, DspError> {
    if raw.len() != filtered.len() {
        return Err(DspError::LengthMismatch { raw: raw.len(), filtered: filtered.len() });
    }
    let sr = detrended_std(raw);
    if raw.len() < 2 || sr <= 1e-12 * raw.iter().fold(1.0, |m: f64, x| m.max(x.abs())) {
        return Err(DspError::ZeroRawFluctuation);
    }
    Ok(100.0 * (1.0 - detrended_std(filtered) / sr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Magnitude of a bilinear, pre-warped Butterworth low-pass evaluated in
    /// closed form: |H|² = 1 / (1 + (tan(πf/fs) / tan(πfc/fs))^(2N)).
    fn oracle_magnitude(f: f64, fc: f64, fs: f64, order: i32) -> f64 {
        let r = (PI * f / fs).tan() / (PI * fc / fs).tan();
        1.0 / (1.0 + r.powi(2 * order)).sqrt()
    }

    fn design() -> ButterworthDesign {
        butterworth_design(&FilterSpec::default()).unwrap()
    }

    #[test]
    fn downsample_group_means() {
        assert_eq!(downsample(&[1.0, 2.0, 3.0, 4.0, 5.0], 5), vec![3.0]);
        assert_eq!(downsample(&vec![0.7; 500], 5), vec![0.7; 100]);
        assert_eq!(downsample(&[1.0; 12], 5).len(), 2);
    }

    #[test]
    fn moving_average_definitions() {
        assert!(moving_average(&[2.5; 40], 15).unwrap().iter().all(|&y| (y - 2.5).abs() < 1e-15));
        let mut impulse = vec![0.0; 40];
        impulse[5] = 1.0;
        let y = moving_average(&impulse, 15).unwrap();
        for (i, v) in y.iter().enumerate() {
            let expected = match i {
                0..5 | 20.. => 0.0,
                5..15 => 1.0 / (i + 1) as f64,
                _ => 1.0 / 15.0,
            };
            assert!((v - expected).abs() < 1e-15, "i={i}");
        }
        // warm-up averages what has been seen
        assert_eq!(moving_average(&[3.0, 5.0], 15).unwrap(), vec![3.0, 4.0]);
        assert_eq!(MovingAverage::new(0).unwrap_err(), DspError::InvalidWindow);
    }

    #[test]
    fn moving_average_ramp_lags_half_window() {
        let k = 0.3;
        let ramp: Vec<f64> = (0..100).map(|t| k * t as f64).collect();
        let y = moving_average(&ramp, 15).unwrap();
        for t in 20..100 {
            assert_relative_eq!(y[t], k * (t as f64 - 7.0), epsilon = 1e-9);
        }
    }

    #[test]
    fn butterworth_section_qs() {
        let d = design();
        assert_eq!(d.sections.len(), 2);
        assert_relative_eq!(1.0 / (2.0 * (PI / 8.0).cos()), 0.5412, epsilon = 1e-4);
        assert_relative_eq!(1.0 / (2.0 * (3.0 * PI / 8.0).cos()), 1.3066, epsilon = 1e-4);
    }

    #[test]
    fn butterworth_magnitude_matches_closed_form() {
        let d = design();
        assert_relative_eq!(d.magnitude(0.0), 1.0, epsilon = 1e-12);
        assert!((d.magnitude_db(5.0) + 3.0103).abs() < 0.01);
        for f in [0.5, 2.0, 5.0, 7.5, 10.0, 20.0, 40.0] {
            assert_relative_eq!(d.magnitude(f), oracle_magnitude(f, 5.0, 100.0, 4), max_relative = 1e-9);
        }
        // one octave above cutoff; the digital filter falls faster than the
        // analog -24.1 dB because of frequency warping
        let db10 = d.magnitude_db(10.0);
        assert!((db10 - (-24.9789)).abs() < 0.01, "{db10}");
        assert!(db10 < -24.1);
    }

    #[test]
    fn butterworth_is_stable_with_unit_dc_gain() {
        for order in [2, 4, 6, 8] {
            for cutoff in [0.5, 5.0, 20.0, 45.0] {
                let spec = FilterSpec { butter_order: order, cutoff, ..Default::default() };
                let d = butterworth_design(&spec).unwrap();
                assert!(d.sections.iter().all(|s| s.pole_radius() < 1.0));
                let dc: f64 = d.sections.iter().map(BiquadCoefs::dc_gain).product();
                assert_relative_eq!(dc, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn rejects_invalid_specs() {
        let bad = |s: FilterSpec| butterworth_design(&s).unwrap_err();
        assert!(matches!(bad(FilterSpec { cutoff: 50.0, ..Default::default() }), DspError::InvalidCutoff { .. }));
        assert!(matches!(bad(FilterSpec { cutoff: 0.0, ..Default::default() }), DspError::InvalidCutoff { .. }));
        assert_eq!(bad(FilterSpec { butter_order: 3, ..Default::default() }), DspError::InvalidOrder(3));
        assert_eq!(bad(FilterSpec { ma_window: 0, ..Default::default() }), DspError::InvalidWindow);
        assert_eq!(bad(FilterSpec { decimation: 0, ..Default::default() }), DspError::InvalidDecimation);
    }

    #[test]
    fn step_settles_within_a_second() {
        let mut input = vec![0.0; 50];
        input.extend(std::iter::repeat_n(1.0, 200));
        let y = filter_apply(&design(), &input);
        let settle = (50..250).find(|&i| y[i..].iter().all(|v| (v - 1.0).abs() < 0.01)).unwrap();
        assert!(settle - 50 < 100, "settled after {} samples", settle - 50);
        assert!(filter_apply(&design(), &[0.0; 100]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn white_noise_variance_follows_noise_bandwidth() {
        // (1/π)∫₀^π |H(e^jω)|² dω by the midpoint rule on the closed form
        let n = 200_000;
        let bw: f64 = (0..n)
            .map(|i| {
                let f = (i as f64 + 0.5) / n as f64 * 50.0;
                oracle_magnitude(f, 5.0, 100.0, 4).powi(2)
            })
            .sum::<f64>()
            / n as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..400_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y = filter_apply(&design(), &x);
        let var = y[1000..].iter().map(|v| v * v).sum::<f64>() / (y.len() - 1000) as f64;
        assert!((var / bw - 1.0).abs() < 0.03, "var {var} vs bandwidth {bw}");
    }

    #[test]
    fn priming_holds_constant_channels() {
        let mut f = ChannelFilter::new(&FilterSpec::default()).unwrap();
        for _ in 0..50 {
            assert_relative_eq!(f.process(0.6).unwrap(), 0.6, epsilon = 1e-12);
        }
    }

    #[test]
    fn non_finite_input_resets_and_counts() {
        let mut f = ChannelFilter::new(&FilterSpec::default()).unwrap();
        f.process(1.0).unwrap();
        assert_eq!(f.process(f64::NAN), Err(DspError::NonFinite));
        assert_eq!(f.errors(), 1);
        assert_relative_eq!(f.process(2.0).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn conditioner_decimates_five_to_one() {
        let mut c = SignalConditioner::new(&FilterSpec::default()).unwrap();
        let mut out = Vec::new();
        for i in 0..500u32 {
            let frame = RawFrame { seq: i as u16, timestamp_us: i * 2000, channels: [2048; CHANNEL_COUNT] };
            out.extend(c.push(&frame));
        }
        assert_eq!(out.len(), 100);
        assert_eq!(out[1].timestamp_us, 10_000);
        let v = crate::acquisition::to_volts(2048);
        assert!(out.iter().all(|f| f.channels.iter().all(|&x| (x - v).abs() < 1e-12)));
    }

    #[test]
    fn timestamps_unwrap() {
        let mut u = TimestampUnwrapper::default();
        assert_eq!(u.unwrap(u32::MAX - 999), u64::from(u32::MAX) - 999);
        assert_eq!(u.unwrap(1000), (1u64 << 32) + 1000);
    }

    #[test]
    fn fluctuation_metric_edges() {
        let raw: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64).collect();
        assert_relative_eq!(fluctuation_metric(&raw, &raw).unwrap(), 0.0);
        assert_relative_eq!(fluctuation_metric(&raw, &[4.0; 100]).unwrap(), 100.0);
        assert_eq!(fluctuation_metric(&[1.0; 10], &[1.0; 10]), Err(DspError::ZeroRawFluctuation));
        assert!(matches!(fluctuation_metric(&raw, &raw[1..]), Err(DspError::LengthMismatch { .. })));
        // a pure trend carries no fluctuation
        let trend: Vec<f64> = (0..50).map(|i| 0.1 * i as f64).collect();
        assert_eq!(fluctuation_metric(&trend, &trend), Err(DspError::ZeroRawFluctuation));
    }

    proptest! {
        #[test]
        fn filter_is_linear(
            xs in prop::collection::vec(-5.0..5.0f64, 1..200),
            a in -3.0..3.0f64,
            b in -3.0..3.0f64,
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ys: Vec<f64> = xs.iter().map(|_| StandardNormal.sample(&mut rng)).collect();
            let spec = FilterSpec::default();
            let run = |v: &[f64]| {
                let mut f = ChannelFilter::new(&spec).unwrap();
                v.iter().map(|&x| f.process(x).unwrap()).collect::<Vec<_>>()
            };
            let mixed: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| a * x + b * y).collect();
            let lhs = run(&mixed);
            let (fx, fy) = (run(&xs), run(&ys));
            for i in 0..xs.len() {
                prop_assert!((lhs[i] - (a * fx[i] + b * fy[i])).abs() < 1e-9);
            }
        }

        #[test]
        fn constants_pass_unchanged(c in -10.0..10.0f64, n in 1usize..300) {
            let mut f = ChannelFilter::new(&FilterSpec::default()).unwrap();
            for _ in 0..n {
                prop_assert!((f.process(c).unwrap() - c).abs() < 1e-9);
            }
        }
    }
}
