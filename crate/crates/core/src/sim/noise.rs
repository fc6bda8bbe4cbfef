//! Per-channel sensor noise: a slow Ornstein–Uhlenbeck drift plus white
//! Gaussian noise, sampled once per channel per frame.
//!
//! The drift dominates. Its 0.5 s correlation time puts most of the power
//! below the 5 Hz low-pass cutoff, so the conditioning chain trims the
//! fluctuation by roughly 8% rather than removing it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channels::{CHANNEL_COUNT, HALL_COUNT, PIEZO_BASE, PIEZO_COUNT, THERMISTOR_CHANNEL};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelNoise {
    /// Stationary std of the drift component, V.
    pub drift_sigma_v: f64,
    /// Drift correlation time, s.
    pub drift_tau_s: f64,
    /// Std of the white component, V.
    pub white_sigma_v: f64,
}

impl ChannelNoise {
    pub const fn silent() -> Self {
        ChannelNoise { drift_sigma_v: 0.0, drift_tau_s: 1.0, white_sigma_v: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub hall: ChannelNoise,
    pub piezo: ChannelNoise,
    pub thermistor: ChannelNoise,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            hall: ChannelNoise { drift_sigma_v: 0.015, drift_tau_s: 0.5, white_sigma_v: 0.00375 },
            piezo: ChannelNoise { drift_sigma_v: 0.025, drift_tau_s: 0.5, white_sigma_v: 0.00625 },
            thermistor: ChannelNoise { drift_sigma_v: 0.0006, drift_tau_s: 0.5, white_sigma_v: 0.00015 },
        }
    }
}

impl NoiseConfig {
    pub fn silent() -> Self {
        NoiseConfig {
            hall: ChannelNoise::silent(),
            piezo: ChannelNoise::silent(),
            thermistor: ChannelNoise::silent(),
        }
    }

    pub fn for_channel(&self, channel: usize) -> ChannelNoise {
        match channel {
            c if c < HALL_COUNT => self.hall,
            c if (PIEZO_BASE..PIEZO_BASE + PIEZO_COUNT).contains(&c) => self.piezo,
            THERMISTOR_CHANNEL => self.thermistor,
            _ => ChannelNoise::silent(),
        }
    }
}

/// Seeded noise generator; identical seeds give bit-identical sequences.
#[derive(Clone, Debug)]
pub struct NoiseSource {
    rng: ChaCha8Rng,
    config: NoiseConfig,
    drift: [f64; CHANNEL_COUNT],
}

impl NoiseSource {
    pub fn new(config: NoiseConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let drift = std::array::from_fn(|c| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * config.for_channel(c).drift_sigma_v
        });
        NoiseSource { rng, config, drift }
    }

    /// Next noise sample for `channel`, `dt` seconds after its previous one.
    pub fn sample(&mut self, channel: usize, dt: f64) -> f64 {
        let cfg = self.config.for_channel(channel);
        if cfg.drift_sigma_v == 0.0 && cfg.white_sigma_v == 0.0 {
            return 0.0;
        }
        let phi = (-dt / cfg.drift_tau_s).exp();
        let innovation: f64 = StandardNormal.sample(&mut self.rng);
        let white: f64 = StandardNormal.sample(&mut self.rng);
        let d = &mut self.drift[channel];
        *d = phi * *d + cfg.drift_sigma_v * (1.0 - phi * phi).sqrt() * innovation;
        *d + cfg.white_sigma_v * white
    }
}
