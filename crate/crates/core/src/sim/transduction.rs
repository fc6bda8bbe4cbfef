//! Ground-truth transduction maps from physical quantities to channel volts.
//!
//! These are deliberately outside the calibration model families (quadratic
//! Hall response vs. quintic fit, hyperbolic divider vs. quartic fit, beta
//! thermistor vs. piecewise-linear fit) so fitting error is genuine.

use serde::{Deserialize, Serialize};

use crate::acquisition::ADC_VREF;

/// Per-magnet force to Hall output: `V = V_rest + a·F + b·F²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HallModel {
    pub rest_v: f64,
    pub linear_v_per_n: f64,
    pub quadratic_v_per_n2: f64,
    pub max_force_n: f64,
}

impl Default for HallModel {
    fn default() -> Self {
        HallModel { rest_v: 0.60, linear_v_per_n: 0.10, quadratic_v_per_n2: 0.005, max_force_n: 12.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reading {
    pub volts: f64,
    /// Input was outside the modelled range and got saturated.
    pub saturated: bool,
}

impl HallModel {
    /// Noise-free response `g(F)` above the rest level.
    pub fn response(&self, force: f64) -> f64 {
        self.linear_v_per_n * force + self.quadratic_v_per_n2 * force * force
    }

    /// Inverse of [`response`](Self::response) for the non-negative branch.
    pub fn invert(&self, delta_v: f64) -> f64 {
        let (a, b) = (self.linear_v_per_n, self.quadratic_v_per_n2);
        if b == 0.0 {
            return delta_v / a;
        }
        (-a + (a * a + 4.0 * b * delta_v).sqrt()) / (2.0 * b)
    }

    pub fn voltage(&self, force: f64, interference_v: f64, noise_v: f64) -> Reading {
        let clamped = force.clamp(0.0, self.max_force_n);
        let saturated = clamped != force;
        if saturated {
            log::warn!("hall force {force:.3} N outside [0, {}] N, saturating", self.max_force_n);
        }
        let v = self.rest_v + self.response(clamped) + interference_v + noise_v;
        Reading { volts: v.clamp(0.0, ADC_VREF), saturated }
    }
}

/// Piezoresistor in a divider: `V = Vcc·R_fixed / (R_fixed + R(F))` with
/// `R(F) = R0 / (1 + k·F)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiezoModel {
    pub r0_ohms: f64,
    pub r_fixed_ohms: f64,
    pub supply_v: f64,
    pub sensitivity_per_n: f64,
}

impl Default for PiezoModel {
    fn default() -> Self {
        PiezoModel { r0_ohms: 10_000.0, r_fixed_ohms: 10_000.0, supply_v: 3.3, sensitivity_per_n: 0.3 }
    }
}

impl PiezoModel {
    pub fn resistance(&self, force: f64) -> f64 {
        self.r0_ohms / (1.0 + self.sensitivity_per_n * force.max(0.0))
    }

    pub fn ideal_voltage(&self, force: f64) -> f64 {
        self.supply_v * self.r_fixed_ohms / (self.r_fixed_ohms + self.resistance(force))
    }

    /// Force producing `volts` on the noise-free curve.
    pub fn invert(&self, volts: f64) -> f64 {
        let r = self.r_fixed_ohms * (self.supply_v - volts) / volts;
        (self.r0_ohms / r - 1.0) / self.sensitivity_per_n
    }

    pub fn voltage(&self, force: f64, noise_v: f64) -> Reading {
        Reading {
            volts: (self.ideal_voltage(force) + noise_v).clamp(0.0, ADC_VREF),
            saturated: false,
        }
    }
}

/// NTC beta model `R(T) = R25·exp(B·(1/T_K − 1/298.15))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaThermistor {
    pub r25_ohms: f64,
    pub beta_k: f64,
}

const KELVIN: f64 = 273.15;
const T25_K: f64 = 298.15;

impl Default for BetaThermistor {
    fn default() -> Self {
        BetaThermistor { r25_ohms: 100_000.0, beta_k: 3950.0 }
    }
}

impl BetaThermistor {
    pub fn resistance(&self, celsius: f64) -> f64 {
        self.r25_ohms * (self.beta_k * (1.0 / (celsius + KELVIN) - 1.0 / T25_K)).exp()
    }

    pub fn temperature(&self, ohms: f64) -> f64 {
        1.0 / (1.0 / T25_K + (ohms / self.r25_ohms).ln() / self.beta_k) - KELVIN
    }
}

pub fn thermistor_resistance(celsius: f64) -> f64 {
    BetaThermistor::default().resistance(celsius)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn hall_reference_points() {
        let h = HallModel::default();
        assert_relative_eq!(h.voltage(0.0, 0.0, 0.0).volts, 0.60, epsilon = 1e-12);
        assert_relative_eq!(h.voltage(6.0, 0.0, 0.0).volts, 0.60 + 0.10 * 6.0 + 0.005 * 36.0, epsilon = 1e-12);
        assert_relative_eq!(h.voltage(6.0, 0.0, 0.0).volts, 1.38, epsilon = 1e-12);
        assert_relative_eq!(h.voltage(6.0, 0.2, 0.0).volts, 1.58, epsilon = 1e-12);
    }

    #[test]
    fn hall_saturates_out_of_range() {
        let h = HallModel::default();
        let r = h.voltage(15.0, 0.0, 0.0);
        assert!(r.saturated);
        assert_relative_eq!(r.volts, h.voltage(12.0, 0.0, 0.0).volts);
        assert!(!h.voltage(12.0, 0.0, 0.0).saturated);
    }

    #[test]
    fn piezo_reference_points() {
        let p = PiezoModel::default();
        assert_relative_eq!(p.ideal_voltage(0.0), 1.65, epsilon = 1e-12);
        // R(5) = 10k / 2.5 = 4k; V = 3.3 * 10 / 14
        assert_relative_eq!(p.resistance(5.0), 4_000.0, epsilon = 1e-9);
        assert_relative_eq!(p.ideal_voltage(5.0), 3.3 * 10.0 / 14.0, epsilon = 1e-12);
        assert!((p.ideal_voltage(5.0) - 2.357).abs() < 1e-3);
        assert!(p.ideal_voltage(1e9) > 3.2999);
        assert_relative_eq!(p.ideal_voltage(-3.0), 1.65, epsilon = 1e-12);
    }

    #[test]
    fn thermistor_reference_points() {
        let t = BetaThermistor::default();
        assert_relative_eq!(thermistor_resistance(25.0), 100_000.0, epsilon = 1e-6);
        assert!(t.resistance(26.0) < t.resistance(25.0));
        let expected = 100_000.0 * (3950.0 * (1.0 / 306.15 - 1.0 / 298.15_f64)).exp();
        assert_relative_eq!(t.resistance(33.0), expected, epsilon = 1e-6);
        assert!((t.resistance(33.0) - 70_735.0).abs() < 5.0);
    }

    proptest! {
        #[test]
        fn maps_are_strictly_monotone(a in 0.0..11.9f64, step in 1e-3..0.1f64) {
            let h = HallModel::default();
            let p = PiezoModel::default();
            prop_assert!(h.response(a + step) > h.response(a));
            prop_assert!(p.ideal_voltage(a + step) > p.ideal_voltage(a));
        }

        #[test]
        fn inverses_round_trip(f in 0.0..12.0f64, c in -20.0..60.0f64) {
            let h = HallModel::default();
            let p = PiezoModel::default();
            let t = BetaThermistor::default();
            prop_assert!((h.invert(h.response(f)) - f).abs() < 1e-9);
            prop_assert!((p.invert(p.ideal_voltage(f)) - f).abs() < 1e-9);
            prop_assert!((t.temperature(t.resistance(c)) - c).abs() < 1e-9);
        }
    }
}
