use serde::{Deserialize, Serialize};

pub const ADC_VREF: f64 = 3.3;
pub const ADC_FULL_SCALE: u16 = 4095;

/// 12-bit converter with a 3.3 V reference.
pub fn quantize(volts: f64) -> u16 {
    Adc::default().quantize(volts)
}

pub fn to_volts(count: u16) -> f64 {
    Adc::default().to_volts(count)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adc {
    pub vref: f64,
    pub full_scale: u16,
}

impl Default for Adc {
    fn default() -> Self {
        Adc { vref: ADC_VREF, full_scale: ADC_FULL_SCALE }
    }
}

impl Adc {
    pub fn quantize(&self, volts: f64) -> u16 {
        if !volts.is_finite() {
            return if volts > 0.0 { self.full_scale } else { 0 };
        }
        let fs = f64::from(self.full_scale);
        (volts / self.vref * fs).round().clamp(0.0, fs) as u16
    }

    pub fn to_volts(&self, count: u16) -> f64 {
        f64::from(count.min(self.full_scale)) / f64::from(self.full_scale) * self.vref
    }
}

/// Thermistor to ground with a series resistor to the supply; the ADC reads
/// the thermistor node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermistorDivider {
    pub series_ohms: f64,
    pub supply_v: f64,
}

impl Default for ThermistorDivider {
    fn default() -> Self {
        ThermistorDivider { series_ohms: 100_000.0, supply_v: ADC_VREF }
    }
}

impl ThermistorDivider {
    pub fn voltage(&self, thermistor_ohms: f64) -> f64 {
        self.supply_v * thermistor_ohms / (thermistor_ohms + self.series_ohms)
    }

    /// Inverse of [`voltage`](Self::voltage). Returns `None` at the rails,
    /// where the resistance is unobservable.
    pub fn resistance(&self, volts: f64) -> Option<f64> {
        (volts > 0.0 && volts < self.supply_v)
            .then(|| self.series_ohms * volts / (self.supply_v - volts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantize_reference_points() {
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(3.3), 4095);
        // round(0.5 * 4095) = round(2047.5) = 2048
        assert_eq!(quantize(1.65), 2048);
    }

    #[test]
    fn quantize_clamps() {
        assert_eq!(quantize(-1.0), 0);
        assert_eq!(quantize(5.0), 4095);
        assert_eq!(quantize(f64::NAN), 0);
        assert_eq!(quantize(f64::INFINITY), 4095);
    }

    #[test]
    fn divider_round_trip() {
        let d = ThermistorDivider::default();
        for r in [5_000.0, 70_900.0, 100_000.0, 580_000.0] {
            let v = d.voltage(r);
            assert!((d.resistance(v).unwrap() - r).abs() / r < 1e-12);
        }
        assert!(d.resistance(0.0).is_none());
        assert!(d.resistance(3.3).is_none());
    }
}
