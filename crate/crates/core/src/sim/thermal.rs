//! Lumped thermal model of the silicone body.
//!
//! ```text
//! C·dT/dt   = P − k_env·(T − T_amb) − k_mat·(T − T_mat)
//! C_m·dT_mat/dt = k_mat·(T − T_mat)
//! ```
//!
//! The contacted object is a second lump that starts at its sink temperature
//! and warms through the contact; its heat capacity sets how soon the sensor
//! recovers after the initial drop.

use serde::{Deserialize, Serialize};

use super::{Material, SensorPhysicalState, SimError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialThermal {
    /// Contact conductance, W/°C.
    pub conductance: f64,
    /// Heat capacity of the object region warmed by the contact, J/°C.
    pub sink_capacity: f64,
}

/// Per-material contact parameters plus the object's initial temperature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialThermalParams {
    pub metal: MaterialThermal,
    pub plastic: MaterialThermal,
    pub cardboard: MaterialThermal,
    pub fiber: MaterialThermal,
    /// Object temperature at contact onset; `None` means ambient.
    pub sink_temperature: Option<f64>,
}

impl Default for MaterialThermalParams {
    fn default() -> Self {
        MaterialThermalParams {
            metal: MaterialThermal { conductance: 0.65, sink_capacity: 400.0 },
            plastic: MaterialThermal { conductance: 0.45, sink_capacity: 6.0 },
            cardboard: MaterialThermal { conductance: 0.40, sink_capacity: 0.4 },
            fiber: MaterialThermal { conductance: 0.38, sink_capacity: 0.4 },
            sink_temperature: None,
        }
    }
}

impl MaterialThermalParams {
    pub fn get(&self, material: Material) -> Option<MaterialThermal> {
        match material {
            Material::None => None,
            Material::Metal => Some(self.metal),
            Material::Plastic => Some(self.plastic),
            Material::Cardboard => Some(self.cardboard),
            Material::Fiber => Some(self.fiber),
        }
    }

    pub fn conductance(&self, material: Material) -> f64 {
        self.get(material).map_or(0.0, |m| m.conductance)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalParams {
    /// Body heat capacity, J/°C.
    pub capacity: f64,
    /// Loss to ambient, W/°C.
    pub k_env: f64,
    /// Heater power limit, W.
    pub max_power: f64,
    pub materials: MaterialThermalParams,
}

impl Default for ThermalParams {
    fn default() -> Self {
        ThermalParams { capacity: 4.0, k_env: 0.055, max_power: 2.0, materials: MaterialThermalParams::default() }
    }
}

pub const MAX_THERMAL_DT: f64 = 0.1;

/// Advances body (and contacted object) temperature by `dt` seconds under
/// constant heater power.
///
/// Each lump is integrated with the exact exponential solution of its linear
/// ODE, holding the other lump fixed over the step, so the update is
/// unconditionally stable and cannot overshoot its equilibrium.
pub fn thermal_step(
    state: &SensorPhysicalState,
    heating_power: f64,
    dt: f64,
    params: &ThermalParams,
) -> Result<SensorPhysicalState, SimError> {
    if !(dt > 0.0 && dt <= MAX_THERMAL_DT) {
        return Err(SimError::InvalidTimeStep(dt));
    }
    if !(0.0..=params.max_power).contains(&heating_power) {
        return Err(SimError::InvalidHeaterPower(heating_power));
    }
    let mut next = state.clone();
    let contact = params.materials.get(state.contact_material);
    let k_mat = contact.map_or(0.0, |m| m.conductance);
    let k_tot = params.k_env + k_mat;

    let t_eq = (heating_power
        + params.k_env * state.ambient_temperature
        + k_mat * state.material_temperature)
        / k_tot;
    let decay = (-k_tot * dt / params.capacity).exp();
    next.body_temperature = t_eq + (state.body_temperature - t_eq) * decay;

    if let Some(m) = contact {
        let sink_decay = (-m.conductance * dt / m.sink_capacity).exp();
        next.material_temperature =
            next.body_temperature + (state.material_temperature - next.body_temperature) * sink_decay;
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn state(t: f64) -> SensorPhysicalState {
        SensorPhysicalState { body_temperature: t, ambient_temperature: 26.0, ..Default::default() }
    }

    #[test]
    fn equilibrium_without_power_is_fixed_point() {
        let p = ThermalParams::default();
        let s = thermal_step(&state(26.0), 0.0, 0.05, &p).unwrap();
        assert_eq!(s.body_temperature, 26.0);
    }

    #[test]
    fn free_decay_matches_closed_form() {
        let p = ThermalParams::default();
        let mut s = state(36.0);
        let dt = 0.01;
        for _ in 0..3000 {
            s = thermal_step(&s, 0.0, dt, &p).unwrap();
        }
        let t = 30.0;
        let expected = 26.0 + 10.0 * (-p.k_env * t / p.capacity).exp();
        assert_relative_eq!(s.body_temperature, expected, epsilon = 1e-9);
    }

    #[test]
    fn constant_power_reaches_steady_state() {
        let p = ThermalParams::default();
        let mut s = state(26.0);
        for _ in 0..20_000 {
            s = thermal_step(&s, 1.0, 0.1, &p).unwrap();
        }
        assert_relative_eq!(s.body_temperature, 26.0 + 1.0 / p.k_env, epsilon = 1e-6);
        // 2 W holds the body well above the top of the 32–36 °C band.
        assert!(26.0 + 2.0 / p.k_env >= 36.0);
    }

    #[test]
    fn material_conductances_are_ordered() {
        let m = MaterialThermalParams::default();
        assert!(m.metal.conductance > m.plastic.conductance);
        assert!(m.plastic.conductance > m.cardboard.conductance);
        assert!(m.cardboard.conductance >= m.fiber.conductance);
        assert!(m.fiber.conductance > 0.0);
    }

    #[test]
    fn rejects_bad_step() {
        let p = ThermalParams::default();
        assert!(thermal_step(&state(26.0), 0.0, 0.0, &p).is_err());
        assert!(thermal_step(&state(26.0), 0.0, 0.2, &p).is_err());
        assert!(thermal_step(&state(26.0), 2.5, 0.1, &p).is_err());
    }

    proptest! {
        #[test]
        fn stays_within_bounds(t0 in -20.0..60.0f64, power in 0.0..2.0f64, steps in 1usize..500) {
            let p = ThermalParams::default();
            let mut s = state(t0);
            let lo = t0.min(26.0);
            let hi = t0.max(26.0) + power / p.k_env;
            for _ in 0..steps {
                s = thermal_step(&s, power, 0.1, &p).unwrap();
                prop_assert!(s.body_temperature >= lo - 1e-9 && s.body_temperature <= hi + 1e-9);
            }
        }

        #[test]
        fn no_power_never_moves_away_from_ambient(t0 in -20.0..60.0f64) {
            let p = ThermalParams::default();
            let s = thermal_step(&state(t0), 0.0, 0.1, &p).unwrap();
            prop_assert!((s.body_temperature - 26.0).abs() <= (t0 - 26.0).abs());
        }
    }
}
