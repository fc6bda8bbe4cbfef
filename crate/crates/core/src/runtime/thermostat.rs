use serde::{Deserialize, Serialize};

use super::RuntimeError;

/// Two-threshold linear thermostat: full power at or below `t_heat`, off at
/// or above `t_stop`, linear in between.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThermostatConfig {
    pub t_stop: f64,
    pub t_heat: f64,
    pub max_power: f64,
    /// Duty is re-evaluated once per period, s.
    pub pwm_period: f64,
}

impl Default for ThermostatConfig {
    fn default() -> Self {
        ThermostatConfig { t_stop: 36.0, t_heat: 32.0, max_power: 2.0, pwm_period: 0.1 }
    }
}

impl ThermostatConfig {
    pub fn validate(&self) -> Result<(), RuntimeError> {
        if !(self.t_heat < self.t_stop) {
            return Err(RuntimeError::InvalidThermostat { t_stop: self.t_stop, t_heat: self.t_heat });
        }
        if !(self.max_power > 0.0 && self.pwm_period > 0.0) {
            return Err(RuntimeError::InvalidConfig("power and period must be positive".into()));
        }
        Ok(())
    }
}

pub fn thermostat_duty(temperature: f64, cfg: &ThermostatConfig) -> f64 {
    if temperature >= cfg.t_stop {
        0.0
    } else if temperature <= cfg.t_heat {
        1.0
    } else {
        (cfg.t_stop - temperature) / (cfg.t_stop - cfg.t_heat)
    }
}

/// Holds the duty chosen at the start of each PWM period.
#[derive(Clone, Debug)]
pub struct Thermostat {
    cfg: ThermostatConfig,
    enabled: bool,
    period_start: Option<f64>,
    duty: f64,
}

impl Thermostat {
    pub fn new(cfg: ThermostatConfig) -> Result<Self, RuntimeError> {
        cfg.validate()?;
        Ok(Thermostat { cfg, enabled: true, period_start: None, duty: 0.0 })
    }

    pub fn config(&self) -> &ThermostatConfig {
        &self.cfg
    }

    pub fn set_config(&mut self, cfg: ThermostatConfig) -> Result<(), RuntimeError> {
        cfg.validate()?;
        self.cfg = cfg;
        self.period_start = None;
        Ok(())
    }

    pub fn set_enabled(&mut self, on: bool) {
        self.enabled = on;
        self.period_start = None;
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    /// Heater power for time `t_s` given the latest measured temperature.
    pub fn update(&mut self, t_s: f64, temperature: f64) -> f64 {
        if !self.enabled {
            self.duty = 0.0;
            return 0.0;
        }
        let due = self.period_start.is_none_or(|s| t_s - s >= self.cfg.pwm_period - 1e-9);
        if due {
            self.duty = thermostat_duty(temperature, &self.cfg);
            self.period_start = Some(t_s);
        }
        self.duty * self.cfg.max_power
    }

    pub fn duty(&self) -> f64 {
        self.duty
    }
}
