use serde::{Deserialize, Serialize};

use super::{require_finite, require_positive, BusSpec, ModelError};

/// Static parameters of a power generation module (PGM).
///
/// The generator is a controlled voltage source behind a series RL impedance.
/// `resistance_ohm` is the electrical resistance; `ramp_limit_w_per_step` is the
/// optimisation-side ramp bound per MPC step. They are unrelated quantities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PgmSpec {
    pub resistance_ohm: f64,
    pub inductance_henry: f64,
    pub rated_power_w: f64,
    pub p_min_w: f64,
    pub p_max_w: f64,
    pub ramp_limit_w_per_step: f64,
    pub weight_beta: f64,
}

impl PgmSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        require_positive("resistance_ohm", self.resistance_ohm)?;
        require_positive("inductance_henry", self.inductance_henry)?;
        require_positive("ramp_limit_w_per_step", self.ramp_limit_w_per_step)?;
        require_finite("rated_power_w", self.rated_power_w)?;
        require_finite("p_min_w", self.p_min_w)?;
        require_finite("p_max_w", self.p_max_w)?;
        if !(self.p_min_w <= self.rated_power_w && self.rated_power_w <= self.p_max_w) {
            return Err(ModelError::invalid(
                "rated_power_w",
                format!(
                    "must lie in [p_min_w, p_max_w] = [{}, {}], got {}",
                    self.p_min_w, self.p_max_w, self.rated_power_w
                ),
            ));
        }
        if !(self.weight_beta.is_finite() && self.weight_beta >= 0.0) {
            return Err(ModelError::invalid(
                "weight_beta",
                format!("must be nonnegative, got {}", self.weight_beta),
            ));
        }
        Ok(())
    }

    /// Electrical time constant `l / r` in seconds.
    pub fn time_constant_s(&self) -> f64 {
        self.inductance_henry / self.resistance_ohm
    }
}

impl Default for PgmSpec {
    fn default() -> Self {
        Self {
            resistance_ohm: 0.01,
            inductance_henry: 1e-3,
            rated_power_w: 36e6,
            p_min_w: 0.0,
            p_max_w: 40e6,
            ramp_limit_w_per_step: 2e6,
            weight_beta: 1.0,
        }
    }
}

/// Advances the generator current over `dt` with the source voltage held.
///
/// Exact solution of `l di/dt = -r i + (v_bus - v_g)` under zero-order hold, so
/// the step is stable for any `dt`.
pub fn pgm_current_step(i_g: f64, v_g: f64, bus: &BusSpec, spec: &PgmSpec, dt: f64) -> f64 {
    debug_assert!(dt > 0.0);
    let dv = bus.v_bus_volt - v_g;
    let decay = (-spec.resistance_ohm * dt / spec.inductance_henry).exp();
    i_g * decay + (dv / spec.resistance_ohm) * (1.0 - decay)
}
