use serde::{Deserialize, Serialize};

use super::{require_positive, ModelError};

/// How the C-rate entering the Arrhenius exponent is obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CRateMode {
    /// `|i_b| / Q` recomputed at every plant step, factor applied inside the
    /// throughput integral.
    #[default]
    Instantaneous,
    /// `c_rate` held constant, factor applied to the total throughput.
    Constant,
}

/// Arrhenius capacity-loss parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradationParams {
    pub zeta1: f64,
    /// Activation energy, J/mol.
    pub zeta2: f64,
    pub temperature_k: f64,
    /// Constant C-rate, used by [`capacity_loss`] and [`CRateMode::Constant`].
    pub c_rate: f64,
    pub gas_constant: f64,
    #[serde(default)]
    pub c_rate_mode: CRateMode,
}

impl Default for DegradationParams {
    fn default() -> Self {
        Self {
            zeta1: 3.06e4,
            zeta2: 3.10e4,
            temperature_k: 298.15,
            c_rate: 1.0,
            gas_constant: 8.314,
            c_rate_mode: CRateMode::Instantaneous,
        }
    }
}

impl DegradationParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        require_positive("degradation.zeta1", self.zeta1)?;
        require_positive("degradation.zeta2", self.zeta2)?;
        require_positive("degradation.temperature_k", self.temperature_k)?;
        require_positive("degradation.c_rate", self.c_rate)?;
        require_positive("degradation.gas_constant", self.gas_constant)?;
        let factor = degradation_factor(self, self.c_rate);
        if !(factor.is_finite() && factor > 0.0) {
            return Err(ModelError::invalid(
                "degradation",
                format!("Arrhenius factor must be finite and positive, got {factor}"),
            ));
        }
        Ok(())
    }
}

/// Ah of capacity lost per Ah of throughput at the given C-rate.
pub fn degradation_factor(d: &DegradationParams, c_rate: f64) -> f64 {
    let rt = d.gas_constant * d.temperature_k;
    d.zeta1 * ((-d.zeta2 + d.temperature_k * c_rate) / rt).exp()
}

/// Capacity loss in Ah for a charge throughput in Ah, at the constant C-rate.
pub fn capacity_loss(ah_throughput: f64, d: &DegradationParams) -> f64 {
    debug_assert!(ah_throughput >= 0.0);
    degradation_factor(d, d.c_rate) * ah_throughput
}

/// `(q - q_l) / q * 100`: the remaining-capacity percentage.
pub fn capacity_percent(q: f64, q_l: f64) -> f64 {
    (q - q_l) / q * 100.0
}

/// Lost-capacity percentage, the complement of [`capacity_percent`].
pub fn loss_percent(q: f64, q_l: f64) -> f64 {
    100.0 - capacity_percent(q, q_l)
}
