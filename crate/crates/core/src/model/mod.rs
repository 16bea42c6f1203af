//! Component models of the single-bus DC system.
//!
//! All quantities are SI internally (W, A, V, s). Ampere-hour values only
//! appear at the battery capacity and capacity-loss boundaries.

mod battery;
mod bus;
mod degradation;
mod generator;
mod load;
mod state;

pub use battery::{battery_algebra, soc_step, BatteryOperatingPoint, PcmSpec, SocStep};
pub use bus::BusSpec;
pub use degradation::{
    capacity_loss, capacity_percent, degradation_factor, loss_percent, CRateMode,
    DegradationParams,
};
pub use generator::{pgm_current_step, PgmSpec};
pub use load::{load_algebra, LoadOperatingPoint};
pub use state::PlantState;

use thiserror::Error;

pub const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("bus voltage must be positive and finite, got {0} V")]
    BusVoltage(f64),
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },
}

impl ModelError {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub(crate) fn require_positive(field: &str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ModelError::invalid(field, format!("must be positive, got {value}")))
    }
}

pub(crate) fn require_finite(field: &str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::invalid(field, format!("must be finite, got {value}")))
    }
}

/// Net bus power `sum(p_g) + sum(p_b) - p_l`; zero when supply meets demand.
pub fn power_balance_residual(p_g: &[f64], p_b: &[f64], p_l: f64) -> f64 {
    p_g.iter().sum::<f64>() + p_b.iter().sum::<f64>() - p_l
}
