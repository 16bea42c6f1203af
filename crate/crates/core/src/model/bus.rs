use serde::{Deserialize, Serialize};

use super::{require_positive, ModelError};

/// Regulated DC bus. The voltage is a constant set point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusSpec {
    pub v_bus_volt: f64,
    pub load_resistance_ohm: f64,
}

impl BusSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.v_bus_volt.is_finite() && self.v_bus_volt > 0.0) {
            return Err(ModelError::BusVoltage(self.v_bus_volt));
        }
        require_positive("load_resistance_ohm", self.load_resistance_ohm)
    }

    pub(crate) fn checked_voltage(&self) -> Result<f64, ModelError> {
        if self.v_bus_volt.is_finite() && self.v_bus_volt > 0.0 {
            Ok(self.v_bus_volt)
        } else {
            Err(ModelError::BusVoltage(self.v_bus_volt))
        }
    }
}

impl Default for BusSpec {
    fn default() -> Self {
        Self {
            v_bus_volt: 1000.0,
            load_resistance_ohm: 0.01,
        }
    }
}
