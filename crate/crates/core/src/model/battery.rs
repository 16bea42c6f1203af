use serde::{Deserialize, Serialize};

use super::{require_positive, BusSpec, DegradationParams, ModelError, SECONDS_PER_HOUR};

/// Static parameters of a power conversion module (battery pack).
///
/// Power is positive while discharging into the bus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcmSpec {
    pub resistance_ohm: f64,
    pub v_oc_volt: f64,
    pub capacity_ah: f64,
    pub p_min_w: f64,
    pub p_max_w: f64,
    pub ramp_limit_w_per_step: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub weight_gamma: f64,
    #[serde(default)]
    pub degradation: DegradationParams,
}

impl PcmSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        require_positive("resistance_ohm", self.resistance_ohm)?;
        require_positive("v_oc_volt", self.v_oc_volt)?;
        require_positive("capacity_ah", self.capacity_ah)?;
        require_positive("ramp_limit_w_per_step", self.ramp_limit_w_per_step)?;
        if !(self.p_min_w.is_finite() && self.p_min_w <= 0.0) {
            return Err(ModelError::invalid(
                "p_min_w",
                format!("charge limit must be <= 0, got {}", self.p_min_w),
            ));
        }
        if !(self.p_max_w.is_finite() && self.p_max_w >= 0.0) {
            return Err(ModelError::invalid(
                "p_max_w",
                format!("discharge limit must be >= 0, got {}", self.p_max_w),
            ));
        }
        let soc_ok = (0.0..=1.0).contains(&self.soc_min)
            && (0.0..=1.0).contains(&self.soc_max)
            && self.soc_min < self.soc_max;
        if !soc_ok {
            return Err(ModelError::invalid(
                "soc_min/soc_max",
                format!(
                    "need 0 <= soc_min < soc_max <= 1, got [{}, {}]",
                    self.soc_min, self.soc_max
                ),
            ));
        }
        if !(self.weight_gamma.is_finite() && self.weight_gamma >= 0.0) {
            return Err(ModelError::invalid(
                "weight_gamma",
                format!("must be nonnegative, got {}", self.weight_gamma),
            ));
        }
        self.degradation.validate()
    }

    /// Stored charge capacity expressed as energy at a bus voltage, in Wh.
    pub fn energy_capacity_wh(&self, bus: &BusSpec) -> f64 {
        self.capacity_ah * bus.v_bus_volt
    }
}

impl Default for PcmSpec {
    fn default() -> Self {
        // 10 MWh at the default 1 kV bus.
        Self {
            resistance_ohm: 0.01,
            v_oc_volt: 900.0,
            capacity_ah: 10_000.0,
            p_min_w: -20e6,
            p_max_w: 20e6,
            ramp_limit_w_per_step: 20e6,
            soc_min: 0.1,
            soc_max: 0.9,
            weight_gamma: 1.0,
            degradation: DegradationParams::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatteryOperatingPoint {
    /// Controllable source voltage.
    pub v_b: f64,
    /// Terminal current, positive while discharging.
    pub i_b: f64,
}

/// Solves the static battery circuit for a commanded bus power.
///
/// The two relations collapse to `i_b = p_b / v_bus`; they are evaluated as
/// written so that `v_b` comes out consistently.
pub fn battery_algebra(
    p_b: f64,
    bus: &BusSpec,
    spec: &PcmSpec,
) -> Result<BatteryOperatingPoint, ModelError> {
    let v_bus = bus.checked_voltage()?;
    let r_b = spec.resistance_ohm;
    let v_b = (v_bus * v_bus - p_b * r_b - v_bus * spec.v_oc_volt) / v_bus;
    let i_b = (v_bus - v_b - spec.v_oc_volt) / r_b;
    Ok(BatteryOperatingPoint { v_b, i_b })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SocStep {
    pub soc: f64,
    /// The unclamped value left `[0, 1]`.
    pub saturated: bool,
}

/// One forward step of the SoC dynamics with the current held over `dt_s`.
pub fn soc_step(soc: f64, i_b: f64, capacity_ah: f64, dt_s: f64) -> SocStep {
    debug_assert!(dt_s > 0.0 && capacity_ah > 0.0);
    let next = soc - (dt_s / SECONDS_PER_HOUR) * i_b / capacity_ah;
    if next < 0.0 {
        SocStep { soc: 0.0, saturated: true }
    } else if next > 1.0 {
        SocStep { soc: 1.0, saturated: true }
    } else {
        SocStep { soc: next, saturated: false }
    }
}
