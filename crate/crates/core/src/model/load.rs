use super::{BusSpec, ModelError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoadOperatingPoint {
    pub v_l: f64,
    pub i_l: f64,
}

/// Static resistive load drawing `p_l` from the bus.
pub fn load_algebra(p_l: f64, bus: &BusSpec) -> Result<LoadOperatingPoint, ModelError> {
    let v_bus = bus.checked_voltage()?;
    let r_l = bus.load_resistance_ohm;
    let v_l = (v_bus * v_bus - p_l * r_l) / v_bus;
    let i_l = (v_bus - v_l) / r_l;
    Ok(LoadOperatingPoint { v_l, i_l })
}
