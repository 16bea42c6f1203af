use serde::{Deserialize, Serialize};

use crate::model::{pgm_current_step, BusSpec, ModelError, PgmSpec};

/// PI gains of the generator current tracker.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DlcGains {
    /// V/A
    pub kp: f64,
    /// V/(A·s)
    pub ki: f64,
}

impl Default for DlcGains {
    fn default() -> Self {
        // With the default PGM (r = 0.01 Ω, l = 1 mH) the closed loop has poles
        // at -10 and -200 rad/s and a zero at -10, so it behaves like a first
        // order lag of 5 ms.
        Self { kp: 0.2, ki: 2.0 }
    }
}

impl DlcGains {
    /// Checks gains against a generator: the closed loop
    /// `l s² + (r + kp) s + ki` must have real negative roots.
    pub fn validate(&self, spec: &PgmSpec) -> Result<(), ModelError> {
        if !(self.kp.is_finite() && self.kp >= 0.0) {
            return Err(ModelError::invalid("dlc.kp", format!("must be >= 0, got {}", self.kp)));
        }
        if !(self.ki.is_finite() && self.ki >= 0.0) {
            return Err(ModelError::invalid("dlc.ki", format!("must be >= 0, got {}", self.ki)));
        }
        let poles = self.closed_loop_poles(spec);
        if poles.iter().any(|p| p.is_nan() || *p >= 0.0) {
            return Err(ModelError::invalid(
                "dlc",
                format!(
                    "closed loop needs real negative poles, got {:?} for kp={} ki={}",
                    poles, self.kp, self.ki
                ),
            ));
        }
        Ok(())
    }

    /// Real closed-loop poles; NaN when they are complex. With `ki = 0` the
    /// integrator decouples and only the electrical pole is returned.
    pub fn closed_loop_poles(&self, spec: &PgmSpec) -> Vec<f64> {
        let (l, b) = (spec.inductance_henry, spec.resistance_ohm + self.kp);
        if self.ki == 0.0 {
            return vec![-b / l];
        }
        let disc = b * b - 4.0 * l * self.ki;
        if disc < 0.0 {
            return vec![f64::NAN, f64::NAN];
        }
        let s = disc.sqrt();
        vec![(-b + s) / (2.0 * l), (-b - s) / (2.0 * l)]
    }
}

/// One PI update. Returns the source voltage to hold over the next step and
/// the new integrator state (A·s).
///
/// `Δv = kp e + ki ∫e` with `e = i_ref − i_g`, applied as `v_g = v_bus − Δv`.
/// The integral term is clamped to ±`v_bus`.
pub fn dlc_pgm_step(
    i_ref: f64,
    i_g: f64,
    integrator: f64,
    gains: &DlcGains,
    bus: &BusSpec,
    dt: f64,
) -> (f64, f64) {
    debug_assert!(dt > 0.0);
    let e = i_ref - i_g;
    let mut integ = integrator + e * dt;
    if gains.ki > 0.0 {
        let cap = bus.v_bus_volt / gains.ki;
        integ = integ.clamp(-cap, cap);
    }
    let dv = gains.kp * e + gains.ki * integ;
    (bus.v_bus_volt - dv, integ)
}

/// Integrator value that holds `i_g` in steady state without a bump.
pub fn bumpless_integrator(i_g: f64, gains: &DlcGains, spec: &PgmSpec) -> f64 {
    if gains.ki > 0.0 {
        spec.resistance_ohm * i_g / gains.ki
    } else {
        0.0
    }
}

/// Closed-loop current trajectory for a reference step from `i0` to `i_ref`,
/// sampled after every step.
pub fn step_response(
    i0: f64,
    i_ref: f64,
    gains: &DlcGains,
    spec: &PgmSpec,
    bus: &BusSpec,
    dt: f64,
    duration: f64,
) -> Vec<f64> {
    let steps = (duration / dt).round() as usize;
    let mut i = i0;
    let mut integ = bumpless_integrator(i0, gains, spec);
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (v_g, next) = dlc_pgm_step(i_ref, i, integ, gains, bus, dt);
        integ = next;
        i = pgm_current_step(i, v_g, bus, spec, dt);
        out.push(i);
    }
    out
}

/// First time after which the response stays within `band` (relative to the
/// step size) of the reference, or `None` if it never settles.
pub fn settling_time(response: &[f64], i0: f64, i_ref: f64, band: f64, dt: f64) -> Option<f64> {
    let tol = band * (i_ref - i0).abs();
    let last_out = response.iter().rposition(|i| (i - i_ref).abs() > tol);
    match last_out {
        None => Some(0.0),
        Some(k) if k + 1 < response.len() => Some((k + 1) as f64 * dt),
        Some(_) => None,
    }
}
