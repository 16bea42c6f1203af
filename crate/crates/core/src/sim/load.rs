use serde::{Deserialize, Serialize};

use crate::model::ModelError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadKind {
    Constant,
    /// `base` before `start_s`, `base + amplitude` from then on.
    Step,
    /// `base + slope * (t - start_s)` after `start_s`.
    Ramp,
    /// `base + amplitude` for the first `duty_fraction` of every period after `start_s`.
    #[default]
    PulseTrain,
}

/// Demand profile. Fields that a kind does not use are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadProfileSpec {
    pub kind: LoadKind,
    pub base_w: f64,
    #[serde(default)]
    pub amplitude_w: f64,
    #[serde(default = "default_period")]
    pub period_s: f64,
    #[serde(default = "default_duty")]
    pub duty_fraction: f64,
    #[serde(default)]
    pub start_s: f64,
    #[serde(default)]
    pub slope_w_per_s: f64,
}

fn default_period() -> f64 {
    20.0
}

fn default_duty() -> f64 {
    0.5
}

/// Swings 4 MW either side of the default generator rating, with edges
/// four times steeper than its ramp limit.
impl Default for LoadProfileSpec {
    fn default() -> Self {
        Self {
            kind: LoadKind::PulseTrain,
            base_w: 32e6,
            amplitude_w: 8e6,
            period_s: default_period(),
            duty_fraction: default_duty(),
            start_s: 0.0,
            slope_w_per_s: 0.0,
        }
    }
}

impl LoadProfileSpec {
    pub fn constant(p: f64) -> Self {
        Self {
            kind: LoadKind::Constant,
            base_w: p,
            amplitude_w: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (field, v) in [
            ("load.base_w", self.base_w),
            ("load.amplitude_w", self.amplitude_w),
            ("load.start_s", self.start_s),
            ("load.slope_w_per_s", self.slope_w_per_s),
        ] {
            if !v.is_finite() {
                return Err(ModelError::invalid(field, format!("must be finite, got {v}")));
            }
        }
        if self.kind == LoadKind::PulseTrain {
            if !(self.period_s.is_finite() && self.period_s > 0.0) {
                return Err(ModelError::invalid(
                    "load.period_s",
                    format!("must be positive, got {}", self.period_s),
                ));
            }
            if !(self.duty_fraction > 0.0 && self.duty_fraction < 1.0) {
                return Err(ModelError::invalid(
                    "load.duty_fraction",
                    format!("must lie in (0, 1), got {}", self.duty_fraction),
                ));
            }
        }
        Ok(())
    }
}

/// Load power at time `t`, in watts.
pub fn load_at(t: f64, spec: &LoadProfileSpec) -> f64 {
    debug_assert!(t >= 0.0);
    let since = t - spec.start_s;
    match spec.kind {
        LoadKind::Constant => spec.base_w,
        LoadKind::Step => {
            if since >= 0.0 {
                spec.base_w + spec.amplitude_w
            } else {
                spec.base_w
            }
        }
        LoadKind::Ramp => spec.base_w + spec.slope_w_per_s * since.max(0.0),
        LoadKind::PulseTrain => {
            if since < 0.0 {
                return spec.base_w;
            }
            let phase = (since / spec.period_s).fract();
            if phase < spec.duty_fraction {
                spec.base_w + spec.amplitude_w
            } else {
                spec.base_w
            }
        }
    }
}
