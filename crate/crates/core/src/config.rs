//! Scenario files.
//!
//! A scenario is a TOML document; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BusSpec, ModelError, PcmSpec, PgmSpec};
use crate::sim::{DlcGains, LoadProfileSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialise scenario: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

impl ConfigError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    fn from_model(prefix: &str, e: ModelError) -> Self {
        match e {
            ModelError::InvalidParameter { field, reason } => {
                Self::invalid(format!("{prefix}{field}"), reason)
            }
            ModelError::BusVoltage(v) => {
                Self::invalid(format!("{prefix}v_bus_volt"), format!("must be positive, got {v}"))
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PgmConfig {
    pub spec: PgmSpec,
    /// Setpoint held until the first MPC result arrives; rated power if unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_power_w: Option<f64>,
}

impl PgmConfig {
    pub fn initial_power(&self) -> f64 {
        self.initial_power_w.unwrap_or(self.spec.rated_power_w)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcmConfig {
    pub spec: PcmSpec,
    pub initial_soc: f64,
    #[serde(default)]
    pub initial_power_w: f64,
}

impl Default for PcmConfig {
    fn default() -> Self {
        Self {
            spec: PcmSpec::default(),
            initial_soc: 0.5,
            initial_power_w: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Dual step size; the safe step of the fleet when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Balance tolerance relative to `max(|p_f|∞, 1 W)`.
    pub balance_tol_rel: f64,
    pub max_iter: usize,
    pub qp_tol: f64,
    pub qp_max_iter: usize,
    /// Feed the known future load into `p_f` instead of holding the
    /// measurement over the horizon.
    pub load_preview: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: None,
            balance_tol_rel: 1e-4,
            max_iter: 500,
            qp_tol: crate::qp::DEFAULT_TOL,
            qp_max_iter: crate::qp::DEFAULT_MAX_ITER,
            load_preview: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub bus: BusSpec,
    #[serde(default)]
    pub pgms: Vec<PgmConfig>,
    #[serde(default)]
    pub pcms: Vec<PcmConfig>,
    pub load: LoadProfileSpec,
    pub horizon_steps: usize,
    pub mpc_period_s: f64,
    pub plant_dt_s: f64,
    pub comm_delay_s: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub dlc: DlcGains,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            bus: BusSpec::default(),
            pgms: vec![PgmConfig::default()],
            pcms: vec![PcmConfig::default()],
            load: LoadProfileSpec::default(),
            horizon_steps: 5,
            mpc_period_s: 1.0,
            plant_dt_s: 1e-3,
            comm_delay_s: 1.0,
            duration_s: 3600.0,
            solver: SolverConfig::default(),
            dlc: DlcGains::default(),
            seed: 0,
        }
    }
}

/// `x / dt` as an integer, if `x` is a whole number of steps.
fn whole_steps(x: f64, dt: f64) -> Option<usize> {
    let n = (x / dt).round();
    ((n * dt - x).abs() <= 1e-9 * x.abs().max(dt)).then_some(n as usize)
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn steps_per_mpc(&self) -> usize {
        whole_steps(self.mpc_period_s, self.plant_dt_s).unwrap_or(1).max(1)
    }

    pub fn delay_steps(&self) -> usize {
        whole_steps(self.comm_delay_s, self.plant_dt_s).unwrap_or(0)
    }

    pub fn total_steps(&self) -> usize {
        (self.duration_s / self.plant_dt_s).round() as usize
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.bus
            .validate()
            .map_err(|e| ConfigError::from_model("bus.", e))?;
        if self.horizon_steps < 1 {
            return Err(ConfigError::invalid("horizon_steps", "must be at least 1, got 0"));
        }
        if self.pgms.is_empty() && self.pcms.is_empty() {
            return Err(ConfigError::invalid("pgms", "scenario needs at least one device"));
        }
        if !(self.plant_dt_s.is_finite() && self.plant_dt_s > 0.0) {
            return Err(ConfigError::invalid(
                "plant_dt_s",
                format!("must be positive, got {}", self.plant_dt_s),
            ));
        }
        if !(self.mpc_period_s.is_finite() && self.plant_dt_s < self.mpc_period_s) {
            return Err(ConfigError::invalid(
                "mpc_period_s",
                format!(
                    "must exceed plant_dt_s = {}, got {}",
                    self.plant_dt_s, self.mpc_period_s
                ),
            ));
        }
        if whole_steps(self.mpc_period_s, self.plant_dt_s).is_none() {
            return Err(ConfigError::invalid(
                "mpc_period_s",
                "must be a whole number of plant steps",
            ));
        }
        if !(self.duration_s.is_finite() && self.duration_s > self.mpc_period_s) {
            return Err(ConfigError::invalid(
                "duration_s",
                format!(
                    "must exceed mpc_period_s = {}, got {}",
                    self.mpc_period_s, self.duration_s
                ),
            ));
        }
        if !(self.comm_delay_s.is_finite() && self.comm_delay_s >= 0.0)
            || whole_steps(self.comm_delay_s, self.plant_dt_s).is_none()
        {
            return Err(ConfigError::invalid(
                "comm_delay_s",
                format!(
                    "must be a nonnegative whole number of plant steps, got {}",
                    self.comm_delay_s
                ),
            ));
        }

        for (i, g) in self.pgms.iter().enumerate() {
            let prefix = format!("pgms[{i}].spec.");
            g.spec
                .validate()
                .map_err(|e| ConfigError::from_model(&prefix, e))?;
            let p0 = g.initial_power();
            if !(g.spec.p_min_w <= p0 && p0 <= g.spec.p_max_w) {
                return Err(ConfigError::invalid(
                    format!("pgms[{i}].initial_power_w"),
                    format!("{p0} outside [{}, {}]", g.spec.p_min_w, g.spec.p_max_w),
                ));
            }
            self.dlc
                .validate(&g.spec)
                .map_err(|e| ConfigError::from_model("", e))?;
        }
        for (j, b) in self.pcms.iter().enumerate() {
            let prefix = format!("pcms[{j}].spec.");
            b.spec
                .validate()
                .map_err(|e| ConfigError::from_model(&prefix, e))?;
            if !(b.spec.soc_min <= b.initial_soc && b.initial_soc <= b.spec.soc_max) {
                return Err(ConfigError::invalid(
                    format!("pcms[{j}].initial_soc"),
                    format!(
                        "{} outside [{}, {}]",
                        b.initial_soc, b.spec.soc_min, b.spec.soc_max
                    ),
                ));
            }
            let p0 = b.initial_power_w;
            if !(b.spec.p_min_w <= p0 && p0 <= b.spec.p_max_w) {
                return Err(ConfigError::invalid(
                    format!("pcms[{j}].initial_power_w"),
                    format!("{p0} outside [{}, {}]", b.spec.p_min_w, b.spec.p_max_w),
                ));
            }
        }
        self.load
            .validate()
            .map_err(|e| ConfigError::from_model("", e))?;

        let s = &self.solver;
        if let Some(a) = s.alpha {
            if !(a.is_finite() && a > 0.0) {
                return Err(ConfigError::invalid("solver.alpha", format!("must be positive, got {a}")));
            }
        }
        if !(s.balance_tol_rel.is_finite() && s.balance_tol_rel > 0.0) {
            return Err(ConfigError::invalid(
                "solver.balance_tol_rel",
                format!("must be positive, got {}", s.balance_tol_rel),
            ));
        }
        if s.max_iter == 0 {
            return Err(ConfigError::invalid("solver.max_iter", "must be at least 1"));
        }
        if !(s.qp_tol.is_finite() && s.qp_tol > 0.0) {
            return Err(ConfigError::invalid(
                "solver.qp_tol",
                format!("must be positive, got {}", s.qp_tol),
            ));
        }
        if s.qp_max_iter == 0 {
            return Err(ConfigError::invalid("solver.qp_max_iter", "must be at least 1"));
        }
        Ok(())
    }
}
