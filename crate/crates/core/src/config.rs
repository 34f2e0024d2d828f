//! JSON run configuration.
//!
//! A config bundles the model block (kernels, rate curve, urge rates),
//! the numerics block (grid step, time step, tolerances), a master seed,
//! and an optional free-form experiment block for command-specific
//! settings. Parsing -> serializing -> parsing is the identity, and a
//! given config plus seed reproduces every stochastic output byte for
//! byte.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::kernels::ModelParams;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    /// Grid step for every discretized profile.
    #[serde(default = "default_h")]
    pub h: f64,
    /// Integrator time step; defaults to `h / 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Tail mass threshold for window checks and profile extraction.
    #[serde(default = "default_tail_tol")]
    pub tail_tol: f64,
    /// Right-boundary tolerance of the frame fixed point.
    #[serde(default = "default_fp_tol")]
    pub fp_tol: f64,
    /// Median pinning tolerance of the speed tuning.
    #[serde(default = "default_median_tol")]
    pub median_tol: f64,
    /// Flux positivity floor on the profile body.
    #[serde(default = "default_zeta_min")]
    pub zeta_min: f64,
    /// Generic grid-accuracy tolerance for property checks.
    #[serde(default = "default_grid_tol")]
    pub grid_tol: f64,
}

fn default_h() -> f64 {
    1e-2
}
fn default_tail_tol() -> f64 {
    1e-6
}
fn default_fp_tol() -> f64 {
    1e-8
}
fn default_median_tol() -> f64 {
    1e-4
}
fn default_zeta_min() -> f64 {
    1e-10
}
fn default_grid_tol() -> f64 {
    1e-3
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            h: default_h(),
            dt: None,
            tail_tol: default_tail_tol(),
            fp_tol: default_fp_tol(),
            median_tol: default_median_tol(),
            zeta_min: default_zeta_min(),
            grid_tol: default_grid_tol(),
        }
    }
}

impl Numerics {
    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(self.h / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Config(format!("numerics.h must be positive, got {}", self.h)));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::Config(format!("numerics.dt must be positive, got {dt}")));
            }
        }
        for (name, v) in [
            ("tail_tol", self.tail_tol),
            ("fp_tol", self.fp_tol),
            ("median_tol", self.median_tol),
            ("zeta_min", self.zeta_min),
            ("grid_tol", self.grid_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("numerics.{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Command-specific settings, passed through untouched.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<serde_json::Value>,
}

impl RunConfig {
    pub fn new(model: ModelParams) -> Self {
        RunConfig { model, numerics: Numerics::default(), seed: 0, out: None, experiment: None }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(|e| Error::Config(format!("model: {e}")))?;
        self.numerics.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
        RunConfig::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}
