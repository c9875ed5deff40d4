//! JSON experiment configuration.
//!
//! Every subcommand reads the same document; blocks it does not use may be
//! omitted. Parsing reports the JSON path of the first offending key, and
//! [`ExperimentConfig::validate`] checks ranges before any computation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ControlRegion, DampingField, Domain};
use crate::rays::GccOptions;

fn invalid(path: &str, message: impl Into<String>) -> Error {
    Error::ConfigInvalid { path: path.into(), message: message.into() }
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(path, format!("must be a finite number > 0, got {v}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub t_final: f64,
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    /// `"smooth"` (Gaussian pulses and vortices) or `"random"`.
    #[serde(default = "default_initial")]
    pub initial: String,
    #[serde(default = "default_one")]
    pub sample_every: usize,
    #[serde(default = "default_window")]
    pub window_fraction: f64,
}

fn default_initial() -> String {
    "smooth".into()
}

fn default_one() -> usize {
    1
}

fn default_window() -> f64 {
    0.75
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub mu_min: f64,
    pub mu_max: f64,
    pub mu_step: f64,
    #[serde(default = "default_cap")]
    pub cap: f64,
}

fn default_cap() -> f64 {
    crate::spectral::DEFAULT_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuasimodeConfig {
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RaysConfig {
    pub samples: usize,
    pub s_max: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_boundary_fraction")]
    pub boundary_fraction: f64,
    /// Points per gliding arc in the CSV polylines.
    #[serde(default = "default_glide_points")]
    pub glide_points: usize,
}

fn default_boundary_fraction() -> f64 {
    0.1
}

fn default_glide_points() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GccConfig {
    /// Defaults to the support of the damping.
    #[serde(default)]
    pub region: Option<ControlRegion>,
    pub samples: usize,
    pub s_max: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_boundary_fraction")]
    pub boundary_fraction: f64,
}

impl GccConfig {
    pub fn options(&self) -> GccOptions {
        GccOptions {
            n_samples: self.samples,
            s_max: self.s_max,
            seed: self.seed,
            boundary_fraction: self.boundary_fraction,
            ..GccOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HusimiConfig {
    pub mu_list: Vec<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_one")]
    pub x0_stride: usize,
}

fn default_delta() -> f64 {
    crate::husimi::DEFAULT_DELTA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: Domain,
    #[serde(default = "DampingField::zero")]
    pub damping: DampingField,
    /// Cells per direction: `[nx, ny]` or `[nr, ntheta]`.
    #[serde(default)]
    pub resolution: Option<[usize; 2]>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub quasimode: Option<QuasimodeConfig>,
    #[serde(default)]
    pub rays: Option<RaysConfig>,
    #[serde(default)]
    pub gcc: Option<GccConfig>,
    #[serde(default)]
    pub husimi: Option<HusimiConfig>,
    #[serde(default)]
    pub output_dir: Option<String>,
}

impl ExperimentConfig {
    /// Parses and validates; errors name the offending key path.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(s);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::ConfigInvalid { path, message: e.into_inner().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate().map_err(|e| invalid("domain", e.to_string()))?;
        self.damping.validate().map_err(|e| invalid("damping", e.to_string()))?;
        if let Some([a, b]) = self.resolution {
            if a == 0 || b == 0 {
                return Err(invalid("resolution", "entries must be >= 1"));
            }
        }
        if let Some(s) = &self.simulate {
            positive("simulate.t_final", s.t_final)?;
            positive("simulate.dt", s.dt)?;
            if s.t_final < s.dt {
                return Err(invalid("simulate.t_final", "must be >= simulate.dt"));
            }
            if s.sample_every == 0 {
                return Err(invalid("simulate.sample_every", "must be >= 1"));
            }
            if !(s.window_fraction > 0.0 && s.window_fraction <= 1.0) {
                return Err(invalid("simulate.window_fraction", "must lie in (0, 1]"));
            }
            if s.initial != "smooth" && s.initial != "random" {
                return Err(invalid("simulate.initial", "must be \"smooth\" or \"random\""));
            }
        }
        if let Some(s) = &self.sweep {
            positive("sweep.mu_min", s.mu_min)?;
            positive("sweep.mu_step", s.mu_step)?;
            positive("sweep.cap", s.cap)?;
            if !(s.mu_max >= s.mu_min) {
                return Err(invalid("sweep.mu_max", "must be >= sweep.mu_min"));
            }
        }
        if let Some(q) = &self.quasimode {
            positive("quasimode.mu", q.mu)?;
        }
        if let Some(r) = &self.rays {
            if r.samples == 0 {
                return Err(invalid("rays.samples", "must be >= 1"));
            }
            positive("rays.s_max", r.s_max)?;
            if !(0.0..=1.0).contains(&r.boundary_fraction) {
                return Err(invalid("rays.boundary_fraction", "must lie in [0, 1]"));
            }
        }
        if let Some(g) = &self.gcc {
            if g.samples == 0 {
                return Err(invalid("gcc.samples", "must be >= 1"));
            }
            positive("gcc.s_max", g.s_max)?;
            if !(0.0..=1.0).contains(&g.boundary_fraction) {
                return Err(invalid("gcc.boundary_fraction", "must lie in [0, 1]"));
            }
            if let Some(r) = &g.region {
                r.validate().map_err(|e| invalid("gcc.region", e.to_string()))?;
            }
        }
        if let Some(h) = &self.husimi {
            if h.mu_list.is_empty() {
                return Err(invalid("husimi.mu_list", "must not be empty"));
            }
            for (i, m) in h.mu_list.iter().enumerate() {
                positive(&format!("husimi.mu_list[{i}]"), *m)?;
            }
            if h.mu_list.windows(2).any(|w| w[1] <= w[0]) {
                return Err(invalid("husimi.mu_list", "must be strictly increasing"));
            }
            positive("husimi.delta", h.delta)?;
            if h.x0_stride == 0 {
                return Err(invalid("husimi.x0_stride", "must be >= 1"));
            }
        }
        Ok(())
    }

    /// Grid resolution, required by the field-based subcommands.
    pub fn require_resolution(&self) -> Result<[usize; 2]> {
        self.resolution.ok_or_else(|| invalid("resolution", "required for this subcommand"))
    }

    /// Control region for the GCC check: explicit or the damping support.
    pub fn control_region(&self) -> ControlRegion {
        self.gcc
            .as_ref()
            .and_then(|g| g.region.clone())
            .unwrap_or_else(|| ControlRegion::from_damping(&self.damping))
    }
}
