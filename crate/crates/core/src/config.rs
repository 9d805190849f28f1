//! JSON experiment configuration.
//!
//! Only `domain` is required by every command; the other blocks are checked
//! when a command needs them. Unknown keys are rejected everywhere.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bench::{BenchOptions, DEFAULT_SAFETY_FACTOR, DEFAULT_TOL};
use crate::elliptic::Preconditioner;
use crate::field::Grid;
use crate::geometry::{DomainGeometry, Point, Shape};
use crate::initial::InitialData;
use crate::params::ModelParams;
use crate::simulator::TimeControls;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config is missing the `{0}` block")]
    MissingBlock(&'static str),
    #[error("invalid `{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl ToString) -> ConfigError {
    ConfigError::Invalid { key: key.to_string(), message: message.to_string() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    Disk {
        radius: f64,
        #[serde(default)]
        center: Point,
    },
    Rectangle {
        half_widths: [f64; 2],
        #[serde(default)]
        center: Point,
    },
    Polygon {
        vertices: Vec<Point>,
    },
    RegularPolygon {
        n: usize,
        circumradius: f64,
        #[serde(default)]
        center: Point,
    },
}

impl ShapeSpec {
    pub fn to_shape(&self) -> Shape {
        match self {
            ShapeSpec::Disk { radius, center } => Shape::Disk { center: *center, radius: *radius },
            ShapeSpec::Rectangle { half_widths, center } => Shape::Rectangle { center: *center, half_widths: *half_widths },
            ShapeSpec::Polygon { vertices } => Shape::Polygon { vertices: vertices.clone() },
            ShapeSpec::RegularPolygon { n, circumradius, center } => Shape::regular_polygon(*center, *circumradius, *n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub shape: ShapeSpec,
    pub x0: Point,
    pub boundary_resolution: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt0: f64,
    pub t_end: f64,
    pub output_interval: f64,
    #[serde(default)]
    pub blowup_umax_factor: Option<f64>,
    #[serde(default)]
    pub blowup_energy_factor: Option<f64>,
    #[serde(default)]
    pub cfl: Option<f64>,
    #[serde(default)]
    pub dt_min: Option<f64>,
    #[serde(default)]
    pub mass_tol: Option<f64>,
    #[serde(default)]
    pub preconditioner: Option<PreconditionerSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreconditionerSpec {
    None,
    Jacobi,
    Spectral,
}

impl TimeConfig {
    pub fn controls(&self) -> TimeControls {
        let d = TimeControls::default();
        TimeControls {
            dt0: self.dt0,
            t_end: self.t_end,
            output_interval: self.output_interval,
            blowup_umax_factor: self.blowup_umax_factor.unwrap_or(d.blowup_umax_factor),
            blowup_energy_factor: self.blowup_energy_factor.unwrap_or(d.blowup_energy_factor),
            cfl: self.cfl.unwrap_or(d.cfl),
            dt_min: self.dt_min.unwrap_or(d.dt_min),
            mass_tol: self.mass_tol.unwrap_or(d.mass_tol),
        }
    }

    pub fn preconditioner(&self) -> Preconditioner {
        match self.preconditioner {
            Some(PreconditionerSpec::None) => Preconditioner::None,
            Some(PreconditionerSpec::Jacobi) => Preconditioner::Jacobi,
            Some(PreconditionerSpec::Spectral) | None => Preconditioner::Spectral,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum CtildeConfig {
    User {
        value: f64,
    },
    Estimate {
        n_trials: usize,
        seed: u64,
        #[serde(default)]
        safety_factor: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub n_trials: usize,
    /// Defaults to [`heldout_seed`] of the estimation seed, or 0.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub c1_values: Option<Vec<f64>>,
    #[serde(default)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_odi_tolerance")]
    pub odi_tolerance: f64,
}

fn default_odi_tolerance() -> f64 {
    0.05
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { odi_tolerance: default_odi_tolerance() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    #[serde(default)]
    pub dir: Option<String>,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain: DomainConfig,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub params: Option<ModelParams>,
    #[serde(default)]
    pub initial: Option<InitialData>,
    #[serde(default)]
    pub time: Option<TimeConfig>,
    #[serde(default)]
    pub ctilde: Option<CtildeConfig>,
    #[serde(default)]
    pub bench: Option<BenchConfig>,
    #[serde(default)]
    pub verify: Option<VerifyConfig>,
    #[serde(default)]
    pub outputs: Option<OutputsConfig>,
}

/// Seed of the trial stream that is held out from a c-tilde estimate made with `seed`.
pub fn heldout_seed(seed: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15
}

/// A parsed configuration together with the SHA-256 of its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub sha256: String,
}

impl LoadedConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        let sha256 = Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
        Ok(LoadedConfig { config, sha256 })
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }
}

impl ExperimentConfig {
    /// Static checks that do not need any numerics.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.geometry()?;
        if let Some(g) = &self.grid {
            if g.nx < 4 || g.ny < 4 {
                return Err(invalid("grid", format!("nx and ny must be at least 4, got {}x{}", g.nx, g.ny)));
            }
        }
        if let Some(p) = &self.params {
            p.validate().map_err(|e| invalid("params", e))?;
        }
        if let Some(t) = &self.time {
            t.controls().validate().map_err(|e| invalid("time", e))?;
        }
        match self.ctilde {
            Some(CtildeConfig::User { value }) if !(value >= 0.0 && value.is_finite()) => {
                return Err(invalid("ctilde.value", format!("must be nonnegative, got {value}")));
            }
            Some(CtildeConfig::Estimate { n_trials: 0, .. }) => {
                return Err(invalid("ctilde.n_trials", "must be at least 1"));
            }
            Some(CtildeConfig::Estimate { safety_factor: Some(s), .. }) if !(s >= 1.0 && s.is_finite()) => {
                return Err(invalid("ctilde.safety_factor", format!("must be at least 1, got {s}")));
            }
            _ => {}
        }
        if let Some(b) = &self.bench {
            if b.n_trials == 0 {
                return Err(invalid("bench.n_trials", "must be at least 1"));
            }
            if let Some(c) = b.c1_values.as_ref().and_then(|v| v.iter().find(|c| !(**c > 0.0 && c.is_finite()))) {
                return Err(invalid("bench.c1_values", format!("entries must be positive, got {c}")));
            }
            if let Some(t) = b.tol.filter(|t| !(*t > 0.0)) {
                return Err(invalid("bench.tol", format!("must be positive, got {t}")));
            }
        }
        if let Some(v) = &self.verify {
            if !(v.odi_tolerance >= 0.0) {
                return Err(invalid("verify.odi_tolerance", "must be nonnegative"));
            }
        }
        if let Some(o) = &self.outputs {
            if let Some(t) = o.snapshot_times.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
                return Err(invalid("outputs.snapshot_times", format!("times must be nonnegative, got {t}")));
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> Result<DomainGeometry, ConfigError> {
        let d = &self.domain;
        DomainGeometry::new(d.shape.to_shape(), d.x0, d.boundary_resolution).map_err(|e| invalid("domain", e))
    }

    /// Grid over the bounding box of the domain.
    pub fn grid(&self) -> Result<Grid, ConfigError> {
        let g = self.grid.ok_or(ConfigError::MissingBlock("grid"))?;
        let (lo, hi) = self.geometry()?.bounding_box();
        Grid::new(g.nx, g.ny, lo, hi).map_err(|e| invalid("grid", e))
    }

    /// Rectangle geometry of the simulation grid, with the configured `x0`.
    pub fn grid_geometry(&self) -> Result<DomainGeometry, ConfigError> {
        let (lo, hi) = self.geometry()?.bounding_box();
        let shape = Shape::Rectangle {
            center: [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0],
            half_widths: [(hi[0] - lo[0]) / 2.0, (hi[1] - lo[1]) / 2.0],
        };
        DomainGeometry::new(shape, self.domain.x0, self.domain.boundary_resolution.max(4)).map_err(|e| invalid("domain", e))
    }

    pub fn params(&self) -> Result<ModelParams, ConfigError> {
        self.params.ok_or(ConfigError::MissingBlock("params"))
    }

    pub fn initial(&self) -> Result<&InitialData, ConfigError> {
        self.initial.as_ref().ok_or(ConfigError::MissingBlock("initial"))
    }

    pub fn time(&self) -> Result<&TimeConfig, ConfigError> {
        self.time.as_ref().ok_or(ConfigError::MissingBlock("time"))
    }

    pub fn ctilde(&self) -> Result<CtildeConfig, ConfigError> {
        self.ctilde.ok_or(ConfigError::MissingBlock("ctilde"))
    }

    pub fn bench_options(&self, ctilde: Option<f64>) -> Result<BenchOptions, ConfigError> {
        let b = self.bench.as_ref().ok_or(ConfigError::MissingBlock("bench"))?;
        let default_seed = match self.ctilde {
            Some(CtildeConfig::Estimate { seed, .. }) => heldout_seed(seed),
            _ => 0,
        };
        Ok(BenchOptions {
            n_trials: b.n_trials,
            seed: b.seed.unwrap_or(default_seed),
            c1_values: b.c1_values.clone().unwrap_or_else(|| BenchOptions::default().c1_values),
            tol: b.tol.unwrap_or(DEFAULT_TOL),
            ctilde,
        })
    }

    pub fn verify(&self) -> VerifyConfig {
        self.verify.unwrap_or_default()
    }

    pub fn outputs(&self) -> OutputsConfig {
        self.outputs.clone().unwrap_or_default()
    }

    /// Applies a command-line seed: the estimation stream takes `seed`, the bench
    /// stream its held-out partner.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(CtildeConfig::Estimate { seed: s, .. }) = &mut self.ctilde {
            *s = seed;
        }
        if let Some(b) = &mut self.bench {
            b.seed = Some(heldout_seed(seed));
        }
    }
}

pub fn safety_factor(c: &CtildeConfig) -> f64 {
    match c {
        CtildeConfig::Estimate { safety_factor, .. } => safety_factor.unwrap_or(DEFAULT_SAFETY_FACTOR),
        CtildeConfig::User { .. } => 1.0,
    }
}
