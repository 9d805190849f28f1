//! Initial cell densities.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{integrate, Grid, ScalarField};
use crate::geometry::{DomainGeometry, Point};
use crate::params::ModelParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InitialDataError {
    #[error("center ({0}, {1}) lies outside the domain")]
    CenterOutside(f64, f64),
    #[error("under-resolved initial data: width {width} < 2h = {two_h}")]
    UnderResolved { width: f64, two_h: f64 },
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("initial data has no mass on the grid")]
    NoMass,
}

/// Gaussian widths are standard deviations: `exp(-r^2 / (2 width^2))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    Constant { value: f64 },
    Gaussian { center: Point, width: f64, mass: f64 },
    Annulus { center: Point, radius: f64, width: f64, mass: f64 },
}

impl InitialData {
    pub fn mass(&self) -> Option<f64> {
        match self {
            InitialData::Constant { .. } => None,
            InitialData::Gaussian { mass, .. } | InitialData::Annulus { mass, .. } => Some(*mass),
        }
    }
}

/// Evaluates `kind` on the grid; gaussian and annulus data are rescaled so that the
/// discrete integral equals the requested mass.
pub fn make_initial_data(kind: &InitialData, grid: &Grid) -> Result<ScalarField, InitialDataError> {
    make_initial_data_masked(kind, grid, None)
}

/// As [`make_initial_data`], zeroing cells whose centers fall outside `mask`.
pub fn make_initial_data_masked(
    kind: &InitialData,
    grid: &Grid,
    mask: Option<&DomainGeometry>,
) -> Result<ScalarField, InitialDataError> {
    let inside = |p: Point| mask.is_none_or(|m| m.contains(p));
    let bump = |center: Point, width: f64, mass: f64, profile: &dyn Fn(f64) -> f64| {
        if !(mass > 0.0) {
            return Err(InitialDataError::NonPositive("mass"));
        }
        if !(width > 0.0) {
            return Err(InitialDataError::NonPositive("width"));
        }
        let two_h = 2.0 * grid.h_max();
        if width < two_h {
            return Err(InitialDataError::UnderResolved { width, two_h });
        }
        let in_domain = match mask {
            Some(m) => m.contains(center),
            None => grid.contains(center),
        };
        if !in_domain {
            return Err(InitialDataError::CenterOutside(center[0], center[1]));
        }
        let raw = ScalarField::from_fn(*grid, |p| {
            if inside(p) {
                let r = (p[0] - center[0]).hypot(p[1] - center[1]);
                profile(r)
            } else {
                0.0
            }
        });
        let m = integrate(&raw);
        if !(m > 0.0) {
            return Err(InitialDataError::NoMass);
        }
        Ok(raw.scale(mass / m))
    };
    match *kind {
        InitialData::Constant { value } => {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(InitialDataError::NonPositive("value"));
            }
            Ok(ScalarField::from_fn(*grid, |p| if inside(p) { value } else { 0.0 }))
        }
        InitialData::Gaussian { center, width, mass } => {
            bump(center, width, mass, &|r| (-r * r / (2.0 * width * width)).exp())
        }
        InitialData::Annulus { center, radius, width, mass } => {
            if !(radius > 0.0) {
                return Err(InitialDataError::NonPositive("radius"));
            }
            bump(center, width, mass, &|r| (-(r - radius).powi(2) / (2.0 * width * width)).exp())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MassClass {
    Subcritical,
    /// `marginal` is set when the mass is within `1e-9` (relative) of the threshold.
    Supercritical { marginal: bool },
    RepulsionDominant,
}

/// Compares the initial mass with the critical mass `4 pi / (chi alpha - xi gamma)`.
pub fn classify_mass(params: &ModelParams, u0: &ScalarField) -> MassClass {
    classify_mass_value(params, integrate(u0))
}

pub fn classify_mass_value(params: &ModelParams, mass: f64) -> MassClass {
    let sigma = params.sigma();
    if sigma <= 0.0 {
        return MassClass::RepulsionDominant;
    }
    let critical = 4.0 * PI / sigma;
    if (mass - critical).abs() < 1e-9 * mass {
        MassClass::Supercritical { marginal: true }
    } else if mass > critical {
        MassClass::Supercritical { marginal: false }
    } else {
        MassClass::Subcritical
    }
}
