use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("model parameter `{name}` must be positive and finite, got {value}")]
pub struct ParamError {
    pub name: &'static str,
    pub value: f64,
}

/// Coefficients of the attraction-repulsion system.
///
/// `alpha`, `gamma` are production rates of the attractant `v` and repellent `w`,
/// `beta`, `delta` their decay rates, `chi`, `xi` the attraction and repulsion
/// sensitivities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub chi: f64,
    pub xi: f64,
}

impl ModelParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64, chi: f64, xi: f64) -> Result<Self, ParamError> {
        let p = ModelParams { alpha, beta, gamma, delta, chi, xi };
        p.validate()?;
        Ok(p)
    }

    pub fn ones() -> Self {
        ModelParams { alpha: 1.0, beta: 1.0, gamma: 1.0, delta: 1.0, chi: 1.0, xi: 1.0 }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        for (name, value) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("chi", self.chi),
            ("xi", self.xi),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ParamError { name, value });
            }
        }
        Ok(())
    }

    /// `chi * alpha - xi * gamma`; attraction dominates when positive.
    pub fn sigma(&self) -> f64 {
        self.chi * self.alpha - self.xi * self.gamma
    }
}
