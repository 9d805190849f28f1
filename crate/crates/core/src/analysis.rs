//! Constants of the energy inequality `E' <= A E^{3/2} + B E^2` and the
//! blow-up time lower bounds obtained by integrating it.
//!
//! With `E(t) = integral of u^2`, the energy inequality holds with
//!
//! ```text
//! c1(eps) = alpha chi - xi gamma + xi delta eps + (2 xi gamma^3 / (9 delta)) (3 eps / 2)^-2
//! c2(eps) = (ctilde xi delta / 3) (3 eps / 2)^-2
//! A = c1 (sqrt(2) / 3) m1 + c2,    B = c1^2 m2^2 / 16,
//! ```
//!
//! evaluated at `eps = gamma / delta`. Integrating the equality case from `E0`
//! to infinity gives the implicit bound; dropping its logarithmic term gives
//! the explicit bound `2 / (A sqrt(E0))`.

use std::f64::consts::{PI, SQRT_2};
use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::GeometryConstants;
use crate::params::ModelParams;
use crate::trajectory::Trajectory;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("energy must be positive, got {0}")]
    NonPositiveEnergy(f64),
    #[error("A must be positive, got {0}")]
    NonPositiveA(f64),
    #[error("B must be nonnegative, got {0}")]
    NegativeB(f64),
    #[error("target energy {target} is below the initial energy {initial}")]
    TargetBelowInitial { initial: f64, target: f64 },
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("ctilde must be nonnegative, got {0}")]
    NegativeCtilde(f64),
}

/// `4 pi / (chi alpha - xi gamma)`, or `None` when repulsion dominates.
pub fn critical_mass(params: &ModelParams) -> Option<f64> {
    let sigma = params.sigma();
    (sigma > 0.0).then(|| 4.0 * PI / sigma)
}

/// The default Young parameter `gamma / delta`.
pub fn default_epsilon(params: &ModelParams) -> f64 {
    params.gamma / params.delta
}

/// `(c1(eps), c2(eps))` from the general-epsilon formulas.
pub fn intermediate_constants(params: &ModelParams, ctilde: f64, epsilon: f64) -> Result<(f64, f64), AnalysisError> {
    if !(epsilon > 0.0) {
        return Err(AnalysisError::NonPositiveEpsilon(epsilon));
    }
    if !(ctilde >= 0.0) {
        return Err(AnalysisError::NegativeCtilde(ctilde));
    }
    let p = params;
    let young = (1.5 * epsilon).powi(-2);
    let c1 = p.alpha * p.chi - p.xi * p.gamma
        + p.xi * p.delta * epsilon
        + 2.0 * p.xi * p.gamma.powi(3) / (9.0 * p.delta) * young;
    let c2 = ctilde * p.xi * p.delta / 3.0 * young;
    Ok((c1, c2))
}

/// Coefficient left on `integral |grad u|^2` after choosing the free constant of
/// the cubic interpolation inequality: `-2 + c1_tilde * (2 / c1)`. Binding
/// `c1 = c1_tilde` makes it vanish exactly.
pub fn residual_gradient_coefficient(c1_tilde: f64, c1: f64) -> f64 {
    -2.0 + 2.0 * (c1_tilde / c1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbConstants {
    pub epsilon: f64,
    pub ctilde1: f64,
    pub ctilde2: f64,
    /// Free constant of the cubic interpolation inequality, bound to `ctilde1`.
    pub c1: f64,
    pub a: f64,
    pub b: f64,
    /// Alternative form of `A` with the ctilde terms inside the bracket.
    pub a_theorem_variant: f64,
}

/// `A` and `B` at `eps = gamma / delta`, from the reduced closed forms
/// `c1 = alpha chi + 8 gamma xi delta / 81` and `c2 = 4 ctilde xi delta^3 / (27 gamma^2)`.
pub fn constants_ab(params: &ModelParams, geom: &GeometryConstants, ctilde: f64) -> Result<AbConstants, AnalysisError> {
    if !(ctilde >= 0.0) {
        return Err(AnalysisError::NegativeCtilde(ctilde));
    }
    let p = params;
    let ctilde1 = p.alpha * p.chi + 8.0 * p.gamma * p.xi * p.delta / 81.0;
    let ctilde2 = 4.0 * ctilde * p.xi * p.delta.powi(3) / (27.0 * p.gamma * p.gamma);
    let c1 = ctilde1;
    debug_assert_eq!(residual_gradient_coefficient(ctilde1, c1), 0.0);
    let a = ctilde1 * (SQRT_2 / 3.0) * geom.m1 + ctilde2;
    let b = ctilde1 * ctilde1 * geom.m2 * geom.m2 / 16.0;
    let theorem_term = ctilde * p.xi * p.delta / 3.0 * (1.5 * p.gamma / p.delta).powi(-2);
    let a_theorem_variant = (p.alpha * p.chi + theorem_term) * (SQRT_2 / 3.0) * geom.m1 + theorem_term;
    Ok(AbConstants { epsilon: default_epsilon(p), ctilde1, ctilde2, c1, a, b, a_theorem_variant })
}

/// `A` and `B` assembled from [`intermediate_constants`] at an arbitrary epsilon.
pub fn constants_ab_with_epsilon(
    params: &ModelParams,
    geom: &GeometryConstants,
    ctilde: f64,
    epsilon: f64,
) -> Result<AbConstants, AnalysisError> {
    let (ctilde1, ctilde2) = intermediate_constants(params, ctilde, epsilon)?;
    let base = constants_ab(params, geom, ctilde)?;
    Ok(AbConstants {
        epsilon,
        ctilde1,
        ctilde2,
        c1: ctilde1,
        a: ctilde1 * (SQRT_2 / 3.0) * geom.m1 + ctilde2,
        b: ctilde1 * ctilde1 * geom.m2 * geom.m2 / 16.0,
        a_theorem_variant: base.a_theorem_variant,
    })
}

/// Extension, not used by default: golden-section search for the epsilon
/// minimising `A` (on `log eps`). Note that `B` changes with epsilon too.
pub fn minimize_a_over_epsilon(
    params: &ModelParams,
    geom: &GeometryConstants,
    ctilde: f64,
) -> Result<AbConstants, AnalysisError> {
    let eval = |le: f64| constants_ab_with_epsilon(params, geom, ctilde, le.exp()).map(|c| c.a);
    let center = default_epsilon(params).ln();
    let (mut lo, mut hi) = (center - 12.0, center + 12.0);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (eval(x1)?, eval(x2)?);
    for _ in 0..200 {
        if hi - lo < 1e-12 {
            break;
        }
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = eval(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = eval(x2)?;
        }
    }
    constants_ab_with_epsilon(params, geom, ctilde, (0.5 * (lo + hi)).exp())
}

/// `2 / (A sqrt(E0))`.
pub fn lower_bound_explicit(a: f64, e0: f64) -> Result<f64, AnalysisError> {
    if !(a > 0.0) {
        return Err(AnalysisError::NonPositiveA(a));
    }
    if !(e0 > 0.0) {
        return Err(AnalysisError::NonPositiveEnergy(e0));
    }
    Ok(2.0 / (a * e0.sqrt()))
}

/// Time for `E' = A E^{3/2} + B E^2` to carry `E` from `e0` to `e_target`
/// (`f64::INFINITY` allowed):
///
/// ```text
/// (2/A)(1/sqrt(E0) - 1/sqrt(Et)) + (B/A^2) log(E0 (A + B sqrt(Et))^2 / (Et (A + B sqrt(E0))^2))
/// ```
///
/// Evaluated as `(2B/A^2) (g(x0) - g(x1))` with `x = A / (B sqrt(E))` and
/// `g(x) = x - ln(1 + x)`, which avoids cancelling the two terms.
pub fn lower_bound_implicit(a: f64, b: f64, e0: f64, e_target: f64) -> Result<f64, AnalysisError> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(AnalysisError::NonPositiveA(a));
    }
    if !(b >= 0.0 && b.is_finite()) {
        return Err(AnalysisError::NegativeB(b));
    }
    if !(e0 > 0.0 && e0.is_finite()) {
        return Err(AnalysisError::NonPositiveEnergy(e0));
    }
    if !(e_target >= e0) {
        return Err(AnalysisError::TargetBelowInitial { initial: e0, target: e_target });
    }
    if e_target == e0 {
        return Ok(0.0);
    }
    let s0 = e0.sqrt();
    let s1 = e_target.sqrt();
    let inv_s1 = if s1.is_infinite() { 0.0 } else { 1.0 / s1 };
    let x0 = a / (b * s0);
    if b == 0.0 || !x0.is_finite() {
        return Ok(2.0 / a * (1.0 / s0 - inv_s1));
    }
    let x1 = a * inv_s1 / b;
    Ok((2.0 * b / (a * a) * (g(x0) - g(x1))).max(0.0))
}

/// `x - ln(1 + x)`, accurate for small `x`.
fn g(x: f64) -> f64 {
    if x < 1e-3 {
        // x^2/2 - x^3/3 + x^4/4 - x^5/5
        x * x * (0.5 - x * (1.0 / 3.0 - x * (0.25 - x * 0.2)))
    } else {
        x - x.ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdiReport {
    pub n_checked: usize,
    pub n_violations: usize,
    pub min_margin: f64,
    /// Smallest margin divided by `1 + A E^{3/2} + B E^2`.
    pub min_relative_margin: f64,
    pub first_violation_time: Option<f64>,
    pub compliant_fraction: f64,
}

impl OdiReport {
    pub fn passed(&self) -> bool {
        self.n_violations == 0
    }
}

/// Checks `dE/dt <= A E^{3/2} + B E^2` at every interior record (centered
/// differences). A record violates when its margin is below
/// `-tolerance (1 + A E^{3/2} + B E^2)`.
pub fn check_odi(trajectory: &Trajectory, a: f64, b: f64, tolerance: f64) -> OdiReport {
    let recs = &trajectory.records;
    let mut report = OdiReport {
        n_checked: 0,
        n_violations: 0,
        min_margin: f64::INFINITY,
        min_relative_margin: f64::INFINITY,
        first_violation_time: None,
        compliant_fraction: 1.0,
    };
    if recs.len() < 3 {
        return report;
    }
    for r in &recs[1..recs.len() - 1] {
        let rhs = a * r.energy.powf(1.5) + b * r.energy * r.energy;
        let margin = rhs - r.dedt_numeric;
        report.n_checked += 1;
        report.min_margin = report.min_margin.min(margin);
        report.min_relative_margin = report.min_relative_margin.min(margin / (1.0 + rhs));
        if margin < -tolerance * (1.0 + rhs) {
            report.n_violations += 1;
            report.first_violation_time.get_or_insert(r.t);
        }
    }
    report.compliant_fraction = 1.0 - report.n_violations as f64 / report.n_checked as f64;
    report
}

/// Where the constant of the elliptic cubic estimate came from.
#[derive(Debug, Clone, PartialEq)]
pub enum CtildeSource {
    User(f64),
    Estimated { value: f64, n_trials: usize, seed: u64, safety_factor: f64 },
}

impl CtildeSource {
    pub fn value(&self) -> f64 {
        match *self {
            CtildeSource::User(v) => v,
            CtildeSource::Estimated { value, .. } => value,
        }
    }

    pub fn provenance(&self) -> String {
        match self {
            CtildeSource::User(_) => "user".to_string(),
            CtildeSource::Estimated { n_trials, seed, safety_factor, .. } => {
                format!("estimated(n_trials={n_trials};seed={seed};safety_factor={safety_factor})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub ctilde: f64,
    pub ctilde_provenance: String,
    pub constants: AbConstants,
    pub sigma: f64,
    pub critical_mass: Option<f64>,
    pub out_of_regime: bool,
    pub e0: f64,
    pub t_lower_explicit: f64,
    pub t_lower_implicit: f64,
    /// Bounds shifted by the last return time `t1`, when a trajectory supplied one.
    pub t1: Option<f64>,
}

pub const BOUND_CSV_COLUMNS: &str = "ctilde,ctilde_provenance,epsilon,c1,ctilde1,ctilde2,A,B,A_theorem_variant,sigma,critical_mass,out_of_regime,E0,t_lower_explicit,t_lower_implicit,t1,t_lower_explicit_from_t1,t_lower_implicit_from_t1";

impl BoundReport {
    pub fn t_lower_explicit_from_t1(&self) -> Option<f64> {
        self.t1.map(|t1| t1 + self.t_lower_explicit)
    }

    pub fn t_lower_implicit_from_t1(&self) -> Option<f64> {
        self.t1.map(|t1| t1 + self.t_lower_implicit)
    }

    fn fields(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |x| x.to_string());
        let c = &self.constants;
        vec![
            ("ctilde", self.ctilde.to_string()),
            ("ctilde_provenance", self.ctilde_provenance.clone()),
            ("epsilon", c.epsilon.to_string()),
            ("c1", c.c1.to_string()),
            ("ctilde1", c.ctilde1.to_string()),
            ("ctilde2", c.ctilde2.to_string()),
            ("A", c.a.to_string()),
            ("B", c.b.to_string()),
            ("A_theorem_variant", c.a_theorem_variant.to_string()),
            ("sigma", self.sigma.to_string()),
            ("critical_mass", self.critical_mass.map_or_else(|| "none (sigma <= 0)".to_string(), |m| m.to_string())),
            ("out_of_regime", self.out_of_regime.to_string()),
            ("E0", self.e0.to_string()),
            ("t_lower_explicit", self.t_lower_explicit.to_string()),
            ("t_lower_implicit", self.t_lower_implicit.to_string()),
            ("t1", opt(self.t1)),
            ("t_lower_explicit_from_t1", opt(self.t_lower_explicit_from_t1())),
            ("t_lower_implicit_from_t1", opt(self.t_lower_implicit_from_t1())),
        ]
    }

    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.fields() {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn csv_row(&self) -> String {
        self.fields()
            .into_iter()
            .map(|(_, v)| if v.contains(',') { format!("\"{v}\"") } else { v })
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Assembles constants and both bounds. The implicit bound uses `E_target = infinity`.
pub fn bound_report(
    params: &ModelParams,
    geom: &GeometryConstants,
    ctilde: &CtildeSource,
    e0: f64,
) -> Result<BoundReport, AnalysisError> {
    if !(e0 > 0.0) {
        return Err(AnalysisError::NonPositiveEnergy(e0));
    }
    let constants = constants_ab(params, geom, ctilde.value())?;
    let sigma = params.sigma();
    Ok(BoundReport {
        ctilde: ctilde.value(),
        ctilde_provenance: ctilde.provenance(),
        constants,
        sigma,
        critical_mass: critical_mass(params),
        out_of_regime: sigma <= 0.0,
        e0,
        t_lower_explicit: lower_bound_explicit(constants.a, e0)?,
        t_lower_implicit: lower_bound_implicit(constants.a, constants.b, e0, f64::INFINITY)?,
        t1: None,
    })
}
