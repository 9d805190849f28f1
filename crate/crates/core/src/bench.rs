//! Quadrature checks of the trace inequality, the cubic interpolation inequality
//! and the elliptic cubic estimate on random nonnegative trial functions, plus an
//! empirical estimate of the constant in the elliptic estimate.
//!
//! Trial functions are analytic, so a flagged violation is always re-evaluated
//! on a grid refined by two before it counts.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::elliptic::{solve_with, Preconditioner, ScreenedPoisson, SolverError};
use crate::field::{gradient_one_sided, integrate, integrate_boundary, Grid, ScalarField};
use crate::geometry::{DomainGeometry, GeometryConstants, Point};
use crate::params::ModelParams;

/// Relative tolerance for margin sign decisions.
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_SAFETY_FACTOR: f64 = 2.0;
pub const MAX_TRIG_DEGREE: usize = 6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("c1 must be positive, got {0}")]
    NonPositiveC1(f64),
    #[error("n_trials must be at least 1")]
    NoTrials,
    #[error("safety factor must be at least 1, got {0}")]
    SafetyFactor(f64),
    #[error("trial function is negative somewhere (min {0:e})")]
    Negative(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialFunction {
    /// `(sum_{p,q <= degree} c[p][q] cos(p pi (x - lo_x) / L_x) cos(q pi (y - lo_y) / L_y))^2`
    SquaredTrig { lower: Point, lengths: [f64; 2], coefficients: Vec<Vec<f64>> },
    /// `amplitude * exp(-|x - center|^2 / (2 width^2))`
    Gaussian { center: Point, width: f64, amplitude: f64 },
    Constant { value: f64 },
}

impl TrialFunction {
    pub fn family(&self) -> &'static str {
        match self {
            TrialFunction::SquaredTrig { .. } => "squared_trig",
            TrialFunction::Gaussian { .. } => "gaussian",
            TrialFunction::Constant { .. } => "constant",
        }
    }

    /// Comma-free description, safe inside a CSV cell.
    pub fn describe(&self) -> String {
        match self {
            TrialFunction::SquaredTrig { coefficients, .. } => {
                let norm: f64 = coefficients.iter().flatten().map(|c| c * c).sum::<f64>().sqrt();
                format!("squared_trig(degree={};coef_norm={norm:.6})", coefficients.len() - 1)
            }
            TrialFunction::Gaussian { center, width, amplitude } => format!(
                "gaussian(center=({:.6} {:.6});width={width:.6};amplitude={amplitude:.6})",
                center[0], center[1]
            ),
            TrialFunction::Constant { value } => format!("constant(value={value})"),
        }
    }

    pub fn evaluate(&self, grid: &Grid) -> ScalarField {
        match self {
            TrialFunction::SquaredTrig { lower, lengths, coefficients } => {
                let deg = coefficients.len();
                let basis = |n: usize, h: f64, lo: f64, glo: f64, len: f64| -> Vec<Vec<f64>> {
                    (0..n)
                        .map(|i| {
                            let x = glo + (i as f64 + 0.5) * h;
                            (0..deg).map(|p| (p as f64 * PI * (x - lo) / len).cos()).collect()
                        })
                        .collect()
                };
                let bx = basis(grid.nx, grid.hx, lower[0], grid.lower[0], lengths[0]);
                let by = basis(grid.ny, grid.hy, lower[1], grid.lower[1], lengths[1]);
                let mut values = Vec::with_capacity(grid.len());
                for cy in &by {
                    for cx in &bx {
                        let mut s = 0.0;
                        for (p, row) in coefficients.iter().enumerate() {
                            let mut t = 0.0;
                            for (q, c) in row.iter().enumerate() {
                                t += c * cy[q];
                            }
                            s += cx[p] * t;
                        }
                        values.push(s * s);
                    }
                }
                ScalarField::new(*grid, values).expect("finite trial values")
            }
            TrialFunction::Gaussian { center, width, amplitude } => ScalarField::from_fn(*grid, |p| {
                let r2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2);
                amplitude * (-r2 / (2.0 * width * width)).exp()
            }),
            TrialFunction::Constant { value } => ScalarField::constant(*grid, *value),
        }
    }
}

/// Draws trial functions on the rectangle `[lower, upper]` from one seeded stream,
/// so two samplers with the same seed produce nested sequences.
pub struct TrialSampler {
    rng: ChaCha8Rng,
    lower: Point,
    lengths: [f64; 2],
}

impl TrialSampler {
    pub fn new(seed: u64, lower: Point, upper: Point) -> Self {
        TrialSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            lower,
            lengths: [upper[0] - lower[0], upper[1] - lower[1]],
        }
    }

    fn log_uniform(&mut self, lo: f64, hi: f64) -> f64 {
        (self.rng.random_range(lo.ln()..hi.ln())).exp()
    }

    pub fn sample(&mut self) -> TrialFunction {
        let u: f64 = self.rng.random();
        if u < 0.5 {
            let degree = self.rng.random_range(1..=MAX_TRIG_DEGREE);
            let scale = self.log_uniform(0.1, 10.0);
            let mut coefficients = vec![vec![0.0; degree + 1]; degree + 1];
            for (p, row) in coefficients.iter_mut().enumerate() {
                for (q, c) in row.iter_mut().enumerate() {
                    let r: f64 = self.rng.random_range(-1.0..1.0);
                    *c = scale * r / (1.0 + (p + q) as f64);
                }
            }
            TrialFunction::SquaredTrig { lower: self.lower, lengths: self.lengths, coefficients }
        } else if u < 0.9 {
            let (lo, len) = (self.lower, self.lengths);
            let mut center = [
                lo[0] + len[0] * self.rng.random::<f64>(),
                lo[1] + len[1] * self.rng.random::<f64>(),
            ];
            // a third of the bumps sit on an edge or a corner
            match self.rng.random_range(0..9) {
                0 => center[0] = lo[0],
                1 => center[0] = lo[0] + len[0],
                2 => center = [lo[0], lo[1]],
                _ => {}
            }
            let short = len[0].min(len[1]);
            let width = self.log_uniform(0.05 * short, 0.5 * short);
            let amplitude = self.log_uniform(0.1, 10.0);
            TrialFunction::Gaussian { center, width, amplitude }
        } else {
            TrialFunction::Constant { value: self.log_uniform(0.1, 10.0) }
        }
    }
}

/// `lhs <= rhs_terms[0] + rhs_terms[1] + rhs_terms[2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs_terms: [f64; 3],
}

impl InequalityCheck {
    pub fn rhs(&self) -> f64 {
        self.rhs_terms.iter().sum()
    }

    pub fn margin(&self) -> f64 {
        self.rhs() - self.lhs
    }

    /// True when the margin is below `-tol * (1 + |rhs|)`.
    pub fn flagged(&self, tol: f64) -> bool {
        self.margin() < -tol * (1.0 + self.rhs().abs())
    }
}

/// `int_{dOmega} V^2 <= (4 m1 / 3) int V^2 + 2 (m2 - 1) int V |grad V|`.
pub fn check_trace_inequality(v: &ScalarField, geom: &GeometryConstants) -> InequalityCheck {
    let v2 = v.map(|x| x * x);
    let grad_norm = gradient_one_sided(v).norm();
    InequalityCheck {
        lhs: integrate_boundary(&v2),
        rhs_terms: [
            4.0 * geom.m1 / 3.0 * integrate(&v2),
            2.0 * (geom.m2 - 1.0) * integrate(&v.zip_map(&grad_norm, |a, b| a * b)),
            0.0,
        ],
    }
}

/// `int V^3 <= (sqrt 2 m1 / 3) (int V^2)^{3/2} + (m2^2 c1 / 16) (int V^2)^2 + (2 / c1) int |grad V|^2`.
pub fn check_l3_inequality(v: &ScalarField, geom: &GeometryConstants, c1: f64) -> Result<InequalityCheck, BenchError> {
    if !(c1 > 0.0 && c1.is_finite()) {
        return Err(BenchError::NonPositiveC1(c1));
    }
    let e = integrate(&v.map(|x| x * x));
    let grad_sq = integrate(&gradient_one_sided(v).norm_sq());
    Ok(InequalityCheck {
        lhs: integrate(&v.pos_pow(3.0)),
        rhs_terms: [
            2f64.sqrt() * geom.m1 / 3.0 * e.powf(1.5),
            geom.m2 * geom.m2 * c1 / 16.0 * e * e,
            2.0 / c1 * grad_sq,
        ],
    })
}

/// `int phi^3 <= (2 gamma^3 / 3 delta^2) int f^3 + ctilde (int f^2)^{3/2}` where
/// `-lap(phi) + delta phi = gamma f` with zero flux.
pub fn check_ehrling_bound(f: &ScalarField, params: &ModelParams, ctilde: f64) -> Result<InequalityCheck, BenchError> {
    let op = ScreenedPoisson::new(*f.grid(), params.delta, Preconditioner::Spectral)?;
    ehrling_with(&op, f, params, ctilde)
}

fn ehrling_with(op: &ScreenedPoisson, f: &ScalarField, params: &ModelParams, ctilde: f64) -> Result<InequalityCheck, BenchError> {
    let phi = solve_with(op, f, params.gamma, None)?;
    let (g, d) = (params.gamma, params.delta);
    Ok(InequalityCheck {
        lhs: integrate(&phi.pos_pow(3.0)),
        rhs_terms: [
            2.0 * g.powi(3) / (3.0 * d * d) * integrate(&f.pos_pow(3.0)),
            ctilde * integrate(&f.map(|x| x * x)).powf(1.5),
            0.0,
        ],
    })
}

/// `(int phi^3 - (2 gamma^3 / 3 delta^2) int f^3) / (int f^2)^{3/2}`, the smallest
/// constant that makes the elliptic estimate hold for `f`. Expects a check made
/// with `ctilde = 1`.
fn ehrling_ratio(check: &InequalityCheck) -> f64 {
    let f2_pow = check.rhs_terms[1];
    (check.lhs - check.rhs_terms[0]) / f2_pow
}

/// Ratio for constant `f` on a domain of the given area:
/// `gamma^3 (1/delta^3 - 2/(3 delta^2)) |Omega|^{-1/2}`.
pub fn constant_ratio(params: &ModelParams, area: f64) -> f64 {
    let (g, d) = (params.gamma, params.delta);
    g.powi(3) * (1.0 / d.powi(3) - 2.0 / (3.0 * d * d)) / area.sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtildeEstimate {
    pub value: f64,
    /// Largest positive part of the ratio before the safety factor.
    pub raw_max: f64,
    pub n_trials: usize,
    pub seed: u64,
    pub argmax_description: String,
    pub safety_factor: f64,
    /// Positive part of the constant-function ratio on the true domain.
    pub constant_lower_bound: f64,
}

impl CtildeEstimate {
    pub fn to_key_value(&self) -> String {
        format!(
            "ctilde={}\nraw_max={}\nn_trials={}\nseed={}\nargmax={}\nsafety_factor={}\nconstant_lower_bound={}\n",
            self.value,
            self.raw_max,
            self.n_trials,
            self.seed,
            self.argmax_description,
            self.safety_factor,
            self.constant_lower_bound
        )
    }
}

/// `safety_factor * max(ratio)_+` over `n_trials` trial sources. Trial 0 is the
/// unit constant, whose ratio is evaluated in closed form with the true area of
/// `geom`; the others come from the seeded sampler on `grid`.
pub fn estimate_ctilde(
    geom: &DomainGeometry,
    grid: &Grid,
    params: &ModelParams,
    n_trials: usize,
    seed: u64,
    safety_factor: f64,
) -> Result<CtildeEstimate, BenchError> {
    if n_trials == 0 {
        return Err(BenchError::NoTrials);
    }
    if !(safety_factor >= 1.0 && safety_factor.is_finite()) {
        return Err(BenchError::SafetyFactor(safety_factor));
    }
    let constant = constant_ratio(params, geom.area()).max(0.0);
    let mut best = constant;
    let mut argmax = TrialFunction::Constant { value: 1.0 }.describe();
    if n_trials > 1 {
        let op = ScreenedPoisson::new(*grid, params.delta, Preconditioner::Spectral)?;
        let mut sampler = TrialSampler::new(seed, grid.lower, grid.upper);
        for _ in 1..n_trials {
            let trial = sampler.sample();
            let f = trial.evaluate(grid);
            let ratio = ehrling_ratio(&ehrling_with(&op, &f, params, 1.0)?);
            if ratio > best {
                best = ratio;
                argmax = trial.describe();
            }
        }
    }
    Ok(CtildeEstimate {
        value: safety_factor * best,
        raw_max: best,
        n_trials,
        seed,
        argmax_description: argmax,
        safety_factor,
        constant_lower_bound: constant,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub n_trials: usize,
    pub seed: u64,
    pub c1_values: Vec<f64>,
    pub tol: f64,
    /// When set, the elliptic estimate is also checked with this constant.
    pub ctilde: Option<f64>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions { n_trials: 100, seed: 0, c1_values: vec![0.1, 1.0, 10.0], tol: DEFAULT_TOL, ctilde: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub trial_id: usize,
    pub family: &'static str,
    pub description: String,
    /// `trace`, `l3(c1=...)` or `ehrling`.
    pub check: String,
    pub result: InequalityCheck,
    pub flagged: bool,
    /// Flagged and still violated on the refined grid.
    pub confirmed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CheckSummary {
    pub n_checked: usize,
    pub n_flagged: usize,
    pub n_confirmed: usize,
    /// Minimum of `margin / (1 + |rhs|)`.
    pub min_relative_margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub trace: CheckSummary,
    pub l3: CheckSummary,
    pub ehrling: Option<CheckSummary>,
    pub seed: u64,
    pub n_trials: usize,
    pub grid: Grid,
}

pub const BENCH_CSV_COLUMNS: &str = "trial_id,family,check,lhs,rhs1,rhs2,rhs3,margin,flagged,confirmed,description";

impl BenchReport {
    pub fn confirmed_violations(&self) -> usize {
        self.trace.n_confirmed + self.l3.n_confirmed + self.ehrling.map_or(0, |s| s.n_confirmed)
    }

    pub fn to_csv(&self, header: &str) -> String {
        let mut s = String::new();
        for line in header.lines() {
            let _ = writeln!(s, "# {line}");
        }
        s.push_str(BENCH_CSV_COLUMNS);
        s.push('\n');
        for r in &self.rows {
            let c = &r.result;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.trial_id,
                r.family,
                r.check,
                c.lhs,
                c.rhs_terms[0],
                c.rhs_terms[1],
                c.rhs_terms[2],
                c.margin(),
                r.flagged,
                r.confirmed,
                r.description
            );
        }
        s.push_str(&self.summary());
        s
    }

    /// Summary block as `# key=value` comment lines.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# seed={} n_trials={} grid={}x{}", self.seed, self.n_trials, self.grid.nx, self.grid.ny);
        let mut block = |name: &str, c: &CheckSummary| {
            let _ = writeln!(
                s,
                "# {name}: checked={} flagged={} confirmed={} min_relative_margin={:e}",
                c.n_checked, c.n_flagged, c.n_confirmed, c.min_relative_margin
            );
        };
        block("trace", &self.trace);
        block("l3", &self.l3);
        if let Some(e) = &self.ehrling {
            block("ehrling", e);
        }
        s
    }
}

impl CheckSummary {
    fn new() -> Self {
        CheckSummary { min_relative_margin: f64::INFINITY, ..Default::default() }
    }

    fn add(&mut self, c: &InequalityCheck, flagged: bool, confirmed: bool) {
        self.n_checked += 1;
        self.n_flagged += flagged as usize;
        self.n_confirmed += confirmed as usize;
        self.min_relative_margin = self.min_relative_margin.min(c.margin() / (1.0 + c.rhs().abs()));
    }
}

/// Runs the trace and cubic checks (one per `c1`) and, optionally, the elliptic
/// estimate on `n_trials` seeded trial functions over `grid`. `geom` must describe
/// the grid's rectangle.
pub fn run_bench(
    grid: &Grid,
    geom: &GeometryConstants,
    params: &ModelParams,
    opts: &BenchOptions,
) -> Result<BenchReport, BenchError> {
    if opts.n_trials == 0 {
        return Err(BenchError::NoTrials);
    }
    for &c1 in &opts.c1_values {
        if !(c1 > 0.0 && c1.is_finite()) {
            return Err(BenchError::NonPositiveC1(c1));
        }
    }
    let fine = grid.refined();
    let op = ScreenedPoisson::new(*grid, params.delta, Preconditioner::Spectral)?;
    let mut fine_op: Option<ScreenedPoisson> = None;
    let mut sampler = TrialSampler::new(opts.seed, grid.lower, grid.upper);
    let mut rows = Vec::new();
    let mut trace = CheckSummary::new();
    let mut l3 = CheckSummary::new();
    let mut ehrling = opts.ctilde.map(|_| CheckSummary::new());

    for id in 0..opts.n_trials {
        let trial = sampler.sample();
        let v = trial.evaluate(grid);
        if v.min() < 0.0 {
            return Err(BenchError::Negative(v.min()));
        }
        let mut v_fine: Option<ScalarField> = None;
        let refined = |v_fine: &mut Option<ScalarField>| v_fine.get_or_insert_with(|| trial.evaluate(&fine)).clone();
        let mut push = |check: String, result: InequalityCheck, confirmed: bool, summary: &mut CheckSummary| {
            let flagged = result.flagged(opts.tol);
            let confirmed = flagged && confirmed;
            summary.add(&result, flagged, confirmed);
            rows.push(BenchRow {
                trial_id: id,
                family: trial.family(),
                description: trial.describe(),
                check,
                result,
                flagged,
                confirmed,
            });
        };

        let t = check_trace_inequality(&v, geom);
        let confirmed = t.flagged(opts.tol) && check_trace_inequality(&refined(&mut v_fine), geom).flagged(opts.tol);
        push("trace".to_string(), t, confirmed, &mut trace);

        for &c1 in &opts.c1_values {
            let r = check_l3_inequality(&v, geom, c1)?;
            let confirmed = r.flagged(opts.tol) && check_l3_inequality(&refined(&mut v_fine), geom, c1)?.flagged(opts.tol);
            push(format!("l3(c1={c1})"), r, confirmed, &mut l3);
        }

        if let (Some(ct), Some(summary)) = (opts.ctilde, ehrling.as_mut()) {
            let r = ehrling_with(&op, &v, params, ct)?;
            let confirmed = if r.flagged(opts.tol) {
                let fop = match &fine_op {
                    Some(o) => o,
                    None => fine_op.insert(ScreenedPoisson::new(fine, params.delta, Preconditioner::Spectral)?),
                };
                ehrling_with(fop, &refined(&mut v_fine), params, ct)?.flagged(opts.tol)
            } else {
                false
            };
            push("ehrling".to_string(), r, confirmed, summary);
        }
    }
    Ok(BenchReport { rows, trace, l3, ehrling, seed: opts.seed, n_trials: opts.n_trials, grid: *grid })
}

/// Rectangle geometry of `grid` with reference point `x0`.
pub fn grid_geometry(grid: &Grid, x0: Point) -> Result<GeometryConstants, crate::geometry::GeometryError> {
    let center = [(grid.lower[0] + grid.upper[0]) / 2.0, (grid.lower[1] + grid.upper[1]) / 2.0];
    let half = [(grid.upper[0] - grid.lower[0]) / 2.0, (grid.upper[1] - grid.lower[1]) / 2.0];
    DomainGeometry::new(crate::geometry::Shape::Rectangle { center, half_widths: half }, x0, 4)?.constants()
}
