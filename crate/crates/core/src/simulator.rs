//! Time integration of the cell equation
//! `u_t = lap(u) - div(u (chi grad v - xi grad w))` with
//! `0 = lap(v) + alpha u - beta v`, `0 = lap(w) + gamma u - delta w`
//! and zero flux on the boundary of a rectangle.
//!
//! One step is semi-implicit: the chemotactic flux is explicit, upwinded in `u`
//! and written in conservative face form; diffusion is backward Euler. The two
//! elliptic equations are re-solved after every step.

use thiserror::Error;

use crate::elliptic::{solve_with, Preconditioner, ScreenedPoisson, SolverError};
use crate::field::{dirichlet_energy, integrate, FieldError, Grid, ScalarField, TOL_NEG};
use crate::params::ModelParams;
use crate::trajectory::{TerminalStatus, Trajectory, TrajectoryRecord};

/// Relative residual for the implicit diffusion solve. Tighter than the elliptic
/// tolerance because it feeds the mass and positivity checks directly.
const DIFFUSION_RTOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("time step {dt:e} exceeds the advective stability bound {bound:e}")]
    Cfl { dt: f64, bound: f64 },
    #[error("time step must be positive and finite, got {0}")]
    InvalidDt(f64),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("invalid time controls: {0}")]
    TimeControls(String),
    #[error("initial data and simulator use different grids")]
    GridMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeControls {
    pub dt0: f64,
    pub t_end: f64,
    pub output_interval: f64,
    /// Blow-up when `u_max > blowup_umax_factor * u_max(0)`.
    pub blowup_umax_factor: f64,
    /// Blow-up when `E > blowup_energy_factor * E(0)`.
    pub blowup_energy_factor: f64,
    pub cfl: f64,
    pub dt_min: f64,
    /// Relative mass drift that ends the run with `invariant_violation`.
    pub mass_tol: f64,
}

impl Default for TimeControls {
    fn default() -> Self {
        TimeControls {
            dt0: 1e-3,
            t_end: 1.0,
            output_interval: 1e-2,
            blowup_umax_factor: 1e6,
            blowup_energy_factor: 1e8,
            cfl: 0.4,
            dt_min: 1e-12,
            mass_tol: 1e-9,
        }
    }
}

impl TimeControls {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("dt0", self.dt0),
            ("t_end", self.t_end),
            ("output_interval", self.output_interval),
            ("blowup_umax_factor", self.blowup_umax_factor),
            ("blowup_energy_factor", self.blowup_energy_factor),
            ("cfl", self.cfl),
            ("dt_min", self.dt_min),
            ("mass_tol", self.mass_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::TimeControls(format!("{name} must be positive, got {v}")));
            }
        }
        if self.cfl > 1.0 {
            return Err(SimError::TimeControls(format!("cfl must not exceed 1, got {}", self.cfl)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub u: ScalarField,
    pub v: ScalarField,
    pub w: ScalarField,
    pub dt: f64,
    pub step_count: usize,
}

/// Per-face drift velocities `chi dv/dn - xi dw/dn` on interior faces.
#[derive(Debug, Clone)]
struct FaceDrift {
    /// face between `(i, j)` and `(i + 1, j)`, index `j * (nx - 1) + i`
    x: Vec<f64>,
    /// face between `(i, j)` and `(i, j + 1)`, index `j * nx + i`
    y: Vec<f64>,
}

pub struct Simulator {
    params: ModelParams,
    grid: Grid,
    v_op: ScreenedPoisson,
    w_op: ScreenedPoisson,
    diffusion_op: ScreenedPoisson,
    cfl: f64,
}

impl Simulator {
    pub fn new(params: ModelParams, grid: Grid, cfl: f64, preconditioner: Preconditioner) -> Result<Self, SimError> {
        Ok(Simulator {
            params,
            grid,
            v_op: ScreenedPoisson::new(grid, params.beta, preconditioner)?,
            w_op: ScreenedPoisson::new(grid, params.delta, preconditioner)?,
            diffusion_op: ScreenedPoisson::new(grid, 1.0, preconditioner)?,
            cfl,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Builds the state at `t = 0`, solving for `v` and `w`.
    pub fn initial_state(&self, u0: ScalarField, dt: f64) -> Result<SimState, SimError> {
        if *u0.grid() != self.grid {
            return Err(SimError::GridMismatch);
        }
        let (v, w) = self.solve_signals(&u0, None, None)?;
        Ok(SimState { t: 0.0, u: u0, v, w, dt, step_count: 0 })
    }

    fn solve_signals(
        &self,
        u: &ScalarField,
        v_guess: Option<&ScalarField>,
        w_guess: Option<&ScalarField>,
    ) -> Result<(ScalarField, ScalarField), SolverError> {
        let p = &self.params;
        let v = solve_with(&self.v_op, u, p.alpha, v_guess)?;
        let w = solve_with(&self.w_op, u, p.gamma, w_guess)?;
        Ok((v, w))
    }

    fn face_drift(&self, v: &ScalarField, w: &ScalarField) -> FaceDrift {
        let g = &self.grid;
        let (chi, xi) = (self.params.chi, self.params.xi);
        let (v, w) = (v.values(), w.values());
        let mut x = Vec::with_capacity((g.nx - 1) * g.ny);
        for j in 0..g.ny {
            for i in 0..g.nx - 1 {
                let k = g.idx(i, j);
                x.push((chi * (v[k + 1] - v[k]) - xi * (w[k + 1] - w[k])) / g.hx);
            }
        }
        let mut y = Vec::with_capacity(g.nx * (g.ny - 1));
        for j in 0..g.ny - 1 {
            for i in 0..g.nx {
                let k = g.idx(i, j);
                y.push((chi * (v[k + g.nx] - v[k]) - xi * (w[k + g.nx] - w[k])) / g.hy);
            }
        }
        FaceDrift { x, y }
    }

    /// Largest step keeping the explicit upwind update positive, scaled by the CFL constant:
    /// `cfl / max_cells(sum of outgoing face speeds / h)`.
    fn stable_dt(&self, drift: &FaceDrift) -> f64 {
        let g = &self.grid;
        let mut worst: f64 = 0.0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let mut out = 0.0;
                if i + 1 < g.nx {
                    out += drift.x[j * (g.nx - 1) + i].max(0.0) / g.hx;
                }
                if i > 0 {
                    out += (-drift.x[j * (g.nx - 1) + i - 1]).max(0.0) / g.hx;
                }
                if j + 1 < g.ny {
                    out += drift.y[j * g.nx + i].max(0.0) / g.hy;
                }
                if j > 0 {
                    out += (-drift.y[(j - 1) * g.nx + i]).max(0.0) / g.hy;
                }
                worst = worst.max(out);
            }
        }
        if worst > 0.0 {
            self.cfl / worst
        } else {
            f64::INFINITY
        }
    }

    /// Stability bound for the current state.
    pub fn stable_dt_for(&self, state: &SimState) -> f64 {
        self.stable_dt(&self.face_drift(&state.v, &state.w))
    }

    /// Divergence of the upwinded flux `u * drift`; boundary faces carry no flux.
    fn flux_divergence(&self, u: &ScalarField, drift: &FaceDrift) -> Vec<f64> {
        let g = &self.grid;
        let u = u.values();
        let mut div = vec![0.0; g.len()];
        for j in 0..g.ny {
            for i in 0..g.nx - 1 {
                let k = g.idx(i, j);
                let a = drift.x[j * (g.nx - 1) + i];
                let f = if a > 0.0 { a * u[k] } else { a * u[k + 1] } / g.hx;
                div[k] += f;
                div[k + 1] -= f;
            }
        }
        for j in 0..g.ny - 1 {
            for i in 0..g.nx {
                let k = g.idx(i, j);
                let a = drift.y[k];
                let f = if a > 0.0 { a * u[k] } else { a * u[k + g.nx] } / g.hy;
                div[k] += f;
                div[k + g.nx] -= f;
            }
        }
        div
    }

    /// Advances one step of length `dt`.
    pub fn step(&mut self, state: &SimState, dt: f64) -> Result<SimState, StepError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(StepError::InvalidDt(dt));
        }
        let drift = self.face_drift(&state.v, &state.w);
        let bound = self.stable_dt(&drift);
        if dt > bound {
            return Err(StepError::Cfl { dt, bound });
        }
        let div = self.flux_divergence(&state.u, &drift);
        let rhs: Vec<f64> = state.u.values().iter().zip(&div).map(|(u, d)| (u - dt * d) / dt).collect();
        self.diffusion_op.set_decay(1.0 / dt)?;
        let (u_new, _) = self.diffusion_op.solve(&rhs, Some(state.u.values()), DIFFUSION_RTOL)?;
        let u = ScalarField::from_vec_unchecked(self.grid, u_new);
        let (v, w) = self.solve_signals(&u, Some(&state.v), Some(&state.w))?;
        Ok(SimState { t: state.t + dt, u, v, w, dt, step_count: state.step_count + 1 })
    }

    /// Summary row for `state`; derivative and ODI columns are filled later.
    pub fn record(&self, state: &SimState) -> TrajectoryRecord {
        let p = &self.params;
        let u = &state.u;
        let u2 = u.map(|x| x * x);
        let energy = integrate(&u2);
        let u_plus_cubed = integrate(&u.pos_pow(3.0));
        let u2v = crate::field::inner(&u2, &state.v);
        let u2w = crate::field::inner(&u2, &state.w);
        let grad_sq = dirichlet_energy(u);
        TrajectoryRecord {
            t: state.t,
            energy,
            mass: integrate(u),
            u_max: u.max(),
            u_min: u.min(),
            dedt_numeric: f64::NAN,
            odi_rhs: f64::NAN,
            odi_margin: f64::NAN,
            dt: state.dt,
            v_mass: integrate(&state.v),
            w_mass: integrate(&state.w),
            energy_identity_rhs: -2.0 * grad_sq + p.sigma() * u_plus_cubed + p.xi * p.delta * u2w
                - p.chi * p.beta * u2v,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: ModelParams,
    pub u0: ScalarField,
    pub time: TimeControls,
    pub preconditioner: Preconditioner,
    /// Fields are captured at the first output time at or after each entry.
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub final_state: SimState,
    pub snapshots: Vec<(f64, ScalarField)>,
}

/// Steps until `t_end`, numeric blow-up, step underflow or an invariant violation.
pub fn run(cfg: &RunConfig) -> Result<RunOutput, SimError> {
    let tc = cfg.time;
    tc.validate()?;
    cfg.params.validate().map_err(|e| SimError::TimeControls(e.to_string()))?;
    let grid = *cfg.u0.grid();
    cfg.u0.check_nonnegative(TOL_NEG)?;
    let mut sim = Simulator::new(cfg.params, grid, tc.cfl, cfg.preconditioner)?;
    let mut state = sim.initial_state(cfg.u0.clone(), tc.dt0)?;
    let first = sim.record(&state);
    let (mass0, energy0, umax0) = (first.mass, first.energy, first.u_max);
    let mut traj = Trajectory::new(first);
    let mut snapshots = Vec::new();
    let mut pending_snapshots: Vec<f64> = cfg.snapshot_times.clone();
    pending_snapshots.sort_by(f64::total_cmp);
    let take_snapshots = |t: f64, u: &ScalarField, pending: &mut Vec<f64>, out: &mut Vec<(f64, ScalarField)>| {
        while pending.first().is_some_and(|&s| s <= t + 1e-12) {
            pending.remove(0);
            out.push((t, u.clone()));
        }
    };
    take_snapshots(0.0, &state.u, &mut pending_snapshots, &mut snapshots);

    let mut dt = tc.dt0;
    let mut accepted_since_change = 0usize;
    let mut halvings = 0usize;
    let mut out_index = 1usize;
    let status = loop {
        let next_out = (out_index as f64 * tc.output_interval).min(tc.t_end);
        let remaining = next_out - state.t;
        let dt_try = dt.min(remaining);
        let new_state = match sim.step(&state, dt_try) {
            Ok(s) => s,
            Err(StepError::Cfl { bound, .. }) => {
                let before = dt;
                while dt > bound {
                    dt *= 0.5;
                }
                halvings += 1;
                if halvings <= 5 {
                    traj.diagnostics.push(format!(
                        "cfl: dt halved from {before:e} to {dt:e} at t={} (bound {bound:e})",
                        state.t
                    ));
                }
                accepted_since_change = 0;
                if dt < tc.dt_min {
                    traj.diagnostics.push(format!(
                        "step underflow at t={}: dt {dt:e} below dt_min {:e}, u_max={:e}",
                        state.t, tc.dt_min, state.u.max()
                    ));
                    break TerminalStatus::StepUnderflow;
                }
                continue;
            }
            Err(StepError::Solver(e)) => return Err(SimError::Solver(e)),
            Err(StepError::InvalidDt(d)) => return Err(SimError::TimeControls(format!("invalid step {d}"))),
        };
        state = new_state;
        accepted_since_change += 1;
        if accepted_since_change >= 20 && dt < tc.dt0 {
            dt = (2.0 * dt).min(tc.dt0);
            accepted_since_change = 0;
        }
        let at_output = (state.t - next_out).abs() <= 1e-12 * next_out.max(1.0);
        if at_output {
            state.t = next_out;
        }

        let mass_drift = (integrate(&state.u) - mass0).abs() / mass0.abs().max(f64::MIN_POSITIVE);
        let negative = state.u.min() < -TOL_NEG || state.v.min() < -TOL_NEG || state.w.min() < -TOL_NEG;
        if mass_drift > tc.mass_tol || negative {
            traj.push(sim.record(&state));
            traj.diagnostics.push(format!(
                "invariant violation at t={}: relative mass drift {mass_drift:e}, min u {:e}",
                state.t,
                state.u.min()
            ));
            break TerminalStatus::InvariantViolation;
        }

        let u_max = state.u.max();
        let energy = integrate(&state.u.map(|x| x * x));
        if u_max > tc.blowup_umax_factor * umax0 || energy > tc.blowup_energy_factor * energy0 {
            traj.push(sim.record(&state));
            traj.declared_blowup_time = Some(state.t);
            traj.diagnostics.push(format!(
                "blow-up declared at t={}: u_max/u_max(0)={:e}, E/E(0)={:e}",
                state.t,
                u_max / umax0,
                energy / energy0
            ));
            break TerminalStatus::BlowupDetected;
        }

        if at_output {
            traj.push(sim.record(&state));
            take_snapshots(state.t, &state.u, &mut pending_snapshots, &mut snapshots);
            out_index += 1;
            if state.t >= tc.t_end {
                break TerminalStatus::Completed;
            }
        }
    };
    if halvings > 5 {
        traj.diagnostics.push(format!("cfl: {halvings} halvings in total"));
    }
    traj.status = status;
    traj.compute_derivatives();
    Ok(RunOutput { trajectory: traj, final_state: state, snapshots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial::{make_initial_data, InitialData};

    fn grid(n: usize) -> Grid {
        Grid::new(n, n, [-1.0, -1.0], [1.0, 1.0]).unwrap()
    }

    #[test]
    fn constant_state_is_fixed_point() {
        let g = grid(16);
        let p = ModelParams::new(1.0, 2.0, 0.5, 1.5, 3.0, 0.7).unwrap();
        let mut sim = Simulator::new(p, g, 0.4, Preconditioner::Spectral).unwrap();
        let s0 = sim.initial_state(ScalarField::constant(g, 2.0), 0.01).unwrap();
        let s1 = sim.step(&s0, 0.01).unwrap();
        for (a, b) in s1.u.values().iter().zip(s0.u.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        for v in s1.v.values() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn step_conserves_mass() {
        let g = grid(32);
        let p = ModelParams::new(1.0, 1.0, 1.0, 1.0, 3.0, 1.0).unwrap();
        let u0 = make_initial_data(&InitialData::Gaussian { center: [0.2, -0.3], width: 0.25, mass: 5.0 }, &g).unwrap();
        let mut sim = Simulator::new(p, g, 0.4, Preconditioner::Spectral).unwrap();
        let s0 = sim.initial_state(u0, 1e-3).unwrap();
        let dt = sim.stable_dt_for(&s0).min(1e-3);
        let s1 = sim.step(&s0, dt).unwrap();
        assert!((integrate(&s1.u) - integrate(&s0.u)).abs() < 1e-11);
        assert!(s1.u.min() >= -TOL_NEG);
    }

    #[test]
    fn cfl_violation_reported() {
        let g = grid(32);
        let p = ModelParams::new(1.0, 1.0, 1.0, 1.0, 50.0, 1.0).unwrap();
        let u0 = make_initial_data(&InitialData::Gaussian { center: [0.0, 0.0], width: 0.2, mass: 20.0 }, &g).unwrap();
        let mut sim = Simulator::new(p, g, 0.4, Preconditioner::Spectral).unwrap();
        let s0 = sim.initial_state(u0, 1.0).unwrap();
        match sim.step(&s0, 1.0) {
            Err(StepError::Cfl { dt, bound }) => assert!(bound < dt),
            other => panic!("{other:?}"),
        }
        assert!(matches!(sim.step(&s0, -1.0), Err(StepError::InvalidDt(_))));
    }
}
