//! Time series of run summaries and their CSV form.

use std::fmt::{self, Write as _};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminalStatus {
    Running,
    Completed,
    BlowupDetected,
    StepUnderflow,
    InvariantViolation,
}

impl fmt::Display for TerminalStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TerminalStatus::Running => "running",
            TerminalStatus::Completed => "completed",
            TerminalStatus::BlowupDetected => "blowup_detected",
            TerminalStatus::StepUnderflow => "step_underflow",
            TerminalStatus::InvariantViolation => "invariant_violation",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub t: f64,
    /// `E(t) = integral of u^2`
    pub energy: f64,
    pub mass: f64,
    pub u_max: f64,
    pub u_min: f64,
    pub dedt_numeric: f64,
    pub odi_rhs: f64,
    pub odi_margin: f64,
    pub dt: f64,
    pub v_mass: f64,
    pub w_mass: f64,
    /// `-2 |grad u|^2 + sigma u^3 + xi delta u^2 w - chi beta u^2 v`, integrated.
    pub energy_identity_rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    pub status: TerminalStatus,
    pub declared_blowup_time: Option<f64>,
    pub diagnostics: Vec<String>,
}

pub const CSV_COLUMNS: &str = "t,E,mass,u_max,dEdt_numeric,odi_rhs,odi_margin,dt";

impl Trajectory {
    pub fn new(first: TrajectoryRecord) -> Self {
        Trajectory {
            records: vec![first],
            status: TerminalStatus::Running,
            declared_blowup_time: None,
            diagnostics: Vec::new(),
        }
    }

    pub fn from_records(records: Vec<TrajectoryRecord>, status: TerminalStatus) -> Self {
        let mut t = Trajectory { records, status, declared_blowup_time: None, diagnostics: Vec::new() };
        t.compute_derivatives();
        t
    }

    pub fn push(&mut self, rec: TrajectoryRecord) {
        debug_assert!(self.records.last().is_none_or(|r| rec.t > r.t));
        self.records.push(rec);
    }

    pub fn initial(&self) -> &TrajectoryRecord {
        &self.records[0]
    }

    /// Fills `dedt_numeric` with three-point differences on the (possibly
    /// non-uniform) record times: centered inside, one-sided second order at the ends.
    pub fn compute_derivatives(&mut self) {
        let t: Vec<f64> = self.records.iter().map(|r| r.t).collect();
        let e: Vec<f64> = self.records.iter().map(|r| r.energy).collect();
        for (k, d) in three_point_derivative(&t, &e).into_iter().enumerate() {
            self.records[k].dedt_numeric = d;
        }
    }

    /// Fills `odi_rhs = a E^{3/2} + b E^2` and `odi_margin = odi_rhs - dE/dt`.
    pub fn annotate_odi(&mut self, a: f64, b: f64) {
        for r in &mut self.records {
            r.odi_rhs = a * r.energy.powf(1.5) + b * r.energy * r.energy;
            r.odi_margin = r.odi_rhs - r.dedt_numeric;
        }
    }

    /// Last time `t1` with `E(t1) = E(0)` such that `E >= E(0)` afterwards,
    /// found by a backward scan with linear interpolation. `None` when the
    /// final energy is below `E(0)`.
    pub fn last_return_time(&self) -> Option<f64> {
        let e0 = self.records.first()?.energy;
        let last = self.records.last()?;
        if last.energy < e0 {
            return None;
        }
        for k in (1..self.records.len()).rev() {
            let (a, b) = (&self.records[k - 1], &self.records[k]);
            if a.energy < e0 {
                let s = (e0 - a.energy) / (b.energy - a.energy);
                return Some(a.t + s * (b.t - a.t));
            }
        }
        Some(0.0)
    }

    pub fn to_csv(&self, header: &str) -> String {
        let mut s = String::new();
        for line in header.lines() {
            let _ = writeln!(s, "# {line}");
        }
        s.push_str(CSV_COLUMNS);
        s.push('\n');
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.t, r.energy, r.mass, r.u_max, r.dedt_numeric, r.odi_rhs, r.odi_margin, r.dt
            );
        }
        let _ = write!(s, "# status={}", self.status);
        if let Some(tb) = self.declared_blowup_time {
            let _ = write!(s, " t_blowup={tb}");
        }
        s.push('\n');
        s
    }
}

/// Second-order derivative estimate on non-uniform nodes.
pub fn three_point_derivative(t: &[f64], f: &[f64]) -> Vec<f64> {
    let n = t.len();
    match n {
        0 => return Vec::new(),
        1 => return vec![f64::NAN],
        2 => {
            let d = (f[1] - f[0]) / (t[1] - t[0]);
            return vec![d, d];
        }
        _ => {}
    }
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        let h1 = t[i] - t[i - 1];
        let h2 = t[i + 1] - t[i];
        out[i] = -h2 / (h1 * (h1 + h2)) * f[i - 1] + (h2 - h1) / (h1 * h2) * f[i] + h1 / (h2 * (h1 + h2)) * f[i + 1];
    }
    let (h1, h2) = (t[1] - t[0], t[2] - t[1]);
    out[0] = -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * f[0] + (h1 + h2) / (h1 * h2) * f[1] - h1 / (h2 * (h1 + h2)) * f[2];
    let (h1, h2) = (t[n - 2] - t[n - 3], t[n - 1] - t[n - 2]);
    out[n - 1] = (2.0 * h2 + h1) / (h2 * (h1 + h2)) * f[n - 1] - (h1 + h2) / (h1 * h2) * f[n - 2]
        + h2 / (h1 * (h1 + h2)) * f[n - 3];
    out
}
