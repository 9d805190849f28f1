//! Command-line front end.
//!
//! Exit codes: 0 success, 1 check failure, 2 configuration error, 3 numerical failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::{bound_report, check_odi, BoundReport, CtildeSource, OdiReport, BOUND_CSV_COLUMNS};
use crate::bench::{estimate_ctilde, run_bench, BenchError, CtildeEstimate};
use crate::config::{safety_factor, ConfigError, CtildeConfig, ExperimentConfig, LoadedConfig};
use crate::elliptic::SolverError;
use crate::field::{integrate, Grid};
use crate::geometry::DomainGeometry;
use crate::initial::{classify_mass_value, make_initial_data, make_initial_data_masked, InitialData, MassClass};
use crate::simulator::{run, RunConfig, RunOutput, SimError};
use crate::trajectory::TerminalStatus;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "chemobound", version, about = "Blow-up time bounds and numerical checks for an attraction-repulsion chemotaxis system")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the geometric constants of the domain.
    Geometry(CommonArgs),
    /// Compute the constants A, B and the blow-up time lower bounds.
    Bound(CommonArgs),
    /// Run the simulation and write the trajectory.
    Simulate(CommonArgs),
    /// Check the functional inequalities on random trial functions.
    Bench(CommonArgs),
    /// Estimate the constant of the elliptic cubic estimate.
    EstimateCtilde(CommonArgs),
    /// Simulate, then check mass, the energy inequality and bound consistency.
    Verify(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `outputs.dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for the c-tilde estimate; the bench uses its held-out partner.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    CheckFailure = 1,
    ConfigError = 2,
    NumericalFailure = 3,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Solver(s) => s.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Solver(s) => s.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

fn config_err(e: impl ToString) -> CliError {
    CliError::Config(e.to_string())
}

/// What a command produced: text for stdout, log lines for stderr, files to write.
#[derive(Debug, Default)]
pub struct Outcome {
    pub stdout: String,
    pub log: Vec<String>,
    pub files: Vec<(String, String)>,
    pub check_failed: bool,
}

pub struct Context {
    pub config: ExperimentConfig,
    /// Comment header written at the top of every output file.
    pub header: String,
}

impl Context {
    pub fn new(loaded: LoadedConfig, command: &str, seed: Option<u64>) -> Self {
        let mut config = loaded.config;
        if let Some(s) = seed {
            config.override_seed(s);
        }
        let mut header = format!("chemobound {VERSION} config_sha256={}\ncommand={command}", loaded.sha256);
        if let Some(s) = seed {
            let _ = write!(header, " seed={s}");
        }
        Context { config, header }
    }

    fn commented(&self) -> String {
        self.header.lines().map(|l| format!("# {l}\n")).collect()
    }

    fn key_value_file(&self, body: &str) -> String {
        self.commented() + body
    }
}

fn resolve_ctilde(
    cfg: &ExperimentConfig,
    geom: &DomainGeometry,
    grid: Option<Grid>,
) -> Result<(CtildeSource, Option<CtildeEstimate>), CliError> {
    match cfg.ctilde()? {
        CtildeConfig::User { value } => Ok((CtildeSource::User(value), None)),
        c @ CtildeConfig::Estimate { n_trials, seed, .. } => {
            let grid = match grid {
                Some(g) => g,
                None => cfg.grid()?,
            };
            let sf = safety_factor(&c);
            let est = estimate_ctilde(geom, &grid, &cfg.params()?, n_trials, seed, sf)?;
            let source = CtildeSource::Estimated { value: est.value, n_trials, seed, safety_factor: sf };
            Ok((source, Some(est)))
        }
    }
}

pub fn cmd_geometry(ctx: &Context) -> Result<Outcome, CliError> {
    let geom = ctx.config.geometry()?;
    let k = geom.constants().map_err(config_err)?;
    let (rho0_s, d_s) = geom.sampled_rho0_d();
    let mut body = format!("shape={}\nx0={},{}\n", shape_name(&ctx.config), geom.x0()[0], geom.x0()[1]);
    body.push_str(&k.to_key_value());
    let _ = writeln!(body, "rho0_sampled={rho0_s}\nd_sampled={d_s}\nboundary_samples={}", geom.boundary_samples().len());
    Ok(Outcome {
        files: vec![("geometry.txt".into(), ctx.key_value_file(&body))],
        stdout: body,
        ..Default::default()
    })
}

fn shape_name(cfg: &ExperimentConfig) -> &'static str {
    use crate::config::ShapeSpec::*;
    match cfg.domain.shape {
        Disk { .. } => "disk",
        Rectangle { .. } => "rectangle",
        Polygon { .. } => "polygon",
        RegularPolygon { .. } => "regular_polygon",
    }
}

/// `E(0)`: closed form for constant data, grid quadrature over the domain otherwise.
fn initial_energy(cfg: &ExperimentConfig, geom: &DomainGeometry) -> Result<f64, CliError> {
    match cfg.initial()? {
        InitialData::Constant { value } => Ok(value * value * geom.area()),
        kind => {
            let grid = cfg.grid()?;
            let u0 = make_initial_data_masked(kind, &grid, Some(geom)).map_err(config_err)?;
            Ok(integrate(&u0.map(|x| x * x)))
        }
    }
}

fn bound_files(ctx: &Context, report: &BoundReport) -> Vec<(String, String)> {
    vec![
        ("bound.txt".into(), ctx.key_value_file(&report.to_key_value())),
        ("bound.csv".into(), format!("{}{BOUND_CSV_COLUMNS}\n{}\n", ctx.commented(), report.csv_row())),
    ]
}

pub fn cmd_bound(ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = &ctx.config;
    let geom = cfg.geometry()?;
    let k = geom.constants().map_err(config_err)?;
    let params = cfg.params()?;
    let (source, est) = resolve_ctilde(cfg, &geom, None)?;
    let e0 = initial_energy(cfg, &geom)?;
    let report = bound_report(&params, &k, &source, e0).map_err(config_err)?;
    let mut out = Outcome { stdout: report.to_key_value(), files: bound_files(ctx, &report), ..Default::default() };
    if let Some(est) = est {
        out.stdout.push_str(&format!("ctilde_argmax={}\n", est.argmax_description));
    }
    if report.out_of_regime {
        out.log.push("out_of_regime: sigma <= 0, the bounds are evaluated but carry no blow-up statement".into());
    }
    Ok(out)
}

fn simulate_inner(cfg: &ExperimentConfig) -> Result<(RunOutput, Grid), CliError> {
    let grid = cfg.grid()?;
    let params = cfg.params()?;
    let time = cfg.time()?;
    let u0 = make_initial_data(cfg.initial()?, &grid).map_err(config_err)?;
    let run_cfg = RunConfig {
        params,
        u0,
        time: time.controls(),
        preconditioner: time.preconditioner(),
        snapshot_times: cfg.outputs().snapshot_times,
    };
    Ok((run(&run_cfg)?, grid))
}

fn mass_class_line(cfg: &ExperimentConfig, out: &RunOutput) -> Result<String, CliError> {
    let u0_mass = out.trajectory.initial().mass;
    let class = match classify_mass_value(&cfg.params()?, u0_mass) {
        MassClass::RepulsionDominant => "repulsion_dominant".to_string(),
        MassClass::Subcritical => "subcritical".to_string(),
        MassClass::Supercritical { marginal } => format!("supercritical{}", if marginal { " (marginal)" } else { "" }),
    };
    Ok(format!("mass={u0_mass}\nmass_class={class}\n"))
}

fn status_exit(status: TerminalStatus) -> bool {
    matches!(status, TerminalStatus::Completed | TerminalStatus::BlowupDetected)
}

pub fn cmd_simulate(ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = &ctx.config;
    let (mut out, _) = simulate_inner(cfg)?;
    let mut stdout = mass_class_line(cfg, &out)?;
    if cfg.ctilde.is_some() {
        let geom = cfg.grid_geometry()?;
        let (source, _) = resolve_ctilde(cfg, &geom, None)?;
        let k = geom.constants().map_err(config_err)?;
        let ab = crate::analysis::constants_ab(&cfg.params()?, &k, source.value()).map_err(config_err)?;
        out.trajectory.annotate_odi(ab.a, ab.b);
    }
    let traj = &out.trajectory;
    let _ = writeln!(stdout, "status={}", traj.status);
    if let Some(tb) = traj.declared_blowup_time {
        let _ = writeln!(stdout, "t_blowup={tb}");
    }
    let _ = writeln!(stdout, "records={}", traj.records.len());
    let mut files = vec![("trajectory.csv".to_string(), traj.to_csv(&ctx.header))];
    for (k, (t, u)) in out.snapshots.iter().enumerate() {
        files.push((format!("snapshot_{k:03}.csv"), u.to_csv(&format!("{}\nt={t}", ctx.header))));
    }
    if traj.status == TerminalStatus::StepUnderflow {
        return Err(CliError::Numerical(format!("step underflow: {}", traj.diagnostics.join("; "))));
    }
    Ok(Outcome { stdout, log: traj.diagnostics.clone(), files, check_failed: !status_exit(traj.status) })
}

pub fn cmd_bench(ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = &ctx.config;
    let grid = cfg.grid()?;
    let rect = cfg.grid_geometry()?;
    let k = rect.constants().map_err(config_err)?;
    let ctilde = match cfg.ctilde {
        Some(_) => Some(resolve_ctilde(cfg, &cfg.geometry()?, Some(grid))?.0),
        None => None,
    };
    let opts = cfg.bench_options(ctilde.as_ref().map(CtildeSource::value))?;
    let report = run_bench(&grid, &k, &cfg.params()?, &opts)?;
    let mut stdout = report.summary().lines().map(|l| l.trim_start_matches("# ").to_string() + "\n").collect::<String>();
    if let Some(c) = &ctilde {
        let _ = writeln!(stdout, "ctilde={} ctilde_provenance={}", c.value(), c.provenance());
    }
    let confirmed = report.confirmed_violations();
    let _ = writeln!(stdout, "confirmed_violations={confirmed}");
    let mut log = Vec::new();
    if let Some(r) = report.rows.iter().find(|r| r.confirmed) {
        log.push(format!(
            "first confirmed violation: trial {} check {} margin {:e} ({})",
            r.trial_id,
            r.check,
            r.result.margin(),
            r.description
        ));
    }
    Ok(Outcome {
        stdout,
        log,
        files: vec![("bench.csv".into(), report.to_csv(&ctx.header))],
        check_failed: confirmed > 0,
    })
}

pub fn cmd_estimate_ctilde(ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = &ctx.config;
    if !matches!(cfg.ctilde()?, CtildeConfig::Estimate { .. }) {
        return Err(CliError::Config("estimate-ctilde needs `ctilde.mode` = \"estimate\"".into()));
    }
    let (_, est) = resolve_ctilde(cfg, &cfg.geometry()?, None)?;
    let body = est.expect("estimate mode").to_key_value();
    Ok(Outcome { files: vec![("ctilde.txt".into(), ctx.key_value_file(&body))], stdout: body, ..Default::default() })
}

/// Result of the combined checks of `verify`.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub status: TerminalStatus,
    pub max_mass_drift: f64,
    pub mass_ok: bool,
    pub odi: OdiReport,
    pub bound: BoundReport,
    pub declared_blowup_time: Option<f64>,
    /// `None` when the run did not blow up.
    pub blowup_consistent: Option<bool>,
    pub implicit_below_explicit: bool,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.mass_ok && self.odi.passed() && self.blowup_consistent != Some(false) && self.implicit_below_explicit
    }

    pub fn lines(&self) -> String {
        let pf = |b: bool| if b { "pass" } else { "FAIL" };
        let mut s = String::new();
        let _ = writeln!(s, "status={}", self.status);
        let _ = writeln!(s, "check mass: {} max_relative_drift={:e}", pf(self.mass_ok), self.max_mass_drift);
        let _ = write!(
            s,
            "check odi: {} checked={} violations={} min_relative_margin={:e}",
            pf(self.odi.passed()),
            self.odi.n_checked,
            self.odi.n_violations,
            self.odi.min_relative_margin
        );
        if let Some(t) = self.odi.first_violation_time {
            let _ = write!(s, " first_violation_t={t}");
        }
        s.push('\n');
        let _ = writeln!(
            s,
            "check implicit<=explicit: {} t_lower_implicit={} t_lower_explicit={}",
            pf(self.implicit_below_explicit),
            self.bound.t_lower_implicit,
            self.bound.t_lower_explicit
        );
        match (self.blowup_consistent, self.declared_blowup_time) {
            (Some(ok), Some(tb)) => {
                let _ = writeln!(
                    s,
                    "check blowup_bound: {} t_blowup={tb} t_lower_implicit={} ctilde_provenance={}",
                    pf(ok),
                    self.bound.t_lower_implicit,
                    self.bound.ctilde_provenance
                );
            }
            _ => {
                let _ = writeln!(s, "check blowup_bound: not applicable (no blow-up)");
            }
        }
        let _ = writeln!(s, "verify={}", pf(self.passed()));
        s
    }
}

/// Runs the simulation and all checks; also returns the run for file output.
pub fn verify_config(cfg: &ExperimentConfig) -> Result<(VerifyReport, RunOutput), CliError> {
    let (mut out, grid) = simulate_inner(cfg)?;
    let params = cfg.params()?;
    let rect = cfg.grid_geometry()?;
    let k = rect.constants().map_err(config_err)?;
    let (source, _) = resolve_ctilde(cfg, &rect, Some(grid))?;
    let traj = &mut out.trajectory;
    let e0 = traj.initial().energy;
    let mut bound = bound_report(&params, &k, &source, e0).map_err(|e| CliError::Numerical(e.to_string()))?;
    bound.t1 = traj.last_return_time();
    traj.annotate_odi(bound.constants.a, bound.constants.b);
    let odi = check_odi(traj, bound.constants.a, bound.constants.b, cfg.verify().odi_tolerance);
    let mass0 = traj.initial().mass;
    let max_mass_drift = traj.records.iter().map(|r| (r.mass - mass0).abs() / mass0).fold(0.0, f64::max);
    let mass_tol = cfg.time()?.controls().mass_tol;
    let mass_ok = traj.status != TerminalStatus::InvariantViolation && max_mass_drift <= mass_tol;
    let blowup_consistent = traj.declared_blowup_time.map(|tb| tb >= bound.t_lower_implicit);
    let report = VerifyReport {
        status: traj.status,
        max_mass_drift,
        mass_ok,
        odi,
        implicit_below_explicit: bound.t_lower_implicit <= bound.t_lower_explicit,
        declared_blowup_time: traj.declared_blowup_time,
        blowup_consistent,
        bound,
    };
    Ok((report, out))
}

pub fn cmd_verify(ctx: &Context) -> Result<Outcome, CliError> {
    let (report, out) = verify_config(&ctx.config)?;
    let traj = &out.trajectory;
    let mut log = traj.diagnostics.clone();
    if !report.odi.passed() {
        if let Some(t) = report.odi.first_violation_time {
            log.push(format!("first failing record: energy inequality at t={t}"));
        }
    }
    if !report.mass_ok {
        let m0 = traj.initial().mass;
        let tol = ctx.config.time()?.controls().mass_tol;
        if let Some(r) = traj.records.iter().find(|r| (r.mass - m0).abs() / m0 > tol) {
            log.push(format!("first failing record: mass at t={}", r.t));
        }
    }
    if traj.status == TerminalStatus::StepUnderflow {
        return Err(CliError::Numerical(format!("step underflow: {}", traj.diagnostics.join("; "))));
    }
    let body = report.lines();
    let mut files = vec![
        ("trajectory.csv".to_string(), traj.to_csv(&ctx.header)),
        ("verify.txt".to_string(), ctx.key_value_file(&(body.clone() + &report.bound.to_key_value()))),
    ];
    files.extend(bound_files(ctx, &report.bound));
    Ok(Outcome { stdout: body, log, files, check_failed: !report.passed() })
}

fn write_files(dir: &Path, files: &[(String, String)]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, content) in files {
        std::fs::write(dir.join(name), content)?;
    }
    Ok(())
}

type CommandFn = fn(&Context) -> Result<Outcome, CliError>;

/// Parses `args`, runs the command, prints results and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::ConfigError as i32 } else { ExitCode::Success as i32 };
        }
    };
    let (name, common, f): (&str, &CommonArgs, CommandFn) = match &cli.command {
        Command::Geometry(a) => ("geometry", a, cmd_geometry),
        Command::Bound(a) => ("bound", a, cmd_bound),
        Command::Simulate(a) => ("simulate", a, cmd_simulate),
        Command::Bench(a) => ("bench", a, cmd_bench),
        Command::EstimateCtilde(a) => ("estimate-ctilde", a, cmd_estimate_ctilde),
        Command::Verify(a) => ("verify", a, cmd_verify),
    };
    let loaded = match LoadedConfig::from_path(&common.config) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::ConfigError as i32;
        }
    };
    let out_dir = common
        .out
        .clone()
        .or_else(|| loaded.config.outputs().dir.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("chemobound_out"));
    let ctx = Context::new(loaded, name, common.seed);
    let outcome = match f(&ctx) {
        Ok(o) => o,
        Err(CliError::Config(m)) => {
            eprintln!("error: {m}");
            return ExitCode::ConfigError as i32;
        }
        Err(CliError::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            return ExitCode::NumericalFailure as i32;
        }
    };
    print!("{}", outcome.stdout);
    for line in &outcome.log {
        eprintln!("{line}");
    }
    if let Err(e) = write_files(&out_dir, &outcome.files) {
        eprintln!("error: cannot write outputs to {}: {e}", out_dir.display());
        return ExitCode::ConfigError as i32;
    }
    if outcome.check_failed {
        ExitCode::CheckFailure as i32
    } else {
        ExitCode::Success as i32
    }
}
