//! Acceptance suite. Runs as a plain binary so every criterion prints one line.

mod common;

use std::f64::consts::{PI, SQRT_2};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use chemobound::analysis::*;
use chemobound::bench::*;
use chemobound::cli::{verify_config, VerifyReport};
use chemobound::config::{heldout_seed, LoadedConfig};
use chemobound::elliptic::solve_screened_poisson;
use chemobound::field::{l2_norm, Grid, ScalarField};
use chemobound::geometry::{DomainGeometry, Shape};
use chemobound::params::ModelParams;
use chemobound::simulator::RunOutput;
use chemobound::trajectory::TerminalStatus;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn load(text: &str) -> LoadedConfig {
    LoadedConfig::parse(text).expect("valid config")
}

fn geometry_oracles() -> Outcome {
    let disk = DomainGeometry::new(Shape::disk(1.0), [0.0, 0.0], 256).unwrap().constants().unwrap();
    let rect = DomainGeometry::new(Shape::rectangle(2.0, 1.0), [0.0, 0.0], 256).unwrap().constants().unwrap();
    let disk_err = (disk.m1 - 1.5).abs().max((disk.m2 - 2.0).abs());
    let rect_err = (rect.m1 - 1.5).abs().max((rect.m2 - (1.0 + 5f64.sqrt())).abs());
    // Vertex radius chosen so the inradius and circumradius straddle 1.
    let r = 1.0 / (PI / 64.0).cos().sqrt();
    let gon = DomainGeometry::new(Shape::regular_polygon([0.0, 0.0], r, 64), [0.0, 0.0], 256)
        .unwrap()
        .constants()
        .unwrap();
    let gon_abs = (gon.rho0 - 1.0).abs().max((gon.d - 1.0).abs()).max((gon.m1 - 1.5).abs());
    let gon_m2_rel = (gon.m2 - 2.0).abs() / 2.0;
    ensure(
        disk_err <= 1e-12 && rect_err <= 1e-12 && gon_abs <= 1e-3 && gon_m2_rel <= 1e-3,
        format!("disk {disk_err:.1e}, rectangle {rect_err:.1e}, 64-gon rho0/d/m1 {gon_abs:.1e}, m2 relative {gon_m2_rel:.1e}"),
    )
}

fn elliptic_convergence() -> Outcome {
    let err = |n: usize| {
        let g = Grid::new(n, n, [0.0, 0.0], [1.0, 1.0]).unwrap();
        let phi = solve_screened_poisson(&ScalarField::from_fn(g, |p| 1.0 + (PI * p[0]).cos()), 1.0, 1.0).unwrap();
        let exact = ScalarField::from_fn(g, |p| 1.0 + (PI * p[0]).cos() / (1.0 + PI * PI));
        l2_norm(&phi.zip_map(&exact, |a, b| a - b))
    };
    let (e1, e2, e3) = (err(64), err(128), err(256));
    let (r1, r2) = (e1 / e2, e2 / e3);
    let ok = (3.6..=4.4).contains(&r1) && (3.6..=4.4).contains(&r2);
    ensure(ok, format!("errors {e1:.3e} {e2:.3e} {e3:.3e}, ratios {r1:.3} {r2:.3}"))
}

fn conservation(out: &RunOutput, steps: usize) -> Outcome {
    let traj = &out.trajectory;
    let m0 = traj.initial().mass;
    let mut drift = 0f64;
    let mut mean_err = 0f64;
    for r in &traj.records {
        drift = drift.max((r.mass - m0).abs() / m0);
        mean_err = mean_err.max((r.v_mass - r.mass).abs()).max((r.w_mass - r.mass).abs());
    }
    ensure(
        steps == 2000 && traj.status == TerminalStatus::Completed && drift <= 1e-9 && mean_err <= 1e-8,
        format!("{steps} steps, {} records, mass drift {drift:.1e}, mean identity error {mean_err:.1e}", traj.records.len()),
    )
}

fn energy_identity(out: &RunOutput) -> Outcome {
    let recs = &out.trajectory.records;
    let cap = 10.0 * recs[0].u_max;
    let mut worst = 0f64;
    let mut at = 0.0;
    let mut n = 0;
    for r in recs.iter().take_while(|r| r.u_max < cap) {
        let e = (r.dedt_numeric - r.energy_identity_rhs).abs() / r.energy_identity_rhs.abs();
        n += 1;
        if e > worst {
            worst = e;
            at = r.t;
        }
    }
    ensure(worst <= 0.05 && n == recs.len(), format!("{n} output times, worst relative error {worst:.3e} at t={at}"))
}

fn inequality_bench() -> Outcome {
    let g = Grid::new(256, 256, [-1.0, -1.0], [1.0, 1.0]).unwrap();
    let p = ModelParams::ones();
    let dom = DomainGeometry::new(Shape::rectangle(1.0, 1.0), [0.0, 0.0], 256).unwrap();
    let geom = dom.constants().unwrap();
    let est = estimate_ctilde(&dom, &g, &p, 1000, 1, DEFAULT_SAFETY_FACTOR).unwrap();
    let opts = BenchOptions {
        n_trials: 1000,
        seed: heldout_seed(1),
        c1_values: vec![0.1, 1.0, 10.0],
        tol: 1e-8,
        ctilde: Some(est.value),
    };
    let rep = run_bench(&g, &geom, &p, &opts).unwrap();
    let e = rep.ehrling.as_ref().unwrap();
    ensure(
        rep.trace.n_confirmed == 0 && rep.l3.n_confirmed == 0 && e.n_flagged == 0 && e.n_checked == 1000,
        format!(
            "ctilde {:.4} from 1000 trials; trace {}/{} flagged/confirmed, cubic {}/{}, ehrling {} flagged on 1000 held-out",
            est.value, rep.trace.n_flagged, rep.trace.n_confirmed, rep.l3.n_flagged, rep.l3.n_confirmed, e.n_flagged
        ),
    )
}

fn equality_cases() -> Outcome {
    let g = Grid::new(64, 64, [0.0, 0.0], [1.0, 1.0]).unwrap();
    let geom = grid_geometry(&g, [0.5, 0.5]).unwrap();
    let trace = check_trace_inequality(&ScalarField::constant(g, 1.0), &geom).margin();
    let ehrling = check_ehrling_bound(&ScalarField::constant(g, 1.0), &ModelParams::ones(), 1.0 / 3.0).unwrap().margin();
    ensure(trace.abs() <= 1e-10 && ehrling.abs() <= 1e-10, format!("trace margin {trace:.1e}, elliptic margin {ehrling:.1e}"))
}

fn integration_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0f64;
    for k in 0..100 {
        let a = 10f64.powf(rng.random_range(-2.0..1.0));
        let b = 10f64.powf(rng.random_range(-2.0..1.0));
        let e0 = 10f64.powf(rng.random_range(-3.0..3.0));
        let et = if k % 4 == 0 { f64::INFINITY } else { e0 * 10f64.powf(rng.random_range(0.0..6.0)) };
        let t = lower_bound_implicit(a, b, e0, et).unwrap();
        let q = common::odi_time_by_quadrature(a, b, e0, et);
        worst = worst.max((t - q).abs() / q);
    }
    let unit = lower_bound_implicit(1.0, 1.0, 1.0, f64::INFINITY).unwrap();
    let unit_err = (unit - (2.0 - 2.0 * 2f64.ln())).abs();
    ensure(worst <= 1e-8 && unit_err <= 1e-9, format!("worst relative error {worst:.1e} over 100 cases, A=B=E0=1 value {unit:.9}"))
}

fn odi_compliance(report: &VerifyReport) -> Outcome {
    let o = &report.odi;
    ensure(
        o.passed() && o.n_checked > 0,
        format!(
            "{} records, {} violations, min relative margin {:.3e}, A {:.4} B {:.4} ctilde {:.4}",
            o.n_checked, o.n_violations, o.min_relative_margin, report.bound.constants.a, report.bound.constants.b, report.bound.ctilde
        ),
    )
}

fn blowup_config(center: [f64; 2]) -> String {
    format!(
        r#"{{
  "domain": {{"shape": {{"kind": "rectangle", "half_widths": [1.0, 1.0]}}, "x0": [0.0, 0.0], "boundary_resolution": 256}},
  "grid": {{"nx": 64, "ny": 64}},
  "params": {{"alpha": 1.0, "beta": 1.0, "gamma": 1.0, "delta": 1.0, "chi": 2.0, "xi": 1.0}},
  "initial": {{"kind": "gaussian", "center": [{}, {}], "width": 0.3, "mass": 40.0}},
  "time": {{"dt0": 0.0005, "t_end": 2.0, "output_interval": 0.002, "blowup_umax_factor": 20.0}},
  "ctilde": {{"mode": "estimate", "n_trials": 200, "seed": 1}}
}}"#,
        center[0], center[1]
    )
}

/// Centers at distance 0.1 to 0.3 from a random side of `[-1, 1]^2`.
fn boundary_centers(seed: u64, n: usize) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let along: f64 = rng.random_range(-0.7..0.7);
            let depth = 1.0 - rng.random_range(0.1..0.3);
            match rng.random_range(0..4) {
                0 => [depth, along],
                1 => [-depth, along],
                2 => [along, depth],
                _ => [along, -depth],
            }
        })
        .collect()
}

fn bound_consistency() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for c in boundary_centers(2024, 3) {
        let cfg = load(&blowup_config(c)).config;
        let params = cfg.params().unwrap();
        let (report, out) = verify_config(&cfg).unwrap();
        let mass = out.trajectory.initial().mass;
        let b = &report.bound;
        let tb = report.declared_blowup_time;
        ok &= mass > critical_mass(&params).unwrap()
            && report.status == TerminalStatus::BlowupDetected
            && tb.is_some_and(|t| t >= b.t_lower_implicit)
            && b.t_lower_implicit <= b.t_lower_explicit;
        parts.push(format!(
            "({:.2} {:.2}) {} t_b={} implicit={:.3e} explicit={:.3e}",
            c[0],
            c[1],
            report.status,
            tb.map_or("none".into(), |t| format!("{t:.4}")),
            b.t_lower_implicit,
            b.t_lower_explicit
        ));
    }
    ensure(ok, parts.join("; "))
}

fn discrepancy_ledger() -> Outcome {
    let disk = DomainGeometry::new(Shape::disk(1.0), [0.0, 0.0], 256).unwrap().constants().unwrap();
    let r = bound_report(&ModelParams::ones(), &disk, &CtildeSource::User(1.0), PI).unwrap();
    let kv = r.to_key_value();
    let both = kv.lines().any(|l| l.starts_with("A=")) && kv.lines().any(|l| l.starts_with("A_theorem_variant="));
    let a = r.constants.a;
    // By hand: c1 = 1 + 8/81, c2 = 4/27, A = c1 (sqrt 2 / 3)(3/2) + c2.
    let hand_a = (89.0 / 81.0) * SQRT_2 / 2.0 + 4.0 / 27.0;
    // 2 / (A sqrt(pi)) evaluates to 1.2197472; a quoted 1.21965 is off by 1e-4.
    let t = r.t_lower_explicit;
    ensure(
        both && (a - 0.925093).abs() <= 1e-5 && (a - hand_a).abs() <= 1e-14 && (t - 1.219747).abs() <= 1e-5,
        format!("A={a:.7} A_theorem_variant={:.7} t_explicit={t:.7} (1.21965 differs by {:.1e})", r.constants.a_theorem_variant, (t - 1.21965).abs()),
    )
}

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/subcritical.json");
    let sub = LoadedConfig::from_path(&root).expect("subcritical config").config;
    let t0 = Instant::now();
    let shared = catch_unwind(|| verify_config(&sub).expect("subcritical run"));
    let run_secs = t0.elapsed().as_secs_f64();

    let mut failed = 0;
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or(e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match res {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n}: {tag} [{name}] {detail} ({secs:.1}s)");
    };

    let run = shared.as_ref().map_err(|_| "subcritical run panicked".to_string());
    report(1, "geometry oracles", &mut geometry_oracles);
    report(2, "elliptic convergence", &mut elliptic_convergence);
    report(3, "conservation", &mut || {
        let (_, out) = run.clone()?;
        conservation(out, out.final_state.step_count).map(|d| format!("{d}, run {run_secs:.1}s"))
    });
    report(4, "energy identity", &mut || energy_identity(&run.clone()?.1));
    report(5, "inequality bench", &mut inequality_bench);
    report(6, "equality cases", &mut equality_cases);
    report(7, "implicit bound oracle", &mut integration_oracle);
    report(8, "energy inequality compliance", &mut || odi_compliance(&run.clone()?.0));
    report(9, "bound consistency on blow-up runs", &mut bound_consistency);
    report(10, "bound constants regression", &mut discrepancy_ledger);

    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all 10 criteria passed");
}
