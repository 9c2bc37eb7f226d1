//! Acceptance criteria, one test each. Every test prints a single
//! `criterion N ... PASS|FAIL` line before asserting.

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestRunner};

use parobs::diamond::{horizon_windows, run_diamond, DiamondConfig, EfficiencyMode};
use parobs::experiments::{self, ExperimentConfig, RunOptions, RunReport, RunResults, Sweep};
use parobs::lti::{ackermann_gain, DecayEnvelope, LtiSystem, SystemSpec};
use parobs::parareal::{sequential_fine, BoundTable, PararealSolver, SolveOptions, StopRule, Workers};
use parobs::problem::ObserverProblem;
use parobs::propagators::GridSpec;

fn report(n: u32, name: &str, pass: bool, elapsed: Duration, detail: impl AsRef<str>) {
    println!(
        "criterion {n:>2} [{name}] {} ({:.3} s) {}",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        detail.as_ref()
    );
}

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::parse(text, std::path::Path::new("acceptance.cfg")).expect("valid config")
}

fn run_in(text: &str, workers: usize, dir: PathBuf) -> (RunReport, RunResults) {
    let options = RunOptions {
        out_dir: dir,
        workers: Workers::new(workers).unwrap(),
        efficiency_mode: EfficiencyMode::Modeled,
    };
    experiments::run(&config(text), &options).expect("experiment runs")
}

fn scratch_dir(tag: &str) -> PathBuf {
    tempfile::Builder::new()
        .prefix(&format!("parobs-{tag}-"))
        .tempdir()
        .unwrap()
        .keep()
}

const EXP1: &str = "experiment = exp1_kcurves\ngamma_tilde = 1e-3, 1, 1e3\neigs = -2,-4; -0.25,-0.5\n";

/// The exp1 grid is shared by criteria 4 to 6; its runtime counts once.
fn exp1() -> &'static (RunReport, RunResults, Duration) {
    static CELL: OnceLock<(RunReport, RunResults, Duration)> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let (rep, res) = run_in(EXP1, 1, scratch_dir("exp1"));
        (rep, res, start.elapsed())
    })
}

#[test]
fn criterion_01_pole_placement() {
    let start = Instant::now();
    let sys = LtiSystem::benchmark_plant();
    let mut worst: f64 = 0.0;
    for (eigs, want) in [([-2.0, -4.0], [6.0, 8.0]), ([-0.25, -0.5], [0.75, 0.125])] {
        let l = ackermann_gain(&sys, &eigs).unwrap();
        let acl: DMatrix<f64> = sys.a() - &l * sys.c();
        // s^2 - tr s + det for a 2x2 matrix.
        let c1 = -acl.trace();
        let c0 = acl[(0, 0)] * acl[(1, 1)] - acl[(0, 1)] * acl[(1, 0)];
        worst = worst.max((c1 - want[0]).abs()).max((c0 - want[1]).abs());
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-10 && elapsed < Duration::from_millis(1);
    report(1, "pole placement", pass, elapsed, format!("max coefficient error {worst:e}"));
    assert!(pass);
}

#[test]
fn criterion_02_finite_termination() {
    let start = Instant::now();
    let spec = SystemSpec::benchmark();
    let grid = GridSpec::new(1.0, 16, 32).unwrap();
    let problem = ObserverProblem::new(spec.system, &[-2.0, -4.0], spec.xhat0, grid.fine_step(), 8.0).unwrap();
    let fine = problem.fine(&grid).unwrap();
    let coarse = problem.coarse(&grid).unwrap();
    let solver = PararealSolver::new(&fine, &coarse, grid, Workers::sequential());
    let mut worst: f64 = 0.0;
    for (t0, z0) in [
        (0.0, problem.observer_start()),
        (3.0, DVector::from_vec(vec![1.5, -0.7])),
        (6.0, DVector::from_vec(vec![-40.0, 12.0])),
    ] {
        let sol = solver.solve_window(t0, &z0, StopRule::Fixed(16), &SolveOptions::default()).unwrap();
        let seq = sequential_fine(&fine, &grid, t0, &z0).unwrap();
        let mut states: Vec<&DVector<f64>> = sol.nodes.iter().collect();
        states.push(&sol.end_state);
        for (u, s) in states.iter().zip(&seq) {
            worst = worst.max((*u - s).norm() / s.norm().max(f64::MIN_POSITIVE));
        }
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-12 && elapsed < Duration::from_secs(1);
    report(2, "finite termination", pass, elapsed, format!("max relative deviation {worst:e}"));
    assert!(pass);
}

#[test]
fn criterion_03_bound_validity() {
    let start = Instant::now();
    let spec = SystemSpec::benchmark();
    let grid = GridSpec::new(1.0, 16, 32).unwrap();
    let mut checked = 0usize;
    let mut violations = Vec::new();
    let mut worst_ratio: f64 = 0.0;
    for eigs in [[-2.0, -4.0], [-0.25, -0.5]] {
        let problem = ObserverProblem::new(spec.system.clone(), &eigs, spec.xhat0.clone(), grid.fine_step(), 50.0).unwrap();
        let mut dc = DiamondConfig::new(grid, 1.0);
        dc.windows = Some(10);
        let trace = run_diamond(&problem, &dc).unwrap();
        let table = BoundTable::from_constants(&trace.constants, 16, 16).unwrap();
        let allowance = trace.constants.allowance();
        for w in &trace.windows {
            for (ki, row) in w.raw_jump_norms.iter().enumerate() {
                for (ni, &j) in row.iter().enumerate() {
                    let (k, n) = (ki + 1, ni + 1);
                    let limit = table.jump_bound(k, n) + allowance;
                    checked += 1;
                    worst_ratio = worst_ratio.max(j / limit);
                    if j > limit {
                        violations.push(format!("{eigs:?} l={} k={k} n={n}: {j:e} > {limit:e}", w.ell));
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = violations.is_empty() && elapsed < Duration::from_secs(10);
    report(
        3,
        "bound validity",
        pass,
        elapsed,
        format!("{checked} jumps, max jump/(2B + allowance) {worst_ratio:.3e}, {} violations", violations.len()),
    );
    assert!(pass, "{violations:?}");
}

#[test]
fn criterion_04_rate_preservation() {
    let start = Instant::now();
    let (_, res, run_time) = exp1();
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    for cell in &res.exp1 {
        let t = &cell.stop_rule;
        for w in t.windows.iter().take(t.ell_par_tol) {
            worst = worst.max(w.err_end / w.bound_end);
            if w.err_end > w.bound_end {
                bad.push(format!("{} l={}", cell.label, w.ell));
            }
        }
    }
    let elapsed = *run_time + start.elapsed();
    let pass = res.exp1.len() == 6 && bad.is_empty() && elapsed < Duration::from_secs(30);
    report(4, "rate preservation", pass, elapsed, format!("6 cells, max error/bound {worst:.3}"));
    assert!(pass, "{bad:?}");
}

#[test]
fn criterion_05_predictor_soundness() {
    let start = Instant::now();
    let (_, res, run_time) = exp1();
    let mut bad = Vec::new();
    let mut windows = 0;
    for cell in &res.exp1 {
        for w in &cell.stop_rule.windows {
            windows += 1;
            if w.k_obs > w.k_pred {
                bad.push(format!("{} l={}: {} > {}", cell.label, w.ell, w.k_obs, w.k_pred));
            }
        }
    }
    let (ell_tol, _) = horizon_windows(DecayEnvelope::new(2.0, 1.0), 5f64.sqrt(), 1.0, 1e-8, 1.0);
    let oracle = (0.5 * (5f64.sqrt() / 1e-8).ln()).ceil() as usize;
    let elapsed = *run_time + start.elapsed();
    let pass = bad.is_empty() && ell_tol == 10 && oracle == 10 && elapsed < Duration::from_secs(30);
    report(
        5,
        "predictor soundness",
        pass,
        elapsed,
        format!("{windows} windows, {} with k_obs > k_pred; horizon {ell_tol} (expected 10)", bad.len()),
    );
    assert!(pass, "{bad:?}");
}

#[test]
fn criterion_06_gamma_tilde_monotonicity() {
    let start = Instant::now();
    let (_, res, run_time) = exp1();
    let mut detail = Vec::new();
    let mut pass = true;
    for eigs in [vec![-2.0, -4.0], vec![-0.25, -0.5]] {
        let mut cells: Vec<_> = res.exp1.iter().filter(|c| c.eigs == eigs).collect();
        cells.sort_by(|a, b| a.gamma_tilde.total_cmp(&b.gamma_tilde));
        let counts: Vec<usize> = cells.iter().map(|c| c.k1_windows()).collect();
        pass &= counts.len() == 3 && counts.windows(2).all(|w| w[0] <= w[1]);
        detail.push(format!("{eigs:?}: {counts:?}"));
    }
    let elapsed = *run_time + start.elapsed();
    pass &= elapsed < Duration::from_secs(30);
    report(6, "gamma-tilde monotonicity", pass, elapsed, format!("k=1 windows {}", detail.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_07_efficiency_ordering() {
    let start = Instant::now();
    let cfg = "experiment = exp2_efficiency\ngamma_tilde = 1e-3, 1, 1e3\neigs = -2,-4; -0.25,-0.5\n";
    let (_, res) = run_in(cfg, 1, scratch_dir("exp2"));
    let unordered: Vec<&str> = res
        .exp2
        .iter()
        .filter(|p| p.k_th.e_obs > p.k_obs.e_obs)
        .map(|p| p.label.as_str())
        .collect();
    let default = res
        .exp2
        .iter()
        .find(|p| {
            p.sweep == Sweep::GammaTilde
                && p.gamma_tilde == 1.0
                && p.eigs == [-2.0, -4.0]
                && p.subintervals == 16
                && p.fine_log2 == 5
        })
        .expect("default sweep point");
    let e = default.k_th.e_obs;
    let e0 = default.k_th.e0_th;
    let rel = (e0 - e).abs() / e;
    let elapsed = start.elapsed();
    let pass = unordered.is_empty() && rel <= 0.25 && elapsed < Duration::from_secs(120);
    report(
        7,
        "efficiency ordering",
        pass,
        elapsed,
        format!(
            "{} points, {} unordered; defaults E(k_th) {e:.4}, E0_th {e0:.4}, relative gap {rel:.3} (limit 0.25), N tau_G/tau_F {:.3}",
            res.exp2.len(),
            unordered.len(),
            16.0 * default.tau_g_s / default.tau_f_s
        ),
    );
    assert!(pass, "unordered {unordered:?}, relative gap {rel}");
}

#[test]
fn criterion_08_variable_windows() {
    let start = Instant::now();
    let (_, res) = run_in("experiment = vw_compare\n", 1, scratch_dir("vw"));
    let vw = res.vw.expect("vw outcome");
    let trace = &vw.trace;
    let allowance = trace.constants.allowance();
    let floor_ok = trace.windows.iter().all(|w| w.n_ell > w.ell);
    let rate_bad = trace.windows.iter().filter(|w| w.err_end > w.bound_end + allowance).count();
    let rate_bad_strict = trace.windows.iter().filter(|w| w.err_end > w.bound_end).count();
    let (changes, first) = vw.crossings();
    let elapsed = start.elapsed();
    let pass = trace.windows.len() == 100
        && floor_ok
        && rate_bad == 0
        && vw.e_vw <= vw.e_th
        && changes >= 1
        && elapsed < Duration::from_secs(120);
    report(
        8,
        "variable windows",
        pass,
        elapsed,
        format!(
            "N_l >= l+1: {floor_ok}; bound violations {rate_bad} (without allowance {rate_bad_strict}); \
             E(k_vw) {:.4e} vs E(k_th) {:.4e}; {changes} sign changes, VW {} at small t",
            vw.e_vw,
            vw.e_th,
            if first < 0 { "cheaper" } else { "dearer" }
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_determinism() {
    let start = Instant::now();
    let cfg = "experiment = all\ngamma_tilde = 1e-3, 1, 1e3\neigs = -2,-4; -0.25,-0.5\n";
    let dirs: Vec<PathBuf> = [1usize, 4, 16]
        .iter()
        .map(|&w| {
            let dir = scratch_dir(&format!("det{w}"));
            run_in(cfg, w, dir.clone());
            dir
        })
        .collect();
    let mut diffs = Vec::new();
    for other in &dirs[1..] {
        diffs.extend(experiments::compare_outputs(&dirs[0], other).unwrap());
    }
    let files = experiments::csv_files_under(&dirs[0]).unwrap().len();
    let elapsed = start.elapsed();
    let pass = diffs.is_empty() && files > 0 && elapsed < Duration::from_secs(120);
    report(
        9,
        "determinism",
        pass,
        elapsed,
        format!("{files} CSV files x workers {{1, 4, 16}}, {} differing cells", diffs.len()),
    );
    assert!(pass, "{:?}", &diffs[..diffs.len().min(10)]);
}

fn closed_form(alpha: f64, beta: f64, eta: f64, k: usize, n: usize) -> f64 {
    if n <= k && k > 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut binom = 1.0;
    for i in 0..(n - k) {
        if i > 0 {
            binom = binom * (k + i) as f64 / i as f64;
        }
        sum += binom * eta.powi(i as i32);
    }
    alpha * beta.powi(k as i32) * sum
}

#[test]
fn criterion_10_bound_closed_form() {
    let start = Instant::now();
    let mut runner = TestRunner::new(PropConfig {
        cases: 256,
        ..PropConfig::default()
    });
    let strategy = (1e-3f64..10.0, 1e-3f64..2.0, 1e-3f64..0.999);
    let mut worst: f64 = 0.0;
    let outcome = runner.run(&strategy, |(alpha, beta, eta)| {
        let table = BoundTable::new(alpha, beta, eta, 32, 16).unwrap();
        for k in 0..=16 {
            for n in 0..=32 {
                let want = closed_form(alpha, beta, eta, k, n);
                let got = table.get(k, n);
                let rel = if want == 0.0 { got.abs() } else { (got - want).abs() / want.abs() };
                prop_assert!(rel <= 1e-12, "k={k} n={n}: {got} vs {want}");
            }
        }
        Ok(())
    });
    // Worst case over a fixed sample, for the report line.
    for &(a, b, e) in &[(1.0, 0.5, 0.9), (8.1, 0.02, 0.889), (1.85, 4.5e-4, 0.985)] {
        let table = BoundTable::new(a, b, e, 32, 16).unwrap();
        for k in 0..=16 {
            for n in (k + 1)..=32 {
                let want = closed_form(a, b, e, k, n);
                worst = worst.max((table.get(k, n) - want).abs() / want);
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = outcome.is_ok() && worst <= 1e-12 && elapsed < Duration::from_secs(1);
    report(
        10,
        "bound closed form",
        pass,
        elapsed,
        format!("256 random (alpha, beta, eta), N <= 32, k <= 16; sample max relative error {worst:.2e}"),
    );
    assert!(pass, "{outcome:?}");
}
