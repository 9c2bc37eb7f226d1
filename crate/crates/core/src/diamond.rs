//! Sequential windows of length `T`, each solved by Parareal and stopped as
//! soon as the weighted jumps fall below the share of the error budget that
//! window may spend.
//!
//! Everything runs in eigenvector coordinates, where the observer error
//! decays with `gamma = 1`. Errors are reported in both coordinate systems;
//! the physical bound uses `gamma = cond(V)` and `||x(0) - xhat(0)||`.
//!
//! Right-hand sides such as `e^{-mu l T} / 2^l` are compared in log space so
//! they never underflow.

use std::f64::consts::LN_2;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lti::DecayEnvelope;
use crate::parareal::{BoundTable, PararealSolver, SolveOptions, StopRule, Workers};
use crate::problem::{discrete_truth, ObserverProblem};
use crate::propagators::{ConstantsPolicy, GridSpec, Propagator, PropagatorConstants};
use crate::timing::time_median;

/// Smallest number of corrections run on any window.
pub const MIN_ITERATIONS: usize = 1;

/// `ln(sum_i w_i)` from `(ln w_i)`; `-inf` when every weight is zero.
pub(crate) fn log_sum(logs: impl IntoIterator<Item = f64>) -> f64 {
    let logs: Vec<f64> = logs.into_iter().filter(|l| *l > f64::NEG_INFINITY).collect();
    let Some(max) = logs.iter().copied().reduce(f64::max) else {
        return f64::NEG_INFINITY;
    };
    max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

/// `gamma * sum_{n=1}^{N-1} e^{mu n dT} ||J_n|| <= gamma_tilde e^{-mu (l-1) T} / 2^l`.
///
/// `jump_norms[n - 1]` is `||J_n||`; `ell` is 1-based.
pub fn stop_criterion(
    jump_norms: &[f64],
    envelope: DecayEnvelope,
    grid: &GridSpec,
    ell: usize,
    gamma_tilde: f64,
) -> bool {
    let dt = grid.coarse_step();
    let lhs = envelope.gamma.ln()
        + log_sum(
            jump_norms
                .iter()
                .enumerate()
                .map(|(i, j)| envelope.mu * (i + 1) as f64 * dt + j.ln()),
        );
    let rhs = gamma_tilde.ln() - envelope.mu * (ell as f64 - 1.0) * grid.window - ell as f64 * LN_2;
    lhs <= rhs
}

/// Smallest `k >= 1` with
/// `2 gamma sum_{n=k+1}^{N-1} e^{-mu (N-n) dT} B_n^k <= gamma_tilde e^{-mu l T} / 2^l`.
pub fn a_priori_iterations(
    table: &BoundTable,
    envelope: DecayEnvelope,
    grid: &GridSpec,
    ell: usize,
    gamma_tilde: f64,
) -> usize {
    let n_sub = grid.subintervals;
    let dt = grid.coarse_step();
    let rhs = gamma_tilde.ln() - envelope.mu * ell as f64 * grid.window - ell as f64 * LN_2;
    for k in MIN_ITERATIONS..n_sub {
        let lhs = (2.0 * envelope.gamma).ln()
            + log_sum(
                ((k + 1)..n_sub)
                    .map(|n| -envelope.mu * (n_sub - n) as f64 * dt + table.get(k, n).ln()),
            );
        if lhs <= rhs {
            return k;
        }
    }
    n_sub.max(MIN_ITERATIONS)
}

/// `(l^Tol, l_par^Tol)`: windows needed for the sequential and the parallel
/// observer to reach `tol`, both clamped below at 1.
pub fn horizon_windows(envelope: DecayEnvelope, eps0: f64, gamma_tilde: f64, tol: f64, window: f64) -> (usize, usize) {
    let count = |e: f64| {
        let v = ((envelope.gamma * e / tol).ln() / (envelope.mu * window)).ceil();
        if v.is_finite() && v >= 1.0 {
            v as usize
        } else {
            1
        }
    };
    (count(eps0), count(eps0 + gamma_tilde))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationMode {
    /// Stop on the a posteriori jump criterion (`k_obs`).
    StopRule,
    /// Run exactly the a priori count `k_pred` (`k_th`).
    APriori,
}

impl IterationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            IterationMode::StopRule => "k_obs",
            IterationMode::APriori => "k_th",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Eps0Source {
    GroundTruth,
    UserBound,
}

#[derive(Debug, Clone)]
pub struct DiamondConfig {
    pub grid: GridSpec,
    pub gamma_tilde: f64,
    pub tol: f64,
    /// Window budget; defaults to `l_par^Tol`.
    pub windows: Option<usize>,
    /// Stand-in for `||x(0) - xhat(0)||` when ground truth should not be used.
    pub eps0_bound: Option<f64>,
    pub mode: IterationMode,
    /// Time span over which the suprema `M` and `K` are sampled.
    pub constants_horizon: f64,
    pub policy: ConstantsPolicy,
    pub workers: Workers,
    /// Repetitions for the per-window `tau_F` / `tau_G` measurement; 0 skips timing.
    pub timing_repetitions: usize,
}

impl DiamondConfig {
    pub fn new(grid: GridSpec, gamma_tilde: f64) -> Self {
        Self {
            grid,
            gamma_tilde,
            tol: 1e-8,
            windows: None,
            eps0_bound: None,
            mode: IterationMode::StopRule,
            constants_horizon: 50.0,
            policy: ConstantsPolicy::FallbackToResolvent,
            workers: Workers::sequential(),
            timing_repetitions: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma_tilde > 0.0) || !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma_tilde and Tol must be positive (got {}, {})",
                self.gamma_tilde, self.tol
            )));
        }
        if self.windows == Some(0) {
            return Err(Error::InvalidParameter("window budget must be at least 1".into()));
        }
        if let Some(e) = self.eps0_bound {
            if !(e > 0.0) {
                return Err(Error::InvalidParameter(format!("eps0_bound must be positive, got {e}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowRun {
    pub ell: usize,
    pub t_start: f64,
    pub k_obs: usize,
    pub k_pred: usize,
    /// `jump_norms[k - 1][n - 1] = ||J_n^k||` (eigenvector coordinates),
    /// with roundoff-level jumps floored to zero.
    pub jump_norms: Vec<Vec<f64>>,
    pub raw_jump_norms: Vec<Vec<f64>>,
    /// Observer state at the window end, eigenvector coordinates.
    pub end_state: Vec<f64>,
    /// `||x(T_l) - xhat(T_l)||` against the discrete ground truth.
    pub err_end: f64,
    /// `cond(V) (eps0 + gamma_tilde) e^{-mu l T}`.
    pub bound_end: f64,
    pub err_end_z: f64,
    /// `(eps0_z + gamma_tilde) e^{-mu l T}`.
    pub bound_end_z: f64,
    pub tau_f_s: f64,
    pub tau_g_s: f64,
    pub tau_p_model_s: f64,
    pub tau_p_measured_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AssimilationTrace {
    pub windows: Vec<WindowRun>,
    pub mode: IterationMode,
    pub grid: GridSpec,
    pub gamma_tilde: f64,
    pub tol: f64,
    pub mu: f64,
    /// `cond(V)`.
    pub gamma: f64,
    pub eps0: f64,
    pub eps0_z: f64,
    pub eps0_source: Eps0Source,
    pub ell_tol: usize,
    pub ell_par_tol: usize,
    pub constants: PropagatorConstants,
    /// Fine and coarse solve of one full window, seconds.
    pub tau_f_s: f64,
    pub tau_g_s: f64,
    pub workers: usize,
}

impl AssimilationTrace {
    pub fn k_obs(&self) -> Vec<usize> {
        self.windows.iter().map(|w| w.k_obs).collect()
    }

    pub fn k_pred(&self) -> Vec<usize> {
        self.windows.iter().map(|w| w.k_pred).collect()
    }

    /// Replaces the window timings and the modeled parallel times derived
    /// from them, so several traces can share one measurement.
    pub fn with_timings(mut self, tau_f: f64, tau_g: f64) -> Self {
        let n = self.grid.subintervals as f64;
        self.tau_f_s = tau_f;
        self.tau_g_s = tau_g;
        for w in &mut self.windows {
            w.tau_f_s = tau_f;
            w.tau_g_s = tau_g;
            w.tau_p_model_s = w.k_obs as f64 * (tau_f / n + tau_g);
        }
        self
    }
}

/// Median seconds for one fine and one coarse solve over a window of length `T`.
pub fn window_timings(
    fine: &dyn Propagator,
    coarse: &dyn Propagator,
    grid: &GridSpec,
    z0: &DVector<f64>,
    repetitions: usize,
) -> (f64, f64) {
    if repetitions == 0 {
        return (0.0, 0.0);
    }
    let t = grid.window;
    let tau_f = time_median(repetitions, || fine.propagate(0.0, t, z0));
    // A coarse sweep advances node by node, like the Parareal correction.
    let tau_g = time_median(repetitions, || {
        let mut z = z0.clone();
        for n in 0..grid.subintervals {
            z = coarse.propagate(grid.node(0.0, n), grid.node(0.0, n + 1), &z)?;
        }
        Ok::<_, Error>(z)
    });
    (tau_f, tau_g)
}

pub fn run_diamond(problem: &ObserverProblem, config: &DiamondConfig) -> Result<AssimilationTrace> {
    config.validate()?;
    let grid = config.grid;
    let design = problem.design();
    let physical = design.envelope();
    let diagonal = design.diagonal_envelope();

    let (eps0, eps0_source) = match config.eps0_bound {
        Some(e) => (e, Eps0Source::UserBound),
        None => (problem.initial_error(), Eps0Source::GroundTruth),
    };
    let eps0_z = problem.initial_error_diagonal();
    let (ell_tol, ell_par_tol) = horizon_windows(physical, eps0, config.gamma_tilde, config.tol, grid.window);
    let windows = config.windows.unwrap_or(ell_par_tol);
    let horizon = windows as f64 * grid.window;
    let problem = problem.extended(horizon)?;

    let fine = problem.fine(&grid)?;
    let coarse = problem.coarse(&grid)?;
    let constants = problem.constants(&grid, config.constants_horizon, config.policy)?;
    let table = BoundTable::from_constants(&constants, grid.subintervals, grid.subintervals)?;

    let z0 = problem.observer_start();
    let (tau_f, tau_g) = window_timings(&fine, &coarse, &grid, &z0, config.timing_repetitions);

    let boundaries: Vec<f64> = (0..=windows).map(|l| l as f64 * grid.window).collect();
    let truth = discrete_truth(&fine, &problem.truth_start(), &boundaries)?;

    let solver = PararealSolver::new(&fine, &coarse, grid, config.workers.clone());
    let mut z = z0;
    let mut runs = Vec::with_capacity(windows);
    for ell in 1..=windows {
        let t_start = boundaries[ell - 1];
        let k_pred = a_priori_iterations(&table, diagonal, &grid, ell, config.gamma_tilde);
        let criterion = |_: usize, norms: &[f64]| stop_criterion(norms, diagonal, &grid, ell, config.gamma_tilde);
        let rule = match config.mode {
            IterationMode::StopRule => StopRule::Criterion(&criterion),
            IterationMode::APriori => StopRule::Fixed(k_pred),
        };
        let sol = solver
            .solve_window(t_start, &z, rule, &SolveOptions::default())
            .map_err(|e| e.in_window(ell))?;
        z = sol.end_state;

        let diff_z = &truth[ell - 1] - &z;
        let decay = (-design.mu() * ell as f64 * grid.window).exp();
        let k = sol.iterations;
        runs.push(WindowRun {
            ell,
            t_start,
            k_obs: k,
            k_pred,
            jump_norms: sol.jump_norms,
            raw_jump_norms: sol.raw_jump_norms,
            end_state: z.as_slice().to_vec(),
            err_end: design.from_diagonal(&diff_z).norm(),
            bound_end: design.gamma() * (eps0 + config.gamma_tilde) * decay,
            err_end_z: diff_z.norm(),
            bound_end_z: (eps0_z + config.gamma_tilde) * decay,
            tau_f_s: tau_f,
            tau_g_s: tau_g,
            tau_p_model_s: k as f64 * (tau_f / grid.subintervals as f64 + tau_g),
            tau_p_measured_s: sol.fine_sweep_s.iter().sum::<f64>() + sol.coarse_sweep_s.iter().sum::<f64>(),
        });
    }

    Ok(AssimilationTrace {
        windows: runs,
        mode: config.mode,
        grid,
        gamma_tilde: config.gamma_tilde,
        tol: config.tol,
        mu: design.mu(),
        gamma: design.gamma(),
        eps0,
        eps0_z,
        eps0_source,
        ell_tol,
        ell_par_tol,
        constants,
        tau_f_s: tau_f,
        tau_g_s: tau_g,
        workers: config.workers.count(),
    })
}

/// Median seconds of the sequential fine observer over `windows` windows.
pub fn sequential_time(problem: &ObserverProblem, grid: &GridSpec, windows: usize, repetitions: usize) -> Result<f64> {
    let problem = problem.extended(windows as f64 * grid.window)?;
    let fine = problem.fine(grid)?;
    let z0 = problem.observer_start();
    let end = windows as f64 * grid.window;
    Ok(time_median(repetitions, || fine.propagate(0.0, end, &z0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EfficiencyMode {
    /// `tau_p = sum_l k_l (tau_F / N + tau_G)`, communication-free.
    Modeled,
    /// `tau_p` = wall-clock of the Parareal solves.
    Measured,
}

impl EfficiencyMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            EfficiencyMode::Modeled => "modeled",
            EfficiencyMode::Measured => "measured",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EfficiencyReport {
    pub mode: EfficiencyMode,
    pub iteration_mode: IterationMode,
    /// `tau_s / (N tau_p)`.
    pub e_obs: f64,
    /// `l^Tol tau_F / (tau_F + N tau_G) / sum k_pred`.
    pub e_lower_bound: f64,
    /// `l_par^Tol / sum k_pred`.
    pub e0_th: f64,
    pub ell_tol: usize,
    pub ell_par_tol: usize,
    pub sum_k: usize,
    pub sum_k_pred: usize,
    pub tau_s: f64,
    pub tau_p: f64,
}

/// Efficiency over the first `l_par^Tol` windows. `tau_s` is the sequential
/// fine time to reach the tolerance (`l^Tol` windows).
pub fn efficiency_report(trace: &AssimilationTrace, tau_s: f64, mode: EfficiencyMode) -> Result<EfficiencyReport> {
    let need = trace.ell_par_tol;
    if trace.windows.len() < need {
        return Err(Error::IncompleteTrace {
            have: trace.windows.len(),
            need,
        });
    }
    let used = &trace.windows[..need];
    let n = trace.grid.subintervals as f64;
    let sum_k: usize = used.iter().map(|w| w.k_obs).sum();
    let sum_k_pred: usize = used.iter().map(|w| w.k_pred).sum();
    let tau_p = match mode {
        EfficiencyMode::Modeled => used.iter().map(|w| w.tau_p_model_s).sum::<f64>(),
        EfficiencyMode::Measured => used.iter().map(|w| w.tau_p_measured_s).sum::<f64>(),
    };
    Ok(EfficiencyReport {
        mode,
        iteration_mode: trace.mode,
        e_obs: tau_s / (n * tau_p),
        e_lower_bound: trace.ell_tol as f64 * trace.tau_f_s / (trace.tau_f_s + n * trace.tau_g_s) / sum_k_pred as f64,
        e0_th: trace.ell_par_tol as f64 / sum_k_pred as f64,
        ell_tol: trace.ell_tol,
        ell_par_tol: trace.ell_par_tol,
        sum_k,
        sum_k_pred,
        tau_s,
        tau_p,
    })
}

/// Modeled efficiency from timings and iteration counts alone.
pub fn modeled_efficiency(ell_tol: usize, tau_f: f64, tau_g: f64, n: usize, ks: &[usize]) -> f64 {
    let sum_k: usize = ks.iter().sum();
    ell_tol as f64 * tau_f / ((tau_f + n as f64 * tau_g) * sum_k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(mu: f64) -> DecayEnvelope {
        DecayEnvelope::diagonal(mu)
    }

    #[test]
    fn log_sum_handles_zeros() {
        assert_eq!(log_sum([f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
        assert!((log_sum([0.0_f64.ln() + 1.0, 2.0_f64.ln(), 3.0_f64.ln()]) - 5.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn criterion_zero_jumps_always_pass() {
        let grid = GridSpec::new(1.0, 16, 1).unwrap();
        assert!(stop_criterion(&[0.0; 15], env(2.0), &grid, 500, 1e-12));
    }

    #[test]
    fn criterion_two_subintervals() {
        // gamma = 1, mu = 2, T = 1, N = 2, l = 1: e^{1} j <= gamma_tilde / 2.
        let grid = GridSpec::new(1.0, 2, 1).unwrap();
        let gt = 0.7;
        let edge = gt / 2.0 / 1f64.exp();
        assert!(stop_criterion(&[edge * 0.999], env(2.0), &grid, 1, gt));
        assert!(!stop_criterion(&[edge * 1.001], env(2.0), &grid, 1, gt));
    }

    #[test]
    fn a_priori_edge_cases() {
        let grid = GridSpec::new(1.0, 8, 1).unwrap();
        let zero = BoundTable::new(0.0, 0.0, 0.5, 8, 8).unwrap();
        assert_eq!(a_priori_iterations(&zero, env(1.0), &grid, 3, 1.0), MIN_ITERATIONS);
        let one = GridSpec::new(1.0, 1, 1).unwrap();
        let t = BoundTable::new(1.0, 0.5, 0.5, 1, 1).unwrap();
        assert_eq!(a_priori_iterations(&t, env(1.0), &one, 1, 1.0), MIN_ITERATIONS);
        let big = BoundTable::new(1e3, 0.9, 0.9, 8, 8).unwrap();
        assert_eq!(a_priori_iterations(&big, env(1.0), &grid, 40, 1e-6), 7);
    }

    #[test]
    fn horizon_example() {
        let (l, lp) = horizon_windows(env(2.0), 5f64.sqrt(), 0.0, 1e-8, 1.0);
        assert_eq!((l, lp), (10, 10));
        assert_eq!(horizon_windows(env(2.0), 1e-9, 0.0, 1e-8, 1.0), (1, 1));
        let (l, lp) = horizon_windows(env(2.0), 5f64.sqrt(), 1e-12, 1e-8, 1.0);
        assert_eq!(l, lp);
        let (l, lp) = horizon_windows(env(2.0), 5f64.sqrt(), 1e3, 1e-8, 1.0);
        assert!(lp > l);
    }

    #[test]
    fn efficiency_limits() {
        assert_eq!(modeled_efficiency(4, 1.0, 0.0, 16, &[1, 1, 1, 1]), 1.0);
        assert!(modeled_efficiency(4, 1.0, 1.0, 16, &[1, 1, 1, 1]) < 1.0);
    }
}
