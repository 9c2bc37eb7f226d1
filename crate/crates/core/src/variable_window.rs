//! Fixed iteration budget `k = l` on window `l`, with the window length
//! `N_l dT` chosen a priori from the bound table so that the parallel error
//! still decays at the observer rate.

use std::f64::consts::LN_2;

use serde::Serialize;

use crate::diamond::{log_sum, window_timings, Eps0Source};
use crate::error::{Error, Result};
use crate::lti::DecayEnvelope;
use crate::parareal::{BoundTable, PararealSolver, SolveOptions, StopRule, Workers};
use crate::problem::{discrete_truth, ObserverProblem};
use crate::propagators::{ConstantsPolicy, GridSpec, PropagatorConstants};

pub const DEFAULT_N_CAP: usize = 4096;

/// `N_l = max { N : 2 gamma sum_{n=l}^{N-1} e^{mu n dT} B_n^l <= gamma_tilde e^{-mu T'_{l-1}} / 2^l }`,
/// scanned upward from `l + 1` (always feasible) and capped at `n_cap`.
/// Returns `(N_l, cap_hit)`.
///
/// The partial sums only grow with `N`, so the first failure ends the scan.
pub fn next_window_size(
    ell: usize,
    table: &BoundTable,
    envelope: DecayEnvelope,
    coarse_step: f64,
    tprime_prev: f64,
    gamma_tilde: f64,
    n_cap: usize,
) -> (usize, bool) {
    assert!(ell >= 1, "windows are 1-based");
    let floor = ell + 1;
    if n_cap <= floor {
        return (floor, true);
    }
    let rhs = gamma_tilde.ln() - envelope.mu * tprime_prev - ell as f64 * LN_2 - (2.0 * envelope.gamma).ln();
    let mut log_s = f64::NEG_INFINITY;
    // Sum for N = l + 1 covers n = l only, where B_l^l = 0.
    for n_total in (floor + 1)..=n_cap {
        let n = n_total - 1;
        let term = envelope.mu * n as f64 * coarse_step + table.get(ell, n).ln();
        log_s = log_sum([log_s, term]);
        if log_s > rhs {
            return (n_total - 1, false);
        }
    }
    (n_cap, true)
}

#[derive(Debug, Clone, Serialize)]
pub struct VwSchedule {
    pub n_seq: Vec<usize>,
    /// `T'_0 = 0, T'_1, ..., T'_M`.
    pub tprime: Vec<f64>,
    pub cap_hit: Vec<bool>,
    pub coarse_step: f64,
    pub n_cap: usize,
}

impl VwSchedule {
    pub fn windows(&self) -> usize {
        self.n_seq.len()
    }

    /// `T'_l = dT * sum_{j <= l} N_j`, computed from integer subinterval counts.
    fn boundary(coarse_step: f64, subintervals: usize) -> f64 {
        subintervals as f64 * coarse_step
    }
}

/// The schedule depends only on the constants, the decay envelope, `dT` and `gamma_tilde`.
pub fn vw_schedule(
    constants: &PropagatorConstants,
    envelope: DecayEnvelope,
    coarse_step: f64,
    gamma_tilde: f64,
    windows: usize,
    n_cap: usize,
) -> Result<VwSchedule> {
    if windows == 0 || !(gamma_tilde > 0.0) || !(coarse_step > 0.0) {
        return Err(Error::InvalidParameter(
            "variable windows need a positive window budget, gamma_tilde and dT".into(),
        ));
    }
    let table = BoundTable::from_constants(constants, n_cap.max(windows + 1), windows)?;
    let mut n_seq = Vec::with_capacity(windows);
    let mut cap_hit = Vec::with_capacity(windows);
    let mut tprime = vec![0.0];
    let mut total = 0usize;
    for ell in 1..=windows {
        let (n, hit) = next_window_size(ell, &table, envelope, coarse_step, tprime[ell - 1], gamma_tilde, n_cap);
        total += n;
        n_seq.push(n);
        cap_hit.push(hit);
        tprime.push(VwSchedule::boundary(coarse_step, total));
    }
    Ok(VwSchedule {
        n_seq,
        tprime,
        cap_hit,
        coarse_step,
        n_cap,
    })
}

#[derive(Debug, Clone)]
pub struct VwConfig {
    pub coarse_step: f64,
    pub fine_ratio: usize,
    pub gamma_tilde: f64,
    pub windows: usize,
    pub n_cap: usize,
    pub eps0_bound: Option<f64>,
    pub constants_horizon: f64,
    pub policy: ConstantsPolicy,
    pub workers: Workers,
    pub timing_repetitions: usize,
}

impl VwConfig {
    pub fn new(coarse_step: f64, fine_ratio: usize, gamma_tilde: f64, windows: usize) -> Self {
        Self {
            coarse_step,
            fine_ratio,
            gamma_tilde,
            windows,
            n_cap: DEFAULT_N_CAP,
            eps0_bound: None,
            constants_horizon: 50.0,
            policy: ConstantsPolicy::FallbackToResolvent,
            workers: Workers::sequential(),
            timing_repetitions: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VwWindowRun {
    pub ell: usize,
    pub n_ell: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub cap_hit: bool,
    pub iterations: usize,
    pub jump_norms: Vec<Vec<f64>>,
    pub end_state: Vec<f64>,
    pub err_end: f64,
    pub bound_end: f64,
    pub err_end_z: f64,
    pub bound_end_z: f64,
    pub tau_p_model_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VwTrace {
    pub schedule: VwSchedule,
    pub windows: Vec<VwWindowRun>,
    pub gamma_tilde: f64,
    pub mu: f64,
    pub gamma: f64,
    pub eps0: f64,
    pub eps0_z: f64,
    pub eps0_source: Eps0Source,
    pub constants: PropagatorConstants,
    /// Fine solve of one subinterval and one coarse step, seconds.
    pub tau_f_sub_s: f64,
    pub tau_g_step_s: f64,
}

impl VwTrace {
    /// Processor-weighted modeled efficiency:
    /// `sum_l N_l tau_f / sum_l N_l * l (tau_f + N_l tau_g)`.
    pub fn modeled_efficiency(&self) -> f64 {
        let seq: f64 = self.windows.iter().map(|w| w.n_ell as f64 * self.tau_f_sub_s).sum();
        let par: f64 = self
            .windows
            .iter()
            .map(|w| w.n_ell as f64 * w.tau_p_model_s)
            .sum();
        seq / par
    }
}

pub fn run_variable_window(problem: &ObserverProblem, config: &VwConfig) -> Result<VwTrace> {
    let design = problem.design();
    let diagonal = design.diagonal_envelope();
    // Only dT and the fine ratio matter for the propagators and constants.
    let unit = GridSpec::new(config.coarse_step, 1, config.fine_ratio)?;
    let constants = problem.constants(&unit, config.constants_horizon, config.policy)?;
    let schedule = vw_schedule(
        &constants,
        diagonal,
        config.coarse_step,
        config.gamma_tilde,
        config.windows,
        config.n_cap,
    )?;
    let horizon = *schedule.tprime.last().expect("nonempty schedule");
    let problem = problem.extended(horizon)?;

    let fine = problem.fine(&unit)?;
    let coarse = problem.coarse(&unit)?;
    let z0 = problem.observer_start();
    let (tau_f, tau_g) = window_timings(&fine, &coarse, &unit, &z0, config.timing_repetitions);
    let truth = discrete_truth(&fine, &problem.truth_start(), &schedule.tprime)?;

    let (eps0, eps0_source) = match config.eps0_bound {
        Some(e) => (e, Eps0Source::UserBound),
        None => (problem.initial_error(), Eps0Source::GroundTruth),
    };
    let eps0_z = problem.initial_error_diagonal();

    let mut z = z0;
    let mut runs = Vec::with_capacity(config.windows);
    for ell in 1..=config.windows {
        let n_ell = schedule.n_seq[ell - 1];
        let t_start = schedule.tprime[ell - 1];
        let t_end = schedule.tprime[ell];
        let grid = GridSpec::new(n_ell as f64 * config.coarse_step, n_ell, config.fine_ratio)?;
        let solver = PararealSolver::new(&fine, &coarse, grid, config.workers.clone());
        let sol = solver
            .solve_window(t_start, &z, StopRule::Fixed(ell), &SolveOptions::default())
            .map_err(|e| e.in_window(ell))?;
        z = sol.end_state;
        let diff_z = &truth[ell - 1] - &z;
        let decay = (-design.mu() * t_end).exp();
        runs.push(VwWindowRun {
            ell,
            n_ell,
            t_start,
            t_end,
            cap_hit: schedule.cap_hit[ell - 1],
            iterations: sol.iterations,
            jump_norms: sol.jump_norms,
            end_state: z.as_slice().to_vec(),
            err_end: design.from_diagonal(&diff_z).norm(),
            bound_end: design.gamma() * (eps0 + config.gamma_tilde) * decay,
            err_end_z: diff_z.norm(),
            bound_end_z: (eps0_z + config.gamma_tilde) * decay,
            tau_p_model_s: ell as f64 * (tau_f + n_ell as f64 * tau_g),
        });
    }

    Ok(VwTrace {
        schedule,
        windows: runs,
        gamma_tilde: config.gamma_tilde,
        mu: design.mu(),
        gamma: design.gamma(),
        eps0,
        eps0_z,
        eps0_source,
        constants,
        tau_f_sub_s: tau_f,
        tau_g_step_s: tau_g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_bounds_hit_cap() {
        let table = BoundTable::new(0.0, 0.0, 0.5, 64, 4).unwrap();
        let env = DecayEnvelope::diagonal(1.0);
        assert_eq!(next_window_size(3, &table, env, 0.1, 5.0, 1.0, 64), (64, true));
    }

    #[test]
    fn floor_is_always_feasible() {
        let table = BoundTable::new(1e6, 0.9, 0.9, 64, 4).unwrap();
        let env = DecayEnvelope::diagonal(1.0);
        for ell in 1..=4 {
            let (n, hit) = next_window_size(ell, &table, env, 0.1, 50.0, 1e-9, 64);
            assert_eq!(n, ell + 1);
            assert!(!hit);
        }
    }

    #[test]
    fn matches_brute_force_scan() {
        let table = BoundTable::new(0.02, 0.004, 0.95, 512, 6).unwrap();
        let env = DecayEnvelope::diagonal(0.8);
        let dt = 1.0 / 16.0;
        for ell in 1..=6 {
            for &tp in &[0.0_f64, 3.0, 10.0] {
                let rhs = (-0.8_f64 * tp).exp() / 2f64.powi(ell as i32);
                let mut best = ell + 1;
                for n_total in (ell + 1)..=512 {
                    let s: f64 = (ell..n_total).map(|n| (0.8 * n as f64 * dt).exp() * table.get(ell, n)).sum();
                    if 2.0 * s <= rhs {
                        best = n_total;
                    }
                }
                let (n, _) = next_window_size(ell, &table, env, dt, tp, 1.0, 512);
                assert_eq!(n, best, "ell={ell} T'={tp}");
            }
        }
    }
}
