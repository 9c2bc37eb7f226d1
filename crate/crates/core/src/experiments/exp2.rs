//! Efficiency of the stop-rule and a priori iteration sequences over sweeps
//! of `gamma_tilde`, the subinterval count `N` and the fine step.

use crate::diamond::{
    efficiency_report, run_diamond, sequential_time, window_timings, DiamondConfig, EfficiencyReport, IterationMode,
};
use crate::error::Result;
use crate::propagators::{ConstantsPolicy, GridSpec};

use super::csv::{self, Table};
use super::{cell_label, eigs_label, planned_windows, plots, ExperimentConfig, References, RunOptions, Sink};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    GammaTilde,
    Subintervals,
    FineStep,
}

impl Sweep {
    pub fn as_str(&self) -> &'static str {
        match self {
            Sweep::GammaTilde => "gamma_tilde",
            Sweep::Subintervals => "N",
            Sweep::FineStep => "fine_log2",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Exp2Point {
    pub label: String,
    pub sweep: Sweep,
    pub eigs: Vec<f64>,
    pub gamma_tilde: f64,
    pub subintervals: usize,
    pub fine_log2: u32,
    pub k_obs: EfficiencyReport,
    pub k_th: EfficiencyReport,
    pub tau_f_s: f64,
    pub tau_g_s: f64,
}

struct Spec {
    sweep: Sweep,
    eigs: Vec<f64>,
    gamma_tilde: f64,
    subintervals: usize,
    fine_log2: u32,
}

fn sweep_points(config: &ExperimentConfig) -> Vec<Spec> {
    let mut out = Vec::new();
    for eigs in &config.eigs {
        let base = |sweep, gamma_tilde, subintervals, fine_log2| Spec {
            sweep,
            eigs: eigs.clone(),
            gamma_tilde,
            subintervals,
            fine_log2,
        };
        for &gt in &config.gamma_tilde {
            out.push(base(Sweep::GammaTilde, gt, config.subintervals, config.fine_log2));
        }
        for &n in &config.n_sweep {
            out.push(base(Sweep::Subintervals, config.sweep_gamma_tilde, n, config.fine_log2));
        }
        for &f in &config.fine_log2_sweep {
            out.push(base(Sweep::FineStep, config.sweep_gamma_tilde, config.subintervals, f));
        }
    }
    out
}

pub(crate) fn run_exp2(
    config: &ExperimentConfig,
    options: &RunOptions,
    refs: &mut References,
    sink: &mut Sink,
) -> Result<Vec<Exp2Point>> {
    let specs = sweep_points(config);
    let mut points = Vec::with_capacity(specs.len());
    let mut summary = Table::new(&csv::EXP2_SUMMARY);
    for s in specs {
        let grid = GridSpec::new(config.window, s.subintervals, 1 << s.fine_log2)?;
        let windows = planned_windows(config, &s.eigs, s.gamma_tilde, config.window)?;
        let problem = refs.problem(config, &s.eigs, grid.fine_step(), windows as f64 * config.window)?;
        let fine = problem.fine(&grid)?;
        let coarse = problem.coarse(&grid)?;
        let (tau_f, tau_g) = window_timings(&fine, &coarse, &grid, &problem.observer_start(), config.timing_repetitions);

        let mut dc = DiamondConfig::new(grid, s.gamma_tilde);
        dc.tol = config.tol;
        dc.eps0_bound = config.eps0_bound;
        dc.constants_horizon = config.constants_horizon;
        dc.policy = ConstantsPolicy::FallbackToResolvent;
        dc.workers = options.workers.clone();
        let stop_rule = run_diamond(&problem, &dc)?.with_timings(tau_f, tau_g);
        dc.mode = IterationMode::APriori;
        let a_priori = run_diamond(&problem, &dc)?.with_timings(tau_f, tau_g);
        let tau_s = sequential_time(&problem, &grid, stop_rule.ell_tol, config.timing_repetitions)?;

        let k_obs = efficiency_report(&stop_rule, tau_s, options.efficiency_mode)?;
        let k_th = efficiency_report(&a_priori, tau_s, options.efficiency_mode)?;

        let value = match s.sweep {
            Sweep::GammaTilde => format!("{:e}", s.gamma_tilde),
            Sweep::Subintervals => s.subintervals.to_string(),
            Sweep::FineStep => s.fine_log2.to_string(),
        };
        let label = cell_label(s.sweep.as_str(), &value, &s.eigs);
        let mut eff = Table::new(&csv::EFFICIENCY);
        for r in [&k_obs, &k_th] {
            eff.push(vec![
                r.iteration_mode.as_str().into(),
                r.e_obs.into(),
                r.e_lower_bound.into(),
                r.e0_th.into(),
                r.ell_tol.into(),
                r.ell_par_tol.into(),
            ]);
            summary.push(vec![
                label.as_str().into(),
                s.sweep.as_str().into(),
                eigs_label(&s.eigs).into(),
                s.gamma_tilde.into(),
                s.subintervals.into(),
                (s.fine_log2 as usize).into(),
                r.iteration_mode.as_str().into(),
                r.e_obs.into(),
                r.e_lower_bound.into(),
                r.e0_th.into(),
                r.ell_tol.into(),
                r.ell_par_tol.into(),
                r.sum_k.into(),
                r.sum_k_pred.into(),
                tau_f.into(),
                tau_g.into(),
                tau_s.into(),
            ]);
        }
        sink.write_csv(&format!("exp2/{label}"), &eff)?;
        sink.check(
            format!("{label}: E(k_th) <= E(k_obs)"),
            k_th.e_obs <= k_obs.e_obs,
            format!("{} vs {}", k_th.e_obs, k_obs.e_obs),
        );
        points.push(Exp2Point {
            label,
            sweep: s.sweep,
            eigs: s.eigs,
            gamma_tilde: s.gamma_tilde,
            subintervals: s.subintervals,
            fine_log2: s.fine_log2,
            k_obs,
            k_th,
            tau_f_s: tau_f,
            tau_g_s: tau_g,
        });
    }
    sink.write_csv("exp2", &summary)?;
    sink.write_script("exp2/efficiency.gp", &plots::efficiency())?;
    Ok(points)
}
