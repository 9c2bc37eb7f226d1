//! Variable windows (`l` iterations on window `l`, length chosen a priori)
//! against fixed windows running the a priori count `k_th`.

use crate::diamond::{a_priori_iterations, window_timings};
use crate::error::Result;
use crate::parareal::BoundTable;
use crate::propagators::{ConstantsPolicy, GridSpec};
use crate::variable_window::{run_variable_window, vw_schedule, VwConfig, VwTrace};

use super::csv::{self, Table};
use super::{plots, ExperimentConfig, References, RunOptions, Sink};

#[derive(Debug, Clone)]
pub struct VwOutcome {
    pub trace: VwTrace,
    /// Fixed-window a priori counts over `ceil(T'_M / T)` windows.
    pub k_th: Vec<usize>,
    /// Subintervals per fixed window.
    pub fixed_subintervals: usize,
    /// `(t, cumulative VW iterations, cumulative fixed-window iterations)`.
    pub cumulative: Vec<(f64, usize, usize)>,
    pub e_vw: f64,
    pub e_th: f64,
    pub e0_vw: f64,
    pub e0_th: f64,
    pub dt_sweep: Vec<DtSweepRow>,
}

#[derive(Debug, Clone)]
pub struct DtSweepRow {
    pub fine_log2: u32,
    pub windows_to_tol: usize,
    pub tprime_tol: f64,
    pub e0_vw: f64,
    pub e_model: f64,
}

impl VwOutcome {
    /// Sign changes of `cum_vw - cum_th`, ignoring ties, and the first nonzero sign.
    pub fn crossings(&self) -> (usize, i32) {
        let signs: Vec<i32> = self
            .cumulative
            .iter()
            .map(|&(_, a, b)| (a as i64 - b as i64).signum() as i32)
            .filter(|s| *s != 0)
            .collect();
        let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
        (changes, signs.first().copied().unwrap_or(0))
    }
}

/// `sum N_l / sum N_l * l`: the variable-window efficiency without coarse cost.
fn e0_variable(n_seq: &[usize]) -> f64 {
    let seq: usize = n_seq.iter().sum();
    let par: usize = n_seq.iter().enumerate().map(|(i, n)| n * (i + 1)).sum();
    seq as f64 / par as f64
}

/// `sum N_l tau_f / sum N_l * l (tau_f + N_l tau_g)`.
fn e_variable(n_seq: &[usize], tau_f: f64, tau_g: f64) -> f64 {
    let seq: f64 = n_seq.iter().map(|&n| n as f64 * tau_f).sum();
    let par: f64 = n_seq
        .iter()
        .enumerate()
        .map(|(i, &n)| n as f64 * (i + 1) as f64 * (tau_f + n as f64 * tau_g))
        .sum();
    seq / par
}

pub(crate) fn run_vw(
    config: &ExperimentConfig,
    options: &RunOptions,
    refs: &mut References,
    sink: &mut Sink,
) -> Result<VwOutcome> {
    let dt_coarse = config.vw_coarse_step;
    let ratio = config.fine_ratio();
    let gt = config.vw_gamma_tilde;
    let problem = refs.problem(config, &config.vw_eigs, dt_coarse / ratio as f64, 0.0)?;

    let mut vc = VwConfig::new(dt_coarse, ratio, gt, config.vw_windows);
    vc.n_cap = config.n_cap;
    vc.eps0_bound = config.eps0_bound;
    vc.constants_horizon = config.constants_horizon;
    vc.policy = ConstantsPolicy::FallbackToResolvent;
    vc.workers = options.workers.clone();
    vc.timing_repetitions = config.timing_repetitions;
    let trace = run_variable_window(&problem, &vc)?;
    let sched = &trace.schedule;

    // Fixed windows of length T over the same span, same dT and constants.
    let n_fixed = (config.window / dt_coarse).round() as usize;
    let grid = GridSpec::new(config.window, n_fixed, ratio)?;
    let table = BoundTable::from_constants(&trace.constants, n_fixed, n_fixed)?;
    let diagonal = problem.design().diagonal_envelope();
    let total_sub: usize = sched.n_seq.iter().sum();
    let fixed_windows = total_sub.div_ceil(n_fixed);
    let k_th: Vec<usize> = (1..=fixed_windows)
        .map(|l| a_priori_iterations(&table, diagonal, &grid, l, gt))
        .collect();

    // Iterations spent on every window that starts before t, sampled at each
    // coarse node; integer offsets keep the comparison exact.
    let mut vw_starts = Vec::with_capacity(sched.n_seq.len());
    let mut acc = 0usize;
    for &n in &sched.n_seq {
        vw_starts.push(acc);
        acc += n;
    }
    let mut cumulative = Vec::with_capacity(total_sub);
    let mut cum = Table::new(&csv::VW_CUMULATIVE);
    let (mut cv, mut ct, mut iv, mut it) = (0usize, 0usize, 0usize, 0usize);
    for j in 1..=total_sub {
        while iv < vw_starts.len() && vw_starts[iv] < j {
            iv += 1;
            cv += iv;
        }
        while it < k_th.len() && it * n_fixed < j {
            ct += k_th[it];
            it += 1;
        }
        let t = j as f64 * dt_coarse;
        cumulative.push((t, cv, ct));
        cum.push(vec![t.into(), cv.into(), ct.into()]);
    }

    let tau_f = trace.tau_f_sub_s;
    let tau_g = trace.tau_g_step_s;
    let e_vw = e_variable(&sched.n_seq, tau_f, tau_g);
    let sum_th: usize = k_th.iter().sum();
    let e_th = fixed_windows as f64 * tau_f / (sum_th as f64 * (tau_f + n_fixed as f64 * tau_g));
    let e0_vw = e0_variable(&sched.n_seq);
    let e0_th = fixed_windows as f64 / sum_th as f64;

    let mut eff = Table::new(&csv::VW_EFFICIENCY);
    eff.push(vec![
        "k_vw".into(),
        e_vw.into(),
        e0_vw.into(),
        sched.n_seq.len().into(),
        (*sched.tprime.last().unwrap()).into(),
        sched.n_seq.iter().enumerate().map(|(i, _)| i + 1).sum::<usize>().into(),
    ]);
    eff.push(vec![
        "k_th".into(),
        e_th.into(),
        e0_th.into(),
        fixed_windows.into(),
        (fixed_windows as f64 * config.window).into(),
        sum_th.into(),
    ]);

    let mut schedule = Table::new(&csv::VW_SCHEDULE);
    for w in &trace.windows {
        schedule.push(vec![
            w.ell.into(),
            w.n_ell.into(),
            w.t_end.into(),
            w.cap_hit.into(),
            w.err_end.into(),
            w.bound_end.into(),
        ]);
    }

    let dt_sweep = dt_sweep(config, refs)?;
    let mut sweep = Table::new(&csv::VW_DT_SWEEP);
    for (row, c) in &dt_sweep {
        sweep.push(vec![
            (row.fine_log2 as usize).into(),
            c.0.into(),
            c.1.into(),
            c.2.into(),
            row.windows_to_tol.into(),
            row.tprime_tol.into(),
            row.e0_vw.into(),
            row.e_model.into(),
        ]);
    }

    sink.write_csv("vw", &schedule)?;
    sink.write_csv("vw", &cum)?;
    sink.write_csv("vw", &eff)?;
    sink.write_csv("vw", &sweep)?;
    sink.write_script("vw/vw_compare.gp", &plots::vw_compare())?;

    let floor_bad = trace.windows.iter().filter(|w| w.n_ell < w.ell + 1).count();
    let allowance = trace.constants.allowance();
    let rate_bad = trace
        .windows
        .iter()
        .filter(|w| w.err_end > w.bound_end + allowance)
        .count();
    sink.check("vw: N_l >= l + 1", floor_bad == 0, format!("{floor_bad} windows violate"));
    sink.check(
        "vw: error within decay bound + allowance",
        rate_bad == 0,
        format!("{rate_bad} windows violate (allowance {allowance:e})"),
    );
    sink.check("vw: E(k_vw) <= E(k_th)", e_vw <= e_th, format!("{e_vw} vs {e_th}"));

    let outcome = VwOutcome {
        trace,
        k_th,
        fixed_subintervals: n_fixed,
        cumulative,
        e_vw,
        e_th,
        e0_vw,
        e0_th,
        dt_sweep: dt_sweep.into_iter().map(|(r, _)| r).collect(),
    };
    let (changes, first) = outcome.crossings();
    sink.check(
        "vw: cumulative iteration curves cross",
        changes >= 1,
        format!("{changes} sign changes, VW initially {}", if first < 0 { "cheaper" } else { "dearer" }),
    );
    Ok(outcome)
}

/// `(alpha, beta, eta)` at one sweep point.
type SweepConstants = (f64, f64, f64);

/// Schedule and efficiency as the fine step shrinks, run up to the window
/// that first reaches the tolerance.
fn dt_sweep(config: &ExperimentConfig, refs: &mut References) -> Result<Vec<(DtSweepRow, SweepConstants)>> {
    let dt_coarse = config.vw_coarse_step;
    let gt = config.vw_gamma_tilde;
    let mut out = Vec::new();
    for &f in &config.fine_log2_sweep {
        let ratio = 1usize << f;
        let problem = refs.problem(config, &config.vw_eigs, dt_coarse / ratio as f64, 0.0)?;
        let unit = GridSpec::new(dt_coarse, 1, ratio)?;
        let c = problem.constants(&unit, config.constants_horizon, ConstantsPolicy::FallbackToResolvent)?;
        let sched = vw_schedule(&c, problem.design().diagonal_envelope(), dt_coarse, gt, config.vw_windows, config.n_cap)?;
        let design = problem.design();
        let eps0 = config.eps0_bound.unwrap_or_else(|| problem.initial_error());
        let reach = |tp: f64| design.gamma() * (eps0 + gt) * (-design.mu() * tp).exp() <= config.tol;
        let windows_to_tol = (1..=sched.n_seq.len())
            .find(|&l| reach(sched.tprime[l]))
            .unwrap_or(sched.n_seq.len());
        let used = &sched.n_seq[..windows_to_tol];
        let fine = problem.fine(&unit)?;
        let coarse = problem.coarse(&unit)?;
        let (tau_f, tau_g) = window_timings(&fine, &coarse, &unit, &problem.observer_start(), config.timing_repetitions);
        out.push((
            DtSweepRow {
                fine_log2: f,
                windows_to_tol,
                tprime_tol: sched.tprime[windows_to_tol],
                e0_vw: e0_variable(used),
                e_model: e_variable(used, tau_f, tau_g),
            },
            (c.alpha, c.beta, c.eta),
        ));
    }
    Ok(out)
}
