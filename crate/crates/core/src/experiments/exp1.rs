//! Iterations per window: the stop-rule count against the a priori count,
//! one cell per `(gamma_tilde, eigenvalue set)`.

use crate::diamond::{run_diamond, window_timings, AssimilationTrace, DiamondConfig, IterationMode};
use crate::error::Result;
use crate::parareal::BoundTable;
use crate::propagators::{ConstantsPolicy, GridSpec};

use super::csv::{self, Table};
use super::{cell_label, eigs_label, planned_windows, plots, ExperimentConfig, References, RunOptions, Sink};

#[derive(Debug, Clone)]
pub struct Exp1Cell {
    pub label: String,
    pub gamma_tilde: f64,
    pub eigs: Vec<f64>,
    /// Stop-rule run; `k_pred` is filled in per window.
    pub stop_rule: AssimilationTrace,
    /// Run performing exactly `k_pred` iterations per window.
    pub a_priori: AssimilationTrace,
    /// `(ell, k, n, ||J||, 2 B_n^k)` for every recorded jump of the stop-rule run.
    pub jump_checks: Vec<(usize, usize, usize, f64, f64)>,
}

impl Exp1Cell {
    pub fn k1_windows(&self) -> usize {
        self.stop_rule.windows.iter().filter(|w| w.k_obs == 1).count()
    }
}

fn window_table(schema: &'static csv::Schema, trace: &AssimilationTrace) -> Table {
    let mut t = Table::new(schema);
    for w in &trace.windows {
        t.push(vec![
            w.ell.into(),
            w.k_obs.into(),
            w.k_pred.into(),
            w.err_end.into(),
            w.bound_end.into(),
            w.tau_f_s.into(),
            w.tau_g_s.into(),
            w.tau_p_model_s.into(),
        ]);
    }
    t
}

pub(crate) fn run_exp1(
    config: &ExperimentConfig,
    options: &RunOptions,
    refs: &mut References,
    sink: &mut Sink,
) -> Result<Vec<Exp1Cell>> {
    let grid = GridSpec::new(config.window, config.subintervals, config.fine_ratio())?;
    let mut horizon: f64 = 0.0;
    for eigs in &config.eigs {
        for &gt in &config.gamma_tilde {
            horizon = horizon.max(planned_windows(config, eigs, gt, config.window)? as f64 * config.window);
        }
    }

    let mut cells = Vec::new();
    let mut summary = Table::new(&csv::EXP1_SUMMARY);
    for eigs in &config.eigs {
        let problem = refs.problem(config, eigs, grid.fine_step(), horizon)?;
        let fine = problem.fine(&grid)?;
        let coarse = problem.coarse(&grid)?;
        let (tau_f, tau_g) = window_timings(&fine, &coarse, &grid, &problem.observer_start(), config.timing_repetitions);

        for &gt in &config.gamma_tilde {
            let label = cell_label("gt", &format!("{gt:e}"), eigs);
            let mut dc = DiamondConfig::new(grid, gt);
            dc.tol = config.tol;
            dc.eps0_bound = config.eps0_bound;
            dc.constants_horizon = config.constants_horizon;
            dc.policy = ConstantsPolicy::FallbackToResolvent;
            dc.workers = options.workers.clone();
            let stop_rule = run_diamond(&problem, &dc)?.with_timings(tau_f, tau_g);
            dc.mode = IterationMode::APriori;
            let a_priori = run_diamond(&problem, &dc)?.with_timings(tau_f, tau_g);

            let c = stop_rule.constants;
            let table = BoundTable::from_constants(&c, grid.subintervals, grid.subintervals)?;
            let allowance = c.allowance();
            let mut jumps = Table::new(&csv::JUMPS);
            let mut jump_checks = Vec::new();
            for w in &stop_rule.windows {
                for (ki, (row, raw)) in w.jump_norms.iter().zip(&w.raw_jump_norms).enumerate() {
                    let k = ki + 1;
                    for (ni, (&j, &jr)) in row.iter().zip(raw).enumerate() {
                        let n = ni + 1;
                        let bound = table.jump_bound(k, n);
                        jumps.push(vec![
                            w.ell.into(),
                            k.into(),
                            n.into(),
                            j.into(),
                            jr.into(),
                            bound.into(),
                            allowance.into(),
                        ]);
                        jump_checks.push((w.ell, k, n, jr, bound));
                    }
                }
            }

            let dir = format!("exp1/{label}");
            sink.write_csv(&dir, &window_table(&csv::WINDOWS, &stop_rule))?;
            sink.write_csv(&dir, &window_table(&csv::WINDOWS_KTH, &a_priori))?;
            sink.write_csv(&dir, &jumps)?;

            let order_bad = stop_rule.windows.iter().filter(|w| w.k_obs > w.k_pred).count();
            let rate_bad = stop_rule.windows.iter().filter(|w| w.err_end > w.bound_end).count();
            let jump_bad = jump_checks.iter().filter(|(.., j, b)| *j > b + allowance).count();
            sink.check(format!("{label}: k_obs <= k_pred"), order_bad == 0, format!("{order_bad} windows violate"));
            sink.check(format!("{label}: error within decay bound"), rate_bad == 0, format!("{rate_bad} windows violate"));
            sink.check(
                format!("{label}: jumps within 2B + allowance"),
                jump_bad == 0,
                format!("{jump_bad} of {} jumps violate", jump_checks.len()),
            );

            let cell = Exp1Cell {
                label: label.clone(),
                gamma_tilde: gt,
                eigs: eigs.clone(),
                stop_rule,
                a_priori,
                jump_checks,
            };
            let t = &cell.stop_rule;
            let max_ratio = t.windows.iter().map(|w| w.err_end / w.bound_end).fold(0.0, f64::max);
            summary.push(vec![
                label.into(),
                gt.into(),
                eigs_label(eigs).into(),
                t.windows.len().into(),
                t.ell_tol.into(),
                t.ell_par_tol.into(),
                cell.k1_windows().into(),
                t.k_obs().iter().sum::<usize>().into(),
                t.k_pred().iter().sum::<usize>().into(),
                max_ratio.into(),
                c.alpha.into(),
                c.beta.into(),
                c.eta.into(),
                c.m_sup.into(),
                c.k_sup.into(),
                c.form.as_str().into(),
            ]);
            cells.push(cell);
        }
    }
    sink.write_csv("exp1", &summary)?;
    let labels: Vec<&str> = cells.iter().map(|c| c.label.as_str()).collect();
    sink.write_script("exp1/kcurves.gp", &plots::kcurves(&labels))?;
    Ok(cells)
}
