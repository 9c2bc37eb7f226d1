//! Benchmark experiments: iteration curves per window, efficiency sweeps and
//! the fixed-window versus variable-window comparison. Each writes CSV
//! tables, a gnuplot script and an entry in `report.json`.

pub mod config;
pub mod csv;
mod exp1;
mod exp2;
mod plots;
mod vw;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use web_time::Instant;

use serde::Serialize;

pub use config::{ExperimentConfig, ExperimentKind};
pub use exp1::Exp1Cell;
use exp1::run_exp1;
pub use exp2::{Exp2Point, Sweep};
use exp2::run_exp2;
pub use vw::{DtSweepRow, VwOutcome};
use vw::run_vw;

use crate::diamond::{horizon_windows, EfficiencyMode};
use crate::error::{Error, Result};
use crate::lti::{ObserverDesign, ReferenceTrajectory};
use crate::parareal::Workers;
use crate::problem::{ObserverProblem, REFERENCE_REFINEMENT};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub workers: Workers,
    pub efficiency_mode: EfficiencyMode,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    /// Paths relative to the output directory.
    pub csv_files: Vec<String>,
    pub plot_scripts: Vec<String>,
    pub workers: usize,
    pub clock_resolution_s: f64,
    pub efficiency_mode: EfficiencyMode,
    pub elapsed_s: f64,
    pub checks: Vec<Check>,
}

#[derive(Debug, Default)]
pub struct RunResults {
    pub exp1: Vec<Exp1Cell>,
    pub exp2: Vec<Exp2Point>,
    pub vw: Option<VwOutcome>,
}

/// Collects emitted files and checks while an experiment runs.
pub(crate) struct Sink<'a> {
    root: &'a Path,
    csv_files: Vec<String>,
    plot_scripts: Vec<String>,
    checks: Vec<Check>,
}

impl<'a> Sink<'a> {
    fn new(root: &'a Path) -> Self {
        Self {
            root,
            csv_files: Vec::new(),
            plot_scripts: Vec::new(),
            checks: Vec::new(),
        }
    }

    pub fn write_csv(&mut self, rel_dir: &str, table: &csv::Table) -> Result<()> {
        let path = table.write(&self.root.join(rel_dir))?;
        self.csv_files.push(self.relative(&path));
        Ok(())
    }

    pub fn write_script(&mut self, rel_path: &str, text: &str) -> Result<()> {
        let path = self.root.join(rel_path);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&path, text)?;
        self.plot_scripts.push(self.relative(&path));
        Ok(())
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(name, passed, detail));
    }

    fn relative(&self, path: &Path) -> String {
        path.strip_prefix(self.root)
            .unwrap_or(path)
            .to_string_lossy()
            .replace('\\', "/")
    }
}

/// Plant trajectories keyed by fine step, shared across cells so each is
/// integrated once per run. Prefixes agree bit for bit, so extending a
/// cached trajectory never changes results.
pub(crate) struct References {
    cache: Vec<(f64, Arc<ReferenceTrajectory>)>,
}

impl References {
    pub fn new() -> Self {
        Self { cache: Vec::new() }
    }

    pub fn get(&mut self, config: &ExperimentConfig, fine_step: f64, horizon: f64) -> Result<Arc<ReferenceTrajectory>> {
        let horizon = horizon.max(config.constants_horizon);
        let step = fine_step / REFERENCE_REFINEMENT;
        let slot = self.cache.iter().position(|(s, _)| *s == step);
        if let Some(i) = slot {
            if self.cache[i].1.horizon() >= horizon {
                return Ok(self.cache[i].1.clone());
            }
        }
        let r = Arc::new(ReferenceTrajectory::integrate(&config.system.system, horizon, step)?);
        match slot {
            Some(i) => self.cache[i].1 = r.clone(),
            None => self.cache.push((step, r.clone())),
        }
        Ok(r)
    }

    pub fn problem(
        &mut self,
        config: &ExperimentConfig,
        eigs: &[f64],
        fine_step: f64,
        horizon: f64,
    ) -> Result<ObserverProblem> {
        let reference = self.get(config, fine_step, horizon)?;
        ObserverProblem::with_reference(config.system.system.clone(), eigs, config.system.xhat0.clone(), reference)
    }
}

/// `l_par^Tol` windows for one Diamond cell, from the design alone.
pub(crate) fn planned_windows(config: &ExperimentConfig, eigs: &[f64], gamma_tilde: f64, window: f64) -> Result<usize> {
    let design = ObserverDesign::place(&config.system.system, eigs, config.system.xhat0.clone())?;
    let eps0 = config
        .eps0_bound
        .unwrap_or_else(|| (config.system.system.x0_true() - config.system.xhat0.clone()).norm());
    Ok(horizon_windows(design.envelope(), eps0, gamma_tilde, config.tol, window).1)
}

/// `-2;-4`: eigenvalue sets rendered without commas.
pub(crate) fn eigs_label(eigs: &[f64]) -> String {
    eigs.iter().map(|e| format!("{e}")).collect::<Vec<_>>().join(";")
}

/// Directory-safe label, e.g. `gt_1e-3_eigs_-2_-4`.
pub(crate) fn cell_label(prefix: &str, value: &str, eigs: &[f64]) -> String {
    let e: Vec<String> = eigs.iter().map(|e| format!("{e}")).collect();
    format!("{prefix}_{value}_eigs_{}", e.join("_"))
}

/// Runs the configured experiments, writes CSVs, scripts and `report.json`
/// into `options.out_dir`, then re-reads every CSV against its schema.
pub fn run(config: &ExperimentConfig, options: &RunOptions) -> Result<(RunReport, RunResults)> {
    let start = Instant::now();
    std::fs::create_dir_all(&options.out_dir)?;
    let mut sink = Sink::new(&options.out_dir);
    let mut refs = References::new();
    let mut results = RunResults::default();

    if config.experiment.includes(ExperimentKind::Exp1KCurves) {
        results.exp1 = run_exp1(config, options, &mut refs, &mut sink)?;
    }
    if config.experiment.includes(ExperimentKind::Exp2Efficiency) {
        results.exp2 = run_exp2(config, options, &mut refs, &mut sink)?;
    }
    if config.experiment.includes(ExperimentKind::VwCompare) {
        results.vw = Some(run_vw(config, options, &mut refs, &mut sink)?);
    }

    let schema_problems = verify_outputs(&options.out_dir, &sink.csv_files)?;
    sink.check(
        "csv_schema",
        schema_problems.is_empty(),
        if schema_problems.is_empty() {
            format!("{} files parsed against their schema", sink.csv_files.len())
        } else {
            schema_problems.join("; ")
        },
    );

    let report = RunReport {
        experiment: config.experiment,
        config: config.clone(),
        csv_files: sink.csv_files,
        plot_scripts: sink.plot_scripts,
        workers: options.workers.count(),
        clock_resolution_s: crate::timing::clock_resolution(),
        efficiency_mode: options.efficiency_mode,
        elapsed_s: start.elapsed().as_secs_f64(),
        checks: sink.checks,
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    std::fs::write(options.out_dir.join("report.json"), json + "\n")?;
    Ok((report, results))
}

/// Parses every listed CSV and flags CSVs on disk that the report omits.
pub fn verify_outputs(root: &Path, listed: &[String]) -> Result<Vec<String>> {
    let mut problems = Vec::new();
    for rel in listed {
        if let Err(e) = csv::read_checked(&root.join(rel)) {
            problems.push(e.to_string());
        }
    }
    for rel in csv_files_under(root)? {
        if !listed.contains(&rel) {
            problems.push(format!("{rel} is not listed in the report"));
        }
    }
    Ok(problems)
}

/// All `.csv` files below `root`, relative and sorted.
pub fn csv_files_under(root: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "csv") {
                let rel = path.strip_prefix(root).unwrap_or(&path).to_string_lossy().replace('\\', "/");
                out.push(rel);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Non-timing differences between two output directories of the same config.
pub fn compare_outputs(a: &Path, b: &Path) -> Result<Vec<String>> {
    let files_a = csv_files_under(a)?;
    let files_b = csv_files_under(b)?;
    let mut out = Vec::new();
    if files_a != files_b {
        out.push(format!("file sets differ: {files_a:?} vs {files_b:?}"));
        return Ok(out);
    }
    for rel in &files_a {
        let pa = csv::read_checked(&a.join(rel))?;
        let pb = csv::read_checked(&b.join(rel))?;
        out.extend(csv::deterministic_diff(&pa, &pb).into_iter().map(|d| format!("{rel}: {d}")));
    }
    Ok(out)
}
