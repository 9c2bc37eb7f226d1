//! Experiment configuration: a `key = value` file where every key is
//! optional. An empty file selects the benchmark setup.
//!
//! ```text
//! experiment = exp1_kcurves        # exp2_efficiency | vw_compare | all
//! system = plant.sys               # relative to the config file
//! T = 1
//! Tol = 1e-8
//! N = 16
//! fine_log2 = 5                    # fine step dT / 2^5
//! gamma_tilde = 1e-3, 1, 1e3
//! eigs = -2, -4; -0.25, -0.5
//! ```

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kv::{Entry, KvFile};
use crate::lti::SystemSpec;

const KEYS: &[&str] = &[
    "experiment",
    "system",
    "T",
    "Tol",
    "N",
    "fine_log2",
    "gamma_tilde",
    "eigs",
    "N_sweep",
    "fine_log2_sweep",
    "sweep_gamma_tilde",
    "vw_windows",
    "vw_dT",
    "vw_eigs",
    "vw_gamma_tilde",
    "n_cap",
    "constants_horizon",
    "eps0_bound",
    "timing_repetitions",
];

/// Largest accepted `log2(dT / dt)`.
pub const MAX_FINE_LOG2: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    #[serde(rename = "exp1_kcurves")]
    Exp1KCurves,
    #[serde(rename = "exp2_efficiency")]
    Exp2Efficiency,
    VwCompare,
    All,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Exp1KCurves => "exp1_kcurves",
            ExperimentKind::Exp2Efficiency => "exp2_efficiency",
            ExperimentKind::VwCompare => "vw_compare",
            ExperimentKind::All => "all",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            ExperimentKind::Exp1KCurves,
            ExperimentKind::Exp2Efficiency,
            ExperimentKind::VwCompare,
            ExperimentKind::All,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }

    pub fn includes(&self, other: ExperimentKind) -> bool {
        *self == other || *self == ExperimentKind::All
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// `None` selects the built-in benchmark plant.
    pub system_path: Option<PathBuf>,
    #[serde(skip)]
    pub system: SystemSpec,
    /// Window length `T`.
    pub window: f64,
    pub tol: f64,
    pub subintervals: usize,
    pub fine_log2: u32,
    pub gamma_tilde: Vec<f64>,
    pub eigs: Vec<Vec<f64>>,
    pub n_sweep: Vec<usize>,
    pub fine_log2_sweep: Vec<u32>,
    /// `gamma_tilde` used along the `N` and `dt` sweeps.
    pub sweep_gamma_tilde: f64,
    pub vw_windows: usize,
    pub vw_coarse_step: f64,
    pub vw_eigs: Vec<f64>,
    pub vw_gamma_tilde: f64,
    pub n_cap: usize,
    pub constants_horizon: f64,
    pub eps0_bound: Option<f64>,
    pub timing_repetitions: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let system = SystemSpec::benchmark();
        Self {
            experiment: ExperimentKind::Exp1KCurves,
            system_path: None,
            eigs: vec![system.eigs.clone().unwrap_or_else(|| vec![-2.0, -4.0])],
            system,
            window: 1.0,
            tol: 1e-8,
            subintervals: 16,
            fine_log2: 5,
            gamma_tilde: vec![1.0],
            n_sweep: vec![2, 4, 8, 16, 32],
            fine_log2_sweep: vec![3, 4, 5, 6, 7],
            sweep_gamma_tilde: 1.0,
            vw_windows: 100,
            vw_coarse_step: 1.0 / 16.0,
            vw_eigs: vec![-0.8, -1.0],
            vw_gamma_tilde: 1.0,
            n_cap: crate::variable_window::DEFAULT_N_CAP,
            constants_horizon: 50.0,
            eps0_bound: None,
            timing_repetitions: crate::timing::MIN_REPETITIONS,
        }
    }
}

impl ExperimentConfig {
    /// Coarse step `dT = T / N`.
    pub fn coarse_step(&self) -> f64 {
        self.window / self.subintervals as f64
    }

    pub fn fine_ratio(&self) -> usize {
        1 << self.fine_log2
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    /// Parses `text`; a `system` path is resolved against the directory of `path`.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let shown = path.display().to_string();
        let f = KvFile::parse(text, &shown, KEYS)?;
        let mut c = ExperimentConfig::default();

        if let Some(e) = f.get("experiment") {
            c.experiment = ExperimentKind::parse(&e.value).ok_or_else(|| {
                f.error(
                    e,
                    format!(
                        "unknown experiment `{}` (expected exp1_kcurves, exp2_efficiency, vw_compare or all)",
                        e.value
                    ),
                )
            })?;
        }
        if let Some(e) = f.get("system") {
            if e.value.is_empty() {
                return Err(f.error(e, "empty path"));
            }
            let rel = PathBuf::from(&e.value);
            let full = match path.parent() {
                Some(dir) if rel.is_relative() => dir.join(&rel),
                _ => rel,
            };
            let text = std::fs::read_to_string(&full).map_err(|err| f.error(e, format!("{}: {err}", full.display())))?;
            c.system = SystemSpec::parse(&text, &full.display().to_string())?;
            if let Some(eigs) = &c.system.eigs {
                c.eigs = vec![eigs.clone()];
            }
            c.system_path = Some(full);
        }

        let positive = |key: &str, default: f64| -> Result<f64> {
            match f.get(key) {
                Some(e) => {
                    let v = f.number(e)?;
                    if v > 0.0 {
                        Ok(v)
                    } else {
                        Err(f.error(e, "must be positive"))
                    }
                }
                None => Ok(default),
            }
        };
        let count = |key: &str, default: usize, min: usize| -> Result<usize> {
            match f.get(key) {
                Some(e) => {
                    let v = f.usize_value(e)?;
                    if v >= min {
                        Ok(v)
                    } else {
                        Err(f.error(e, format!("must be at least {min}")))
                    }
                }
                None => Ok(default),
            }
        };

        c.window = positive("T", c.window)?;
        c.tol = positive("Tol", c.tol)?;
        c.subintervals = count("N", c.subintervals, 1)?;
        if let Some(e) = f.get("fine_log2") {
            c.fine_log2 = fine_log2(&f, e, f.usize_value(e)?)?;
        }
        if let Some(e) = f.get("gamma_tilde") {
            c.gamma_tilde = positive_list(&f, e)?;
        }
        if let Some(e) = f.get("eigs") {
            c.eigs = f.groups(e)?;
        }
        let m = c.system.system.state_dim();
        for group in &c.eigs {
            check_eigs(&f, f.get("eigs"), group, m)?;
        }
        if let Some(e) = f.get("N_sweep") {
            c.n_sweep = f.usize_list(e)?;
            if c.n_sweep.contains(&0) {
                return Err(f.error(e, "subinterval counts must be at least 1"));
            }
        }
        if let Some(e) = f.get("fine_log2_sweep") {
            c.fine_log2_sweep = f
                .usize_list(e)?
                .into_iter()
                .map(|v| fine_log2(&f, e, v))
                .collect::<Result<_>>()?;
        }
        c.sweep_gamma_tilde = positive("sweep_gamma_tilde", c.sweep_gamma_tilde)?;
        c.vw_windows = count("vw_windows", c.vw_windows, 1)?;
        c.vw_coarse_step = positive("vw_dT", c.vw_coarse_step)?;
        if let Some(e) = f.get("vw_eigs") {
            c.vw_eigs = f.list(e)?;
        }
        check_eigs(&f, f.get("vw_eigs"), &c.vw_eigs, m)?;
        c.vw_gamma_tilde = positive("vw_gamma_tilde", c.vw_gamma_tilde)?;
        c.n_cap = count("n_cap", c.n_cap, 2)?;
        c.constants_horizon = positive("constants_horizon", c.constants_horizon)?;
        if f.get("eps0_bound").is_some() {
            c.eps0_bound = Some(positive("eps0_bound", 1.0)?);
        }
        c.timing_repetitions = count("timing_repetitions", c.timing_repetitions, crate::timing::MIN_REPETITIONS)?;

        let vw_ratio = c.window / c.vw_coarse_step;
        if c.experiment.includes(ExperimentKind::VwCompare) && (vw_ratio.round() - vw_ratio).abs() > 1e-9 * vw_ratio {
            return Err(Error::Parse {
                path: shown.clone(),
                line: f.get("vw_dT").or(f.get("T")).map_or(0, |e| e.line),
                column: 1,
                message: format!("T = {} must be a whole multiple of vw_dT = {}", c.window, c.vw_coarse_step),
            });
        }
        Ok(c)
    }
}

fn fine_log2(f: &KvFile, e: &Entry, v: usize) -> Result<u32> {
    if v as u32 > MAX_FINE_LOG2 || v > MAX_FINE_LOG2 as usize {
        return Err(f.error(e, format!("fine_log2 {v} exceeds {MAX_FINE_LOG2}")));
    }
    Ok(v as u32)
}

fn positive_list(f: &KvFile, e: &Entry) -> Result<Vec<f64>> {
    let v = f.list(e)?;
    if v.iter().any(|x| !(*x > 0.0)) {
        return Err(f.error(e, "values must be positive"));
    }
    Ok(v)
}

fn check_eigs(f: &KvFile, e: Option<&Entry>, eigs: &[f64], m: usize) -> Result<()> {
    let fail = |msg: String| match e {
        Some(e) => f.error(e, msg),
        None => Error::Parse {
            path: f.path.to_string(),
            line: 0,
            column: 0,
            message: msg,
        },
    };
    if eigs.len() != m {
        return Err(fail(format!("expected {m} eigenvalues per set, got {}", eigs.len())));
    }
    if eigs.iter().any(|l| !(*l < 0.0)) {
        return Err(fail("eigenvalues must be negative".into()));
    }
    for (i, a) in eigs.iter().enumerate() {
        if eigs[..i].contains(a) {
            return Err(fail(format!("eigenvalue {a} is repeated")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(text, Path::new("test.cfg"))
    }

    #[test]
    fn empty_file_gives_benchmark_defaults() {
        let c = parse("").unwrap();
        assert_eq!(c.experiment, ExperimentKind::Exp1KCurves);
        assert_eq!(c.window, 1.0);
        assert_eq!(c.tol, 1e-8);
        assert_eq!(c.subintervals, 16);
        assert_eq!(c.fine_ratio(), 32);
        assert_eq!(c.eigs, vec![vec![-2.0, -4.0]]);
        assert_eq!(c.gamma_tilde, vec![1.0]);
    }

    #[test]
    fn three_point_sweep() {
        let c = parse("gamma_tilde = 1e-3, 1, 1e3").unwrap();
        assert_eq!(c.gamma_tilde, vec![1e-3, 1.0, 1e3]);
    }

    #[test]
    fn eigenvalue_groups() {
        let c = parse("eigs = -2,-4; -0.25,-0.5").unwrap();
        assert_eq!(c.eigs, vec![vec![-2.0, -4.0], vec![-0.25, -0.5]]);
    }

    #[test]
    fn errors_name_the_key_and_line() {
        let err = parse("N = 16\neigs = -2, x").unwrap_err();
        match &err {
            Error::Parse { line, message, .. } => {
                assert_eq!(*line, 2);
                assert!(message.contains("`eigs`"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("bogus = 1"), Err(Error::UnknownKey { ref key, .. }) if key == "bogus"));
        assert!(parse("eigs = -2, 4").is_err());
        assert!(parse("eigs = -2, -2").is_err());
        assert!(parse("eigs = -2").is_err());
        assert!(parse("experiment = exp9").is_err());
        assert!(parse("gamma_tilde = 1, 0").is_err());
        assert!(parse("timing_repetitions = 2").is_err());
        assert!(parse("fine_log2 = 40").is_err());
    }

    #[test]
    fn all_errors_are_config_errors() {
        for text in ["bogus = 1", "N = -1", "eigs = -2", "T 1", "system = /nonexistent/plant.sys"] {
            assert!(parse(text).unwrap_err().is_config_error(), "{text}");
        }
    }

    #[test]
    fn system_file_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("plant.sys"),
            "m = 2\nA = 0, 1, -1, -2\nB = 0, 1\nC = 0, 1\nxhat0 = 2, 1\neigs = -3, -5\ninput = 3\n",
        )
        .unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "system = plant.sys\n").unwrap();
        let c = ExperimentConfig::load(&cfg).unwrap();
        assert_eq!(c.eigs, vec![vec![-3.0, -5.0]]);
        assert!(c.system_path.unwrap().ends_with("plant.sys"));
    }
}
