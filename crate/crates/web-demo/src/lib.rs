//! Browser bindings: observer error decay, per-window iteration counts with
//! the stop rule, and the variable-window schedule. Results are JSON strings.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use parobs::diamond::{run_diamond, DiamondConfig};
use parobs::lti::{ObserverDesign, SystemSpec};
use parobs::problem::ObserverProblem;
use parobs::propagators::GridSpec;
use parobs::variable_window::{run_variable_window, VwConfig};

#[derive(Serialize)]
pub struct Decay {
    pub t: Vec<f64>,
    pub error: Vec<f64>,
    pub envelope: Vec<f64>,
    pub gain: Vec<f64>,
    pub gamma: f64,
    pub mu: f64,
}

/// `||e^{(A-LC)t} e0||` for the benchmark plant against `gamma ||e0|| e^{-mu t}`.
pub fn decay(eigs: [f64; 2], t_end: f64, samples: usize) -> parobs::Result<Decay> {
    let spec = SystemSpec::benchmark();
    let design = ObserverDesign::place(&spec.system, &eigs, spec.xhat0.clone())?;
    let e0 = spec.system.x0_true() - spec.xhat0;
    let env = design.envelope();
    let samples = samples.clamp(2, 2000);
    let t: Vec<f64> = (0..samples).map(|i| t_end * i as f64 / (samples - 1) as f64).collect();
    Ok(Decay {
        error: t.iter().map(|&s| (design.transition_factor(s) * &e0).norm()).collect(),
        envelope: t.iter().map(|&s| env.at(s) * e0.norm()).collect(),
        gain: design.gain().iter().copied().collect(),
        gamma: env.gamma,
        mu: env.mu,
        t,
    })
}

#[derive(Serialize)]
pub struct KCurve {
    pub k_obs: Vec<usize>,
    pub k_pred: Vec<usize>,
    pub err_end: Vec<f64>,
    pub bound_end: Vec<f64>,
    pub ell_tol: usize,
    pub ell_par_tol: usize,
}

/// Windows of length 1 with `subintervals` coarse steps, run to the planned horizon.
pub fn kcurve(eigs: [f64; 2], gamma_tilde: f64, subintervals: usize, fine_log2: u32) -> parobs::Result<KCurve> {
    let spec = SystemSpec::benchmark();
    let grid = GridSpec::new(1.0, subintervals, 1usize << fine_log2.min(10))?;
    let problem = ObserverProblem::new(spec.system, &eigs, spec.xhat0, grid.fine_step(), 50.0)?;
    let trace = run_diamond(&problem, &DiamondConfig::new(grid, gamma_tilde))?;
    Ok(KCurve {
        k_obs: trace.k_obs(),
        k_pred: trace.k_pred(),
        err_end: trace.windows.iter().map(|w| w.err_end).collect(),
        bound_end: trace.windows.iter().map(|w| w.bound_end).collect(),
        ell_tol: trace.ell_tol,
        ell_par_tol: trace.ell_par_tol,
    })
}

#[derive(Serialize)]
pub struct Schedule {
    pub n_ell: Vec<usize>,
    pub t_end: Vec<f64>,
    pub cap_hit: Vec<bool>,
    pub err_end: Vec<f64>,
    pub bound_end: Vec<f64>,
}

pub fn schedule(eigs: [f64; 2], coarse_step: f64, gamma_tilde: f64, windows: usize) -> parobs::Result<Schedule> {
    let spec = SystemSpec::benchmark();
    let ratio = 32;
    let problem = ObserverProblem::new(spec.system, &eigs, spec.xhat0, coarse_step / ratio as f64, 50.0)?;
    let mut cfg = VwConfig::new(coarse_step, ratio, gamma_tilde, windows.min(200));
    cfg.n_cap = 2048;
    let trace = run_variable_window(&problem, &cfg)?;
    let w = &trace.windows;
    Ok(Schedule {
        n_ell: w.iter().map(|w| w.n_ell).collect(),
        t_end: w.iter().map(|w| w.t_end).collect(),
        cap_hit: w.iter().map(|w| w.cap_hit).collect(),
        err_end: w.iter().map(|w| w.err_end).collect(),
        bound_end: w.iter().map(|w| w.bound_end).collect(),
    })
}

fn to_js<T: Serialize>(r: parobs::Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn observer_decay(eig1: f64, eig2: f64, t_end: f64, samples: usize) -> Result<String, JsError> {
    to_js(decay([eig1, eig2], t_end, samples))
}

#[wasm_bindgen]
pub fn diamond_kcurve(eig1: f64, eig2: f64, gamma_tilde: f64, subintervals: usize, fine_log2: u32) -> Result<String, JsError> {
    to_js(kcurve([eig1, eig2], gamma_tilde, subintervals, fine_log2))
}

#[wasm_bindgen]
pub fn vw_schedule(eig1: f64, eig2: f64, coarse_step: f64, gamma_tilde: f64, windows: usize) -> Result<String, JsError> {
    to_js(schedule([eig1, eig2], coarse_step, gamma_tilde, windows))
}
