//! Backward Euler propagators for the observer in eigenvector coordinates,
//! and the constants that feed the Parareal error bound.
//!
//! In eigenvector coordinates the observer reads `z' = D z + g(t)` with
//! `g(t) = V^{-1}(B u(t) + L y(t))` and `D` diagonal, so every implicit
//! step is a componentwise divide.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lti::{ObserverDesign, ReferenceTrajectory};

/// Multiplier applied to the fine-solver error estimate when comparing
/// measured quantities against bounds that assume an exact fine solver.
pub const ALLOWANCE_FACTOR: f64 = 10.0;

/// Time grid of one window: `N` subintervals of length `dT = T / N`, each
/// tiled by `fine_ratio` fine steps. The coarse solver takes one step per
/// subinterval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub window: f64,
    pub subintervals: usize,
    pub fine_ratio: usize,
}

impl GridSpec {
    pub fn new(window: f64, subintervals: usize, fine_ratio: usize) -> Result<Self> {
        if !(window > 0.0) || !window.is_finite() {
            return Err(Error::InvalidParameter(format!("window length must be positive, got {window}")));
        }
        if subintervals == 0 || fine_ratio == 0 {
            return Err(Error::InvalidParameter(
                "subinterval count and fine ratio must be at least 1".into(),
            ));
        }
        Ok(Self {
            window,
            subintervals,
            fine_ratio,
        })
    }

    /// Builds a grid from an explicit fine step, which must tile `dT`.
    pub fn with_fine_step(window: f64, subintervals: usize, fine_step: f64) -> Result<Self> {
        let dt_coarse = window / subintervals as f64;
        let ratio = (dt_coarse / fine_step).round();
        if !(ratio >= 1.0) || ((ratio * fine_step - dt_coarse).abs() > 1e-9 * dt_coarse) {
            return Err(Error::StepMismatch {
                t_start: 0.0,
                t_end: dt_coarse,
                step: fine_step,
            });
        }
        Self::new(window, subintervals, ratio as usize)
    }

    pub fn coarse_step(&self) -> f64 {
        self.window / self.subintervals as f64
    }

    pub fn fine_step(&self) -> f64 {
        self.coarse_step() / self.fine_ratio as f64
    }

    /// `t_n` for a window starting at `t0`.
    pub fn node(&self, t0: f64, n: usize) -> f64 {
        t0 + n as f64 * self.coarse_step()
    }
}

/// Something that maps a state at `t_start` to a state at `t_end`.
pub trait Propagator: Sync {
    fn propagate(&self, t_start: f64, t_end: f64, z: &DVector<f64>) -> Result<DVector<f64>>;
}

impl<F> Propagator for F
where
    F: Fn(f64, f64, &DVector<f64>) -> Result<DVector<f64>> + Sync,
{
    fn propagate(&self, t_start: f64, t_end: f64, z: &DVector<f64>) -> Result<DVector<f64>> {
        self(t_start, t_end, z)
    }
}

/// The observer in eigenvector coordinates, driven by the reference output.
#[derive(Debug, Clone)]
pub struct DiagonalObserver {
    eigs: Vec<f64>,
    input_map: DMatrix<f64>,
    output_map: DMatrix<f64>,
    reference: Arc<ReferenceTrajectory>,
}

impl DiagonalObserver {
    pub fn new(design: &ObserverDesign, reference: Arc<ReferenceTrajectory>) -> Self {
        let sys = reference.system();
        Self {
            eigs: design.eigs().to_vec(),
            input_map: design.eigenvectors_inv() * sys.b(),
            output_map: design.eigenvectors_inv() * design.gain(),
            reference,
        }
    }

    pub fn eigs(&self) -> &[f64] {
        &self.eigs
    }

    pub fn dim(&self) -> usize {
        self.eigs.len()
    }

    pub fn reference(&self) -> &Arc<ReferenceTrajectory> {
        &self.reference
    }

    /// `||D||` (induced 2-norm of a diagonal matrix).
    pub fn diagonal_norm(&self) -> f64 {
        self.eigs.iter().fold(0.0, |acc: f64, e| acc.max(e.abs()))
    }

    /// Writes `g(t)` into `out`; `u` and `y` are scratch of length `p` and `q`.
    fn forcing_into(&self, t: f64, u: &mut [f64], y: &mut [f64], out: &mut [f64]) -> Result<()> {
        let sys = self.reference.system();
        sys.input().value_into(t, u);
        self.reference.output_into(t, y)?;
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, uj) in u.iter().enumerate() {
                acc += self.input_map[(i, j)] * uj;
            }
            for (j, yj) in y.iter().enumerate() {
                acc += self.output_map[(i, j)] * yj;
            }
            *o = acc;
        }
        Ok(())
    }

    /// Runs `f(u, y, g)` with scratch buffers, on the stack for small systems.
    fn with_scratch<R>(&self, f: impl FnOnce(&mut [f64], &mut [f64], &mut [f64]) -> R) -> R {
        let sys = self.reference.system();
        let (p, q, m) = (sys.input_dim(), sys.output_dim(), self.dim());
        let mut stack = [0.0; STACK_SCRATCH];
        let mut heap = Vec::new();
        let buf: &mut [f64] = if p + q + m <= STACK_SCRATCH {
            &mut stack[..p + q + m]
        } else {
            heap.resize(p + q + m, 0.0);
            &mut heap
        };
        let (u, rest) = buf.split_at_mut(p);
        let (y, g) = rest.split_at_mut(q);
        f(u, y, g)
    }

    /// `g(t) = V^{-1}(B u(t) + L y(t))`.
    pub fn forcing(&self, t: f64) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.dim());
        self.with_scratch(|u, y, _| self.forcing_into(t, u, y, out.as_mut_slice()))?;
        Ok(out)
    }

    /// `g'(t) = V^{-1}(B u'(t) + L y'(t))`; needs a closed-form input derivative.
    pub fn forcing_rate(&self, t: f64) -> Result<DVector<f64>> {
        let sys = self.reference.system();
        let du = sys.input().derivative(t).ok_or_else(|| {
            Error::InvalidParameter("input signal has no derivative; needed for the K constant".into())
        })?;
        let dy = self.reference.output_rate(t)?;
        Ok(&self.input_map * du + &self.output_map * dy)
    }

    /// Right-hand side `D z + g(t)`.
    pub fn rhs(&self, t: f64, z: &DVector<f64>) -> Result<DVector<f64>> {
        let mut g = self.forcing(t)?;
        for (gi, (zi, e)) in g.iter_mut().zip(z.iter().zip(&self.eigs)) {
            *gi += e * zi;
        }
        Ok(g)
    }
}

const STACK_SCRATCH: usize = 32;

/// Backward Euler with a fixed step; the step must tile every interval it
/// is asked to cross. Forcing is evaluated at the right endpoint of each step.
#[derive(Debug, Clone)]
pub struct BackwardEuler {
    observer: Arc<DiagonalObserver>,
    step: f64,
    resolvent: Vec<f64>,
}

impl BackwardEuler {
    pub fn new(observer: Arc<DiagonalObserver>, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::InvalidParameter(format!("step must be positive, got {step}")));
        }
        let resolvent = observer
            .eigs
            .iter()
            .map(|&e| {
                let denom = 1.0 - step * e;
                if denom == 0.0 {
                    Err(Error::SingularStep { eigenvalue: e, step })
                } else {
                    Ok(1.0 / denom)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            observer,
            step,
            resolvent,
        })
    }

    /// Fine propagator of a grid: `dT / dt` steps per subinterval.
    pub fn fine(observer: Arc<DiagonalObserver>, grid: &GridSpec) -> Result<Self> {
        Self::new(observer, grid.fine_step())
    }

    /// Coarse propagator of a grid: one step per subinterval.
    pub fn coarse(observer: Arc<DiagonalObserver>, grid: &GridSpec) -> Result<Self> {
        Self::new(observer, grid.coarse_step())
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Per-step amplification factors `(1 - step * eig_i)^{-1}`.
    pub fn resolvent(&self) -> &[f64] {
        &self.resolvent
    }

    fn steps_between(&self, t_start: f64, t_end: f64) -> Result<usize> {
        let span = t_end - t_start;
        let n = (span / self.step).round();
        if n < 0.0 || (n * self.step - span).abs() > 1e-9 * self.step.max(span.abs()) {
            return Err(Error::StepMismatch {
                t_start,
                t_end,
                step: self.step,
            });
        }
        Ok(n as usize)
    }
}

impl Propagator for BackwardEuler {
    fn propagate(&self, t_start: f64, t_end: f64, z: &DVector<f64>) -> Result<DVector<f64>> {
        let steps = self.steps_between(t_start, t_end)?;
        let mut out = z.clone();
        self.observer.with_scratch(|u, y, g| {
            for j in 1..=steps {
                let t = t_start + j as f64 * self.step;
                self.observer.forcing_into(t, u, y, g)?;
                for ((zi, gi), r) in out.iter_mut().zip(g.iter()).zip(&self.resolvent) {
                    *zi = (*zi + self.step * gi) * r;
                }
            }
            Ok::<_, Error>(())
        })?;
        Ok(out)
    }
}

/// How the local truncation bound handles the implicit resolvent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationForm {
    /// `alpha = dT^2 K (M + 1) / (2 (1 - dT K))`; requires `dT K < 1`.
    Neumann,
    /// `alpha = dT^2 K (M + 1) / (2 (1 + mu dT))`, using the exact norm of the
    /// diagonal resolvent `(I - dT D)^{-1}`; no step restriction.
    Resolvent,
}

impl TruncationForm {
    pub fn as_str(&self) -> &'static str {
        match self {
            TruncationForm::Neumann => "neumann",
            TruncationForm::Resolvent => "resolvent",
        }
    }
}

/// Whether to fall back to the resolvent form when `dT K >= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstantsPolicy {
    Strict,
    FallbackToResolvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PropagatorConstants {
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub m_sup: f64,
    pub k_sup: f64,
    pub form: TruncationForm,
    /// Estimated error of the fine solver against the exact flow over one subinterval.
    pub fine_error: f64,
}

impl PropagatorConstants {
    /// Additive slack for bound checks that treat the fine solver as exact.
    pub fn allowance(&self) -> f64 {
        ALLOWANCE_FACTOR * self.fine_error
    }
}

/// Sampling used to estimate the suprema `M` and `K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupremumSampling {
    pub samples: usize,
    pub safety: f64,
    pub radius_factor: f64,
}

impl Default for SupremumSampling {
    fn default() -> Self {
        Self {
            samples: 1000,
            safety: 1.1,
            radius_factor: 2.0,
        }
    }
}

/// Fine and coarse per-subinterval contraction factors `(1 - dt eig)^{-r}`
/// and `(1 - dT eig)^{-1}` for each eigenvalue.
pub fn resolvent_powers(eigs: &[f64], grid: &GridSpec) -> (Vec<f64>, Vec<f64>) {
    let dt = grid.fine_step();
    let dtc = grid.coarse_step();
    let fine = eigs
        .iter()
        .map(|e| (1.0 - dt * e).powi(-(grid.fine_ratio as i32)))
        .collect();
    let coarse = eigs.iter().map(|e| 1.0 / (1.0 - dtc * e)).collect();
    (fine, coarse)
}

/// `beta = ||R_f - R_g||` and `eta = max(||R_f||, ||R_g||)` for diagonal resolvents.
pub fn lipschitz_constants(eigs: &[f64], grid: &GridSpec) -> (f64, f64) {
    let (fine, coarse) = resolvent_powers(eigs, grid);
    let beta = fine
        .iter()
        .zip(&coarse)
        .fold(0.0_f64, |acc, (f, c)| acc.max((f - c).abs()));
    let eta = fine
        .iter()
        .chain(&coarse)
        .fold(0.0_f64, |acc, r| acc.max(r.abs()));
    (beta, eta)
}

/// Constants with the Neumann truncation bound; fails if `dT K >= 1`.
pub fn compute_constants(
    observer: &DiagonalObserver,
    design: &ObserverDesign,
    grid: &GridSpec,
    horizon: f64,
) -> Result<PropagatorConstants> {
    compute_constants_with(
        observer,
        design,
        grid,
        horizon,
        ConstantsPolicy::Strict,
        SupremumSampling::default(),
    )
}

pub fn compute_constants_with(
    observer: &DiagonalObserver,
    design: &ObserverDesign,
    grid: &GridSpec,
    horizon: f64,
    policy: ConstantsPolicy,
    sampling: SupremumSampling,
) -> Result<PropagatorConstants> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    let (beta, eta) = lipschitz_constants(observer.eigs(), grid);
    if !(eta < 1.0) {
        return Err(Error::DivergentCoarse { eta });
    }

    let (m_sup, k_sup) = suprema(observer, design, horizon, sampling)?;
    let dtc = grid.coarse_step();
    let product = dtc * k_sup;
    let numerator = dtc * dtc * k_sup * (m_sup + 1.0) / 2.0;
    let (alpha, form) = if product < 1.0 {
        (numerator / (1.0 - product), TruncationForm::Neumann)
    } else {
        match policy {
            ConstantsPolicy::Strict => return Err(Error::StabilityViolation { product }),
            ConstantsPolicy::FallbackToResolvent => {
                (numerator / (1.0 + design.mu() * dtc), TruncationForm::Resolvent)
            }
        }
    };
    // Each fine step leaves at most dt^2/2 * K(M+1); dT/dt of them per subinterval.
    let fine_error = dtc * grid.fine_step() * k_sup * (m_sup + 1.0) / 2.0;
    Ok(PropagatorConstants {
        alpha,
        beta,
        eta,
        m_sup,
        k_sup,
        form,
        fine_error,
    })
}

/// Estimates `M = sup ||D z + g(t)||` over a ball around the trajectories and
/// `K = max(||D||, sup ||g'(t)||)` on `samples` uniform times in `[0, horizon]`.
fn suprema(
    observer: &DiagonalObserver,
    design: &ObserverDesign,
    horizon: f64,
    sampling: SupremumSampling,
) -> Result<(f64, f64)> {
    let reference = observer.reference();
    let horizon = horizon.min(reference.horizon());
    let n = sampling.samples.max(2);
    let times: Vec<f64> = (0..n).map(|i| horizon * i as f64 / (n - 1) as f64).collect();

    let z_ref0 = design.to_diagonal(&reference.state(0.0)?);
    let zhat0 = design.to_diagonal(design.xhat0());
    let offset0 = &z_ref0 - &zhat0;
    let norm_d = observer.diagonal_norm();

    let mut radius: f64 = 0.0;
    let mut g_sup: f64 = 0.0;
    let mut dg_sup: f64 = 0.0;
    for &t in &times {
        let z_ref = design.to_diagonal(&reference.state(t)?);
        let decay = DVector::from_iterator(
            offset0.len(),
            offset0.iter().zip(observer.eigs()).map(|(o, e)| o * (e * t).exp()),
        );
        // Continuous observer trajectory: reference minus the decaying error.
        let z_obs = &z_ref - decay;
        radius = radius.max(z_ref.norm()).max(z_obs.norm());
        g_sup = g_sup.max(observer.forcing(t)?.norm());
        dg_sup = dg_sup.max(observer.forcing_rate(t)?.norm());
    }
    let radius = sampling.radius_factor * radius;
    let m_sup = sampling.safety * (norm_d * radius + g_sup);
    let k_sup = norm_d.max(sampling.safety * dg_sup);
    Ok((m_sup, k_sup))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::{LtiSystem, Signal};

    fn diag_observer(eigs: &[f64], input: Signal, x0: Vec<f64>, horizon: f64) -> (Arc<DiagonalObserver>, ObserverDesign) {
        // A already diagonal with L = 0, so A - LC = A and V = I.
        let m = eigs.len();
        let sys = LtiSystem::new(
            DMatrix::from_diagonal(&DVector::from_column_slice(eigs)),
            DMatrix::from_element(m, 1, 1.0),
            DMatrix::from_element(1, m, 1.0),
            input,
            DVector::from_vec(x0),
        )
        .unwrap();
        let design =
            crate::lti::decay_constants(&sys, DMatrix::zeros(m, 1), eigs, DVector::zeros(m)).unwrap();
        let reference = Arc::new(ReferenceTrajectory::integrate(&sys, horizon, 1e-3).unwrap());
        (Arc::new(DiagonalObserver::new(&design, reference)), design)
    }

    #[test]
    fn scalar_implicit_step() {
        let (obs, _) = diag_observer(&[-1.0, -2.0], Signal::zero(1), vec![0.0, 0.0], 1.0);
        let be = BackwardEuler::new(obs, 0.1).unwrap();
        let z = be.propagate(0.0, 0.1, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!((z[0] - 1.0 / 1.1).abs() < 1e-15);
        assert_eq!(z[1], 0.0);
        let z = be.propagate(0.0, 0.5, &DVector::zeros(2)).unwrap();
        assert_eq!(z, DVector::zeros(2));
    }

    #[test]
    fn coarse_closed_form() {
        let (obs, _) = diag_observer(&[-2.0, -4.0], Signal::zero(1), vec![0.0, 0.0], 1.0);
        let grid = GridSpec::new(1.0, 16, 32).unwrap();
        let g = BackwardEuler::coarse(obs.clone(), &grid).unwrap();
        let z = g.propagate(0.0, 1.0 / 16.0, &DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert!((z[0] - 1.0 / 1.125).abs() < 1e-15);
        assert!((z[1] - 1.0 / 1.25).abs() < 1e-15);

        let same = GridSpec::new(1.0, 16, 1).unwrap();
        let f = BackwardEuler::fine(obs.clone(), &same).unwrap();
        let z0 = DVector::from_vec(vec![0.3, -0.7]);
        assert_eq!(
            f.propagate(0.25, 0.3125, &z0).unwrap(),
            g.propagate(0.25, 0.3125, &z0).unwrap()
        );
    }

    #[test]
    fn step_must_tile() {
        let (obs, _) = diag_observer(&[-1.0, -2.0], Signal::zero(1), vec![0.0, 0.0], 1.0);
        let be = BackwardEuler::new(obs, 0.1).unwrap();
        assert!(matches!(
            be.propagate(0.0, 0.15, &DVector::zeros(2)),
            Err(Error::StepMismatch { .. })
        ));
        assert!(GridSpec::with_fine_step(1.0, 16, 1.0 / 16.0 / 3.5).is_err());
        assert_eq!(GridSpec::with_fine_step(1.0, 16, 1.0 / 512.0).unwrap().fine_ratio, 32);
    }

    #[test]
    fn singular_step_guard() {
        let (obs, _) = diag_observer(&[-1.0, -2.0], Signal::zero(1), vec![0.0, 0.0], 1.0);
        // 1 - dt * (-1) cannot vanish for positive dt; a negative step is rejected outright.
        assert!(BackwardEuler::new(obs.clone(), -1.0).is_err());
        let mut odd = (*obs).clone();
        odd.eigs = vec![2.0, -1.0];
        assert!(matches!(
            BackwardEuler::new(Arc::new(odd), 0.5),
            Err(Error::SingularStep { .. })
        ));
    }

    #[test]
    fn eta_for_fast_poles() {
        let grid = GridSpec::new(1.0, 16, 32).unwrap();
        let (fine, coarse) = resolvent_powers(&[-2.0, -4.0], &grid);
        assert!((coarse[0] - 1.0 / 1.125).abs() < 1e-15);
        assert!((fine[0] - 0.882_708).abs() < 1e-5, "{}", fine[0]);
        assert!(fine[0] < coarse[0]);
        let (beta, eta) = lipschitz_constants(&[-2.0, -4.0], &grid);
        assert!((eta - 1.0 / 1.125).abs() < 1e-15);
        assert!(beta > 0.0);

        let same = GridSpec::new(1.0, 16, 1).unwrap();
        assert_eq!(lipschitz_constants(&[-2.0, -4.0], &same).0, 0.0);
    }

    #[test]
    fn constant_data_gives_k_equal_norm_d() {
        let (obs, design) = diag_observer(&[-2.0, -4.0], Signal::constant(1.0, 1), vec![0.5, 0.25], 5.0);
        let grid = GridSpec::new(1.0, 16, 32).unwrap();
        let c = compute_constants(&obs, &design, &grid, 5.0).unwrap();
        assert_eq!(c.form, TruncationForm::Neumann);
        // y' = C(Ax + Bu) = -2*0.5 - 4*0.25 + 2 = 0: steady state, zero data derivative.
        assert!((c.k_sup - 4.0).abs() < 1e-9, "{}", c.k_sup);
    }

    #[test]
    fn stability_violation_and_fallback() {
        let (obs, design) = diag_observer(&[-20.0, -40.0], Signal::constant(1.0, 1), vec![0.0, 0.0], 2.0);
        let grid = GridSpec::new(1.0, 16, 32).unwrap();
        assert!(matches!(
            compute_constants(&obs, &design, &grid, 2.0),
            Err(Error::StabilityViolation { .. })
        ));
        let c = compute_constants_with(
            &obs,
            &design,
            &grid,
            2.0,
            ConstantsPolicy::FallbackToResolvent,
            SupremumSampling::default(),
        )
        .unwrap();
        assert_eq!(c.form, TruncationForm::Resolvent);
        assert!(c.alpha > 0.0 && c.alpha.is_finite());
    }
}
