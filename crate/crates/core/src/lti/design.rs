use nalgebra::{DMatrix, DVector};

use super::LtiSystem;
use crate::error::{Error, Result};

/// `||e^{(A-LC) t}|| <= gamma * exp(-mu * t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayEnvelope {
    pub mu: f64,
    pub gamma: f64,
}

impl DecayEnvelope {
    pub fn new(mu: f64, gamma: f64) -> Self {
        Self { mu, gamma }
    }

    /// Envelope in eigenvector coordinates, where the flow is diagonal and
    /// the conditioning constant collapses to one.
    pub fn diagonal(mu: f64) -> Self {
        Self { mu, gamma: 1.0 }
    }

    pub fn at(&self, t: f64) -> f64 {
        self.gamma * (-self.mu * t).exp()
    }
}

/// A placed Luenberger observer together with its eigen-decomposition.
#[derive(Debug, Clone)]
pub struct ObserverDesign {
    gain: DMatrix<f64>,
    eigs: Vec<f64>,
    mu: f64,
    gamma: f64,
    v: DMatrix<f64>,
    v_inv: DMatrix<f64>,
    d: DMatrix<f64>,
    closed_loop: DMatrix<f64>,
    xhat0: DVector<f64>,
}

impl ObserverDesign {
    /// Places the spectrum of `A - L C` at `eigs` and computes the decay constants.
    pub fn place(sys: &LtiSystem, eigs: &[f64], xhat0: DVector<f64>) -> Result<Self> {
        let gain = ackermann_gain(sys, eigs)?;
        decay_constants(sys, gain, eigs, xhat0)
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    pub fn eigs(&self) -> &[f64] {
        &self.eigs
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `cond(V) = ||V|| ||V^{-1}||`.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn eigenvectors_inv(&self) -> &DMatrix<f64> {
        &self.v_inv
    }

    pub fn diagonal(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn closed_loop(&self) -> &DMatrix<f64> {
        &self.closed_loop
    }

    pub fn xhat0(&self) -> &DVector<f64> {
        &self.xhat0
    }

    pub fn state_dim(&self) -> usize {
        self.eigs.len()
    }

    pub fn envelope(&self) -> DecayEnvelope {
        DecayEnvelope::new(self.mu, self.gamma)
    }

    pub fn diagonal_envelope(&self) -> DecayEnvelope {
        DecayEnvelope::diagonal(self.mu)
    }

    pub fn to_diagonal(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.v_inv * x
    }

    pub fn from_diagonal(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.v * z
    }

    /// `e^{(A-LC) t} = V diag(e^{eig_i t}) V^{-1}`.
    pub fn transition_factor(&self, t: f64) -> DMatrix<f64> {
        let scaled = DMatrix::from_diagonal(&DVector::from_iterator(
            self.eigs.len(),
            self.eigs.iter().map(|e| (e * t).exp()),
        ));
        &self.v * scaled * &self.v_inv
    }

    /// Right-hand side of the observer in eigenvector coordinates,
    /// `D z + V^{-1} (B u(t) + L y)`.
    pub fn diagonalized_rhs(
        &self,
        sys: &LtiSystem,
        t: f64,
        z: &DVector<f64>,
        y: &DVector<f64>,
    ) -> DVector<f64> {
        &self.d * z + &self.v_inv * (sys.b() * sys.input().value(t) + &self.gain * y)
    }

    /// Undiagonalized observer right-hand side `(A - LC) x + B u(t) + L y`.
    pub fn observer_rhs(
        &self,
        sys: &LtiSystem,
        t: f64,
        x: &DVector<f64>,
        y: &DVector<f64>,
    ) -> DVector<f64> {
        &self.closed_loop * x + sys.b() * sys.input().value(t) + &self.gain * y
    }
}

fn validate_eigs(eigs: &[f64], m: usize) -> Result<()> {
    if eigs.len() != m {
        return Err(Error::InvalidEigenvalues(format!(
            "need {m} eigenvalues, got {}",
            eigs.len()
        )));
    }
    if let Some(e) = eigs.iter().find(|e| !e.is_finite() || **e >= 0.0) {
        return Err(Error::InvalidEigenvalues(format!(
            "eigenvalue {e} is not strictly negative"
        )));
    }
    for (i, a) in eigs.iter().enumerate() {
        for b in &eigs[i + 1..] {
            if (a - b).abs() <= 1e-10 * a.abs().max(b.abs()) {
                return Err(Error::InvalidEigenvalues(format!(
                    "eigenvalues {a} and {b} are not distinct"
                )));
            }
        }
    }
    Ok(())
}

/// Monic polynomial coefficients `[1, c_1, ..., c_m]` of `prod (s - r_i)`.
pub fn poly_from_roots(roots: &[f64]) -> Vec<f64> {
    let mut c = vec![1.0];
    for r in roots {
        let mut next = vec![0.0; c.len() + 1];
        for (i, ci) in c.iter().enumerate() {
            next[i] += ci;
            next[i + 1] -= r * ci;
        }
        c = next;
    }
    c
}

/// Ackermann's formula `L = phi(A) O^{-1} e_m` for single-output plants.
pub fn ackermann_gain(sys: &LtiSystem, eigs: &[f64]) -> Result<DMatrix<f64>> {
    let m = sys.state_dim();
    if sys.output_dim() != 1 {
        return Err(Error::UnsupportedShape(format!(
            "pole placement supports a single output, got q = {}",
            sys.output_dim()
        )));
    }
    validate_eigs(eigs, m)?;
    let rank = sys.observability_rank();
    if rank < m {
        return Err(Error::NotObservable { rank, m });
    }

    let coeffs = poly_from_roots(eigs);
    let a = sys.a();
    let ident = DMatrix::<f64>::identity(m, m);
    let mut phi = ident.clone();
    for c in &coeffs[1..] {
        phi = &phi * a + &ident * *c;
    }

    let mut e_m = DVector::zeros(m);
    e_m[m - 1] = 1.0;
    let w = sys
        .observability_matrix()
        .lu()
        .solve(&e_m)
        .ok_or(Error::NotObservable { rank, m })?;
    let l = phi * w;
    Ok(DMatrix::from_column_slice(m, 1, l.as_slice()))
}

/// Eigenvectors of `A - LC` by null-space solves against the known spectrum,
/// and the decay constants `mu = min |eig|`, `gamma = cond(V)`.
pub fn decay_constants(
    sys: &LtiSystem,
    gain: DMatrix<f64>,
    eigs: &[f64],
    xhat0: DVector<f64>,
) -> Result<ObserverDesign> {
    let m = sys.state_dim();
    validate_eigs(eigs, m)?;
    if gain.nrows() != m || gain.ncols() != sys.output_dim() {
        return Err(Error::Dimension(format!(
            "gain must be {m}x{}, got {}x{}",
            sys.output_dim(),
            gain.nrows(),
            gain.ncols()
        )));
    }
    if xhat0.len() != m {
        return Err(Error::Dimension(format!(
            "xhat0 has length {}, expected {m}",
            xhat0.len()
        )));
    }

    let closed_loop = sys.a() - &gain * sys.c();
    let scale = closed_loop.norm().max(eigs.iter().fold(0.0_f64, |s, e| s.max(e.abs())));
    let mut v = DMatrix::zeros(m, m);
    for (i, &eig) in eigs.iter().enumerate() {
        let shifted = &closed_loop - DMatrix::<f64>::identity(m, m) * eig;
        let col = null_vector(&shifted, scale).ok_or(Error::DegenerateEigenvector { eigenvalue: eig })?;
        v.set_column(i, &col);
    }

    let sv = v.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if smin <= 1e-10 * smax {
        return Err(Error::DegenerateEigenvector {
            eigenvalue: eigs[0],
        });
    }
    let v_inv = v
        .clone()
        .try_inverse()
        .ok_or(Error::DegenerateEigenvector { eigenvalue: eigs[0] })?;

    let mu = eigs.iter().fold(f64::INFINITY, |acc, e| acc.min(e.abs()));
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(eigs));
    Ok(ObserverDesign {
        gain,
        eigs: eigs.to_vec(),
        mu,
        gamma: smax / smin,
        v,
        v_inv,
        d,
        closed_loop,
        xhat0,
    })
}

/// Unit null vector of a rank-(m-1) matrix, sign fixed so that the first
/// nonzero component is positive.
fn null_vector(mat: &DMatrix<f64>, scale: f64) -> Option<DVector<f64>> {
    let m = mat.nrows();
    let svd = mat.clone().svd(false, true);
    let v_t = svd.v_t?;
    let sv = &svd.singular_values;
    let (imin, smin) = sv
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let tol = 1e-8 * scale.max(1.0);
    if smin > tol {
        return None;
    }
    // A second (near-)zero singular value means the null space is not one-dimensional.
    if m > 1 && sv.iter().enumerate().any(|(i, &s)| i != imin && s <= tol) {
        return None;
    }
    let mut col: DVector<f64> = v_t.row(imin).transpose();
    let norm = col.norm();
    col /= norm;
    if let Some(first) = col.iter().find(|c| c.abs() > 1e-12) {
        if *first < 0.0 {
            col = -col;
        }
    }
    Some(col)
}
