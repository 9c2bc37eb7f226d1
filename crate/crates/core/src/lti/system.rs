use nalgebra::{DMatrix, DVector};

use super::Signal;
use crate::error::{Error, Result};

/// Relative singular-value threshold used to decide numerical rank.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Linear time-invariant plant `x' = A x + B u`, `y = C x`.
#[derive(Debug, Clone)]
pub struct LtiSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    input: Signal,
    x0_true: DVector<f64>,
}

impl LtiSystem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        input: Signal,
        x0_true: DVector<f64>,
    ) -> Result<Self> {
        let m = a.nrows();
        if m == 0 || a.ncols() != m {
            return Err(Error::Dimension(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != m || b.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "B must be {m}xp, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if c.ncols() != m || c.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "C must be qx{m}, got {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
        if b.ncols() >= m || c.nrows() >= m {
            return Err(Error::Dimension(format!(
                "need p, q < m (p = {}, q = {}, m = {m})",
                b.ncols(),
                c.nrows()
            )));
        }
        if input.channels() != b.ncols() {
            return Err(Error::Dimension(format!(
                "input has {} channels, B has {} columns",
                input.channels(),
                b.ncols()
            )));
        }
        if x0_true.len() != m {
            return Err(Error::Dimension(format!(
                "x0_true has length {}, expected {m}",
                x0_true.len()
            )));
        }
        Ok(Self {
            a,
            b,
            c,
            input,
            x0_true,
        })
    }

    /// The damped oscillator used throughout the experiments:
    /// `A = [[0, 1], [-1, -2]]`, `B = (0, 1)^T`, `C = [0, 1]`,
    /// `u(t) = 3 + 0.5 sin(0.75 t)`, `x(0) = 0`.
    pub fn benchmark_plant() -> Self {
        Self::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -2.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            Signal::sinusoid(3.0, 0.5, 0.75, 1),
            DVector::zeros(2),
        )
        .expect("benchmark plant is well formed")
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn input(&self) -> &Signal {
        &self.input
    }

    pub fn x0_true(&self) -> &DVector<f64> {
        &self.x0_true
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn with_input(mut self, input: Signal) -> Result<Self> {
        if input.channels() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input has {} channels, B has {} columns",
                input.channels(),
                self.input_dim()
            )));
        }
        self.input = input;
        Ok(self)
    }

    pub fn with_x0_true(mut self, x0: DVector<f64>) -> Result<Self> {
        if x0.len() != self.state_dim() {
            return Err(Error::Dimension(format!(
                "x0_true has length {}, expected {}",
                x0.len(),
                self.state_dim()
            )));
        }
        self.x0_true = x0;
        Ok(self)
    }

    /// Plant right-hand side `A x + B u(t)`.
    pub fn rhs(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * self.input.value(t)
    }

    /// `out = A x + B u(t)` without allocating; `u` is input-sized scratch.
    pub fn rhs_into(&self, t: f64, x: &DVector<f64>, u: &mut DVector<f64>, out: &mut DVector<f64>) {
        self.input.value_into(t, u.as_mut_slice());
        out.gemv(1.0, &self.a, x, 0.0);
        out.gemv(1.0, &self.b, u, 1.0);
    }

    /// Stacked matrix `[C; CA; ...; CA^{m-1}]` of size `(m q) x m`.
    pub fn observability_matrix(&self) -> DMatrix<f64> {
        let m = self.state_dim();
        let q = self.output_dim();
        let mut out = DMatrix::zeros(m * q, m);
        let mut block = self.c.clone();
        for i in 0..m {
            out.view_mut((i * q, 0), (q, m)).copy_from(&block);
            block = &block * &self.a;
        }
        out
    }

    /// Numerical rank of the observability matrix.
    pub fn observability_rank(&self) -> usize {
        numerical_rank(&self.observability_matrix())
    }

    pub fn is_observable(&self) -> bool {
        self.observability_rank() == self.state_dim()
    }
}

/// Counts singular values above `RANK_TOLERANCE * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * smax).count()
}
