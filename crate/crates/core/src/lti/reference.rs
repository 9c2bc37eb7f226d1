//! Dense ground-truth trajectory of the plant.
//!
//! The plant is integrated with classical RK4 on a uniform grid; values at
//! arbitrary times come from cubic Hermite interpolation using the exact
//! derivative `A x + B u(t)` at the two bracketing samples. With a grid step
//! `h` the interpolation error is `O(h^4 |x''''|)`, which for the default
//! grid (`h = dt_fine / 10`) sits far below the `1e-8` assimilation target.

use nalgebra::{DMatrix, DVector};

use super::LtiSystem;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ReferenceTrajectory {
    step: f64,
    horizon: f64,
    m: usize,
    q: usize,
    /// Row-major samples: `states[k * m .. (k + 1) * m]` is `x(k h)`.
    states: Vec<f64>,
    outputs: Vec<f64>,
    output_rates: Vec<f64>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    sys: LtiSystem,
}

impl ReferenceTrajectory {
    /// Integrates from `x0_true` over `[0, horizon]` with RK4 step `step`.
    pub fn integrate(sys: &LtiSystem, horizon: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(horizon > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "reference needs positive step and horizon, got step={step}, horizon={horizon}"
            )));
        }
        let n = (horizon / step).ceil() as usize;
        let horizon = n as f64 * step;
        let m = sys.state_dim();
        let q = sys.output_dim();
        let mut states = Vec::with_capacity((n + 1) * m);
        let mut outputs = Vec::with_capacity((n + 1) * q);
        let mut output_rates = Vec::with_capacity((n + 1) * q);

        let mut x = sys.x0_true().clone();
        let mut u = DVector::zeros(sys.input_dim());
        let mut y = DVector::zeros(q);
        let [mut k1, mut k2, mut k3, mut k4, mut probe] = std::array::from_fn(|_| DVector::zeros(m));
        let mut push = |t: f64, x: &DVector<f64>, dx: &mut DVector<f64>, u: &mut DVector<f64>, y: &mut DVector<f64>| {
            states.extend_from_slice(x.as_slice());
            y.gemv(1.0, sys.c(), x, 0.0);
            outputs.extend_from_slice(y.as_slice());
            sys.rhs_into(t, x, u, dx);
            y.gemv(1.0, sys.c(), dx, 0.0);
            output_rates.extend_from_slice(y.as_slice());
        };
        push(0.0, &x, &mut k1, &mut u, &mut y);
        for k in 0..n {
            let t = k as f64 * step;
            sys.rhs_into(t, &x, &mut u, &mut k1);
            probe.copy_from(&x);
            probe.axpy(0.5 * step, &k1, 1.0);
            sys.rhs_into(t + 0.5 * step, &probe, &mut u, &mut k2);
            probe.copy_from(&x);
            probe.axpy(0.5 * step, &k2, 1.0);
            sys.rhs_into(t + 0.5 * step, &probe, &mut u, &mut k3);
            probe.copy_from(&x);
            probe.axpy(step, &k3, 1.0);
            sys.rhs_into(t + step, &probe, &mut u, &mut k4);
            k2 += &k3;
            k1.axpy(2.0, &k2, 1.0);
            k1 += &k4;
            x.axpy(step / 6.0, &k1, 1.0);
            push((k + 1) as f64 * step, &x, &mut k4, &mut u, &mut y);
        }

        Ok(Self {
            step,
            horizon,
            m,
            q,
            states,
            outputs,
            output_rates,
            a: sys.a().clone(),
            b: sys.b().clone(),
            c: sys.c().clone(),
            sys: sys.clone(),
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn system(&self) -> &LtiSystem {
        &self.sys
    }

    pub fn sample_count(&self) -> usize {
        self.states.len() / self.m
    }

    pub fn sample(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.states[k * self.m..(k + 1) * self.m])
    }

    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        let slack = 1e-9 * self.step;
        if !(t >= -slack && t <= self.horizon + slack) {
            return Err(Error::OutOfHorizon {
                t,
                horizon: self.horizon,
            });
        }
        let last = self.sample_count() - 1;
        let pos = (t / self.step).max(0.0);
        let i = (pos.floor() as usize).min(last - 1);
        let s = (pos - i as f64).clamp(0.0, 1.0);
        Ok((i, s))
    }

    /// Cubic Hermite interpolation of `x` at `t`.
    pub fn state(&self, t: f64) -> Result<DVector<f64>> {
        let (i, s) = self.locate(t)?;
        let x0 = self.sample(i);
        let x1 = self.sample(i + 1);
        let t0 = i as f64 * self.step;
        let f0 = &self.a * &x0 + &self.b * self.sys.input().value(t0);
        let f1 = &self.a * &x1 + &self.b * self.sys.input().value(t0 + self.step);
        let (h00, h10, h01, h11) = hermite_basis(s);
        Ok(x0 * h00 + f0 * (h10 * self.step) + x1 * h01 + f1 * (h11 * self.step))
    }

    /// `y(t) = C x(t)`, interpolated from stored output samples and rates.
    pub fn output_into(&self, t: f64, out: &mut [f64]) -> Result<()> {
        let (i, s) = self.locate(t)?;
        let (h00, h10, h01, h11) = hermite_basis(s);
        let q = self.q;
        for (j, o) in out.iter_mut().enumerate().take(q) {
            let y0 = self.outputs[i * q + j];
            let y1 = self.outputs[(i + 1) * q + j];
            let d0 = self.output_rates[i * q + j];
            let d1 = self.output_rates[(i + 1) * q + j];
            *o = h00 * y0 + h10 * self.step * d0 + h01 * y1 + h11 * self.step * d1;
        }
        Ok(())
    }

    pub fn output(&self, t: f64) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.q);
        self.output_into(t, out.as_mut_slice())?;
        Ok(out)
    }

    /// `y'(t) = C (A x(t) + B u(t))`, exact given the interpolated state.
    pub fn output_rate(&self, t: f64) -> Result<DVector<f64>> {
        let x = self.state(t)?;
        Ok(&self.c * (&self.a * x + &self.b * self.sys.input().value(t)))
    }
}

fn hermite_basis(s: f64) -> (f64, f64, f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    (
        2.0 * s3 - 3.0 * s2 + 1.0,
        s3 - 2.0 * s2 + s,
        -2.0 * s3 + 3.0 * s2,
        s3 - s2,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::Signal;

    #[test]
    fn zero_equilibrium() {
        let sys = LtiSystem::benchmark_plant().with_input(Signal::zero(1)).unwrap();
        let r = ReferenceTrajectory::integrate(&sys, 2.0, 0.01).unwrap();
        assert_eq!(r.state(1.234).unwrap().amax(), 0.0);
        assert_eq!(r.output(0.5).unwrap()[0], 0.0);
    }

    #[test]
    fn decoupled_decay() {
        let sys = LtiSystem::new(
            DMatrix::from_row_slice(3, 3, &[-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0]),
            DMatrix::from_row_slice(3, 1, &[1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
            Signal::zero(1),
            DVector::from_vec(vec![1.0, 1.0, 1.0]),
        )
        .unwrap();
        let r = ReferenceTrajectory::integrate(&sys, 3.0, 1e-3).unwrap();
        for &t in &[0.0, 0.1234, 1.0, 2.5, 3.0] {
            let x = r.state(t).unwrap();
            for i in 0..3 {
                assert!((x[i] - (-t).exp()).abs() < 1e-12, "t={t}");
            }
        }
    }

    #[test]
    fn out_of_horizon() {
        let sys = LtiSystem::benchmark_plant();
        let r = ReferenceTrajectory::integrate(&sys, 1.0, 0.01).unwrap();
        assert!(matches!(r.state(1.5), Err(Error::OutOfHorizon { .. })));
        assert!(matches!(r.output(-0.1), Err(Error::OutOfHorizon { .. })));
        assert!(r.state(1.0).is_ok());
    }

    #[test]
    fn output_matches_state_projection() {
        let sys = LtiSystem::benchmark_plant();
        let r = ReferenceTrajectory::integrate(&sys, 4.0, 1e-3).unwrap();
        for &t in &[0.0, 0.37, 1.111, 3.9] {
            let y = r.output(t).unwrap()[0];
            let x = r.state(t).unwrap();
            assert!((y - x[1]).abs() < 1e-12);
        }
        // y'(0) = u(0) since x(0) = 0.
        assert!((r.output_rate(0.0).unwrap()[0] - 3.0).abs() < 1e-12);
    }
}
