//! Parareal over one window and the a priori bound table.
//!
//! Iterates are `U_n^k` for `n = 0..N-1`; the window end state is
//! `F(U_{N-1}^k)`. The correction is evaluated as `F + (G_new - G_old)` so
//! that identical coarse inputs cancel exactly and the first `k` jumps of
//! iteration `k` are bitwise zero.

#[cfg(feature = "parallel")]
use std::sync::Arc;
use web_time::Instant;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::propagators::{GridSpec, Propagator, PropagatorConstants};

/// Jumps within this many machine epsilons of the state magnitude are below
/// what the iterates can resolve and count as zero in the stop test.
pub const ROUNDOFF_ULPS: f64 = 16.0;

/// Worker pool for the fine sweeps. Results never depend on the count.
#[derive(Clone)]
pub struct Workers {
    count: usize,
    #[cfg(feature = "parallel")]
    pool: Option<Arc<rayon::ThreadPool>>,
}

impl std::fmt::Debug for Workers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Workers").field("count", &self.count).finish()
    }
}

impl Workers {
    pub fn sequential() -> Self {
        Self {
            count: 1,
            #[cfg(feature = "parallel")]
            pool: None,
        }
    }

    /// A pool of `count` threads. Without the `parallel` feature every
    /// count runs sequentially.
    pub fn new(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidParameter("worker count must be at least 1".into()));
        }
        if count == 1 {
            return Ok(Self::sequential());
        }
        #[cfg(feature = "parallel")]
        {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(count)
                .build()
                .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?;
            Ok(Self {
                count,
                pool: Some(Arc::new(pool)),
            })
        }
        #[cfg(not(feature = "parallel"))]
        Ok(Self { count })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if let Some(pool) = &self.pool {
            use rayon::prelude::*;
            return pool.install(|| (0..n).into_par_iter().map(&f).collect());
        }
        (0..n).map(f).collect()
    }
}

impl Default for Workers {
    fn default() -> Self {
        Self::sequential()
    }
}

/// When to stop iterating inside a window.
pub enum StopRule<'a> {
    /// Called with `(k, jump_norms)` for `k >= 1`; `jump_norms[n - 1]` is
    /// `||J_n^k||` for `n = 1..N-1`.
    Criterion(&'a (dyn Fn(usize, &[f64]) -> bool + Sync)),
    /// Exactly this many corrections (`1..=N`).
    Fixed(usize),
}

#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    /// Keep `U^k` for every `k`, not just the accepted one.
    pub record_iterates: bool,
}

#[derive(Debug, Clone)]
pub struct WindowSolution {
    /// Accepted iterates `U_n^k`, `n = 0..N-1`.
    pub nodes: Vec<DVector<f64>>,
    /// `F(U_{N-1}^k)`.
    pub end_state: DVector<f64>,
    /// Number of corrections performed.
    pub iterations: usize,
    /// `jump_norms[k - 1][n - 1] = ||J_n^k||` for `k = 1..=iterations`,
    /// with jumps under the roundoff floor set to zero. This is what the
    /// stop rule sees.
    pub jump_norms: Vec<Vec<f64>>,
    /// The same norms without the roundoff floor.
    pub raw_jump_norms: Vec<Vec<f64>>,
    /// `history[k]` is `U^k` when recording was requested.
    pub history: Vec<Vec<DVector<f64>>>,
    /// Wall-clock seconds of each parallel fine sweep.
    pub fine_sweep_s: Vec<f64>,
    /// Wall-clock seconds of each sequential coarse sweep (initial one first).
    pub coarse_sweep_s: Vec<f64>,
}

pub struct PararealSolver<'a> {
    fine: &'a dyn Propagator,
    coarse: &'a dyn Propagator,
    grid: GridSpec,
    workers: Workers,
}

impl<'a> PararealSolver<'a> {
    pub fn new(fine: &'a dyn Propagator, coarse: &'a dyn Propagator, grid: GridSpec, workers: Workers) -> Self {
        Self {
            fine,
            coarse,
            grid,
            workers,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// `U_n^0 = G(U_{n-1}^0)` for `n = 1..N-1`, with `U_0^0 = z0`.
    pub fn coarse_init(&self, t0: f64, z0: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        let n = self.grid.subintervals;
        let mut nodes = Vec::with_capacity(n);
        nodes.push(z0.clone());
        for i in 1..n {
            let next = self
                .coarse
                .propagate(self.grid.node(t0, i - 1), self.grid.node(t0, i), &nodes[i - 1])?;
            nodes.push(next);
        }
        Ok(nodes)
    }

    /// `F(U_{n-1})` for `n = 1..N`, in parallel.
    fn fine_sweep(&self, t0: f64, nodes: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        let grid = self.grid;
        let fine = self.fine;
        self.workers
            .map(nodes.len(), |i| {
                fine.propagate(grid.node(t0, i), grid.node(t0, i + 1), &nodes[i])
            })
            .into_iter()
            .collect()
    }

    /// One correction: `U_n^{k+1} = F(U_{n-1}^k) + (G(U_{n-1}^{k+1}) - G(U_{n-1}^k))`.
    /// `coarse_prev[n]` holds `G(U_{n-1}^k)` on entry and `G(U_{n-1}^{k+1})` on exit.
    pub fn parareal_iteration(
        &self,
        t0: f64,
        nodes: &[DVector<f64>],
        fine: &[DVector<f64>],
        coarse_prev: &mut [DVector<f64>],
    ) -> Result<Vec<DVector<f64>>> {
        let n = self.grid.subintervals;
        let mut next = Vec::with_capacity(n);
        next.push(nodes[0].clone());
        for i in 1..n {
            let g_new = self
                .coarse
                .propagate(self.grid.node(t0, i - 1), self.grid.node(t0, i), &next[i - 1])?;
            let delta = &g_new - &coarse_prev[i];
            next.push(&fine[i - 1] + delta);
            coarse_prev[i] = g_new;
        }
        Ok(next)
    }

    pub fn solve_window(
        &self,
        t0: f64,
        z0: &DVector<f64>,
        rule: StopRule<'_>,
        options: &SolveOptions,
    ) -> Result<WindowSolution> {
        let n = self.grid.subintervals;
        if let StopRule::Fixed(k) = rule {
            if k == 0 || k > n {
                return Err(Error::InvalidParameter(format!(
                    "fixed iteration count must be in 1..={n}, got {k}"
                )));
            }
        }

        let start = Instant::now();
        let mut nodes = self.coarse_init(t0, z0)?;
        let mut coarse_sweep_s = vec![start.elapsed().as_secs_f64()];
        // G(U_{n-1}^0) = U_n^0 for n >= 1; index 0 is unused.
        let mut coarse_prev = nodes.clone();

        let mut history = Vec::new();
        if options.record_iterates {
            history.push(nodes.clone());
        }
        let mut jump_norms = Vec::new();
        let mut raw_jump_norms = Vec::new();
        let mut fine_sweep_s = Vec::new();
        let mut k = 0;
        loop {
            let start = Instant::now();
            let fine = self.fine_sweep(t0, &nodes)?;
            fine_sweep_s.push(start.elapsed().as_secs_f64());

            if k >= 1 {
                let raw: Vec<f64> = (1..n).map(|i| (&nodes[i] - &fine[i - 1]).norm()).collect();
                let norms: Vec<f64> = raw
                    .iter()
                    .enumerate()
                    .map(|(i, &j)| {
                        let scale = nodes[i + 1].norm().max(fine[i].norm());
                        if j <= ROUNDOFF_ULPS * f64::EPSILON * scale {
                            0.0
                        } else {
                            j
                        }
                    })
                    .collect();
                let stop = match rule {
                    StopRule::Criterion(f) => f(k, &norms),
                    StopRule::Fixed(target) => k == target,
                };
                jump_norms.push(norms);
                raw_jump_norms.push(raw);
                if stop {
                    let end_state = fine[n - 1].clone();
                    return Ok(WindowSolution {
                        nodes,
                        end_state,
                        iterations: k,
                        jump_norms,
                        raw_jump_norms,
                        history,
                        fine_sweep_s,
                        coarse_sweep_s,
                    });
                }
                if k >= n {
                    return Err(Error::NoConvergence { n });
                }
            }

            let start = Instant::now();
            nodes = self.parareal_iteration(t0, &nodes, &fine, &mut coarse_prev)?;
            coarse_sweep_s.push(start.elapsed().as_secs_f64());
            if options.record_iterates {
                history.push(nodes.clone());
            }
            k += 1;
        }
    }
}

/// Sequential fine solution at the nodes `t_0..t_N` of one window.
pub fn sequential_fine(
    fine: &dyn Propagator,
    grid: &GridSpec,
    t0: f64,
    z0: &DVector<f64>,
) -> Result<Vec<DVector<f64>>> {
    let mut out = Vec::with_capacity(grid.subintervals + 1);
    out.push(z0.clone());
    for i in 1..=grid.subintervals {
        let next = fine.propagate(grid.node(t0, i - 1), grid.node(t0, i), &out[i - 1])?;
        out.push(next);
    }
    Ok(out)
}

/// A priori bounds `B_n^k` on `||U_n^k - u(t_n)||`, `0 <= k <= k_max`, `0 <= n <= n_max`.
#[derive(Debug, Clone)]
pub struct BoundTable {
    alpha: f64,
    beta: f64,
    eta: f64,
    n_max: usize,
    k_max: usize,
    values: Vec<f64>,
}

impl BoundTable {
    /// Fills the table with `B_n^0 = alpha + eta B_{n-1}^0`,
    /// `B_n^k = beta B_{n-1}^{k-1} + eta B_{n-1}^k` and `B_n^k = 0` for `n <= k`.
    pub fn new(alpha: f64, beta: f64, eta: f64, n_max: usize, k_max: usize) -> Result<Self> {
        if !(eta < 1.0) {
            return Err(Error::DivergentCoarse { eta });
        }
        if !(alpha >= 0.0 && beta >= 0.0 && eta >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bound constants must be nonnegative (alpha={alpha}, beta={beta}, eta={eta})"
            )));
        }
        let cols = n_max + 1;
        let mut values = vec![0.0; (k_max + 1) * cols];
        for n in 1..=n_max {
            values[n] = alpha + eta * values[n - 1];
        }
        for k in 1..=k_max {
            for n in (k + 1)..=n_max {
                values[k * cols + n] = beta * values[(k - 1) * cols + n - 1] + eta * values[k * cols + n - 1];
            }
        }
        Ok(Self {
            alpha,
            beta,
            eta,
            n_max,
            k_max,
            values,
        })
    }

    pub fn from_constants(c: &PropagatorConstants, n_max: usize, k_max: usize) -> Result<Self> {
        Self::new(c.alpha, c.beta, c.eta, n_max, k_max)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    /// `B_n^k`; zero for `n <= k` even beyond the stored range of `k`.
    pub fn get(&self, k: usize, n: usize) -> f64 {
        assert!(n <= self.n_max, "n = {n} beyond table width {}", self.n_max);
        if n <= k {
            return 0.0;
        }
        assert!(k <= self.k_max, "k = {k} beyond table depth {}", self.k_max);
        self.values[k * (self.n_max + 1) + n]
    }

    /// Row `B_0^k..B_{n_max}^k`.
    pub fn row(&self, k: usize) -> &[f64] {
        let cols = self.n_max + 1;
        &self.values[k * cols..(k + 1) * cols]
    }

    /// Jump bound `2 B_n^k`.
    pub fn jump_bound(&self, k: usize, n: usize) -> f64 {
        2.0 * self.get(k, n)
    }

    /// All jump bounds, indexed like the table.
    pub fn jump_bounds(&self) -> Vec<Vec<f64>> {
        (0..=self.k_max)
            .map(|k| self.row(k).iter().map(|b| 2.0 * b).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn closed_form(alpha: f64, beta: f64, eta: f64, k: usize, n: usize) -> f64 {
        if n <= k {
            return 0.0;
        }
        let mut sum = 0.0;
        let mut binom = 1.0; // C(k + i, k)
        for i in 0..(n - k) {
            if i > 0 {
                binom = binom * (k + i) as f64 / i as f64;
            }
            sum += binom * eta.powi(i as i32);
        }
        alpha * beta.powi(k as i32) * sum
    }

    /// Scalar linear test problem `u' = lam u + 1` with exact-flow fine and
    /// one-step implicit Euler coarse.
    type StepResult = Result<DVector<f64>>;

    #[allow(clippy::type_complexity)]
    fn scalar(lam: f64) -> (impl Fn(f64, f64, &DVector<f64>) -> StepResult + Sync, impl Fn(f64, f64, &DVector<f64>) -> StepResult + Sync) {
        let fine = move |a: f64, b: f64, z: &DVector<f64>| {
            let e = (lam * (b - a)).exp();
            Ok(z.map(|v| e * v + (e - 1.0) / lam))
        };
        let coarse = move |a: f64, b: f64, z: &DVector<f64>| {
            let h = b - a;
            Ok(z.map(|v| (v + h) / (1.0 - h * lam)))
        };
        (fine, coarse)
    }

    #[test]
    fn table_small_values() {
        let t = BoundTable::new(0.3, 0.2, 0.7, 8, 4).unwrap();
        assert_eq!(t.get(0, 1), 0.3);
        assert_eq!(t.jump_bound(0, 1), 0.6);
        let b31 = 0.3 * 0.2 * (1.0 + 2.0 * 0.7);
        assert!((t.get(1, 3) - b31).abs() <= 1e-14 * b31);
        for k in 0..=4 {
            for n in 0..=k.min(8) {
                assert_eq!(t.get(k, n), 0.0);
            }
        }
        assert!(matches!(BoundTable::new(1.0, 1.0, 1.0, 4, 2), Err(Error::DivergentCoarse { .. })));
    }

    #[test]
    fn table_matches_closed_form() {
        for &(a, b, e) in &[(1.0, 0.5, 0.9), (0.01, 0.02, 0.3), (2.0, 1.5, 0.99)] {
            let t = BoundTable::new(a, b, e, 32, 16).unwrap();
            for k in 0..=16 {
                for n in 0..=32 {
                    let c = closed_form(a, b, e, k, n);
                    assert!((t.get(k, n) - c).abs() <= 1e-12 * c.abs(), "k={k} n={n}");
                }
            }
        }
    }

    #[test]
    fn coarse_init_is_composition() {
        let (f, g) = scalar(-1.5);
        let grid = GridSpec::new(1.0, 4, 1).unwrap();
        let solver = PararealSolver::new(&f, &g, grid, Workers::sequential());
        let z0 = DVector::from_vec(vec![2.0]);
        let nodes = solver.coarse_init(0.0, &z0).unwrap();
        let mut v = 2.0;
        for (i, node) in nodes.iter().enumerate() {
            assert_eq!(node[0], v, "n={i}");
            v = (v + 0.25) / (1.0 + 0.25 * 1.5);
        }
        let one = GridSpec::new(1.0, 1, 1).unwrap();
        let solver = PararealSolver::new(&f, &g, one, Workers::sequential());
        assert_eq!(solver.coarse_init(0.0, &z0).unwrap().len(), 1);
    }

    #[test]
    fn finite_termination_and_zero_jumps() {
        let (f, g) = scalar(-2.0);
        let grid = GridSpec::new(1.0, 8, 1).unwrap();
        let solver = PararealSolver::new(&f, &g, grid, Workers::sequential());
        let z0 = DVector::from_vec(vec![1.0]);
        let sol = solver
            .solve_window(0.0, &z0, StopRule::Fixed(8), &SolveOptions::default())
            .unwrap();
        let seq = sequential_fine(&f, &grid, 0.0, &z0).unwrap();
        for (node, want) in sol.nodes.iter().zip(&seq) {
            assert_eq!(node, want);
        }
        assert_eq!(sol.end_state, seq[8]);
        for (k, norms) in sol.jump_norms.iter().enumerate() {
            let k = k + 1;
            for (i, j) in norms.iter().enumerate() {
                if i < k {
                    assert_eq!(*j, 0.0, "k={k} n={}", i + 1);
                }
            }
        }
    }

    #[test]
    fn stop_rule_variants() {
        let (f, g) = scalar(-2.0);
        let grid = GridSpec::new(1.0, 8, 1).unwrap();
        let solver = PararealSolver::new(&f, &g, grid, Workers::sequential());
        let z0 = DVector::from_vec(vec![1.0]);
        let always = |_: usize, _: &[f64]| true;
        let sol = solver
            .solve_window(0.0, &z0, StopRule::Criterion(&always), &SolveOptions::default())
            .unwrap();
        assert_eq!(sol.iterations, 1);
        let never_zero = |_: usize, j: &[f64]| j.iter().all(|&x| x == 0.0);
        let sol = solver
            .solve_window(0.0, &z0, StopRule::Criterion(&never_zero), &SolveOptions::default())
            .unwrap();
        assert!(sol.iterations <= 7);
        let never = |_: usize, _: &[f64]| false;
        assert!(matches!(
            solver.solve_window(0.0, &z0, StopRule::Criterion(&never), &SolveOptions::default()),
            Err(Error::NoConvergence { n: 8 })
        ));
        assert!(solver
            .solve_window(0.0, &z0, StopRule::Fixed(9), &SolveOptions::default())
            .is_err());
    }

    #[test]
    fn identical_propagators_converge_in_one_pass() {
        let (_, g) = scalar(-2.0);
        let grid = GridSpec::new(1.0, 6, 1).unwrap();
        let solver = PararealSolver::new(&g, &g, grid, Workers::sequential());
        let z0 = DVector::from_vec(vec![0.4]);
        let opts = SolveOptions { record_iterates: true };
        let sol = solver.solve_window(0.0, &z0, StopRule::Fixed(1), &opts).unwrap();
        assert_eq!(sol.history[1], sol.history[0]);
        assert!(sol.jump_norms[0].iter().all(|&j| j == 0.0));
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn worker_count_does_not_change_results() {
        let (f, g) = scalar(-0.7);
        let grid = GridSpec::new(2.0, 16, 1).unwrap();
        let z0 = DVector::from_vec(vec![3.0]);
        let run = |w: usize| {
            let solver = PararealSolver::new(&f, &g, grid, Workers::new(w).unwrap());
            solver
                .solve_window(0.0, &z0, StopRule::Fixed(5), &SolveOptions::default())
                .unwrap()
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(a.end_state, b.end_state);
        assert_eq!(a.jump_norms, b.jump_norms);
    }
}
