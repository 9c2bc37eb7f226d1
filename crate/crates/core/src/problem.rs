//! A plant, its placed observer and the dense reference data that drives it.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::Result;
use crate::lti::{LtiSystem, ObserverDesign, ReferenceTrajectory};
use crate::propagators::{
    compute_constants_with, BackwardEuler, ConstantsPolicy, DiagonalObserver, GridSpec, Propagator,
    PropagatorConstants, SupremumSampling,
};

/// Reference samples per fine step.
pub const REFERENCE_REFINEMENT: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct ObserverProblem {
    system: LtiSystem,
    design: ObserverDesign,
    reference: Arc<ReferenceTrajectory>,
    observer: Arc<DiagonalObserver>,
}

impl ObserverProblem {
    /// Places the observer poles at `eigs` and integrates the plant over
    /// `[0, horizon]` with step `fine_step / 10`.
    pub fn new(system: LtiSystem, eigs: &[f64], xhat0: DVector<f64>, fine_step: f64, horizon: f64) -> Result<Self> {
        let design = ObserverDesign::place(&system, eigs, xhat0)?;
        let reference = Arc::new(ReferenceTrajectory::integrate(
            &system,
            horizon,
            fine_step / REFERENCE_REFINEMENT,
        )?);
        let observer = Arc::new(DiagonalObserver::new(&design, reference.clone()));
        Ok(Self {
            system,
            design,
            reference,
            observer,
        })
    }

    /// Reuses an already integrated plant trajectory; its step sets the
    /// forcing resolution.
    pub fn with_reference(
        system: LtiSystem,
        eigs: &[f64],
        xhat0: DVector<f64>,
        reference: Arc<ReferenceTrajectory>,
    ) -> Result<Self> {
        let design = ObserverDesign::place(&system, eigs, xhat0)?;
        let observer = Arc::new(DiagonalObserver::new(&design, reference.clone()));
        Ok(Self {
            system,
            design,
            reference,
            observer,
        })
    }

    /// Same plant and design with the reference covering at least `horizon`.
    pub fn extended(&self, horizon: f64) -> Result<Self> {
        if horizon <= self.reference.horizon() {
            return Ok(self.clone());
        }
        let reference = Arc::new(ReferenceTrajectory::integrate(&self.system, horizon, self.reference.step())?);
        let observer = Arc::new(DiagonalObserver::new(&self.design, reference.clone()));
        Ok(Self {
            system: self.system.clone(),
            design: self.design.clone(),
            reference,
            observer,
        })
    }

    pub fn system(&self) -> &LtiSystem {
        &self.system
    }

    pub fn design(&self) -> &ObserverDesign {
        &self.design
    }

    pub fn reference(&self) -> &Arc<ReferenceTrajectory> {
        &self.reference
    }

    pub fn observer(&self) -> &Arc<DiagonalObserver> {
        &self.observer
    }

    pub fn horizon(&self) -> f64 {
        self.reference.horizon()
    }

    pub fn fine(&self, grid: &GridSpec) -> Result<BackwardEuler> {
        BackwardEuler::fine(self.observer.clone(), grid)
    }

    pub fn coarse(&self, grid: &GridSpec) -> Result<BackwardEuler> {
        BackwardEuler::coarse(self.observer.clone(), grid)
    }

    pub fn constants(&self, grid: &GridSpec, horizon: f64, policy: ConstantsPolicy) -> Result<PropagatorConstants> {
        compute_constants_with(
            &self.observer,
            &self.design,
            grid,
            horizon.min(self.horizon()),
            policy,
            SupremumSampling::default(),
        )
    }

    /// Observer start in eigenvector coordinates.
    pub fn observer_start(&self) -> DVector<f64> {
        self.design.to_diagonal(self.design.xhat0())
    }

    /// True plant start in eigenvector coordinates.
    pub fn truth_start(&self) -> DVector<f64> {
        self.design.to_diagonal(self.system.x0_true())
    }

    /// `||x(0) - xhat(0)||`.
    pub fn initial_error(&self) -> f64 {
        (self.system.x0_true() - self.design.xhat0()).norm()
    }

    /// `||V^{-1}(x(0) - xhat(0))||`.
    pub fn initial_error_diagonal(&self) -> f64 {
        (self.truth_start() - self.observer_start()).norm()
    }
}

/// Sequential fine observer started from the true state: the discrete
/// ground truth that a converged observer approaches. Returns the state at
/// `boundaries[1..]`, starting from `z0` at `boundaries[0]`.
pub fn discrete_truth(fine: &dyn Propagator, z0: &DVector<f64>, boundaries: &[f64]) -> Result<Vec<DVector<f64>>> {
    let mut z = z0.clone();
    let mut out = Vec::with_capacity(boundaries.len().saturating_sub(1));
    for w in boundaries.windows(2) {
        z = fine.propagate(w[0], w[1], &z)?;
        out.push(z.clone());
    }
    Ok(out)
}
