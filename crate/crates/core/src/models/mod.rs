//! Concrete kinetic models parameterised by the scalar random input.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::flux::{Boundary, DriftDiffusion};
use crate::mesh::{Density, VelocityGrid};
use crate::solver::{FluxScheme, FpOperator};

mod linear_fp;
mod opinion;
pub mod swarming;
pub mod transport;
mod wealth;

pub use linear_fp::{EquilibriumRule, LinearFp};
pub use opinion::{Interaction, Opinion};
pub use swarming::{Kernel, Swarming};
pub use transport::{strang_split_step, transport_step, PhaseDensity, SpaceGrid};
pub use wealth::{MeanRule, Wealth};

/// A Fokker–Planck model whose coefficients and datum depend on the random input `theta`.
pub trait Model: Send + Sync {
    fn name(&self) -> &'static str;

    /// Velocity interval the model lives on (or its truncation).
    fn domain(&self) -> (f64, f64);

    fn boundary(&self) -> Boundary {
        Boundary::NoFlux
    }

    fn drift_diffusion(&self, theta: f64, grid: &Arc<VelocityGrid>) -> Result<Arc<dyn DriftDiffusion>>;

    fn initial_datum(&self, theta: f64, grid: &Arc<VelocityGrid>) -> Result<Density>;

    /// Closed-form steady state normalised to unit mass on the grid, when one is known.
    fn steady_state(&self, _theta: f64, _grid: &Arc<VelocityGrid>) -> Option<Result<Density>> {
        None
    }

    /// Equilibrium sharing the conserved quantities of `datum`.
    fn equilibrium_for(&self, theta: f64, datum: &Density) -> Result<Density> {
        let ss = self
            .steady_state(theta, datum.grid())
            .ok_or_else(|| Error::Unsupported(format!("{} has no steady-state constructor", self.name())))??;
        let m = datum.mass();
        Ok(ss.with_values(ss.values().iter().map(|v| v * m).collect()))
    }

    /// Diffusion strength used by time-step rules (`sigma2`), if the model has one.
    fn diffusion_scale(&self) -> Option<f64> {
        None
    }
}

/// Shared handle to a model.
pub type ModelSpec = Arc<dyn Model>;

/// Operator, datum and (if needed or available) steady state at one value of the input.
pub struct NodeProblem {
    pub theta: f64,
    pub operator: FpOperator,
    pub datum: Density,
    pub steady_state: Option<Density>,
}

impl NodeProblem {
    pub fn new(model: &dyn Model, theta: f64, grid: &Arc<VelocityGrid>, scheme: FluxScheme) -> Result<Self> {
        let dd = model.drift_diffusion(theta, grid)?;
        let datum = model.initial_datum(theta, grid)?;
        let steady_state = match model.steady_state(theta, grid) {
            Some(r) => Some(r?),
            None => None,
        };
        let operator = FpOperator::new(grid.clone(), dd, model.boundary(), scheme, steady_state.as_ref())?;
        Ok(Self { theta, operator, datum, steady_state })
    }
}

/// Samples `f` on the grid and rescales it to unit mass.
pub(crate) fn normalized_profile(grid: &Arc<VelocityGrid>, f: impl Fn(f64) -> f64) -> Result<Density> {
    Density::from_fn(grid.clone(), f)?.normalized()
}

/// Samples `exp(log_f)` after subtracting the maximum, then rescales to unit mass.
pub(crate) fn normalized_log_profile(grid: &Arc<VelocityGrid>, log_f: impl Fn(f64) -> f64) -> Result<Density> {
    let logs: Vec<f64> = grid.centers().iter().map(|&w| log_f(w)).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::DegenerateDensity);
    }
    Density::new(grid.clone(), logs.iter().map(|l| (l - top).exp()).collect())?.normalized()
}

/// Discrete mass and first moment.
pub(crate) fn mass_and_momentum(f: &[f64], grid: &VelocityGrid) -> (f64, f64) {
    let dw = grid.dw();
    let m0 = dw * f.iter().sum::<f64>();
    let m1 = dw * f.iter().zip(grid.centers()).map(|(f, w)| f * w).sum::<f64>();
    (m0, m1)
}
