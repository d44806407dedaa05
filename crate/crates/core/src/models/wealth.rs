use std::sync::Arc;

use super::{mass_and_momentum, normalized_log_profile, normalized_profile, Model};
use crate::error::{Error, Result};
use crate::flux::{Boundary, DriftDiffusion, DriftField};
use crate::mesh::{Density, VelocityGrid};

/// Which mean enters the drift `w - m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MeanRule {
    /// The mean of the initial datum, conserved by the continuous dynamics.
    #[default]
    Conserved,
    /// The current discrete moments `m0 w - m1`.
    Dynamic,
}

/// Wealth drift and diffusion `sigma2/2 w^2`.
#[derive(Clone, Copy, Debug)]
pub struct WealthDrift {
    pub sigma2: f64,
    /// Fixed mean for the conserved rule.
    pub mean: Option<f64>,
}

impl DriftDiffusion for WealthDrift {
    fn diffusion(&self, w: f64) -> f64 {
        0.5 * self.sigma2 * w * w
    }

    fn diffusion_prime(&self, w: f64) -> f64 {
        self.sigma2 * w
    }

    fn base_drift(&self, w: f64) -> f64 {
        match self.mean {
            Some(m) => w - m,
            None => 0.0,
        }
    }

    fn density_drift(&self, f: &[f64], grid: &VelocityGrid) -> DriftField {
        match self.mean {
            Some(_) => DriftField::zero(),
            None => {
                let (m0, m1) = mass_and_momentum(f, grid);
                DriftField::Affine { slope: m0, offset: -m1 }
            }
        }
    }

    fn is_linear(&self) -> bool {
        self.mean.is_some()
    }
}

/// Wealth exchange with uncertain diffusion `sigma2(theta) = sigma2 + slope * theta` on the
/// truncated half-line `[0, l]`, started from a Gaussian bump of width `1/sqrt(2c)` at `u_tilde`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Wealth {
    pub sigma2: f64,
    pub sigma2_slope: f64,
    pub c: f64,
    pub u_tilde: f64,
    pub l: f64,
    pub mean: MeanRule,
}

impl Default for Wealth {
    fn default() -> Self {
        Self { sigma2: 0.1, sigma2_slope: 1.0 / 200.0, c: 20.0, u_tilde: 2.0, l: 10.0, mean: MeanRule::Conserved }
    }
}

impl Wealth {
    pub fn variance(&self, theta: f64) -> Result<f64> {
        let s2 = self.sigma2 + self.sigma2_slope * theta;
        if !(s2 > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma2({theta}) = {s2} must be positive")));
        }
        Ok(s2)
    }

    /// Pareto exponent `1 + 2/sigma2(theta)`.
    pub fn pareto_exponent(&self, theta: f64) -> Result<f64> {
        Ok(1.0 + 2.0 / self.variance(theta)?)
    }

    /// Inverse-Gamma steady state with mean `m`, normalised on the grid.
    pub fn closed_form_steady_state(&self, theta: f64, m: f64, grid: &Arc<VelocityGrid>) -> Result<Density> {
        let mu = self.pareto_exponent(theta)?;
        normalized_log_profile(grid, |w| -(1.0 + mu) * w.ln() - (mu - 1.0) * m / w)
    }

    fn datum_mean(&self, grid: &Arc<VelocityGrid>) -> Result<f64> {
        Ok(self.initial_datum(0.0, grid)?.moments()?.mean)
    }
}

impl Model for Wealth {
    fn name(&self) -> &'static str {
        "wealth"
    }

    fn domain(&self) -> (f64, f64) {
        (0.0, self.l)
    }

    fn boundary(&self) -> Boundary {
        Boundary::QuasiStationaryRight
    }

    fn drift_diffusion(&self, theta: f64, grid: &Arc<VelocityGrid>) -> Result<Arc<dyn DriftDiffusion>> {
        let sigma2 = self.variance(theta)?;
        let mean = match self.mean {
            MeanRule::Conserved => Some(self.datum_mean(grid)?),
            MeanRule::Dynamic => None,
        };
        Ok(Arc::new(WealthDrift { sigma2, mean }))
    }

    fn initial_datum(&self, _theta: f64, grid: &Arc<VelocityGrid>) -> Result<Density> {
        let (c, u) = (self.c, self.u_tilde);
        normalized_profile(grid, |w| (-c * (w - u).powi(2)).exp())
    }

    fn steady_state(&self, theta: f64, grid: &Arc<VelocityGrid>) -> Option<Result<Density>> {
        Some(self.datum_mean(grid).and_then(|m| self.closed_form_steady_state(theta, m, grid)))
    }

    fn diffusion_scale(&self) -> Option<f64> {
        Some(self.sigma2)
    }
}
