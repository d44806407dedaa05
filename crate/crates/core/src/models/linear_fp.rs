use std::sync::Arc;

use super::{normalized_profile, Model};
use crate::error::{Error, Result};
use crate::flux::DriftDiffusion;
use crate::mesh::{maxwellian, Density, VelocityGrid};

/// Drift `w - u`, constant diffusion `t`.
#[derive(Clone, Copy, Debug)]
pub struct OrnsteinUhlenbeck {
    pub u: f64,
    pub t: f64,
}

impl DriftDiffusion for OrnsteinUhlenbeck {
    fn diffusion(&self, _w: f64) -> f64 {
        self.t
    }
    fn diffusion_prime(&self, _w: f64) -> f64 {
        0.0
    }
    fn base_drift(&self, w: f64) -> f64 {
        w - self.u
    }
    fn is_linear(&self) -> bool {
        true
    }
}

/// How the equilibrium mean and temperature are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum EquilibriumRule {
    /// `u = 0`, `T = sigma2(theta) + c^2` (moments of the continuous datum).
    #[default]
    Analytic,
    /// Discrete moments of the sampled datum.
    Moments,
}

/// Linear Fokker–Planck equation with drift `w - u` and diffusion `T(theta)`, started from
/// the symmetric two-Gaussian mixture with centres `+-c` and variance `sigma2 + slope * theta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFp {
    pub c: f64,
    pub sigma2: f64,
    pub sigma2_slope: f64,
    pub equilibrium: EquilibriumRule,
    pub domain: (f64, f64),
}

impl Default for LinearFp {
    fn default() -> Self {
        Self { c: 0.1, sigma2: 0.1, sigma2_slope: 5e-3, equilibrium: EquilibriumRule::Analytic, domain: (-1.0, 1.0) }
    }
}

impl LinearFp {
    pub fn datum_variance(&self, theta: f64) -> Result<f64> {
        let s2 = self.sigma2 + self.sigma2_slope * theta;
        if !(s2 > 0.0) {
            return Err(Error::InvalidParameter(format!("datum variance {s2} at theta = {theta}")));
        }
        Ok(s2)
    }

    /// Equilibrium mean and temperature at `theta`.
    pub fn mean_temperature(&self, theta: f64, grid: &Arc<VelocityGrid>) -> Result<(f64, f64)> {
        match self.equilibrium {
            EquilibriumRule::Analytic => Ok((0.0, self.datum_variance(theta)? + self.c * self.c)),
            EquilibriumRule::Moments => {
                let m = self.initial_datum(theta, grid)?.moments()?;
                Ok((m.mean, m.temperature))
            }
        }
    }
}

impl Model for LinearFp {
    fn name(&self) -> &'static str {
        "linear_fp"
    }

    fn domain(&self) -> (f64, f64) {
        self.domain
    }

    fn drift_diffusion(&self, theta: f64, grid: &Arc<VelocityGrid>) -> Result<Arc<dyn DriftDiffusion>> {
        let (u, t) = self.mean_temperature(theta, grid)?;
        Ok(Arc::new(OrnsteinUhlenbeck { u, t }))
    }

    fn initial_datum(&self, theta: f64, grid: &Arc<VelocityGrid>) -> Result<Density> {
        let s2 = self.datum_variance(theta)?;
        let c = self.c;
        normalized_profile(grid, |w| {
            (-(w - c).powi(2) / (2.0 * s2)).exp() + (-(w + c).powi(2) / (2.0 * s2)).exp()
        })
    }

    fn steady_state(&self, theta: f64, grid: &Arc<VelocityGrid>) -> Option<Result<Density>> {
        Some(self.mean_temperature(theta, grid).and_then(|(u, t)| maxwellian(grid, u, t)?.normalized()))
    }

    fn equilibrium_for(&self, theta: f64, datum: &Density) -> Result<Density> {
        let (u, t) = match self.equilibrium {
            EquilibriumRule::Analytic => self.mean_temperature(theta, datum.grid())?,
            EquilibriumRule::Moments => {
                let m = datum.moments()?;
                (m.mean, m.temperature)
            }
        };
        let f = maxwellian(datum.grid(), u, t)?.normalized()?;
        let mass = datum.mass();
        Ok(f.with_values(f.values().iter().map(|v| v * mass).collect()))
    }

    fn diffusion_scale(&self) -> Option<f64> {
        Some(self.sigma2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_temperature_matches_datum_moments() {
        let grid = VelocityGrid::new(-5.0, 5.0, 400).unwrap();
        let model = LinearFp { domain: (-5.0, 5.0), ..Default::default() };
        for theta in [-1.0, 0.0, 1.0] {
            let m = model.initial_datum(theta, &grid).unwrap().moments().unwrap();
            let (_, t) = model.mean_temperature(theta, &grid).unwrap();
            assert!((m.temperature - t).abs() < 1e-6);
        }
    }

    #[test]
    fn steady_state_is_standard_gaussian_for_unit_temperature() {
        let grid = VelocityGrid::new(-8.0, 8.0, 1600).unwrap();
        let model = LinearFp { c: 0.0, sigma2: 1.0, sigma2_slope: 0.0, domain: (-8.0, 8.0), ..Default::default() };
        let f = model.steady_state(0.3, &grid).unwrap().unwrap();
        let g = maxwellian(&grid, 0.0, 1.0).unwrap();
        for (a, b) in f.values().iter().zip(g.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
