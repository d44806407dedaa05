use std::sync::Arc;

use super::{mass_and_momentum, normalized_log_profile, normalized_profile, Model};
use crate::error::{Error, Result};
use crate::flux::{DriftDiffusion, DriftField};
use crate::mesh::{Density, VelocityGrid};

/// Compromise propensity as a function of the two opinions.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Interaction {
    /// `P(theta)` independent of the opinions.
    #[default]
    Constant,
    /// `P(theta)` if `|w - w*| <= radius`, zero otherwise.
    BoundedConfidence { radius: f64 },
}

/// Opinion drift `B[f](w) = P int (w - w*) f(w*) dw*`, diffusion `sigma2/2 (1 - w^2)^2`.
#[derive(Clone, Copy, Debug)]
pub struct OpinionDrift {
    pub p: f64,
    pub sigma2: f64,
    pub interaction: Interaction,
}

impl DriftDiffusion for OpinionDrift {
    fn diffusion(&self, w: f64) -> f64 {
        0.5 * self.sigma2 * (1.0 - w * w).powi(2)
    }

    fn diffusion_prime(&self, w: f64) -> f64 {
        -2.0 * self.sigma2 * w * (1.0 - w * w)
    }

    fn density_drift(&self, f: &[f64], grid: &VelocityGrid) -> DriftField {
        match self.interaction {
            Interaction::Constant => {
                let (m0, m1) = mass_and_momentum(f, grid);
                DriftField::Affine { slope: self.p * m0, offset: -self.p * m1 }
            }
            Interaction::BoundedConfidence { radius } => {
                let w = grid.centers();
                let dw = grid.dw();
                let values = w
                    .iter()
                    .map(|&wi| {
                        let s: f64 = w
                            .iter()
                            .zip(f)
                            .filter(|(wj, _)| (wi - **wj).abs() <= radius)
                            .map(|(wj, fj)| (wi - wj) * fj)
                            .sum();
                        self.p * dw * s
                    })
                    .collect();
                DriftField::Sampled(values)
            }
        }
    }
}

/// Opinion formation on `[-1, 1]` with uncertain compromise propensity
/// `P(theta) = p_mean + p_slope * theta`, started from two Gaussian bumps at `+-1/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Opinion {
    pub p_mean: f64,
    pub p_slope: f64,
    pub sigma2: f64,
    pub c: f64,
    pub interaction: Interaction,
}

impl Default for Opinion {
    fn default() -> Self {
        Self { p_mean: 0.75, p_slope: 0.25, sigma2: 0.2, c: 30.0, interaction: Interaction::Constant }
    }
}

impl Opinion {
    pub fn propensity(&self, theta: f64) -> Result<f64> {
        let p = self.p_mean + self.p_slope * theta;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("P({theta}) = {p} outside [0, 1]")));
        }
        Ok(p)
    }

    /// Closed-form steady state with mean opinion `u`, normalised on the grid.
    pub fn closed_form_steady_state(&self, theta: f64, u: f64, grid: &Arc<VelocityGrid>) -> Result<Density> {
        let p = self.propensity(theta)?;
        let s2 = self.sigma2;
        let e = p * u / (2.0 * s2);
        normalized_log_profile(grid, |w| {
            let q = 1.0 - w * w;
            -2.0 * q.ln() + e * (1.0 + w).ln() - e * (1.0 - w).ln() - p * (1.0 - u * w) / (s2 * q)
        })
    }
}

impl Model for Opinion {
    fn name(&self) -> &'static str {
        "opinion"
    }

    fn domain(&self) -> (f64, f64) {
        (-1.0, 1.0)
    }

    fn drift_diffusion(&self, theta: f64, _grid: &Arc<VelocityGrid>) -> Result<Arc<dyn DriftDiffusion>> {
        if !(self.sigma2 > 0.0) {
            return Err(Error::InvalidParameter(format!("sigma2 = {} must be positive", self.sigma2)));
        }
        Ok(Arc::new(OpinionDrift { p: self.propensity(theta)?, sigma2: self.sigma2, interaction: self.interaction }))
    }

    fn initial_datum(&self, _theta: f64, grid: &Arc<VelocityGrid>) -> Result<Density> {
        let c = self.c;
        normalized_profile(grid, |w| (-c * (w + 0.5).powi(2)).exp() + (-c * (w - 0.5).powi(2)).exp())
    }

    fn steady_state(&self, theta: f64, grid: &Arc<VelocityGrid>) -> Option<Result<Density>> {
        if self.interaction != Interaction::Constant {
            return None;
        }
        Some(
            self.initial_datum(theta, grid)
                .and_then(|d| d.moments())
                .and_then(|m| self.closed_form_steady_state(theta, m.mean, grid)),
        )
    }

    fn diffusion_scale(&self) -> Option<f64> {
        Some(self.sigma2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flux::{cc_flux, cc_weights, Boundary};
    use crate::quadrature::QuadratureRule;

    #[test]
    fn propensity_range() {
        let m = Opinion::default();
        assert_eq!(m.propensity(-1.0).unwrap(), 0.5);
        assert_eq!(m.propensity(1.0).unwrap(), 1.0);
        assert!(Opinion { p_mean: 1.0, ..m }.propensity(1.0).is_err());
    }

    #[test]
    fn unit_propensity_gives_linear_drift() {
        let grid = VelocityGrid::new(-1.0, 1.0, 40).unwrap();
        let f = Density::from_fn(grid.clone(), |w| 1.0 + 0.5 * w).unwrap().normalized().unwrap();
        let u = f.moments().unwrap().mean;
        let dd = OpinionDrift { p: 1.0, sigma2: 0.2, interaction: Interaction::Constant };
        for &w in &[-0.7, 0.0, 0.33] {
            assert!((dd.drift_at(w, f.values(), &grid) - (w - u)).abs() < 1e-14);
        }
        // A confidence radius covering the domain reproduces the same drift at the centres.
        let wide = OpinionDrift { interaction: Interaction::BoundedConfidence { radius: 3.0 }, ..dd };
        for &w in grid.centers() {
            assert!((wide.drift_at(w, f.values(), &grid) - (w - u)).abs() < 1e-13);
        }
    }

    #[test]
    fn symmetric_datum_has_zero_mean_and_even_steady_state() {
        let grid = VelocityGrid::new(-1.0, 1.0, 80).unwrap();
        let m = Opinion::default();
        let d = m.initial_datum(0.0, &grid).unwrap();
        assert!(d.moments().unwrap().mean.abs() < 1e-14);
        let ss = m.steady_state(0.3, &grid).unwrap().unwrap();
        let v = ss.values();
        for i in 0..40 {
            assert!((v[i] - v[79 - i]).abs() < 1e-13 * v[i].max(1e-300));
        }
    }

    #[test]
    fn closed_form_is_a_zero_flux_state() {
        // Asymmetric mean: the exponent signs on (1 + w) and (1 - w) must differ.
        let grid = VelocityGrid::new(-1.0, 1.0, 160).unwrap();
        let m = Opinion::default();
        let u = 0.2;
        let ss = m.closed_form_steady_state(0.5, u, &grid).unwrap();
        let f = ss;
        let mean = f.moments().unwrap().mean;
        assert!((mean - u).abs() < 1e-3, "closed form mean {mean}");
        let dd = OpinionDrift { p: m.propensity(0.5).unwrap(), sigma2: m.sigma2, interaction: Interaction::Constant };
        struct Fixed(OpinionDrift, f64);
        impl DriftDiffusion for Fixed {
            fn diffusion(&self, w: f64) -> f64 { self.0.diffusion(w) }
            fn diffusion_prime(&self, w: f64) -> f64 { self.0.diffusion_prime(w) }
            fn base_drift(&self, w: f64) -> f64 { self.0.p * (w - self.1) }
        }
        let w = cc_weights(&f, &Fixed(dd, u), QuadratureRule::Gauss(20), Boundary::NoFlux).unwrap();
        let flux = cc_flux(&f, &w).unwrap();
        let scale = f.values().iter().fold(0.0f64, |a, b| a.max(*b));
        assert!(flux.iter().all(|x| x.abs() < 1e-10 * scale));
    }
}
