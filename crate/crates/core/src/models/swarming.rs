//! Self-propelled swarming with uncertain diffusion.

use std::sync::Arc;

use super::transport::{strang_split_step, PhaseDensity, SpaceGrid};
use super::{mass_and_momentum, normalized_log_profile, Model};
use crate::error::{Error, Result};
use crate::flux::{cc_flux_into, Boundary, DriftDiffusion, DriftField, WeightBuilder};
use crate::mesh::{Density, VelocityGrid};
use crate::quadrature::QuadratureRule;
use crate::time::Tridiagonal;

/// Spatial localisation of the alignment velocity.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Kernel {
    /// Global mean velocity.
    #[default]
    Global,
    /// Mean over the periodic neighbourhood `|x - y| <= radius`.
    TopHat { radius: f64 },
}

/// Drift `alpha w (w^2 - 1) + w - u` and constant diffusion `d`.
#[derive(Clone, Copy, Debug)]
pub struct SwarmDrift {
    pub alpha: f64,
    pub d: f64,
    /// Alignment velocity; when `None` it is the mean velocity of the density.
    pub velocity: Option<f64>,
}

impl DriftDiffusion for SwarmDrift {
    fn diffusion(&self, _w: f64) -> f64 {
        self.d
    }

    fn diffusion_prime(&self, _w: f64) -> f64 {
        0.0
    }

    fn base_drift(&self, w: f64) -> f64 {
        self.alpha * w * (w * w - 1.0) + w
    }

    fn density_drift(&self, f: &[f64], grid: &VelocityGrid) -> DriftField {
        let u = match self.velocity {
            Some(u) => u,
            None => {
                let (m0, m1) = mass_and_momentum(f, grid);
                if m0 > 0.0 {
                    m1 / m0
                } else {
                    0.0
                }
            }
        };
        DriftField::Affine { slope: 0.0, offset: -u }
    }

    fn is_linear(&self) -> bool {
        self.velocity.is_some()
    }
}

/// Swarming model: self-propulsion strength `alpha`, diffusion `d_mean + d_slope * theta`, and
/// a datum made of two Gaussian groups at `x = mu_x` moving with velocities `+-mu_w`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Swarming {
    pub alpha: f64,
    pub d_mean: f64,
    pub d_slope: f64,
    pub kernel: Kernel,
    pub mu_w: f64,
    pub sigma_w2: f64,
    pub mu_x: f64,
    pub sigma_x: f64,
    pub v_max: f64,
}

impl Default for Swarming {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            d_mean: 0.2,
            d_slope: 0.1,
            kernel: Kernel::Global,
            mu_w: 1.5,
            sigma_w2: 0.25,
            mu_x: 0.0,
            sigma_x: 0.25,
            v_max: 3.0,
        }
    }
}

impl Swarming {
    pub fn diffusion(&self, theta: f64) -> Result<f64> {
        let d = self.d_mean + self.d_slope * theta;
        if !(d > 0.0) {
            return Err(Error::InvalidParameter(format!("D({theta}) = {d} must be positive")));
        }
        Ok(d)
    }

    /// Homogeneous steady state for a prescribed alignment velocity `u`.
    pub fn profile(&self, theta: f64, u: f64, grid: &Arc<VelocityGrid>) -> Result<Density> {
        let d = self.diffusion(theta)?;
        let a = self.alpha;
        normalized_log_profile(grid, |w| {
            -(a * w.powi(4) / 4.0 + (1.0 - a) * w * w / 2.0 - u * w) / d
        })
    }

    /// Self-consistent homogeneous steady state by damped iteration
    /// `u <- (1 - omega) u + omega mean(profile(u))`, `omega = 1/2`.
    pub fn homogeneous_steady_state(&self, theta: f64, u0: f64, grid: &Arc<VelocityGrid>) -> Result<(Density, f64)> {
        const OMEGA: f64 = 0.5;
        const MAX_ITER: usize = 10_000;
        let mut u = u0;
        let mut trace = Vec::new();
        for _ in 0..MAX_ITER {
            let f = self.profile(theta, u, grid)?;
            let mean = f.moments()?.mean;
            if (mean - u).abs() < 1e-12 {
                return Ok((f, u));
            }
            u = (1.0 - OMEGA) * u + OMEGA * mean;
            trace.push(u);
            if trace.len() > 8 {
                trace.remove(0);
            }
        }
        Err(Error::FixedPoint { iterations: MAX_ITER, trace })
    }

    /// Phase-space datum with unit total mass; distances in `x` are periodic.
    pub fn phase_datum(&self, space: SpaceGrid, velocity: Arc<VelocityGrid>) -> PhaseDensity {
        let len = space.length();
        let (mx, sx2, mw, sw2) = (self.mu_x, self.sigma_x * self.sigma_x, self.mu_w, self.sigma_w2);
        let mut f = PhaseDensity::from_fn(space, velocity, |x, w| {
            let mut dx = (x - mx).rem_euclid(len);
            if dx > 0.5 * len {
                dx -= len;
            }
            let gx = (-0.5 * dx * dx / sx2).exp();
            gx * ((-0.5 * (w - mw).powi(2) / sw2).exp() + (-0.5 * (w + mw).powi(2) / sw2).exp())
        });
        let m = f.mass();
        f.values.iter_mut().for_each(|v| *v /= m);
        f
    }
}

impl Model for Swarming {
    fn name(&self) -> &'static str {
        "swarming"
    }

    fn domain(&self) -> (f64, f64) {
        (-self.v_max, self.v_max)
    }

    fn drift_diffusion(&self, theta: f64, _grid: &Arc<VelocityGrid>) -> Result<Arc<dyn DriftDiffusion>> {
        Ok(Arc::new(SwarmDrift { alpha: self.alpha, d: self.diffusion(theta)?, velocity: None }))
    }

    /// Velocity marginal of the phase-space datum.
    fn initial_datum(&self, _theta: f64, grid: &Arc<VelocityGrid>) -> Result<Density> {
        let (mw, sw2) = (self.mu_w, self.sigma_w2);
        super::normalized_profile(grid, |w| {
            (-0.5 * (w - mw).powi(2) / sw2).exp() + (-0.5 * (w + mw).powi(2) / sw2).exp()
        })
    }

    fn steady_state(&self, theta: f64, grid: &Arc<VelocityGrid>) -> Option<Result<Density>> {
        let u0 = match self.initial_datum(theta, grid).and_then(|d| d.moments()) {
            Ok(m) => m.mean,
            Err(e) => return Some(Err(e)),
        };
        Some(self.homogeneous_steady_state(theta, u0, grid).map(|(f, _)| f))
    }

    fn diffusion_scale(&self) -> Option<f64> {
        Some(self.d_mean)
    }
}

/// Spatially homogeneous equilibrium used by the Micro–Macro phase-space step.
#[derive(Clone, Debug)]
pub struct PhaseEquilibrium {
    /// Equilibrium per unit length in `x`.
    pub line: Vec<f64>,
    pub velocity: f64,
    flux: Vec<f64>,
}

/// Phase-space solver at one value of the random input: WENO transport in `x`,
/// semi-implicit Chang–Cooper in `w`, joined by Strang splitting.
pub struct SwarmingSolver {
    pub space: SpaceGrid,
    pub velocity: Arc<VelocityGrid>,
    drift: SwarmDrift,
    builder: WeightBuilder,
    kernel: Kernel,
}

impl SwarmingSolver {
    pub fn new(
        model: &Swarming,
        theta: f64,
        space: SpaceGrid,
        velocity: Arc<VelocityGrid>,
        rule: QuadratureRule,
    ) -> Result<Self> {
        let drift = SwarmDrift { alpha: model.alpha, d: model.diffusion(theta)?, velocity: None };
        let builder = WeightBuilder::new(velocity.clone(), &drift, rule, Boundary::NoFlux)?;
        Ok(Self { space, velocity, drift, builder, kernel: model.kernel })
    }

    /// Equilibrium of total mass `mass`, spread uniformly in `x`.
    pub fn equilibrium(&self, profile: &Density, velocity: f64, mass: f64) -> Result<PhaseEquilibrium> {
        let scale = mass / self.space.length() / profile.mass();
        let line: Vec<f64> = profile.values().iter().map(|v| v * scale).collect();
        let w = self.builder.weights_for_field(&DriftField::Affine { slope: 0.0, offset: -velocity });
        let mut flux = vec![0.0; line.len() + 1];
        cc_flux_into(&line, &w, &mut flux)?;
        Ok(PhaseEquilibrium { line, velocity, flux })
    }

    /// Alignment velocity at every space cell of `f` (plus `background` on every line).
    pub fn alignment_velocities(&self, f: &PhaseDensity, background: Option<&[f64]>) -> Vec<f64> {
        let n_x = self.space.n_x;
        let grid = &self.velocity;
        let moments: Vec<(f64, f64)> = (0..n_x)
            .map(|i| {
                let line = f.line(i);
                match background {
                    Some(b) => {
                        let full: Vec<f64> = line.iter().zip(b).map(|(g, b)| g + b).collect();
                        mass_and_momentum(&full, grid)
                    }
                    None => mass_and_momentum(line, grid),
                }
            })
            .collect();
        let ratio = |m0: f64, m1: f64| if m0 > 0.0 { m1 / m0 } else { 0.0 };
        match self.kernel {
            Kernel::Global => {
                let (m0, m1) = moments.iter().fold((0.0, 0.0), |(a, b), (c, d)| (a + c, b + d));
                vec![ratio(m0, m1); n_x]
            }
            Kernel::TopHat { radius } => {
                let len = self.space.length();
                (0..n_x)
                    .map(|i| {
                        let xi = self.space.center(i);
                        let (m0, m1) = (0..n_x)
                            .filter(|&k| {
                                let d = (self.space.center(k) - xi).rem_euclid(len);
                                d.min(len - d) <= radius
                            })
                            .fold((0.0, 0.0), |(a, b), k| (a + moments[k].0, b + moments[k].1));
                        ratio(m0, m1)
                    })
                    .collect()
            }
        }
    }

    fn velocity_substep(&self, f: &mut PhaseDensity, dt: f64, eq: Option<&PhaseEquilibrium>) -> Result<()> {
        let n = self.velocity.n_cells();
        let r = dt / self.velocity.dw();
        let u = self.alignment_velocities(f, eq.map(|e| e.line.as_slice()));
        let mut cached: Option<(f64, Tridiagonal, crate::flux::FluxWeights)> = None;
        let mut flux = vec![0.0; n + 1];
        let mut rhs = vec![0.0; n];
        for i in 0..self.space.n_x {
            let fresh = !matches!(&cached, Some((v, _, _)) if *v == u[i]);
            if fresh {
                let w = self.builder.weights_for_field(&DriftField::Affine { slope: 0.0, offset: -u[i] });
                cached = Some((u[i], Tridiagonal::implicit_operator(&w, dt), w));
            }
            let (_, m, w) = cached.as_ref().expect("weights built above");
            let line = f.line_mut(i);
            match eq {
                None => rhs.copy_from_slice(line),
                Some(e) => {
                    cc_flux_into(&e.line, w, &mut flux)?;
                    for k in 0..n {
                        rhs[k] = line[k] + r * ((flux[k + 1] - e.flux[k + 1]) - (flux[k] - e.flux[k]));
                    }
                }
            }
            line.copy_from_slice(&m.solve(&rhs)?);
        }
        Ok(())
    }

    /// One Strang step of the full density.
    pub fn step(&self, f: &mut PhaseDensity, dt: f64) -> Result<()> {
        strang_split_step(f, |f, dt| self.velocity_substep(f, dt, None), dt, true)
    }

    /// One Strang step of the perturbation `g = f - f_inf`.
    pub fn step_perturbation(&self, g: &mut PhaseDensity, eq: &PhaseEquilibrium, dt: f64) -> Result<()> {
        strang_split_step(g, |g, dt| self.velocity_substep(g, dt, Some(eq)), dt, false)
    }

    pub fn drift(&self) -> &SwarmDrift {
        &self.drift
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_velocity_is_a_fixed_point() {
        let grid = VelocityGrid::new(-3.0, 3.0, 100).unwrap();
        let m = Swarming::default();
        let (f, u) = m.homogeneous_steady_state(0.05, 0.0, &grid).unwrap();
        assert_eq!(u, 0.0);
        assert!((f.moments().unwrap().mean - u).abs() < 1e-10);
    }

    #[test]
    fn polarised_fixed_point_is_self_consistent() {
        let grid = VelocityGrid::new(-3.0, 3.0, 200).unwrap();
        let m = Swarming::default();
        let (f, u) = m.homogeneous_steady_state(0.0, 0.3, &grid).unwrap();
        assert!((f.moments().unwrap().mean - u).abs() < 1e-10);
        assert!(u > 0.1);
    }

    #[test]
    fn diffusion_range() {
        let m = Swarming::default();
        assert!((m.diffusion(-0.1).unwrap() - 0.19).abs() < 1e-15);
        assert!((m.diffusion(0.1).unwrap() - 0.21).abs() < 1e-15);
    }

    #[test]
    fn datum_has_zero_momentum_and_unit_mass() {
        let space = SpaceGrid::periodic(0.0, 10.0, 100).unwrap();
        let v = VelocityGrid::new(-3.0, 3.0, 100).unwrap();
        let f = Swarming::default().phase_datum(space, v.clone());
        assert!((f.mass() - 1.0).abs() < 1e-14);
        let marg = f.velocity_marginal();
        let (_, m1) = mass_and_momentum(&marg, &v);
        assert!(m1.abs() < 1e-14);
    }

    #[test]
    fn homogeneous_equilibrium_is_stationary() {
        let space = SpaceGrid::periodic(0.0, 10.0, 20).unwrap();
        let v = VelocityGrid::new(-3.0, 3.0, 60).unwrap();
        let m = Swarming::default();
        let solver = SwarmingSolver::new(&m, 0.0, space, v.clone(), QuadratureRule::Gauss(4)).unwrap();
        let (profile, u) = m.homogeneous_steady_state(0.0, 0.0, &v).unwrap();
        let eq = solver.equilibrium(&profile, u, 1.0).unwrap();
        let mut f = PhaseDensity::from_fn(space, v.clone(), |_, _| 0.0);
        for i in 0..space.n_x {
            f.line_mut(i).copy_from_slice(&eq.line);
        }
        let before = f.clone();
        solver.step(&mut f, 0.02).unwrap();
        let diff = f.values.iter().zip(&before.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-13, "drift from equilibrium {diff}");
        let mut g = PhaseDensity { signed: true, values: vec![0.0; f.values.len()], ..f.clone() };
        solver.step_perturbation(&mut g, &eq, 0.02).unwrap();
        assert!(g.values.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn split_step_conserves_mass_and_positivity() {
        let space = SpaceGrid::periodic(0.0, 10.0, 40).unwrap();
        let v = VelocityGrid::new(-3.0, 3.0, 40).unwrap();
        let m = Swarming::default();
        let solver = SwarmingSolver::new(&m, 0.05, space, v.clone(), QuadratureRule::Gauss(4)).unwrap();
        let mut f = m.phase_datum(space, v);
        let m0 = f.mass();
        let dt = 0.9 * space.dx / 3.0;
        for _ in 0..50 {
            solver.step(&mut f, dt).unwrap();
        }
        assert!((f.mass() - m0).abs() < 1e-10);
        assert!(f.min_value() >= 0.0);
    }
}
