//! Conservative steppers for `d/dt f_i = (F_{i+1/2} - F_{i-1/2}) / dw`.

use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::{Error, Result};
use crate::flux::FluxWeights;
use crate::mesh::Density;

/// Time-integration scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Stepper {
    #[default]
    ExplicitEuler,
    SspRk2,
    SspRk3,
    SemiImplicit,
}

impl Stepper {
    pub fn name(&self) -> &'static str {
        match self {
            Stepper::ExplicitEuler => "explicit_euler",
            Stepper::SspRk2 => "ssp_rk2",
            Stepper::SspRk3 => "ssp_rk3",
            Stepper::SemiImplicit => "semi_implicit",
        }
    }
}

/// Step size and scheme.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepControl {
    pub dt: f64,
    pub mode: Stepper,
    pub cfl_safety: f64,
}

impl StepControl {
    pub fn new(dt: f64, mode: Stepper) -> Self {
        Self { dt, mode, cfl_safety: 1.0 }
    }

    /// CFL bound matching `mode` for the given weights, scaled by `cfl_safety`.
    pub fn bound(&self, weights: &FluxWeights) -> f64 {
        let b = match self.mode {
            Stepper::SemiImplicit => cfl_semi_implicit(weights),
            _ => cfl_explicit(weights),
        };
        b * self.cfl_safety
    }

    /// Logs a warning (once per process, then at debug level) and returns false when `dt` exceeds the bound.
    pub fn check(&self, weights: &FluxWeights) -> bool {
        let bound = self.bound(weights);
        let ok = self.dt <= bound * (1.0 + 1e-12);
        if !ok {
            static WARNED: AtomicBool = AtomicBool::new(false);
            let level = if WARNED.swap(true, Ordering::Relaxed) { log::Level::Debug } else { log::Level::Warn };
            log::log!(
                level,
                "time step {:.6e} exceeds the {} positivity bound {:.6e}",
                self.dt,
                self.mode.name(),
                bound
            );
        }
        ok
    }
}

/// Explicit positivity bound `dw^2 / (2 (U dw + D_max))`.
pub fn cfl_explicit(weights: &FluxWeights) -> f64 {
    cfl_explicit_from(weights.max_drift(), weights.max_diffusion(), weights.dw)
}

pub fn cfl_explicit_from(max_drift: f64, max_diffusion: f64, dw: f64) -> f64 {
    let denom = 2.0 * (max_drift * dw + max_diffusion);
    if denom > 0.0 {
        dw * dw / denom
    } else {
        f64::INFINITY
    }
}

/// Semi-implicit positivity bound `dw / (2 U)`; unbounded without drift.
pub fn cfl_semi_implicit(weights: &FluxWeights) -> f64 {
    cfl_semi_implicit_from(weights.max_drift(), weights.dw)
}

pub fn cfl_semi_implicit_from(max_drift: f64, dw: f64) -> f64 {
    if max_drift > 0.0 {
        dw / (2.0 * max_drift)
    } else {
        f64::INFINITY
    }
}

/// `out_i = f_i + dt (F_{i+1} - F_i) / dw`.
pub(crate) fn euler_update(f: &[f64], flux: &[f64], dt_over_dw: f64, out: &mut [f64]) {
    for i in 0..f.len() {
        out[i] = f[i] + dt_over_dw * (flux[i + 1] - flux[i]);
    }
}

/// One forward Euler step with precomputed face fluxes.
pub fn step_explicit(f: &Density, flux: &[f64], dt: f64) -> Result<Density> {
    if flux.len() != f.len() + 1 {
        return Err(Error::SizeMismatch { expected: f.len() + 1, actual: flux.len() });
    }
    let mut out = vec![0.0; f.len()];
    euler_update(f.values(), flux, dt / f.grid().dw(), &mut out);
    Ok(f.with_values(out))
}

/// Strong-stability-preserving Runge–Kutta step of order 2 or 3 built from Euler stages;
/// `flux_builder` is called once per stage.
pub fn step_ssp(
    f: &Density,
    mut flux_builder: impl FnMut(&Density) -> Result<Vec<f64>>,
    dt: f64,
    order: u8,
) -> Result<Density> {
    let euler = |g: &Density, builder: &mut dyn FnMut(&Density) -> Result<Vec<f64>>| {
        let flux = builder(g)?;
        step_explicit(g, &flux, dt)
    };
    let combine = |a: f64, x: &Density, b: f64, y: &Density| {
        x.with_values(x.values().iter().zip(y.values()).map(|(x, y)| a * x + b * y).collect())
    };
    match order {
        2 => {
            let f1 = euler(f, &mut flux_builder)?;
            let f2 = euler(&f1, &mut flux_builder)?;
            Ok(combine(0.5, f, 0.5, &f2))
        }
        3 => {
            let f1 = euler(f, &mut flux_builder)?;
            let f2 = combine(0.75, f, 0.25, &euler(&f1, &mut flux_builder)?);
            Ok(combine(1.0 / 3.0, f, 2.0 / 3.0, &euler(&f2, &mut flux_builder)?))
        }
        _ => Err(Error::InvalidParameter(format!("SSP order must be 2 or 3, got {order}"))),
    }
}

/// Tridiagonal system `lower_i x_{i-1} + diag_i x_i + upper_i x_{i+1} = rhs_i`.
#[derive(Clone, Debug, Default)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    /// The matrix `I - dt A` where `A` is the flux-divergence operator of `weights`.
    pub fn implicit_operator(weights: &FluxWeights, dt: f64) -> Self {
        let n = weights.n_cells();
        let r = dt / weights.dw;
        let mut m = Tridiagonal {
            lower: vec![0.0; n],
            diag: vec![1.0; n],
            upper: vec![0.0; n],
        };
        // Face `face` couples cells face-1 and face: F = a f_face - b f_{face-1}.
        for face in 1..n {
            let (a, b) = weights.face_coefficients(face);
            // Cell face-1 gains +F, cell face loses F.
            m.diag[face - 1] += r * b;
            m.upper[face - 1] -= r * a;
            m.diag[face] += r * a;
            m.lower[face] -= r * b;
        }
        m.diag[n - 1] -= r * weights.right_boundary_coefficient();
        m
    }

    /// Solves by forward elimination and back substitution.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.diag.len();
        let mut c = vec![0.0; n];
        let mut x = vec![0.0; n];
        let mut pivot = self.diag[0];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(Error::SingularSystem { row: 0 });
        }
        c[0] = self.upper[0] / pivot;
        x[0] = rhs[0] / pivot;
        for i in 1..n {
            pivot = self.diag[i] - self.lower[i] * c[i - 1];
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::SingularSystem { row: i });
            }
            c[i] = self.upper[i] / pivot;
            x[i] = (rhs[i] - self.lower[i] * x[i - 1]) / pivot;
        }
        for i in (0..n - 1).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        Ok(x)
    }
}

/// One semi-implicit step with coefficients frozen at the current level:
/// `(I - dt A^n) f^{n+1} = f^n`.
pub fn step_semi_implicit(f: &Density, weights: &FluxWeights, dt: f64) -> Result<Density> {
    if weights.n_cells() != f.len() {
        return Err(Error::SizeMismatch { expected: f.len(), actual: weights.n_cells() });
    }
    let m = Tridiagonal::implicit_operator(weights, dt);
    Ok(f.with_values(m.solve(f.values())?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flux::{cc_flux, exact_weights, Boundary, DriftDiffusion, WeightBuilder};
    use crate::mesh::{maxwellian, VelocityGrid};
    use crate::quadrature::QuadratureRule;
    use proptest::prelude::*;

    struct Ou;
    impl DriftDiffusion for Ou {
        fn diffusion(&self, _w: f64) -> f64 {
            0.11
        }
        fn diffusion_prime(&self, _w: f64) -> f64 {
            0.0
        }
        fn base_drift(&self, w: f64) -> f64 {
            w
        }
        fn is_linear(&self) -> bool {
            true
        }
    }

    fn weights_with(dw: f64, u: f64, d: f64) -> FluxWeights {
        let g = VelocityGrid::new(0.0, 2.0 * dw, 2).unwrap();
        let f = Density::new(g, vec![1.0, 1.0]).unwrap();
        let mut w = exact_weights(&f, &Ou).unwrap();
        w.dw = dw;
        w.c_tilde[1] = u;
        w.diffusion[1] = d;
        w
    }

    #[test]
    fn cfl_examples() {
        assert!((cfl_explicit(&weights_with(0.1, 1.0, 0.05)) - 1.0 / 30.0).abs() < 1e-15);
        assert!((cfl_explicit(&weights_with(0.1, 0.0, 0.05)) - 0.1).abs() < 1e-15);
        assert!((cfl_semi_implicit(&weights_with(0.05, 1.0, 0.05)) - 0.025).abs() < 1e-15);
        assert_eq!(cfl_semi_implicit(&weights_with(0.05, 0.0, 0.05)), f64::INFINITY);
    }

    #[test]
    fn zero_flux_is_identity() {
        let g = VelocityGrid::new(-1.0, 1.0, 10).unwrap();
        let f = Density::from_fn(g, |w| 1.0 + w * w).unwrap();
        let out = step_explicit(&f, &[0.0; 11], 0.1).unwrap();
        assert_eq!(out, f);
        for order in [2, 3] {
            let out = step_ssp(&f, |_| Ok(vec![0.0; 11]), 0.1, order).unwrap();
            for (a, b) in out.values().iter().zip(f.values()) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn exact_steady_state_is_a_fixed_point_of_every_stepper() {
        let g = VelocityGrid::new(-1.0, 1.0, 21).unwrap();
        let f = maxwellian(&g, 0.0, 0.11).unwrap();
        let w = exact_weights(&f, &Ou).unwrap();
        let dt = cfl_explicit(&w);
        let flux = cc_flux(&f, &w).unwrap();
        let outs = [
            step_explicit(&f, &flux, dt).unwrap(),
            step_ssp(&f, |g| cc_flux(g, &w), dt, 2).unwrap(),
            step_ssp(&f, |g| cc_flux(g, &w), dt, 3).unwrap(),
            step_semi_implicit(&f, &w, 0.5).unwrap(),
        ];
        for out in outs {
            for (a, b) in out.values().iter().zip(f.values()) {
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn mass_is_conserved_over_many_steps() {
        let g = VelocityGrid::new(-1.0, 1.0, 40).unwrap();
        let mut f = Density::from_fn(g.clone(), |w| (-(w - 0.4f64).powi(2) * 20.0).exp()).unwrap();
        let m0 = f.mass();
        let b = WeightBuilder::new(g, &Ou, QuadratureRule::Gauss(4), Boundary::NoFlux).unwrap();
        let w = b.weights(f.values(), &Ou);
        let dt = cfl_explicit(&w);
        let mut h = f.clone();
        for _ in 0..10_000 {
            f = step_explicit(&f, &cc_flux(&f, &w).unwrap(), dt).unwrap();
            h = step_semi_implicit(&h, &w, 0.01).unwrap();
        }
        assert!((f.mass() - m0).abs() < 1e-11);
        assert!((h.mass() - m0).abs() < 1e-11);
    }

    #[test]
    fn ssp_rk2_is_second_order_on_constant_advection() {
        // Constant-speed upwind advection of a Gaussian bump; compare each run
        // against a step-halved run and fit the Richardson slope.
        let g = VelocityGrid::new(0.0, 1.0, 50).unwrap();
        let f0 = Density::from_fn(g.clone(), |w| (-(w - 0.5f64).powi(2) * 50.0).exp()).unwrap();
        let speed = 1.0;
        let rhs = |f: &Density| -> Result<Vec<f64>> {
            let v = f.values();
            let mut flux = vec![0.0; v.len() + 1];
            for i in 1..v.len() {
                flux[i] = speed * v[i];
            }
            Ok(flux)
        };
        let run = |steps: usize| {
            let dt = 0.1 / steps as f64;
            let mut f = f0.clone();
            for _ in 0..steps {
                f = step_ssp(&f, rhs, dt, 2).unwrap();
            }
            f
        };
        let (a, b, c) = (run(10), run(20), run(40));
        let e1: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).sum();
        let e2: f64 = b.values().iter().zip(c.values()).map(|(x, y)| (x - y).abs()).sum();
        assert!((e1 / e2).log2() >= 1.9, "slope {}", (e1 / e2).log2());
    }

    #[test]
    fn thomas_matches_dense_solution() {
        let m = Tridiagonal {
            lower: vec![0.0, -1.0, -1.0],
            diag: vec![4.0, 4.0, 4.0],
            upper: vec![-1.0, -1.0, 0.0],
        };
        let x = m.solve(&[3.0, 2.0, 3.0]).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-15);
        }
        let singular = Tridiagonal { lower: vec![0.0], diag: vec![0.0], upper: vec![0.0] };
        assert!(singular.solve(&[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn positivity_under_bounds(values in proptest::collection::vec(0.0f64..5.0, 30), shift in -0.5f64..0.5) {
            struct Shifted(f64);
            impl DriftDiffusion for Shifted {
                fn diffusion(&self, _w: f64) -> f64 { 0.05 }
                fn diffusion_prime(&self, _w: f64) -> f64 { 0.0 }
                fn base_drift(&self, w: f64) -> f64 { 3.0 * (w - self.0) }
            }
            let g = VelocityGrid::new(-1.0, 1.0, 30).unwrap();
            let f = Density::new(g.clone(), values).unwrap();
            let dd = Shifted(shift);
            let w = WeightBuilder::new(g, &dd, QuadratureRule::Gauss(3), Boundary::NoFlux)
                .unwrap()
                .weights(f.values(), &dd);
            let ex = step_explicit(&f, &cc_flux(&f, &w).unwrap(), cfl_explicit(&w)).unwrap();
            prop_assert!(ex.min_value() >= 0.0);
            let si = step_semi_implicit(&f, &w, cfl_semi_implicit(&w)).unwrap();
            prop_assert!(si.min_value() >= 0.0);
        }
    }
}
