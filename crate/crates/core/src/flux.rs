//! Structure-preserving two-point fluxes for `d/dt f = d/dw [B[f] f + d/dw (D f)]`.
//!
//! Faces are indexed `0..=n`; face `i` separates cells `i - 1` and `i`. Faces `0` and
//! `n` are domain boundaries.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{Density, VelocityGrid};
use crate::quadrature::QuadratureRule;

/// Density-dependent part of a drift, in a form whose face integrals can be cached.
#[derive(Clone, Debug, PartialEq)]
pub enum DriftField {
    /// `slope * w + offset`.
    Affine { slope: f64, offset: f64 },
    /// Values at cell centres, linearly interpolated between them.
    Sampled(Vec<f64>),
}

impl DriftField {
    pub fn zero() -> Self {
        DriftField::Affine { slope: 0.0, offset: 0.0 }
    }
}

/// Drift `B[f](w) = base(w) + field[f](w)` and diffusion `D(w)` of a Fokker–Planck operator.
pub trait DriftDiffusion: Send + Sync {
    fn diffusion(&self, w: f64) -> f64;
    fn diffusion_prime(&self, w: f64) -> f64;

    /// Density-independent part of the drift.
    fn base_drift(&self, _w: f64) -> f64 {
        0.0
    }

    /// Density-dependent part of the drift.
    fn density_drift(&self, _f: &[f64], _grid: &VelocityGrid) -> DriftField {
        DriftField::zero()
    }

    /// True when the drift does not depend on the density, so weights can be frozen.
    fn is_linear(&self) -> bool {
        false
    }

    /// Full drift at `w` for the density `f`.
    fn drift_at(&self, w: f64, f: &[f64], grid: &VelocityGrid) -> f64 {
        let field = match self.density_drift(f, grid) {
            DriftField::Affine { slope, offset } => slope * w + offset,
            DriftField::Sampled(values) => interpolate_centres(&values, grid, w),
        };
        self.base_drift(w) + field
    }
}

fn interpolate_centres(values: &[f64], grid: &VelocityGrid, w: f64) -> f64 {
    let n = values.len();
    let s = ((w - grid.centers()[0]) / grid.dw()).clamp(0.0, (n - 1) as f64);
    let i = (s.floor() as usize).min(n - 2);
    let t = s - i as f64;
    (1.0 - t) * values[i] + t * values[i + 1]
}

/// Treatment of the domain ends.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Zero flux at both ends.
    #[default]
    NoFlux,
    /// Zero flux on the left; on the right a ghost cell follows the local quasi-stationary
    /// ratio `f_ghost / f_last = exp(-lambda)`.
    QuasiStationaryRight,
}

/// Per-face Chang–Cooper data.
#[derive(Clone, Debug, PartialEq)]
pub struct FluxWeights {
    pub c_tilde: Vec<f64>,
    pub lambda: Vec<f64>,
    pub delta: Vec<f64>,
    /// Diffusion at the faces.
    pub diffusion: Vec<f64>,
    pub dw: f64,
    pub boundary: Boundary,
}

impl FluxWeights {
    fn neutral(n_faces: usize, dw: f64, boundary: Boundary) -> Self {
        Self {
            c_tilde: vec![0.0; n_faces],
            lambda: vec![0.0; n_faces],
            delta: vec![0.5; n_faces],
            diffusion: vec![0.0; n_faces],
            dw,
            boundary,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.c_tilde.len() - 1
    }

    /// Faces that carry flux.
    pub fn active_faces(&self) -> std::ops::Range<usize> {
        let n = self.n_cells();
        match self.boundary {
            Boundary::NoFlux => 1..n,
            Boundary::QuasiStationaryRight => 1..n + 1,
        }
    }

    /// Largest `|C~|` over active faces.
    pub fn max_drift(&self) -> f64 {
        self.active_faces().map(|i| self.c_tilde[i].abs()).fold(0.0, f64::max)
    }

    pub fn max_diffusion(&self) -> f64 {
        self.active_faces().map(|i| self.diffusion[i]).fold(0.0, f64::max)
    }

    pub fn min_diffusion(&self) -> f64 {
        self.active_faces().map(|i| self.diffusion[i]).fold(f64::INFINITY, f64::min)
    }

    /// Linear face coefficients `(a, b)` with `F = a f_{i+1} - b f_i`; both are positive
    /// whenever `D > 0`.
    ///
    /// Algebraically `a = C (1 - delta) + D/dw` and `b = D/dw - C delta`; the Bernoulli form
    /// used here avoids the cancellation in `b` when `|lambda|` is large.
    pub fn face_coefficients(&self, face: usize) -> (f64, f64) {
        let d = self.diffusion[face] / self.dw;
        let lambda = self.lambda[face];
        (d * bernoulli(-lambda), d * bernoulli(lambda))
    }

    /// Outflow coefficient `kappa` of the right boundary, `F_n = kappa * f_{n-1}`.
    pub fn right_boundary_coefficient(&self) -> f64 {
        match self.boundary {
            Boundary::NoFlux => 0.0,
            Boundary::QuasiStationaryRight => {
                let n = self.n_cells();
                let (a, b) = self.face_coefficients(n);
                a * (-self.lambda[n]).exp() - b
            }
        }
    }
}

/// Chang–Cooper weight `delta(lambda) = 1/lambda + 1/(1 - e^lambda)`.
pub fn delta(lambda: f64) -> f64 {
    if lambda.abs() < 0.1 {
        // Bernoulli series of 1/lambda - 1/expm1(lambda).
        let l2 = lambda * lambda;
        0.5 - lambda / 12.0 * (1.0 - l2 / 60.0 * (1.0 - l2 / 42.0 * (1.0 - l2 / 40.0)))
    } else {
        1.0 / lambda - 1.0 / lambda.exp_m1()
    }
}

/// Bernoulli function `x / (e^x - 1)`, positive for all `x`.
pub fn bernoulli(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        1.0 - x / 2.0 + x * x / 12.0
    } else if x > 0.0 {
        x * (-x).exp() / -(-x).exp_m1()
    } else {
        x / x.exp_m1()
    }
}

/// Logarithmic mean of two positive values.
pub fn log_mean(a: f64, b: f64) -> f64 {
    if a == b {
        return b;
    }
    let x = (b - a) / a;
    (b - a) / x.ln_1p()
}

/// Weight `delta^E` with `delta^E a + (1 - delta^E) b = log_mean(a, b)`.
pub fn entropic_delta(a: f64, b: f64) -> f64 {
    delta(-((b - a) / a).ln_1p())
}

/// Caches the face integrals of `1/D`, `w/D` and `(base + D')/D` so that weights for
/// a new density cost `O(n)`.
#[derive(Clone, Debug)]
pub struct WeightBuilder {
    grid: Arc<VelocityGrid>,
    rule: QuadratureRule,
    boundary: Boundary,
    diffusion: Vec<f64>,
    inv_d: Vec<f64>,
    w_over_d: Vec<f64>,
    base: Vec<f64>,
    left_share: Vec<f64>,
    right_share: Vec<f64>,
}

impl WeightBuilder {
    pub fn new(
        grid: Arc<VelocityGrid>,
        dd: &dyn DriftDiffusion,
        rule: QuadratureRule,
        boundary: Boundary,
    ) -> Result<Self> {
        let n = grid.n_cells();
        let dw = grid.dw();
        let (points, weights) = rule.unit_rule()?;
        let mut b = Self {
            grid: grid.clone(),
            rule,
            boundary,
            diffusion: vec![0.0; n + 1],
            inv_d: vec![0.0; n + 1],
            w_over_d: vec![0.0; n + 1],
            base: vec![0.0; n + 1],
            left_share: vec![0.0; n + 1],
            right_share: vec![0.0; n + 1],
        };
        let last = match boundary {
            Boundary::NoFlux => n - 1,
            Boundary::QuasiStationaryRight => n,
        };
        for face in 1..=last {
            let left = grid.centers()[face - 1];
            b.diffusion[face] = dd.diffusion(grid.faces()[face]);
            for (&t, &omega) in points.iter().zip(&weights) {
                let w = left + t * dw;
                let d = dd.diffusion(w);
                if !(d > 0.0 && d.is_finite()) {
                    return Err(Error::SingularDiffusion { w, value: d });
                }
                let scale = omega * dw / d;
                b.inv_d[face] += scale;
                b.w_over_d[face] += scale * w;
                b.base[face] += scale * (dd.base_drift(w) + dd.diffusion_prime(w));
                b.left_share[face] += scale * (1.0 - t);
                b.right_share[face] += scale * t;
            }
        }
        Ok(b)
    }

    pub fn grid(&self) -> &Arc<VelocityGrid> {
        &self.grid
    }

    pub fn rule(&self) -> QuadratureRule {
        self.rule
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Weights for the density `f`.
    pub fn weights(&self, f: &[f64], dd: &dyn DriftDiffusion) -> FluxWeights {
        let mut out = FluxWeights::neutral(self.grid.n_cells() + 1, self.grid.dw(), self.boundary);
        self.update(f, dd, &mut out);
        out
    }

    /// Rebuilds `out` in place for the density `f`.
    pub fn update(&self, f: &[f64], dd: &dyn DriftDiffusion, out: &mut FluxWeights) {
        let field = dd.density_drift(f, &self.grid);
        self.update_with_field(&field, out);
    }

    /// Weights for an explicitly given density-dependent drift.
    pub fn weights_for_field(&self, field: &DriftField) -> FluxWeights {
        let mut out = FluxWeights::neutral(self.grid.n_cells() + 1, self.grid.dw(), self.boundary);
        self.update_with_field(field, &mut out);
        out
    }

    pub fn update_with_field(&self, field: &DriftField, out: &mut FluxWeights) {
        let n = self.grid.n_cells();
        let dw = self.grid.dw();
        let active = match self.boundary {
            Boundary::NoFlux => 1..n,
            Boundary::QuasiStationaryRight => 1..n + 1,
        };
        for face in active {
            let lambda = self.base[face]
                + match field {
                    DriftField::Affine { slope, offset } => {
                        slope * self.w_over_d[face] + offset * self.inv_d[face]
                    }
                    DriftField::Sampled(values) => {
                        let right = values[face.min(n - 1)];
                        values[face - 1] * self.left_share[face] + right * self.right_share[face]
                    }
                };
            out.lambda[face] = lambda;
            out.diffusion[face] = self.diffusion[face];
            out.c_tilde[face] = self.diffusion[face] * lambda / dw;
            out.delta[face] = delta(lambda);
        }
    }
}

/// Chang–Cooper weights for `f` using `rule` to integrate `(B[f] + D')/D` across each cell.
pub fn cc_weights(
    f: &Density,
    dd: &dyn DriftDiffusion,
    rule: QuadratureRule,
    boundary: Boundary,
) -> Result<FluxWeights> {
    let builder = WeightBuilder::new(f.grid().clone(), dd, rule, boundary)?;
    Ok(builder.weights(f.values(), dd))
}

/// Weights that make `f_inf` an exact zero-flux state: `lambda = ln(f_i / f_{i+1})`.
pub fn exact_weights(f_inf: &Density, dd: &dyn DriftDiffusion) -> Result<FluxWeights> {
    let grid = f_inf.grid();
    let n = grid.n_cells();
    let dw = grid.dw();
    let v = f_inf.values();
    if let Some((cell, &value)) = v.iter().enumerate().find(|(_, x)| !(**x > 0.0)) {
        return Err(Error::NonPositive { cell, value });
    }
    let mut out = FluxWeights::neutral(n + 1, dw, Boundary::NoFlux);
    for face in 1..n {
        let lambda = (v[face - 1] / v[face]).ln();
        let d = dd.diffusion(grid.faces()[face]);
        out.lambda[face] = lambda;
        out.diffusion[face] = d;
        out.c_tilde[face] = d * lambda / dw;
        out.delta[face] = delta(lambda);
    }
    Ok(out)
}

/// Chang–Cooper fluxes at all `n + 1` faces.
pub fn cc_flux(f: &Density, weights: &FluxWeights) -> Result<Vec<f64>> {
    let mut out = vec![0.0; f.len() + 1];
    cc_flux_into(f.values(), weights, &mut out)?;
    Ok(out)
}

pub(crate) fn cc_flux_into(f: &[f64], weights: &FluxWeights, out: &mut [f64]) -> Result<()> {
    let n = f.len();
    if weights.c_tilde.len() != n + 1 || out.len() != n + 1 {
        return Err(Error::SizeMismatch { expected: n + 1, actual: weights.c_tilde.len() });
    }
    let inv_dw = 1.0 / weights.dw;
    out[0] = 0.0;
    for i in 1..n {
        let (c, d, dl) = (weights.c_tilde[i], weights.diffusion[i], weights.delta[i]);
        out[i] = c * ((1.0 - dl) * f[i] + dl * f[i - 1]) + d * (f[i] - f[i - 1]) * inv_dw;
    }
    out[n] = weights.right_boundary_coefficient() * f[n - 1];
    Ok(())
}

/// Entropic-average fluxes `F = C~ * logmean(f_i, f_{i+1}) + D (f_{i+1} - f_i)/dw`.
pub fn entropic_flux(f: &Density, weights: &FluxWeights) -> Result<Vec<f64>> {
    let mut out = vec![0.0; f.len() + 1];
    entropic_flux_into(f.values(), weights, &mut out)?;
    Ok(out)
}

pub(crate) fn entropic_flux_into(f: &[f64], weights: &FluxWeights, out: &mut [f64]) -> Result<()> {
    let n = f.len();
    if weights.c_tilde.len() != n + 1 || out.len() != n + 1 {
        return Err(Error::SizeMismatch { expected: n + 1, actual: weights.c_tilde.len() });
    }
    if let Some((cell, &value)) = f.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositive { cell, value });
    }
    let inv_dw = 1.0 / weights.dw;
    out[0] = 0.0;
    for i in 1..n {
        out[i] = weights.c_tilde[i] * log_mean(f[i - 1], f[i])
            + weights.diffusion[i] * (f[i] - f[i - 1]) * inv_dw;
    }
    // The quasi-stationary ghost makes the entropic boundary flux vanish identically.
    out[n] = 0.0;
    Ok(())
}

/// Warns when the mesh is too coarse for the entropic flux to keep positivity.
pub fn check_entropic_mesh(weights: &FluxWeights) -> bool {
    let ok = weights.dw * weights.max_drift() <= 2.0 * weights.min_diffusion();
    if !ok {
        log::warn!(
            "entropic flux: dw * max|C~| = {:.3e} exceeds 2 * min D = {:.3e}; positivity is not guaranteed",
            weights.dw * weights.max_drift(),
            2.0 * weights.min_diffusion()
        );
    }
    ok
}
