//! Velocity grids, grid-sampled densities and the scalar random input.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::quadrature::{gauss_rule, UniformReference};

/// Uniform cell-centred mesh on `[w_min, w_max]`.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityGrid {
    w_min: f64,
    w_max: f64,
    n_cells: usize,
    dw: f64,
    centers: Vec<f64>,
    faces: Vec<f64>,
}

impl VelocityGrid {
    pub fn new(w_min: f64, w_max: f64, n_cells: usize) -> Result<Arc<Self>> {
        if n_cells < 2 {
            return Err(Error::InvalidParameter("n_cells must be ≥ 2".into()));
        }
        if !(w_min.is_finite() && w_max.is_finite() && w_max > w_min) {
            return Err(Error::InvalidParameter(format!(
                "empty velocity domain [{w_min}, {w_max}]"
            )));
        }
        let dw = (w_max - w_min) / n_cells as f64;
        let centers = (0..n_cells).map(|i| w_min + (i as f64 + 0.5) * dw).collect();
        let faces = (0..=n_cells).map(|i| w_min + i as f64 * dw).collect();
        Ok(Arc::new(Self { w_min, w_max, n_cells, dw, centers, faces }))
    }

    pub fn w_min(&self) -> f64 {
        self.w_min
    }
    pub fn w_max(&self) -> f64 {
        self.w_max
    }
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }
    pub fn dw(&self) -> f64 {
        self.dw
    }
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }
    /// `n_cells + 1` face positions; face `i` sits between cells `i - 1` and `i`.
    pub fn faces(&self) -> &[f64] {
        &self.faces
    }
}

/// Cell-centred samples of a distribution (or of a signed perturbation).
#[derive(Clone, Debug, PartialEq)]
pub struct Density {
    grid: Arc<VelocityGrid>,
    values: Vec<f64>,
    signed: bool,
}

/// Mass, mean and temperature (second central moment) of a density.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments {
    pub mass: f64,
    pub mean: f64,
    pub temperature: f64,
}

impl Density {
    /// Nonnegative density; rejects negative or non-finite values.
    pub fn new(grid: Arc<VelocityGrid>, values: Vec<f64>) -> Result<Self> {
        check_len(&grid, values.len())?;
        if let Some((cell, &value)) =
            values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::InvalidParameter(format!(
                "density value {value} at cell {cell} is negative or not finite"
            )));
        }
        Ok(Self { grid, values, signed: false })
    }

    /// Signed field, used for Micro–Macro perturbations.
    pub fn signed(grid: Arc<VelocityGrid>, values: Vec<f64>) -> Result<Self> {
        check_len(&grid, values.len())?;
        Ok(Self { grid, values, signed: true })
    }

    pub fn zeros(grid: Arc<VelocityGrid>, signed: bool) -> Self {
        let n = grid.n_cells();
        Self { grid, values: vec![0.0; n], signed }
    }

    /// Samples `f` at the cell centres.
    pub fn from_fn(grid: Arc<VelocityGrid>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.centers().iter().map(|&w| f(w)).collect();
        Self::new(grid, values)
    }

    /// Builds a density without re-checking the sign of its values.
    pub(crate) fn from_parts(grid: Arc<VelocityGrid>, values: Vec<f64>, signed: bool) -> Self {
        debug_assert_eq!(grid.n_cells(), values.len());
        Self { grid, values, signed }
    }

    pub fn grid(&self) -> &Arc<VelocityGrid> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn is_signed(&self) -> bool {
        self.signed
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        Self::from_parts(self.grid.clone(), values, self.signed)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mass(&self) -> f64 {
        mass_of(&self.values, self.grid.dw())
    }

    pub fn moments(&self) -> Result<Moments> {
        moments_of(&self.values, &self.grid)
    }

    /// Rescales to unit mass.
    pub fn normalized(&self) -> Result<Self> {
        let m = self.mass();
        if !(m.is_finite() && m > 0.0) {
            return Err(Error::DegenerateDensity);
        }
        Ok(self.with_values(self.values.iter().map(|v| v / m).collect()))
    }

    pub fn same_grid(&self, other: &Density) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Cellwise `self + other`; the result is signed if either operand is.
    pub fn add(&self, other: &Density) -> Result<Self> {
        self.same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Self::from_parts(self.grid.clone(), values, self.signed || other.signed))
    }

    /// Cellwise `self - other`, always signed.
    pub fn sub(&self, other: &Density) -> Result<Self> {
        self.same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Ok(Self::from_parts(self.grid.clone(), values, true))
    }
}

fn check_len(grid: &VelocityGrid, len: usize) -> Result<()> {
    if grid.n_cells() != len {
        return Err(Error::SizeMismatch { expected: grid.n_cells(), actual: len });
    }
    Ok(())
}

/// Midpoint-rule mass `dw * sum f_i`.
pub fn mass_of(values: &[f64], dw: f64) -> f64 {
    dw * values.iter().sum::<f64>()
}

pub fn moments_of(values: &[f64], grid: &VelocityGrid) -> Result<Moments> {
    let dw = grid.dw();
    let mass = mass_of(values, dw);
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::DegenerateDensity);
    }
    let w = grid.centers();
    let mean = dw * w.iter().zip(values).map(|(w, f)| w * f).sum::<f64>() / mass;
    let temperature =
        dw * w.iter().zip(values).map(|(w, f)| (w - mean).powi(2) * f).sum::<f64>() / mass;
    Ok(Moments { mass, mean, temperature })
}

/// Maxwellian with mean `u` and temperature `t` sampled at the cell centres (not renormalized).
pub fn maxwellian(grid: &Arc<VelocityGrid>, u: f64, t: f64) -> Result<Density> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("temperature must be positive, got {t}")));
    }
    let c = 1.0 / (2.0 * std::f64::consts::PI * t).sqrt();
    Density::from_fn(grid.clone(), |w| c * (-(w - u).powi(2) / (2.0 * t)).exp())
}

/// Law of the scalar random input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Distribution {
    Uniform { a: f64, b: f64 },
}

/// Scalar random input with seeded per-sample streams and Gauss quadrature.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomInput {
    distribution: Distribution,
}

impl RandomInput {
    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::InvalidParameter(format!("uniform({a}, {b}) needs a < b")));
        }
        Ok(Self { distribution: Distribution::Uniform { a, b } })
    }

    pub fn distribution(&self) -> Distribution {
        self.distribution
    }

    /// Maps `theta` to the reference variable on `[-1, 1]`.
    pub fn to_reference(&self, theta: f64) -> f64 {
        match self.distribution {
            Distribution::Uniform { a, b } => (2.0 * theta - a - b) / (b - a),
        }
    }

    pub fn from_reference(&self, xi: f64) -> f64 {
        match self.distribution {
            Distribution::Uniform { a, b } => 0.5 * (a + b) + 0.5 * (b - a) * xi,
        }
    }

    /// `m` Gauss nodes and weights for the law of the input; weights sum to one.
    pub fn quadrature(&self, m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        match self.distribution {
            Distribution::Uniform { .. } => {
                let (xi, w) = gauss_rule(&UniformReference, m)?;
                Ok((xi.into_iter().map(|x| self.from_reference(x)).collect(), w))
            }
        }
    }

    /// Independent deterministic stream for sample `k` under `seed`.
    pub fn stream(seed: u64, k: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k);
        rng
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match self.distribution {
            Distribution::Uniform { a, b } => a + (b - a) * rng.gen::<f64>(),
        }
    }

    /// Draw of sample `k`; independent of how many other samples are drawn.
    pub fn sample_indexed(&self, seed: u64, k: usize) -> f64 {
        self.sample(&mut Self::stream(seed, k as u64))
    }
}

/// Gauss nodes and weights for `input`.
pub fn quadrature_nodes(input: &RandomInput, m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    input.quadrature(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bimodal(c: f64, s2: f64) -> impl Fn(f64) -> f64 {
        move |w| {
            let n = 1.0 / (2.0 * std::f64::consts::PI * s2).sqrt();
            0.5 * n * ((-(w - c).powi(2) / (2.0 * s2)).exp() + (-(w + c).powi(2) / (2.0 * s2)).exp())
        }
    }

    #[test]
    fn grid_spacing_is_uniform() {
        let g = VelocityGrid::new(-1.0, 1.0, 21).unwrap();
        for pair in g.centers().windows(2) {
            assert!(((pair[1] - pair[0]) / g.dw() - 1.0).abs() < 1e-12);
        }
        for pair in g.faces().windows(2) {
            assert!(((pair[1] - pair[0]) - g.dw()).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_tiny_grids() {
        let err = VelocityGrid::new(-1.0, 1.0, 0).unwrap_err();
        assert!(err.to_string().contains("n_cells must be ≥ 2"));
    }

    #[test]
    fn constant_and_zero_mass() {
        let g = VelocityGrid::new(-1.0, 1.0, 20).unwrap();
        let one = Density::from_fn(g.clone(), |_| 1.0).unwrap();
        assert!((one.mass() - 2.0).abs() < 1e-14);
        let zero = Density::zeros(g, false);
        assert_eq!(zero.mass(), 0.0);
        assert_eq!(zero.moments().unwrap_err(), Error::DegenerateDensity);
    }

    #[test]
    fn bimodal_datum_mass_mean_temperature() {
        let g = VelocityGrid::new(-5.0, 5.0, 400).unwrap();
        let f = Density::from_fn(g, bimodal(0.1, 0.1)).unwrap();
        let m = f.moments().unwrap();
        assert!((m.mass - 1.0).abs() < 1e-6);
        assert!(m.mean.abs() < 1e-10);
        assert!((m.temperature - 0.11).abs() < 1e-6);
    }

    #[test]
    fn maxwellian_moments() {
        let g = VelocityGrid::new(-6.0, 6.0, 2400).unwrap();
        let m = maxwellian(&g, 0.3, 0.5).unwrap().moments().unwrap();
        assert!((m.mass - 1.0).abs() < 1e-6);
        assert!((m.mean - 0.3).abs() < 1e-6);
        assert!((m.temperature - 0.5).abs() < 1e-6);
    }

    #[test]
    fn maxwellian_temperature_converges_at_second_order() {
        // Grid points at +-1.5 sigma keep the tails out of the picture; the
        // error comes from the midpoint rule on a bounded interval.
        let errors: Vec<f64> = [20usize, 40, 80]
            .iter()
            .map(|&n| {
                let g = VelocityGrid::new(-1.0, 1.0, n).unwrap();
                let f = maxwellian(&g, 0.1, 0.3).unwrap();
                let fine = VelocityGrid::new(-1.0, 1.0, 20 * 1024).unwrap();
                let exact = maxwellian(&fine, 0.1, 0.3).unwrap().moments().unwrap();
                (f.moments().unwrap().temperature - exact.temperature).abs()
            })
            .collect();
        for pair in errors.windows(2) {
            let order = (pair[0] / pair[1]).log2();
            assert!(order > 1.9, "observed order {order}");
        }
    }

    #[test]
    fn quadrature_examples() {
        let input = RandomInput::uniform(-1.0, 1.0).unwrap();
        let (x, w) = quadrature_nodes(&input, 1).unwrap();
        assert!(x[0].abs() < 1e-15 && (w[0] - 1.0).abs() < 1e-15);
        let (x, w) = quadrature_nodes(&input, 5).unwrap();
        let i8: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((i8 - 1.0 / 9.0).abs() < 1e-13);
        let shifted = RandomInput::uniform(-0.1, 0.1).unwrap();
        let (x, w) = shifted.quadrature(4).unwrap();
        let second: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        assert!((second - 0.01 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let input = RandomInput::uniform(-1.0, 1.0).unwrap();
        assert_eq!(input.sample_indexed(7, 3), input.sample_indexed(7, 3));
        assert_ne!(input.sample_indexed(7, 3), input.sample_indexed(7, 4));
        assert_ne!(input.sample_indexed(7, 3), input.sample_indexed(8, 3));
    }

    proptest! {
        #[test]
        fn quadrature_weights_sum_to_one(m in 1usize..40, a in -5.0f64..5.0, len in 0.01f64..10.0) {
            let input = RandomInput::uniform(a, a + len).unwrap();
            let (x, w) = input.quadrature(m).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-13);
            prop_assert!(x.iter().all(|&t| t > a && t < a + len));
        }

        #[test]
        fn samples_stay_in_support(seed in any::<u64>(), k in 0usize..10_000) {
            let input = RandomInput::uniform(-0.1, 0.1).unwrap();
            let t = input.sample_indexed(seed, k);
            prop_assert!((-0.1..0.1).contains(&t));
        }
    }
}
