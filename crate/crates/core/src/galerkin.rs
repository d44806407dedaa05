//! Stochastic Galerkin (generalized polynomial chaos) solvers with a Legendre basis,
//! central differences in `w`, and the Micro–Macro reformulation that keeps the projected
//! equilibrium exactly stationary.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, LU, Dyn};

use crate::error::{Error, Result};
use crate::flux::{DriftDiffusion, DriftField};
use crate::mesh::{Density, RandomInput, VelocityGrid};
use crate::models::Model;
use crate::sampling::{UqEstimate, UqMethod};
use crate::solver::TimeGrid;
use crate::time::Stepper;

/// Legendre values `P_0..=P_order` at `xi`.
pub fn legendre_values(order: usize, xi: f64) -> Vec<f64> {
    let mut p = Vec::with_capacity(order + 1);
    p.push(1.0);
    if order >= 1 {
        p.push(xi);
    }
    for h in 1..order {
        let hf = h as f64;
        p.push(((2.0 * hf + 1.0) * xi * p[h] - hf * p[h - 1]) / (hf + 1.0));
    }
    p
}

/// Orthogonal polynomial basis for a uniform input with its inner-product quadrature.
#[derive(Clone, Debug)]
pub struct GpcBasis {
    input: RandomInput,
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// `values[q][h] = Phi_h(nodes[q])`.
    values: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

impl GpcBasis {
    /// Legendre basis of degree `order` with a `2 order + 4` point Gauss rule.
    pub fn legendre(input: RandomInput, order: usize) -> Result<Self> {
        Self::with_quadrature(input, order, 2 * order + 4)
    }

    pub fn with_quadrature(input: RandomInput, order: usize, n_nodes: usize) -> Result<Self> {
        let (nodes, weights) = input.quadrature(n_nodes)?;
        let values = nodes.iter().map(|&t| legendre_values(order, input.to_reference(t))).collect();
        let norms = (0..=order).map(|h| 1.0 / (2.0 * h as f64 + 1.0)).collect();
        Ok(Self { input, order, nodes, weights, values, norms })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n_modes(&self) -> usize {
        self.order + 1
    }

    pub fn input(&self) -> &RandomInput {
        &self.input
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[Phi_h^2]`.
    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// All basis polynomials at `theta`.
    pub fn eval(&self, theta: f64) -> Vec<f64> {
        legendre_values(self.order, self.input.to_reference(theta))
    }

    /// Basis values at quadrature node `q`.
    pub fn at_node(&self, q: usize) -> &[f64] {
        &self.values[q]
    }

    /// `E[Phi_h Phi_k]` by the basis quadrature.
    pub fn gram(&self) -> DMatrix<f64> {
        self.galerkin_matrix(&vec![1.0; self.nodes.len()]).map_with_location(|h, _, v| v * self.norms[h])
    }

    /// `A_hk = E[a Phi_h Phi_k] / E[Phi_h^2]` from the values of `a` at the quadrature nodes.
    pub fn galerkin_matrix(&self, a_at_nodes: &[f64]) -> DMatrix<f64> {
        let m = self.n_modes();
        let mut out = DMatrix::zeros(m, m);
        for (q, (&w, &a)) in self.weights.iter().zip(a_at_nodes).enumerate() {
            let phi = &self.values[q];
            for h in 0..m {
                let s = w * a * phi[h] / self.norms[h];
                for k in 0..m {
                    out[(h, k)] += s * phi[k];
                }
            }
        }
        out
    }
}

/// Projection tensor of a scalar coefficient `a(theta)`, e.g. a drift or diffusion at fixed `w`.
pub fn projection_tensor(basis: &GpcBasis, a: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let values: Vec<f64> = basis.nodes().iter().map(|&t| a(t)).collect();
    basis.galerkin_matrix(&values)
}

/// Third-order tensor `E[Phi_h Phi_k Phi_m] / E[Phi_h^2]`, indexed `[m][(h, k)]`.
pub fn triple_product_tensor(basis: &GpcBasis) -> Vec<DMatrix<f64>> {
    (0..basis.n_modes())
        .map(|m| {
            let a: Vec<f64> = (0..basis.nodes().len()).map(|q| basis.at_node(q)[m]).collect();
            basis.galerkin_matrix(&a)
        })
        .collect()
}

/// Chaos coefficients `f_h` of a random density.
#[derive(Clone, Debug, PartialEq)]
pub struct GpcField {
    grid: Arc<VelocityGrid>,
    /// `modes[h][i]`.
    modes: Vec<Vec<f64>>,
}

impl GpcField {
    pub fn zeros(grid: Arc<VelocityGrid>, n_modes: usize) -> Self {
        let n = grid.n_cells();
        Self { grid, modes: vec![vec![0.0; n]; n_modes] }
    }

    /// `f_h = E[f Phi_h] / E[Phi_h^2]` by the basis quadrature.
    pub fn project(
        basis: &GpcBasis,
        grid: &Arc<VelocityGrid>,
        f: impl Fn(f64) -> Result<Density>,
    ) -> Result<Self> {
        let mut field = Self::zeros(grid.clone(), basis.n_modes());
        for (q, (&theta, &w)) in basis.nodes().iter().zip(basis.weights()).enumerate() {
            let d = f(theta).map_err(|e| e.at_node(q))?;
            if d.len() != grid.n_cells() {
                return Err(Error::SizeMismatch { expected: grid.n_cells(), actual: d.len() });
            }
            let phi = basis.at_node(q);
            for (h, mode) in field.modes.iter_mut().enumerate() {
                let s = w * phi[h] / basis.norms()[h];
                for (m, v) in mode.iter_mut().zip(d.values()) {
                    *m += s * v;
                }
            }
        }
        Ok(field)
    }

    pub fn grid(&self) -> &Arc<VelocityGrid> {
        &self.grid
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn mode(&self, h: usize) -> &[f64] {
        &self.modes[h]
    }

    pub fn mode_mut(&mut self, h: usize) -> &mut [f64] {
        &mut self.modes[h]
    }

    /// `sum_h f_h Phi_h(theta)`.
    pub fn reconstruct(&self, basis: &GpcBasis, theta: f64) -> Vec<f64> {
        self.combine(&basis.eval(theta))
    }

    fn combine(&self, phi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.n_cells()];
        for (mode, &p) in self.modes.iter().zip(phi) {
            for (o, v) in out.iter_mut().zip(mode) {
                *o += p * v;
            }
        }
        out
    }

    pub fn mean(&self) -> Density {
        Density::from_parts(self.grid.clone(), self.modes[0].clone(), true)
    }

    /// `sum_{h >= 1} f_h^2 E[Phi_h^2]`, clipped at zero.
    pub fn variance(&self, basis: &GpcBasis) -> Density {
        let mut var = vec![0.0; self.grid.n_cells()];
        for (mode, &norm) in self.modes.iter().zip(basis.norms()).skip(1) {
            for (v, m) in var.iter_mut().zip(mode) {
                *v += m * m * norm;
            }
        }
        Density::from_parts(self.grid.clone(), var.into_iter().map(|v| v.max(0.0)).collect(), true)
    }

    /// Largest absolute coefficient.
    pub fn max_abs(&self) -> f64 {
        self.modes.iter().flatten().fold(0.0, |a, v| a.max(v.abs()))
    }

    fn add(&self, other: &GpcField) -> GpcField {
        let modes = self
            .modes
            .iter()
            .zip(&other.modes)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        GpcField { grid: self.grid.clone(), modes }
    }

    fn to_blocks(&self) -> Vec<DVector<f64>> {
        (0..self.grid.n_cells())
            .map(|i| DVector::from_iterator(self.modes.len(), self.modes.iter().map(|m| m[i])))
            .collect()
    }

    fn from_blocks(grid: Arc<VelocityGrid>, blocks: &[DVector<f64>]) -> Self {
        let n_modes = blocks.first().map_or(0, |b| b.len());
        let modes = (0..n_modes).map(|h| blocks.iter().map(|b| b[h]).collect()).collect();
        Self { grid, modes }
    }
}

/// Block-tridiagonal matrix over cells with `(M+1) x (M+1)` blocks.
#[derive(Clone, Debug)]
pub struct BlockTridiagonal {
    pub lower: Vec<DMatrix<f64>>,
    pub diag: Vec<DMatrix<f64>>,
    pub upper: Vec<DMatrix<f64>>,
}

impl BlockTridiagonal {
    pub fn apply(&self, x: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let n = x.len();
        (0..n)
            .map(|i| {
                let mut y = &self.diag[i] * &x[i];
                if i > 0 {
                    y += &self.lower[i] * &x[i - 1];
                }
                if i + 1 < n {
                    y += &self.upper[i] * &x[i + 1];
                }
                y
            })
            .collect()
    }

    /// `I - dt * self`.
    pub fn implicit(&self, dt: f64) -> Self {
        let m = self.diag.first().map_or(0, |d| d.nrows());
        Self {
            lower: self.lower.iter().map(|b| b * -dt).collect(),
            diag: self.diag.iter().map(|b| DMatrix::identity(m, m) - b * dt).collect(),
            upper: self.upper.iter().map(|b| b * -dt).collect(),
        }
    }

    /// Block Thomas factorization.
    pub fn factor(&self) -> Result<BlockFactorization> {
        let n = self.diag.len();
        let mut pivots: Vec<LU<f64, Dyn, Dyn>> = Vec::with_capacity(n);
        let mut couplings: Vec<DMatrix<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let mut d = self.diag[i].clone();
            if i > 0 {
                d -= &self.lower[i] * &couplings[i - 1];
            }
            let lu = d.lu();
            if !lu.is_invertible() {
                return Err(Error::SingularSystem { row: i });
            }
            let w = if i + 1 < n {
                lu.solve(&self.upper[i]).ok_or(Error::SingularSystem { row: i })?
            } else {
                DMatrix::zeros(0, 0)
            };
            pivots.push(lu);
            couplings.push(w);
        }
        Ok(BlockFactorization { lower: self.lower.clone(), pivots, couplings })
    }
}

/// Factorized block-tridiagonal system.
#[derive(Clone, Debug)]
pub struct BlockFactorization {
    lower: Vec<DMatrix<f64>>,
    pivots: Vec<LU<f64, Dyn, Dyn>>,
    couplings: Vec<DMatrix<f64>>,
}

impl BlockFactorization {
    pub fn solve(&self, rhs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        let n = rhs.len();
        let mut y: Vec<DVector<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let r = if i > 0 { &rhs[i] - &self.lower[i] * &y[i - 1] } else { rhs[i].clone() };
            y.push(self.pivots[i].solve(&r).ok_or(Error::SingularSystem { row: i })?);
        }
        for i in (0..n.saturating_sub(1)).rev() {
            let correction = &self.couplings[i] * &y[i + 1];
            y[i] -= correction;
        }
        Ok(y)
    }
}

/// Galerkin-projected Fokker–Planck operator discretized by central differences with
/// no-flux boundaries.
pub struct GalerkinSystem {
    basis: GpcBasis,
    grid: Arc<VelocityGrid>,
    node_operators: Vec<Arc<dyn DriftDiffusion>>,
    linear: bool,
    /// Diffusion tensor at each cell centre.
    diffusion: Vec<DMatrix<f64>>,
    /// Density-independent drift tensor at each face.
    base_drift: Vec<DMatrix<f64>>,
}

impl GalerkinSystem {
    pub fn new(model: &dyn Model, basis: GpcBasis, grid: &Arc<VelocityGrid>) -> Result<Self> {
        let node_operators = basis
            .nodes()
            .iter()
            .enumerate()
            .map(|(q, &t)| model.drift_diffusion(t, grid).map_err(|e| e.at_node(q)))
            .collect::<Result<Vec<_>>>()?;
        let linear = node_operators.iter().all(|d| d.is_linear());
        let diffusion = grid
            .centers()
            .iter()
            .map(|&w| {
                let d: Vec<f64> = node_operators.iter().map(|op| op.diffusion(w)).collect();
                basis.galerkin_matrix(&d)
            })
            .collect();
        let base_drift = grid
            .faces()
            .iter()
            .map(|&w| {
                let b: Vec<f64> = node_operators.iter().map(|op| op.base_drift(w)).collect();
                basis.galerkin_matrix(&b)
            })
            .collect();
        Ok(Self { basis, grid: grid.clone(), node_operators, linear, diffusion, base_drift })
    }

    pub fn basis(&self) -> &GpcBasis {
        &self.basis
    }

    pub fn grid(&self) -> &Arc<VelocityGrid> {
        &self.grid
    }

    pub fn is_linear(&self) -> bool {
        self.linear
    }

    /// Diffusion tensor `d_hk` at cell `i`.
    pub fn diffusion_tensor(&self, i: usize) -> &DMatrix<f64> {
        &self.diffusion[i]
    }

    /// Drift tensor `b_hk[f]` at every face: the density-dependent part is evaluated on the
    /// density reconstructed at each quadrature node and projected back.
    pub fn drift_tensors(&self, field: &GpcField) -> Vec<DMatrix<f64>> {
        if self.linear {
            return self.base_drift.clone();
        }
        let faces = self.grid.faces();
        let per_node: Vec<DriftField> = self
            .node_operators
            .iter()
            .enumerate()
            .map(|(q, op)| op.density_drift(&field.combine(self.basis.at_node(q)), &self.grid))
            .collect();
        faces
            .iter()
            .enumerate()
            .map(|(face, &w)| {
                let values: Vec<f64> = per_node.iter().map(|fld| field_at(fld, face, w)).collect();
                &self.base_drift[face] + self.basis.galerkin_matrix(&values)
            })
            .collect()
    }

    /// Linear operator `A` with `d/dt f = A f` for frozen drift tensors.
    pub fn operator(&self, drift: &[DMatrix<f64>]) -> BlockTridiagonal {
        let n = self.grid.n_cells();
        let dw = self.grid.dw();
        let m = self.basis.n_modes();
        let zero = DMatrix::<f64>::zeros(m, m);
        // Face `i` flux: left[i] f_{i-1} + right[i] f_i, zero on the boundary faces.
        let mut left = vec![zero.clone(); n + 1];
        let mut right = vec![zero.clone(); n + 1];
        for face in 1..n {
            left[face] = &drift[face] * 0.5 - &self.diffusion[face - 1] / dw;
            right[face] = &drift[face] * 0.5 + &self.diffusion[face] / dw;
        }
        let mut out = BlockTridiagonal { lower: vec![zero.clone(); n], diag: vec![zero.clone(); n], upper: vec![zero; n] };
        for i in 0..n {
            out.lower[i] = &left[i] * (-1.0 / dw);
            out.diag[i] = (&left[i + 1] - &right[i]) / dw;
            out.upper[i] = &right[i + 1] / dw;
        }
        out
    }

    /// `A[f] f`.
    pub fn apply(&self, field: &GpcField) -> GpcField {
        let a = self.operator(&self.drift_tensors(field));
        GpcField::from_blocks(self.grid.clone(), &a.apply(&field.to_blocks()))
    }
}

fn field_at(field: &DriftField, face: usize, w: f64) -> f64 {
    match field {
        DriftField::Affine { slope, offset } => slope * w + offset,
        DriftField::Sampled(values) => {
            let n = values.len();
            if face == 0 {
                values[0]
            } else if face >= n {
                values[n - 1]
            } else {
                0.5 * (values[face - 1] + values[face])
            }
        }
    }
}

/// Time integrator for the standard or Micro–Macro Galerkin system.
pub struct GalerkinSolver {
    system: GalerkinSystem,
    /// Projected equilibrium; present for the Micro–Macro form.
    equilibrium: Option<GpcField>,
    equilibrium_rate: Option<Vec<DVector<f64>>>,
    cached: Option<(f64, BlockFactorization)>,
}

impl GalerkinSolver {
    pub fn standard(system: GalerkinSystem) -> Self {
        Self { system, equilibrium: None, equilibrium_rate: None, cached: None }
    }

    pub fn micro_macro(system: GalerkinSystem, equilibrium: GpcField) -> Self {
        let rate = if system.is_linear() {
            None
        } else {
            let a = system.operator(&system.drift_tensors(&equilibrium));
            Some(a.apply(&equilibrium.to_blocks()))
        };
        Self { system, equilibrium: Some(equilibrium), equilibrium_rate: rate, cached: None }
    }

    pub fn system(&self) -> &GalerkinSystem {
        &self.system
    }

    pub fn equilibrium(&self) -> Option<&GpcField> {
        self.equilibrium.as_ref()
    }

    /// Full solution coefficients for a state (adds the equilibrium in Micro–Macro form).
    pub fn solution(&self, state: &GpcField) -> GpcField {
        match &self.equilibrium {
            Some(eq) => eq.add(state),
            None => state.clone(),
        }
    }

    /// Advances the state by `dt`.
    ///
    /// Standard form: `(I - dt A[f^n]) f^{n+1} = f^n`.
    /// Micro–Macro form: `(I - dt A[f_eq + g^n]) g^{n+1} = g^n + dt (A[f_eq + g^n] - A[f_eq]) f_eq`.
    pub fn step(&mut self, state: &mut GpcField, dt: f64, stepper: Stepper) -> Result<()> {
        let full = self.solution(state);
        let drift = self.system.drift_tensors(&full);
        let a = self.system.operator(&drift);
        let x = state.to_blocks();
        let coupling: Option<Vec<DVector<f64>>> = match (&self.equilibrium, &self.equilibrium_rate) {
            (Some(eq), Some(eq_rate)) => {
                let now = a.apply(&eq.to_blocks());
                Some(now.iter().zip(eq_rate).map(|(a, b)| a - b).collect())
            }
            _ => None,
        };
        let next = match stepper {
            Stepper::ExplicitEuler => {
                let ax = a.apply(&x);
                x.iter()
                    .zip(&ax)
                    .enumerate()
                    .map(|(i, (xi, ai))| {
                        let mut y = xi + ai * dt;
                        if let Some(c) = &coupling {
                            y += &c[i] * dt;
                        }
                        y
                    })
                    .collect()
            }
            Stepper::SemiImplicit => {
                let rhs: Vec<DVector<f64>> = match &coupling {
                    Some(c) => x.iter().zip(c).map(|(xi, ci)| xi + ci * dt).collect(),
                    None => x,
                };
                if self.system.is_linear() {
                    let stale = !matches!(&self.cached, Some((cached_dt, _)) if *cached_dt == dt);
                    if stale {
                        self.cached = Some((dt, a.implicit(dt).factor()?));
                    }
                    self.cached.as_ref().expect("factorization cached").1.solve(&rhs)?
                } else {
                    a.implicit(dt).factor()?.solve(&rhs)?
                }
            }
            other => {
                return Err(Error::Unsupported(format!("{} stepping for Galerkin systems", other.name())));
            }
        };
        *state = GpcField::from_blocks(self.system.grid.clone(), &next);
        Ok(())
    }
}

/// Result of a Galerkin run: estimates at the output times and the final coefficients.
#[derive(Clone, Debug)]
pub struct GalerkinRun {
    pub estimates: Vec<UqEstimate>,
    pub final_field: GpcField,
}

/// Runs the standard (`micro_macro = false`) or Micro–Macro Galerkin system of `order`.
pub fn galerkin_run(
    model: &dyn Model,
    input: &RandomInput,
    order: usize,
    grid: &Arc<VelocityGrid>,
    time: &TimeGrid,
    stepper: Stepper,
    micro_macro: bool,
) -> Result<GalerkinRun> {
    let basis = GpcBasis::legendre(*input, order)?;
    let datum = GpcField::project(&basis, grid, |t| model.initial_datum(t, grid))?;
    let system = GalerkinSystem::new(model, basis.clone(), grid)?;
    let (mut solver, mut state) = if micro_macro {
        let eq = GpcField::project(&basis, grid, |t| {
            model
                .steady_state(t, grid)
                .unwrap_or_else(|| Err(Error::Unsupported(format!("{} has no closed-form steady state", model.name()))))
        })?;
        let g0 = GpcField { grid: grid.clone(), modes: datum.modes.iter().zip(&eq.modes).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect()).collect() };
        (GalerkinSolver::micro_macro(system, eq), g0)
    } else {
        (GalerkinSolver::standard(system), datum)
    };
    let method = if micro_macro { UqMethod::MmGalerkin } else { UqMethod::Galerkin };
    let mut estimates = Vec::with_capacity(time.output_steps.len());
    let record = |step: usize, solver: &GalerkinSolver, state: &GpcField, out: &mut Vec<UqEstimate>| {
        for &s in &time.output_steps {
            if s == step {
                let full = solver.solution(state);
                out.push(UqEstimate {
                    mean: full.mean(),
                    variance: full.variance(&basis),
                    method,
                    n_nodes_or_samples: order + 1,
                    seed: None,
                    time: time.time(step),
                });
            }
        }
    };
    record(0, &solver, &state, &mut estimates);
    for step in 1..=time.n_steps {
        solver.step(&mut state, time.dt, stepper)?;
        record(step, &solver, &state, &mut estimates);
    }
    Ok(GalerkinRun { final_field: solver.solution(&state), estimates })
}
