//! Gauss rules for probability measures and the per-face rules used to integrate
//! the Chang–Cooper exponent.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Three-term recurrence of the monic orthogonal polynomials of a probability measure:
/// `p_{k+1}(x) = (x - alpha_k) p_k(x) - beta_k p_{k-1}(x)`, with `beta_0 = 1`.
pub trait OrthogonalFamily {
    fn recurrence(&self, k: usize) -> (f64, f64);
}

/// The uniform probability measure on `[-1, 1]` (Legendre polynomials).
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformReference;

impl OrthogonalFamily for UniformReference {
    fn recurrence(&self, k: usize) -> (f64, f64) {
        if k == 0 {
            return (0.0, 1.0);
        }
        let k = k as f64;
        (0.0, k * k / (4.0 * k * k - 1.0))
    }
}

/// Orthonormal polynomial values `q_0..q_{n}` at `x` and the derivative of `q_n`.
fn orthonormal_values(family: &impl OrthogonalFamily, n: usize, x: f64) -> (Vec<f64>, f64) {
    let mut q = Vec::with_capacity(n + 1);
    let mut dq_prev = 0.0;
    let mut dq = 0.0;
    q.push(1.0);
    let mut q_prev = 0.0;
    for k in 0..n {
        let (alpha, beta_k) = family.recurrence(k);
        let (_, beta_next) = family.recurrence(k + 1);
        let sb_next = beta_next.sqrt();
        let sb_k = if k == 0 { 0.0 } else { beta_k.sqrt() };
        let qk = q[k];
        let next = ((x - alpha) * qk - sb_k * q_prev) / sb_next;
        let dnext = (qk + (x - alpha) * dq - sb_k * dq_prev) / sb_next;
        q_prev = qk;
        dq_prev = dq;
        dq = dnext;
        q.push(next);
    }
    (q, dq)
}

/// `n`-point Gauss rule for the measure described by `family`.
///
/// Nodes come from the eigenvalues of the Jacobi matrix, are polished by Newton
/// iteration on the orthonormal polynomial of degree `n`, and weights are the
/// reciprocal Christoffel sums. Weights sum to one.
pub fn gauss_rule(family: &impl OrthogonalFamily, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::InvalidParameter("quadrature needs at least one node".into()));
    }
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let (alpha, _) = family.recurrence(k);
        jacobi[(k, k)] = alpha;
        if k + 1 < n {
            let (_, beta) = family.recurrence(k + 1);
            let off = beta.sqrt();
            jacobi[(k, k + 1)] = off;
            jacobi[(k + 1, k)] = off;
        }
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    nodes.sort_by(|a, b| a.total_cmp(b));

    let mut weights = Vec::with_capacity(n);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (q, dq) = orthonormal_values(family, n, *x);
            if dq == 0.0 {
                break;
            }
            let step = q[n] / dq;
            *x -= step;
            if step.abs() <= 1e-17 * x.abs().max(1.0) {
                break;
            }
        }
        let (q, _) = orthonormal_values(family, n - 1, *x);
        let christoffel: f64 = q.iter().map(|v| v * v).sum();
        weights.push(1.0 / christoffel);
    }
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok((nodes, weights))
}

/// Gauss–Legendre rule on `[0, 1]` with weights summing to one.
pub fn gauss_legendre_unit(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let (nodes, weights) = gauss_rule(&UniformReference, n)?;
    Ok((nodes.iter().map(|x| 0.5 * (x + 1.0)).collect(), weights))
}

/// Rule used to integrate `(B + D') / D` across one cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuadratureRule {
    /// Single evaluation at the face.
    Midpoint,
    /// Two-point open Newton–Cotes.
    OpenNc2,
    /// Three-point open Newton–Cotes (fourth order).
    OpenNc4,
    /// Five-point open Newton–Cotes (sixth order).
    OpenNc6,
    /// `n`-point Gauss–Legendre.
    Gauss(usize),
}

impl Default for QuadratureRule {
    fn default() -> Self {
        QuadratureRule::Gauss(20)
    }
}

impl QuadratureRule {
    /// Points and weights on `[0, 1]`; the weights sum to one.
    pub fn unit_rule(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok(match *self {
            QuadratureRule::Midpoint => (vec![0.5], vec![1.0]),
            QuadratureRule::OpenNc2 => (vec![1.0 / 3.0, 2.0 / 3.0], vec![0.5, 0.5]),
            QuadratureRule::OpenNc4 => (
                vec![0.25, 0.5, 0.75],
                vec![2.0 / 3.0, -1.0 / 3.0, 2.0 / 3.0],
            ),
            QuadratureRule::OpenNc6 => (
                (1..=5).map(|k| k as f64 / 6.0).collect(),
                [11.0, -14.0, 26.0, -14.0, 11.0].iter().map(|c| c / 20.0).collect(),
            ),
            QuadratureRule::Gauss(n) => gauss_legendre_unit(n)?,
        })
    }

    pub fn name(&self) -> String {
        match self {
            QuadratureRule::Midpoint => "midpoint".into(),
            QuadratureRule::OpenNc2 => "open_nc2".into(),
            QuadratureRule::OpenNc4 => "open_nc4".into(),
            QuadratureRule::OpenNc6 => "open_nc6".into(),
            QuadratureRule::Gauss(n) => format!("gauss{n}"),
        }
    }
}
