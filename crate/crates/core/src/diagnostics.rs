//! Entropy functionals, dissipation monitors and error norms.

use crate::error::{Error, Result};
use crate::flux::{log_mean, FluxWeights};
use crate::mesh::{Density, VelocityGrid};

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::SizeMismatch { expected, actual });
    }
    Ok(())
}

fn x_log_x_ratio(f: f64, reference: f64, cell: usize) -> Result<f64> {
    if f == 0.0 {
        return Ok(0.0);
    }
    if reference <= 0.0 {
        return Err(Error::ReferenceNonPositive { cell, value: reference });
    }
    Ok(f * (f / reference).ln())
}

/// `dw * sum f_i ln(f_i / ref_i)`, with empty cells contributing zero.
pub fn relative_entropy(f: &Density, reference: &Density) -> Result<f64> {
    f.same_grid(reference)?;
    relative_entropy_values(f.values(), reference.values(), f.grid().dw())
}

pub fn relative_entropy_values(f: &[f64], reference: &[f64], dw: f64) -> Result<f64> {
    check_len(f.len(), reference.len())?;
    let mut sum = 0.0;
    for (i, (&a, &b)) in f.iter().zip(reference).enumerate() {
        sum += x_log_x_ratio(a, b, i)?;
    }
    Ok(dw * sum)
}

fn ratios(f: &[f64], reference: &[f64]) -> Result<Vec<f64>> {
    check_len(f.len(), reference.len())?;
    f.iter()
        .zip(reference)
        .enumerate()
        .map(|(i, (&a, &b))| {
            if b <= 0.0 {
                Err(Error::ReferenceNonPositive { cell: i, value: b })
            } else if a <= 0.0 {
                Err(Error::NonPositive { cell: i, value: a })
            } else {
                Ok(a / b)
            }
        })
        .collect()
}

/// Which flux the dissipation functional belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DissipationForm {
    ChangCooper,
    Entropic,
}

/// Discrete entropy dissipation over the interior faces.
///
/// With `x = f / f_ref`, the Chang–Cooper form is
/// `sum D (ln x_R - ln x_L)(x_R - x_L) fbar / dw` with `fbar = f_ref,L f_ref,R / logmean(f_ref,L, f_ref,R)`,
/// and the entropic form is `sum D (ln x_R - ln x_L)^2 logmean(f_L, f_R) / dw`.
/// Both equal `-dH/dt` when `f_ref` is the discrete equilibrium of `weights`.
pub fn discrete_dissipation(
    f: &Density,
    reference: &Density,
    weights: &FluxWeights,
    form: DissipationForm,
) -> Result<f64> {
    f.same_grid(reference)?;
    let (fv, rv) = (f.values(), reference.values());
    let x = ratios(fv, rv)?;
    check_len(fv.len() + 1, weights.diffusion.len())?;
    let dw = weights.dw;
    let mut sum = 0.0;
    for face in 1..fv.len() {
        let (l, r) = (face - 1, face);
        let dlog = (x[r] / x[l]).ln();
        let term = match form {
            DissipationForm::ChangCooper => {
                let fbar = rv[l] * rv[r] / log_mean(rv[l], rv[r]);
                dlog * (x[r] - x[l]) * fbar
            }
            DissipationForm::Entropic => dlog * dlog * log_mean(fv[l], fv[r]),
        };
        sum += weights.diffusion[face] * term;
    }
    Ok(sum / dw)
}

/// Discrete free energy `dw sum_j [ dw/2 sum_i U(w_j - w_i) f_i f_j + D f_j ln f_j ]`.
pub fn free_energy(f: &Density, potential: impl Fn(f64) -> f64, diffusion: f64) -> f64 {
    let (v, w, dw) = (f.values(), f.grid().centers(), f.grid().dw());
    let mut total = 0.0;
    for (j, &fj) in v.iter().enumerate() {
        let interaction: f64 = v.iter().zip(w).map(|(&fi, &wi)| potential(w[j] - wi) * fi).sum();
        let entropy = if fj > 0.0 { fj * fj.ln() } else { 0.0 };
        total += 0.5 * dw * interaction * fj + diffusion * entropy;
    }
    dw * total
}

/// `dw`-weighted discrete norms of a difference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorNorms {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

pub fn error_norms(f: &Density, reference: &Density) -> Result<ErrorNorms> {
    f.same_grid(reference)?;
    Ok(norms_of_difference(f.values(), reference.values(), f.grid().dw()))
}

/// Norms of `f - exact(w)` at the cell centres.
pub fn error_norms_fn(f: &Density, exact: impl Fn(f64) -> f64) -> ErrorNorms {
    let reference: Vec<f64> = f.grid().centers().iter().map(|&w| exact(w)).collect();
    norms_of_difference(f.values(), &reference, f.grid().dw())
}

pub fn norms_of_difference(a: &[f64], b: &[f64], dw: f64) -> ErrorNorms {
    let mut n = ErrorNorms { l1: 0.0, l2: 0.0, linf: 0.0 };
    for (x, y) in a.iter().zip(b) {
        let d = (x - y).abs();
        n.l1 += d;
        n.l2 += d * d;
        n.linf = n.linf.max(d);
    }
    n.l1 *= dw;
    n.l2 = (n.l2 * dw).sqrt();
    n
}

/// `||f - ref||_1 / ||ref||_1`.
pub fn relative_l1(f: &Density, reference: &Density) -> Result<f64> {
    let n = error_norms(f, reference)?;
    let scale: f64 = reference.values().iter().map(|v| v.abs()).sum::<f64>() * reference.grid().dw();
    Ok(n.l1 / scale)
}

/// Time series of an entropy functional.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EntropyTrace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub dissipation: Option<Vec<f64>>,
}

impl EntropyTrace {
    pub fn push(&mut self, time: f64, value: f64) {
        self.times.push(time);
        self.values.push(value);
    }

    /// Largest single-step increase (negative when strictly decreasing).
    pub fn max_increase(&self) -> f64 {
        self.values.windows(2).map(|p| p[1] - p[0]).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_non_increasing(&self, tolerance: f64) -> bool {
        self.values.windows(2).all(|p| p[1] <= p[0] + tolerance)
    }

    /// Checks `ln H(t) <= ln H(t_0) - rate (1 - slack) (t - t_0)` while `H` exceeds `floor`.
    pub fn decays_at_rate(&self, rate: f64, slack: f64, floor: f64) -> bool {
        let (Some(&t0), Some(&h0)) = (self.times.first(), self.values.first()) else {
            return true;
        };
        if h0 <= floor {
            return true;
        }
        self.times
            .iter()
            .zip(&self.values)
            .take_while(|(_, &h)| h > floor)
            .all(|(&t, &h)| h.ln() <= h0.ln() - rate * (1.0 - slack) * (t - t0) + 1e-12)
    }
}

/// Weighted average of per-node traces sampled at the same times.
pub fn expected_trace(traces: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let len = traces.iter().map(|t| t.len()).min().unwrap_or(0);
    (0..len).map(|s| traces.iter().zip(weights).map(|(t, w)| w * t[s]).sum()).collect()
}

/// Relative entropy of `f` against a grid-aligned reference, given as raw values.
pub fn relative_entropy_on(grid: &VelocityGrid, f: &[f64], reference: &[f64]) -> Result<f64> {
    relative_entropy_values(f, reference, grid.dw())
}
