//! Free transport `d/dt f + w d/dx f = 0` in phase space and Strang splitting with a
//! velocity-space operator.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::VelocityGrid;

/// Uniform cell-centred mesh in physical space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpaceGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    pub dx: f64,
    pub periodic: bool,
}

impl SpaceGrid {
    pub fn periodic(x_min: f64, x_max: f64, n_x: usize) -> Result<Self> {
        if n_x < 5 {
            return Err(Error::InvalidParameter(format!("n_x = {n_x}: the WENO stencil needs at least 5 cells")));
        }
        if !(x_max > x_min) {
            return Err(Error::InvalidParameter(format!("empty space domain [{x_min}, {x_max}]")));
        }
        Ok(Self { x_min, x_max, n_x, dx: (x_max - x_min) / n_x as f64, periodic: true })
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx
    }
}

/// Phase-space samples `f(x_i, w_j)` stored row-major in `x` (`values[i * n_w + j]`).
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseDensity {
    pub space: SpaceGrid,
    pub velocity: Arc<VelocityGrid>,
    pub values: Vec<f64>,
    pub signed: bool,
}

impl PhaseDensity {
    pub fn from_fn(space: SpaceGrid, velocity: Arc<VelocityGrid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(space.n_x * velocity.n_cells());
        for i in 0..space.n_x {
            let x = space.center(i);
            values.extend(velocity.centers().iter().map(|&w| f(x, w)));
        }
        Self { space, velocity, values, signed: false }
    }

    pub fn n_w(&self) -> usize {
        self.velocity.n_cells()
    }

    /// Velocity profile at space cell `i`.
    pub fn line(&self, i: usize) -> &[f64] {
        let n = self.n_w();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn line_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.n_w();
        &mut self.values[i * n..(i + 1) * n]
    }

    pub fn mass(&self) -> f64 {
        self.space.dx * self.velocity.dw() * self.values.iter().sum::<f64>()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `int f dx` as a function of `w`.
    pub fn velocity_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_w()];
        for i in 0..self.space.n_x {
            for (o, v) in out.iter_mut().zip(self.line(i)) {
                *o += v;
            }
        }
        out.iter().map(|v| v * self.space.dx).collect()
    }

    /// `int f dw` as a function of `x`.
    pub fn space_marginal(&self) -> Vec<f64> {
        (0..self.space.n_x)
            .map(|i| self.velocity.dw() * self.line(i).iter().sum::<f64>())
            .collect()
    }
}

/// Fifth-order WENO-Z value at the right face of `v[2]` from the upwind stencil `v[0..5]`.
#[inline]
fn weno5(v: [f64; 5]) -> f64 {
    let [a, b, c, d, e] = v;
    let q0 = (2.0 * a - 7.0 * b + 11.0 * c) / 6.0;
    let q1 = (-b + 5.0 * c + 2.0 * d) / 6.0;
    let q2 = (2.0 * c + 5.0 * d - e) / 6.0;
    let b0 = 13.0 / 12.0 * (a - 2.0 * b + c).powi(2) + 0.25 * (a - 4.0 * b + 3.0 * c).powi(2);
    let b1 = 13.0 / 12.0 * (b - 2.0 * c + d).powi(2) + 0.25 * (b - d).powi(2);
    let b2 = 13.0 / 12.0 * (c - 2.0 * d + e).powi(2) + 0.25 * (3.0 * c - 4.0 * d + e).powi(2);
    let tau = (b0 - b2).abs();
    const EPS: f64 = 1e-40;
    let a0 = 0.1 * (1.0 + tau / (b0 + EPS));
    let a1 = 0.6 * (1.0 + tau / (b1 + EPS));
    let a2 = 0.3 * (1.0 + tau / (b2 + EPS));
    (a0 * q0 + a1 * q1 + a2 * q2) / (a0 + a1 + a2)
}

/// One forward Euler transport stage on a periodic line; `ext` holds the line with three
/// ghost cells on each side.
fn euler_line(ext: &mut [f64], n: usize, speed: f64, nu: f64, positivity: bool, faces: &mut [f64], out: &mut [f64]) {
    for g in 0..3 {
        ext[g] = ext[n + g];
        ext[n + 3 + g] = ext[3 + g];
    }
    // faces[k] is the value at the right face of cell k (k = -1..n-1 stored at k + 1).
    for k in 0..=n {
        let c = k + 2; // ext index of the cell left of the face
        let (value, donor) = if speed > 0.0 {
            (weno5([ext[c - 2], ext[c - 1], ext[c], ext[c + 1], ext[c + 2]]), ext[c])
        } else {
            (weno5([ext[c + 3], ext[c + 2], ext[c + 1], ext[c], ext[c - 1]]), ext[c + 1])
        };
        faces[k] = if positivity { value.clamp(0.0, donor.max(0.0) / nu) } else { value };
    }
    for i in 0..n {
        out[i] = ext[i + 3] - nu * speed.signum() * (faces[i + 1] - faces[i]);
    }
}

/// Advances every velocity line by `dt` with WENO-Z reconstruction and SSP-RK3 in time.
/// With `positivity` the face values are limited so that nonnegative data stay nonnegative.
pub fn transport_step(f: &mut PhaseDensity, dt: f64, positivity: bool) -> Result<()> {
    if !f.space.periodic {
        return Err(Error::Unsupported("only periodic transport is implemented".into()));
    }
    let n = f.space.n_x;
    let n_w = f.n_w();
    let w_max = f.velocity.centers().iter().fold(0.0f64, |m, w| m.max(w.abs()));
    if dt * w_max > f.space.dx * (1.0 + 1e-12) {
        log::warn!("transport step {dt:.4e} exceeds the advective bound {:.4e}", f.space.dx / w_max);
    }
    let mut ext = vec![0.0; n + 6];
    let mut faces = vec![0.0; n + 1];
    let (mut u0, mut s1, mut s2) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for j in 0..n_w {
        let speed = f.velocity.centers()[j];
        if speed == 0.0 {
            continue;
        }
        let nu = dt * speed.abs() / f.space.dx;
        for i in 0..n {
            u0[i] = f.values[i * n_w + j];
        }
        ext[3..n + 3].copy_from_slice(&u0);
        euler_line(&mut ext, n, speed, nu, positivity, &mut faces, &mut s1);
        ext[3..n + 3].copy_from_slice(&s1);
        euler_line(&mut ext, n, speed, nu, positivity, &mut faces, &mut s2);
        for i in 0..n {
            ext[i + 3] = 0.75 * u0[i] + 0.25 * s2[i];
        }
        euler_line(&mut ext, n, speed, nu, positivity, &mut faces, &mut s1);
        for i in 0..n {
            f.values[i * n_w + j] = u0[i] / 3.0 + 2.0 / 3.0 * s1[i];
        }
    }
    Ok(())
}

/// `transport(dt/2)`, then `velocity_step(dt)`, then `transport(dt/2)`.
pub fn strang_split_step(
    f: &mut PhaseDensity,
    mut velocity_step: impl FnMut(&mut PhaseDensity, f64) -> Result<()>,
    dt: f64,
    positivity: bool,
) -> Result<()> {
    transport_step(f, 0.5 * dt, positivity)?;
    velocity_step(f, dt)?;
    transport_step(f, 0.5 * dt, positivity)
}
