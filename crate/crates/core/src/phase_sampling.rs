//! Monte Carlo and Micro–Macro Monte Carlo for the phase-space swarming model.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{RandomInput, VelocityGrid};
use crate::models::swarming::{PhaseEquilibrium, Swarming, SwarmingSolver};
use crate::models::{Model, PhaseDensity, SpaceGrid};
use crate::quadrature::QuadratureRule;
use crate::sampling::{l2_variance, weighted_sum, EquilibriumMean, UqMethod};
use crate::solver::TimeGrid;

/// Discretization of a phase-space run.
#[derive(Clone, Debug)]
pub struct PhaseConfig {
    pub space: SpaceGrid,
    pub velocity: Arc<VelocityGrid>,
    pub rule: QuadratureRule,
    pub time: TimeGrid,
}

/// Expected marginals at one output time.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseEstimate {
    pub time: f64,
    pub velocity_mean: Vec<f64>,
    pub velocity_variance: Vec<f64>,
    pub space_mean: Vec<f64>,
}

/// Estimates plus the structural monitors of the run.
#[derive(Clone, Debug)]
pub struct PhaseRun {
    pub method: UqMethod,
    pub samples: usize,
    pub estimates: Vec<PhaseEstimate>,
    /// Largest `|mass(f^n) - mass(f^0)|` over samples and steps.
    pub mass_drift: f64,
    /// Smallest cell value of any reconstructed density over samples and steps.
    pub min_value: f64,
    /// Grid-L2 empirical variance of the perturbations at the output times (Micro–Macro only).
    pub perturbation_variance: Vec<f64>,
    pub bank_seconds: f64,
}

struct Track {
    snapshots: Vec<PhaseDensity>,
    mass_drift: f64,
    min_value: f64,
}

fn track_run(
    mut state: PhaseDensity,
    time: &TimeGrid,
    mut step: impl FnMut(&mut PhaseDensity) -> Result<()>,
    full: impl Fn(&PhaseDensity) -> (f64, f64),
) -> Result<Track> {
    let (mass0, min0) = full(&state);
    let mut track = Track { snapshots: Vec::new(), mass_drift: 0.0, min_value: min0 };
    let record = |s: usize, state: &PhaseDensity, track: &mut Track| {
        for &o in &time.output_steps {
            if o == s {
                track.snapshots.push(state.clone());
            }
        }
    };
    record(0, &state, &mut track);
    for s in 1..=time.n_steps {
        step(&mut state)?;
        let (mass, min) = full(&state);
        track.mass_drift = track.mass_drift.max((mass - mass0).abs());
        track.min_value = track.min_value.min(min);
        record(s, &state, &mut track);
    }
    Ok(track)
}

fn marginal_statistics(
    cfg: &PhaseConfig,
    slot: usize,
    fulls: &[Vec<PhaseDensity>],
) -> PhaseEstimate {
    let m = fulls.len();
    let weights = vec![1.0 / m as f64; m];
    let vel: Vec<Vec<f64>> = fulls.iter().map(|s| s[slot].velocity_marginal()).collect();
    let space: Vec<Vec<f64>> = fulls.iter().map(|s| s[slot].space_marginal()).collect();
    let vel_refs: Vec<&[f64]> = vel.iter().map(|v| v.as_slice()).collect();
    let space_refs: Vec<&[f64]> = space.iter().map(|v| v.as_slice()).collect();
    let velocity_mean = weighted_sum(&vel_refs, &weights);
    let squares: Vec<Vec<f64>> =
        vel.iter().map(|v| v.iter().zip(&velocity_mean).map(|(a, b)| (a - b).powi(2)).collect()).collect();
    let sq_refs: Vec<&[f64]> = squares.iter().map(|v| v.as_slice()).collect();
    let scale = if m > 1 { m as f64 / (m as f64 - 1.0) } else { 0.0 };
    PhaseEstimate {
        time: cfg.time.output_times()[slot],
        velocity_mean,
        velocity_variance: weighted_sum(&sq_refs, &weights).into_iter().map(|v| (v * scale).max(0.0)).collect(),
        space_mean: weighted_sum(&space_refs, &weights),
    }
}

/// Plain Monte Carlo: every sample evolves the full phase-space density.
pub fn phase_mc(model: &Swarming, input: &RandomInput, m: usize, cfg: &PhaseConfig, seed: u64) -> Result<PhaseRun> {
    if m == 0 {
        return Err(Error::InvalidParameter("Monte Carlo needs at least one sample".into()));
    }
    let tracks = (0..m)
        .into_par_iter()
        .map(|k| {
            let theta = input.sample_indexed(seed, k);
            let solver = SwarmingSolver::new(model, theta, cfg.space, cfg.velocity.clone(), cfg.rule)?;
            let f0 = model.phase_datum(cfg.space, cfg.velocity.clone());
            track_run(f0, &cfg.time, |f| solver.step(f, cfg.time.dt), |f| (f.mass(), f.min_value()))
                .map_err(|e| e.at_node(k))
        })
        .collect::<Result<Vec<_>>>()?;
    let fulls: Vec<Vec<PhaseDensity>> = tracks.iter().map(|t| t.snapshots.clone()).collect();
    Ok(PhaseRun {
        method: UqMethod::Mc,
        samples: m,
        estimates: (0..cfg.time.output_steps.len()).map(|s| marginal_statistics(cfg, s, &fulls)).collect(),
        mass_drift: tracks.iter().map(|t| t.mass_drift).fold(0.0, f64::max),
        min_value: tracks.iter().map(|t| t.min_value).fold(f64::INFINITY, f64::min),
        perturbation_variance: Vec::new(),
        bank_seconds: 0.0,
    })
}

fn sample_equilibrium(
    model: &Swarming,
    theta: f64,
    cfg: &PhaseConfig,
    mass: f64,
) -> Result<(SwarmingSolver, PhaseEquilibrium)> {
    let solver = SwarmingSolver::new(model, theta, cfg.space, cfg.velocity.clone(), cfg.rule)?;
    let u0 = model.initial_datum(theta, &cfg.velocity)?.moments()?.mean;
    let (profile, u) = model.homogeneous_steady_state(theta, u0, &cfg.velocity)?;
    let eq = solver.equilibrium(&profile, u, mass)?;
    Ok((solver, eq))
}

fn uniform_in_space(cfg: &PhaseConfig, line: &[f64], signed: bool) -> PhaseDensity {
    let n_w = cfg.velocity.n_cells();
    let values = (0..cfg.space.n_x * n_w).map(|k| line[k % n_w]).collect();
    PhaseDensity { space: cfg.space, velocity: cfg.velocity.clone(), values, signed }
}

/// Micro–Macro Monte Carlo: samples evolve `g = f - f_inf` around their homogeneous
/// equilibria, and the equilibrium expectation comes from a separate bank.
pub fn phase_m3c(
    model: &Swarming,
    input: &RandomInput,
    equilibrium: EquilibriumMean,
    m: usize,
    cfg: &PhaseConfig,
    seed: u64,
) -> Result<PhaseRun> {
    if m == 0 {
        return Err(Error::InvalidParameter("Micro–Macro Monte Carlo needs at least one sample".into()));
    }
    let datum = model.phase_datum(cfg.space, cfg.velocity.clone());
    let mass = datum.mass();
    let start = Instant::now();
    let (bank_thetas, bank_weights) = match equilibrium {
        EquilibriumMean::Sampled(n) if n < m => {
            return Err(Error::InvalidParameter(format!("M = {m} exceeds the equilibrium bank size {n}")));
        }
        EquilibriumMean::Sampled(n) => ((0..n).map(|k| input.sample_indexed(seed, k)).collect(), vec![1.0 / n as f64; n]),
        EquilibriumMean::Quadrature(n) => input.quadrature(n)?,
    };
    let bank_lines = bank_thetas
        .par_iter()
        .enumerate()
        .map(|(k, &t)| sample_equilibrium(model, t, cfg, mass).map(|(_, eq)| eq.line).map_err(|e| e.at_node(k)))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[f64]> = bank_lines.iter().map(|v| v.as_slice()).collect();
    let bank = uniform_in_space(cfg, &weighted_sum(&refs, &bank_weights), false);
    let bank_seconds = start.elapsed().as_secs_f64();

    let tracks = (0..m)
        .into_par_iter()
        .map(|k| {
            let theta = input.sample_indexed(seed, k);
            let (solver, eq) = sample_equilibrium(model, theta, cfg, mass).map_err(|e| e.at_node(k))?;
            let eq_field = uniform_in_space(cfg, &eq.line, false);
            let mut g0 = datum.clone();
            g0.signed = true;
            g0.values.iter_mut().zip(&eq_field.values).for_each(|(g, e)| *g -= e);
            let full = |g: &PhaseDensity| {
                let min = g.values.iter().zip(&eq_field.values).map(|(a, b)| a + b).fold(f64::INFINITY, f64::min);
                (g.mass(), min)
            };
            let track = track_run(g0, &cfg.time, |g| solver.step_perturbation(g, &eq, cfg.time.dt), full)
                .map_err(|e| e.at_node(k))?;
            Ok((track, eq_field))
        })
        .collect::<Result<Vec<_>>>()?;

    let slots = cfg.time.output_steps.len();
    let weights = vec![1.0 / m as f64; m];
    let dw_dx = cfg.velocity.dw() * cfg.space.dx;
    let mut estimates = Vec::with_capacity(slots);
    let mut perturbation_variance = Vec::with_capacity(slots);
    for slot in 0..slots {
        let gs: Vec<&[f64]> = tracks.iter().map(|(t, _)| t.snapshots[slot].values.as_slice()).collect();
        perturbation_variance.push(l2_variance(&gs, dw_dx));
        let g_mean = weighted_sum(&gs, &weights);
        let mut mean_field = bank.clone();
        mean_field.values.iter_mut().zip(&g_mean).for_each(|(a, b)| *a += b);
        let fulls: Vec<Vec<PhaseDensity>> = tracks
            .iter()
            .map(|(t, eq)| {
                let mut f = t.snapshots[slot].clone();
                f.values.iter_mut().zip(&eq.values).for_each(|(a, b)| *a += b);
                vec![f]
            })
            .collect();
        let mut est = marginal_statistics(cfg, 0, &fulls);
        est.time = cfg.time.output_times()[slot];
        est.velocity_mean = mean_field.velocity_marginal();
        est.space_mean = mean_field.space_marginal();
        estimates.push(est);
    }
    Ok(PhaseRun {
        method: UqMethod::M3c,
        samples: m,
        estimates,
        mass_drift: tracks.iter().map(|(t, _)| t.mass_drift).fold(0.0, f64::max),
        min_value: tracks.iter().map(|(t, _)| t.min_value).fold(f64::INFINITY, f64::min),
        perturbation_variance,
        bank_seconds,
    })
}
