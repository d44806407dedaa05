//! Non-intrusive estimators: stochastic collocation, Monte Carlo, and Micro–Macro Monte
//! Carlo with and without sample shedding.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{Density, RandomInput, VelocityGrid};
use crate::models::{Model, NodeProblem};
use crate::solver::{evolve, evolve_perturbation, FluxScheme, FpOperator, MicroMacroOperator, TimeGrid};
use crate::time::Stepper;

/// Estimator that produced a [`UqEstimate`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UqMethod {
    Collocation,
    Mc,
    M3c,
    Fm3c,
    Galerkin,
    MmGalerkin,
}

impl UqMethod {
    pub fn name(&self) -> &'static str {
        match self {
            UqMethod::Collocation => "collocation",
            UqMethod::Mc => "mc",
            UqMethod::M3c => "m3c",
            UqMethod::Fm3c => "fm3c",
            UqMethod::Galerkin => "gpc",
            UqMethod::MmGalerkin => "mm_gpc",
        }
    }
}

/// Mean and pointwise variance at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct UqEstimate {
    pub mean: Density,
    pub variance: Density,
    pub method: UqMethod,
    pub n_nodes_or_samples: usize,
    pub seed: Option<u64>,
    pub time: f64,
}

/// Everything a deterministic solve needs besides the model.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub grid: Arc<VelocityGrid>,
    pub scheme: FluxScheme,
    pub stepper: Stepper,
    pub time: TimeGrid,
}

/// Pairwise (tree) sum of equally sized vectors with weights; the order of operations
/// depends only on the number of inputs.
pub fn weighted_sum(vectors: &[&[f64]], weights: &[f64]) -> Vec<f64> {
    match vectors.len() {
        0 => Vec::new(),
        1 => vectors[0].iter().map(|v| v * weights[0]).collect(),
        n => {
            let (a, b) = vectors.split_at(n / 2);
            let (wa, wb) = weights.split_at(n / 2);
            let mut left = weighted_sum(a, wa);
            let right = weighted_sum(b, wb);
            for (l, r) in left.iter_mut().zip(&right) {
                *l += r;
            }
            left
        }
    }
}

/// Weighted mean and variance `sum_k w_k (f_k - mean)^2 * scale`.
fn statistics(samples: &[&[f64]], weights: &[f64], variance_scale: f64) -> (Vec<f64>, Vec<f64>) {
    let mean = weighted_sum(samples, weights);
    let squares: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| s.iter().zip(&mean).map(|(x, m)| (x - m).powi(2)).collect())
        .collect();
    let refs: Vec<&[f64]> = squares.iter().map(|v| v.as_slice()).collect();
    let variance = weighted_sum(&refs, weights)
        .into_iter()
        .map(|v| (v * variance_scale).max(0.0))
        .collect();
    (mean, variance)
}

/// Deterministic solve at one value of the input.
#[derive(Clone, Debug)]
pub struct NodeRun {
    pub theta: f64,
    /// Solutions at the output times.
    pub snapshots: Vec<Density>,
    /// Closed-form steady state, when the model has one.
    pub steady_state: Option<Density>,
    /// Per-step values of the optional trace functional (step 0 included).
    pub trace: Vec<f64>,
    /// Smallest cell value over every time level.
    pub min_value: f64,
}

/// Functional recorded after every step: `(values, equilibrium reference)`. The reference is
/// the discrete equilibrium of the frozen weights when the operator is linear, and the
/// closed-form steady state otherwise.
pub type TraceFn<'a> = &'a (dyn Fn(&[f64], Option<&Density>) -> f64 + Sync);

pub fn solve_node(model: &dyn Model, theta: f64, cfg: &SolverConfig, trace: Option<TraceFn<'_>>) -> Result<NodeRun> {
    let problem = NodeProblem::new(model, theta, &cfg.grid, cfg.scheme)?;
    let mut values = Vec::new();
    let mut min_value = f64::INFINITY;
    let reference = match (trace, problem.operator.discrete_equilibrium(problem.datum.mass())) {
        (None, _) => None,
        (Some(_), Some(eq)) => Some(eq?),
        (Some(_), None) => problem.steady_state.clone(),
    };
    let mut obs = |_: usize, _: f64, v: &[f64]| {
        min_value = v.iter().copied().fold(min_value, f64::min);
        if let Some(t) = trace {
            values.push(t(v, reference.as_ref()));
        }
    };
    let snapshots = evolve(&problem.operator, &problem.datum, &cfg.time, cfg.stepper, Some(&mut obs))?;
    Ok(NodeRun { theta, snapshots, steady_state: problem.steady_state, trace: values, min_value })
}

fn estimates_from(
    runs: &[&[Density]],
    weights: &[f64],
    variance_scale: f64,
    cfg: &SolverConfig,
    method: UqMethod,
    seed: Option<u64>,
) -> Vec<UqEstimate> {
    let times = cfg.time.output_times();
    (0..times.len())
        .map(|slot| {
            let samples: Vec<&[f64]> = runs.iter().map(|r| r[slot].values()).collect();
            let (mean, variance) = statistics(&samples, weights, variance_scale);
            UqEstimate {
                mean: Density::signed(cfg.grid.clone(), mean).expect("grid-sized"),
                variance: Density::signed(cfg.grid.clone(), variance).expect("grid-sized"),
                method,
                n_nodes_or_samples: runs.len(),
                seed,
                time: times[slot],
            }
        })
        .collect()
}

/// Collocation at `m` Gauss nodes, with the per-node runs.
pub fn collocation_runs(
    model: &dyn Model,
    input: &RandomInput,
    m: usize,
    cfg: &SolverConfig,
    trace: Option<TraceFn<'_>>,
) -> Result<(Vec<NodeRun>, Vec<f64>)> {
    let (nodes, weights) = input.quadrature(m)?;
    let runs = nodes
        .par_iter()
        .enumerate()
        .map(|(k, &theta)| solve_node(model, theta, cfg, trace).map_err(|e| e.at_node(k)))
        .collect::<Result<Vec<_>>>()?;
    Ok((runs, weights))
}

/// Expectation and variance by `m`-node Gauss collocation, one estimate per output time.
pub fn collocate(model: &dyn Model, input: &RandomInput, m: usize, cfg: &SolverConfig) -> Result<Vec<UqEstimate>> {
    let (runs, weights) = collocation_runs(model, input, m, cfg, None)?;
    let snaps: Vec<&[Density]> = runs.iter().map(|r| r.snapshots.as_slice()).collect();
    Ok(estimates_from(&snaps, &weights, 1.0, cfg, UqMethod::Collocation, None))
}

/// Quadrature-weighted statistics of node runs.
pub fn collocation_estimates(runs: &[NodeRun], weights: &[f64], cfg: &SolverConfig) -> Vec<UqEstimate> {
    let snaps: Vec<&[Density]> = runs.iter().map(|r| r.snapshots.as_slice()).collect();
    estimates_from(&snaps, weights, 1.0, cfg, UqMethod::Collocation, None)
}

/// Expectation and variance of the closed-form steady state by `m`-node quadrature.
pub fn expected_steady_state(
    model: &dyn Model,
    input: &RandomInput,
    m: usize,
    grid: &Arc<VelocityGrid>,
) -> Result<(Density, Density)> {
    let (nodes, weights) = input.quadrature(m)?;
    let states = nodes
        .iter()
        .enumerate()
        .map(|(k, &theta)| {
            model
                .steady_state(theta, grid)
                .ok_or_else(|| Error::Unsupported(format!("{} has no closed-form steady state", model.name())))?
                .map_err(|e| e.at_node(k))
        })
        .collect::<Result<Vec<_>>>()?;
    let samples: Vec<&[f64]> = states.iter().map(|s| s.values()).collect();
    let (mean, var) = statistics(&samples, &weights, 1.0);
    Ok((Density::signed(grid.clone(), mean)?, Density::signed(grid.clone(), var)?))
}

/// Independent solves at `m` sampled inputs; sample `k` uses the stream `(seed, k)`.
pub fn mc_runs(model: &dyn Model, input: &RandomInput, m: usize, cfg: &SolverConfig, seed: u64) -> Result<Vec<NodeRun>> {
    (0..m)
        .into_par_iter()
        .map(|k| solve_node(model, input.sample_indexed(seed, k), cfg, None).map_err(|e| e.at_node(k)))
        .collect()
}

/// Sample mean and unbiased sample variance of the first runs.
pub fn mc_estimates(runs: &[NodeRun], cfg: &SolverConfig, seed: u64) -> Vec<UqEstimate> {
    let m = runs.len();
    let snaps: Vec<&[Density]> = runs.iter().map(|r| r.snapshots.as_slice()).collect();
    let scale = if m > 1 { m as f64 / (m as f64 - 1.0) } else { 0.0 };
    estimates_from(&snaps, &vec![1.0 / m as f64; m], scale, cfg, UqMethod::Mc, Some(seed))
}

/// Monte Carlo estimator with `m` samples.
pub fn mc_estimate(model: &dyn Model, input: &RandomInput, m: usize, cfg: &SolverConfig, seed: u64) -> Result<Vec<UqEstimate>> {
    if m == 0 {
        return Err(Error::InvalidParameter("Monte Carlo needs at least one sample".into()));
    }
    Ok(mc_estimates(&mc_runs(model, input, m, cfg, seed)?, cfg, seed))
}

/// How the expectation of the equilibrium is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EquilibriumMean {
    /// Average of equilibria of this many sampled data (samples `0..n` of the seed).
    Sampled(usize),
    /// Gauss quadrature with this many nodes.
    Quadrature(usize),
}

/// Expected equilibrium and the wall time spent computing it.
#[derive(Clone, Debug)]
pub struct EquilibriumBank {
    pub mean: Density,
    pub source: EquilibriumMean,
    pub seconds: f64,
}

pub fn equilibrium_bank(
    model: &dyn Model,
    input: &RandomInput,
    source: EquilibriumMean,
    grid: &Arc<VelocityGrid>,
    seed: u64,
) -> Result<EquilibriumBank> {
    let start = Instant::now();
    let (thetas, weights) = match source {
        EquilibriumMean::Sampled(n) => {
            if n == 0 {
                return Err(Error::InvalidParameter("equilibrium bank needs samples".into()));
            }
            ((0..n).map(|k| input.sample_indexed(seed, k)).collect::<Vec<_>>(), vec![1.0 / n as f64; n])
        }
        EquilibriumMean::Quadrature(n) => input.quadrature(n)?,
    };
    let states = thetas
        .par_iter()
        .enumerate()
        .map(|(k, &theta)| {
            let datum = model.initial_datum(theta, grid)?;
            model.equilibrium_for(theta, &datum).map_err(|e| e.at_node(k))
        })
        .collect::<Result<Vec<_>>>()?;
    let samples: Vec<&[f64]> = states.iter().map(|s| s.values()).collect();
    let mean = weighted_sum(&samples, &weights);
    Ok(EquilibriumBank {
        mean: Density::signed(grid.clone(), mean)?,
        source,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Micro–Macro operator, equilibrium and initial perturbation for one sample.
pub struct PerturbationProblem {
    pub theta: f64,
    pub operator: MicroMacroOperator,
    pub equilibrium: Density,
    pub g0: Density,
}

impl PerturbationProblem {
    pub fn new(model: &dyn Model, theta: f64, cfg: &SolverConfig) -> Result<Self> {
        let datum = model.initial_datum(theta, &cfg.grid)?;
        let equilibrium = model.equilibrium_for(theta, &datum)?;
        let dd = model.drift_diffusion(theta, &cfg.grid)?;
        let op = FpOperator::new(cfg.grid.clone(), dd, model.boundary(), cfg.scheme, Some(&equilibrium))?;
        let operator = MicroMacroOperator::new(op, &equilibrium)?;
        let g0 = datum.sub(&equilibrium)?;
        Ok(Self { theta, operator, equilibrium, g0 })
    }
}

/// Perturbation snapshots of one sample.
#[derive(Clone, Debug)]
pub struct PerturbationRun {
    pub theta: f64,
    pub equilibrium: Density,
    pub snapshots: Vec<Density>,
}

pub fn perturbation_runs(
    model: &dyn Model,
    input: &RandomInput,
    m: usize,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<Vec<PerturbationRun>> {
    (0..m)
        .into_par_iter()
        .map(|k| {
            let theta = input.sample_indexed(seed, k);
            let p = PerturbationProblem::new(model, theta, cfg).map_err(|e| e.at_node(k))?;
            let snapshots = evolve_perturbation(&p.operator, &p.g0, &cfg.time, cfg.stepper, None)
                .map_err(|e| e.at_node(k))?;
            Ok(PerturbationRun { theta, equilibrium: p.equilibrium, snapshots })
        })
        .collect()
}

/// Grid-L2 empirical variance `(1/M) sum_k ||g_k - mean g||_2^2`.
pub fn l2_variance(samples: &[&[f64]], dw: f64) -> f64 {
    let m = samples.len();
    if m == 0 {
        return 0.0;
    }
    let mean = weighted_sum(samples, &vec![1.0 / m as f64; m]);
    let per: Vec<f64> = samples
        .iter()
        .map(|s| dw * s.iter().zip(&mean).map(|(x, y)| (x - y).powi(2)).sum::<f64>())
        .collect();
    let refs: Vec<&[f64]> = per.iter().map(std::slice::from_ref).collect();
    weighted_sum(&refs, &vec![1.0 / m as f64; m])[0]
}

/// Micro–Macro estimates with the perturbation variance at each output time.
#[derive(Clone, Debug)]
pub struct M3cOutput {
    pub estimates: Vec<UqEstimate>,
    pub perturbation_variance: Vec<f64>,
    pub bank: EquilibriumBank,
}

/// Combines an equilibrium bank with the first perturbation runs.
pub fn m3c_estimates(bank: &EquilibriumBank, runs: &[PerturbationRun], cfg: &SolverConfig, seed: u64) -> M3cOutput {
    let m = runs.len();
    let times = cfg.time.output_times();
    let scale = if m > 1 { m as f64 / (m as f64 - 1.0) } else { 0.0 };
    let weights = vec![1.0 / m as f64; m];
    let mut estimates = Vec::with_capacity(times.len());
    let mut perturbation_variance = Vec::with_capacity(times.len());
    for slot in 0..times.len() {
        let gs: Vec<&[f64]> = runs.iter().map(|r| r.snapshots[slot].values()).collect();
        let g_mean = weighted_sum(&gs, &weights);
        let mean: Vec<f64> = bank.mean.values().iter().zip(&g_mean).map(|(a, b)| a + b).collect();
        let full: Vec<Vec<f64>> = runs
            .iter()
            .map(|r| r.equilibrium.values().iter().zip(r.snapshots[slot].values()).map(|(a, b)| a + b).collect())
            .collect();
        let refs: Vec<&[f64]> = full.iter().map(|v| v.as_slice()).collect();
        let (_, variance) = statistics(&refs, &weights, scale);
        perturbation_variance.push(l2_variance(&gs, cfg.grid.dw()));
        estimates.push(UqEstimate {
            mean: Density::signed(cfg.grid.clone(), mean).expect("grid-sized"),
            variance: Density::signed(cfg.grid.clone(), variance).expect("grid-sized"),
            method: UqMethod::M3c,
            n_nodes_or_samples: m,
            seed: Some(seed),
            time: times[slot],
        });
    }
    M3cOutput { estimates, perturbation_variance, bank: bank.clone() }
}

/// Micro–Macro Monte Carlo with `m` evolved perturbations.
pub fn m3c_estimate(
    model: &dyn Model,
    input: &RandomInput,
    equilibrium: EquilibriumMean,
    m: usize,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<M3cOutput> {
    if let EquilibriumMean::Sampled(me) = equilibrium {
        if m > me {
            return Err(Error::InvalidParameter(format!("M = {m} exceeds the equilibrium bank size {me}")));
        }
    }
    let bank = equilibrium_bank(model, input, equilibrium, &cfg.grid, seed)?;
    let runs = perturbation_runs(model, input, m, cfg, seed)?;
    Ok(m3c_estimates(&bank, &runs, cfg, seed))
}

/// Sample-count update of the shedding estimator.
///
/// `budget` carries the real-valued target `M_n * Var[g^{n+1}] / Var[g^n]` across steps so
/// that slow variance decay is not rounded away; the returned count is clamped to
/// `[1, current]`.
pub fn next_sample_count(current: usize, budget: &mut f64, var_before: f64, var_after: f64) -> Result<usize> {
    if var_before == 0.0 {
        if var_after == 0.0 {
            return Ok(current);
        }
        return Err(Error::VarianceFromZero);
    }
    *budget = (*budget * (var_after / var_before)).min(current as f64);
    Ok((budget.floor() as usize).clamp(1, current))
}

/// Evenly spaced `keep` entries of `active`.
pub fn discard_uniformly(active: &[usize], keep: usize) -> Vec<usize> {
    let m = active.len();
    (0..keep).map(|k| active[k * m / keep]).collect()
}

/// Fast Micro–Macro output: estimates and the active-sample count after every step.
#[derive(Clone, Debug)]
pub struct Fm3cOutput {
    pub estimates: Vec<UqEstimate>,
    pub sample_trace: Vec<usize>,
    pub variance_trace: Vec<f64>,
    pub bank: EquilibriumBank,
}

/// Micro–Macro Monte Carlo that sheds samples as the perturbation variance decays.
pub fn fm3c_estimate(
    model: &dyn Model,
    input: &RandomInput,
    equilibrium: EquilibriumMean,
    m0: usize,
    cfg: &SolverConfig,
    seed: u64,
) -> Result<Fm3cOutput> {
    if m0 == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    if let EquilibriumMean::Sampled(me) = equilibrium {
        if m0 > me {
            return Err(Error::InvalidParameter(format!("M_0 = {m0} exceeds the equilibrium bank size {me}")));
        }
    }
    let bank = equilibrium_bank(model, input, equilibrium, &cfg.grid, seed)?;
    let problems = (0..m0)
        .into_par_iter()
        .map(|k| PerturbationProblem::new(model, input.sample_indexed(seed, k), cfg).map_err(|e| e.at_node(k)))
        .collect::<Result<Vec<_>>>()?;
    let mut states: Vec<(Vec<f64>, crate::solver::StepScratch)> =
        problems.iter().map(|p| (p.g0.values().to_vec(), p.operator.scratch())).collect();
    let dw = cfg.grid.dw();
    let time = &cfg.time;
    let mut active: Vec<usize> = (0..m0).collect();
    let mut budget = m0 as f64;
    let mut sample_trace = vec![m0];
    let mut variance_trace = Vec::with_capacity(time.n_steps + 1);
    let mut estimates = Vec::with_capacity(time.output_steps.len());

    let variance_of = |states: &[(Vec<f64>, crate::solver::StepScratch)], active: &[usize]| {
        let gs: Vec<&[f64]> = active.iter().map(|&k| states[k].0.as_slice()).collect();
        l2_variance(&gs, dw)
    };
    let estimate_of = |states: &[(Vec<f64>, crate::solver::StepScratch)], active: &[usize], t: f64| {
        let m = active.len();
        let gs: Vec<&[f64]> = active.iter().map(|&k| states[k].0.as_slice()).collect();
        let g_mean = weighted_sum(&gs, &vec![1.0 / m as f64; m]);
        let mean: Vec<f64> = bank.mean.values().iter().zip(&g_mean).map(|(a, b)| a + b).collect();
        let full: Vec<Vec<f64>> = active
            .iter()
            .map(|&k| problems[k].equilibrium.values().iter().zip(&states[k].0).map(|(a, b)| a + b).collect())
            .collect();
        let refs: Vec<&[f64]> = full.iter().map(|v| v.as_slice()).collect();
        let scale = if m > 1 { m as f64 / (m as f64 - 1.0) } else { 0.0 };
        let (_, variance) = statistics(&refs, &vec![1.0 / m as f64; m], scale);
        UqEstimate {
            mean: Density::signed(cfg.grid.clone(), mean).expect("grid-sized"),
            variance: Density::signed(cfg.grid.clone(), variance).expect("grid-sized"),
            method: UqMethod::Fm3c,
            n_nodes_or_samples: m,
            seed: Some(seed),
            time: t,
        }
    };
    let record = |step: usize, states: &[(Vec<f64>, crate::solver::StepScratch)], active: &[usize], out: &mut Vec<UqEstimate>| {
        for &s in &time.output_steps {
            if s == step {
                out.push(estimate_of(states, active, time.time(step)));
            }
        }
    };

    if let Some(p) = problems.first() {
        let full: Vec<f64> = p.equilibrium.values().iter().zip(p.g0.values()).map(|(a, b)| a + b).collect();
        p.operator.operator().check_step(&full, time.dt, cfg.stepper);
    }
    record(0, &states, &active, &mut estimates);
    let mut var_before = variance_of(&states, &active);
    variance_trace.push(var_before);
    for step in 1..=time.n_steps {
        {
            let mut refs: Vec<&mut (Vec<f64>, crate::solver::StepScratch)> = Vec::with_capacity(active.len());
            let mut next = active.iter().peekable();
            for (k, st) in states.iter_mut().enumerate() {
                if next.peek() == Some(&&k) {
                    refs.push(st);
                    next.next();
                }
            }
            refs.into_par_iter()
                .zip(active.par_iter())
                .try_for_each(|(st, &k)| {
                    problems[k].operator.step(&mut st.0, time.dt, cfg.stepper, &mut st.1).map_err(|e| e.at_node(k))
                })?;
        }
        let var_after = variance_of(&states, &active);
        let keep = next_sample_count(active.len(), &mut budget, var_before, var_after)?;
        if keep < active.len() {
            active = discard_uniformly(&active, keep);
        }
        record(step, &states, &active, &mut estimates);
        sample_trace.push(active.len());
        var_before = variance_of(&states, &active);
        variance_trace.push(var_before);
    }
    Ok(Fm3cOutput { estimates, sample_trace, variance_trace, bank })
}
