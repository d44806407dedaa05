//! Runs a [`Scenario`], keeps the results in a [`RunReport`] and writes them as CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use kinetic_uq::diagnostics::{error_norms, expected_trace, relative_entropy_values, ErrorNorms};
use kinetic_uq::galerkin::galerkin_run;
use kinetic_uq::phase_sampling::{phase_m3c, phase_mc, PhaseConfig, PhaseRun};
use kinetic_uq::sampling::{
    collocate, collocation_estimates, collocation_runs, equilibrium_bank, expected_steady_state, fm3c_estimate,
    m3c_estimates, mc_estimates, mc_runs, perturbation_runs, EquilibriumMean, SolverConfig, TraceFn, UqEstimate,
    UqMethod,
};
use kinetic_uq::{Density, FluxScheme, QuadratureRule};

use crate::scenario::{equilibrium_name, ModelChoice, Reference, Scenario};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("solver failure: {0}")]
    Solver(#[from] kinetic_uq::Error),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

/// Error statistics of one estimator at one output time, averaged over repetitions.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorRow {
    pub method: UqMethod,
    pub scheme: String,
    pub n: usize,
    pub time: f64,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    pub variance_l1: f64,
    /// Sample standard deviation of `l1` across repetitions.
    pub l1_std: f64,
    pub repetitions: usize,
}

/// Estimates of the first repetition.
#[derive(Clone, Debug)]
pub struct Series {
    pub method: UqMethod,
    pub scheme: String,
    pub n: usize,
    pub estimates: Vec<UqEstimate>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    pub label: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

/// Active-sample history of one shedding run.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleTrace {
    pub initial: usize,
    pub repetition: usize,
    pub counts: Vec<usize>,
    pub variance: Vec<f64>,
}

/// Per-run structural monitors of the deterministic solves.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeSummary {
    pub label: String,
    pub min_value: f64,
    /// Largest L1 distance between a node's final solution and its closed-form steady state.
    pub steady_state_l1: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct RunReport {
    pub name: String,
    pub series: Vec<Series>,
    pub errors: Vec<ErrorRow>,
    pub entropy: Vec<TimeSeries>,
    pub perturbation_variance: Vec<TimeSeries>,
    pub sample_traces: Vec<SampleTrace>,
    pub nodes: Vec<NodeSummary>,
    pub phase: Vec<PhaseRun>,
    pub timings: Vec<(String, f64)>,
    pub files: Vec<PathBuf>,
}

impl RunReport {
    /// Rows of one estimator, in output-time order.
    pub fn errors_of(&self, method: UqMethod, scheme: &str, n: usize) -> Vec<&ErrorRow> {
        self.errors.iter().filter(|r| r.method == method && r.scheme == scheme && r.n == n).collect()
    }

    pub fn final_error(&self, method: UqMethod, scheme: &str, n: usize) -> Option<&ErrorRow> {
        self.errors_of(method, scheme, n).into_iter().last()
    }
}

enum ReferenceData {
    None,
    Fixed(Density, Density),
    PerSlot(Vec<UqEstimate>),
}

impl ReferenceData {
    fn at(&self, slot: usize) -> Option<(&Density, &Density)> {
        match self {
            ReferenceData::None => None,
            ReferenceData::Fixed(m, v) => Some((m, v)),
            ReferenceData::PerSlot(e) => Some((&e[slot].mean, &e[slot].variance)),
        }
    }
}

type SlotErrors = Vec<(ErrorNorms, f64)>;

fn errors_against(estimates: &[UqEstimate], reference: &ReferenceData) -> kinetic_uq::Result<SlotErrors> {
    estimates
        .iter()
        .enumerate()
        .filter_map(|(slot, e)| reference.at(slot).map(|(m, v)| (e, m, v)))
        .map(|(e, m, v)| Ok((error_norms(&e.mean, m)?, error_norms(&e.variance, v)?.l1)))
        .collect()
}

/// Label of the Galerkin discretization in tables and file names.
pub const GALERKIN_SCHEME: &str = "central";

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn series_label(method: UqMethod, scheme: &str, n: usize) -> String {
    format!("{}_{}_m{}", method.name(), scheme, n)
}

/// Executes a scenario; when `out` is set, artifacts are written there as they are produced.
pub struct Runner<'a> {
    scenario: &'a Scenario,
    out: Option<PathBuf>,
    pub report: RunReport,
}

impl<'a> Runner<'a> {
    pub fn new(scenario: &'a Scenario, out: Option<PathBuf>) -> Result<Self, RunError> {
        if let Some(dir) = &out {
            fs::create_dir_all(dir)?;
        }
        let report = RunReport { name: scenario.name.clone(), ..Default::default() };
        Ok(Self { scenario, out, report })
    }

    pub fn run(&mut self) -> Result<(), RunError> {
        let sc = self.scenario;
        if let ModelChoice::Swarming(model) = &sc.model {
            return self.run_phase(model);
        }
        for (k, &scheme) in sc.schemes.iter().enumerate() {
            let cfg = SolverConfig { grid: sc.velocity.clone(), scheme, stepper: sc.stepper, time: sc.time.clone() };
            let start = Instant::now();
            let reference = self.reference(&cfg)?;
            self.report.timings.push((format!("reference.{}", scheme.name()), start.elapsed().as_secs_f64()));
            for &method in &sc.methods {
                match method {
                    UqMethod::Collocation => self.collocation(&cfg, &reference)?,
                    UqMethod::Mc | UqMethod::M3c | UqMethod::Fm3c => self.sampling(method, &cfg, &reference)?,
                    // Galerkin systems use their own central discretization, so one pass suffices.
                    UqMethod::Galerkin | UqMethod::MmGalerkin if k == 0 => self.galerkin(method, &cfg, &reference)?,
                    UqMethod::Galerkin | UqMethod::MmGalerkin => {}
                }
                self.write_tables()?;
            }
        }
        Ok(())
    }

    fn reference(&self, cfg: &SolverConfig) -> Result<ReferenceData, RunError> {
        let sc = self.scenario;
        let model = sc.model.as_model();
        Ok(match sc.reference {
            Reference::None => ReferenceData::None,
            Reference::SteadyState => {
                let (mean, var) = expected_steady_state(model, &sc.input, sc.reference_nodes, &sc.velocity)?;
                ReferenceData::Fixed(mean, var)
            }
            Reference::Collocation => ReferenceData::PerSlot(collocate(model, &sc.input, sc.reference_nodes, cfg)?),
        })
    }

    fn collocation(&mut self, cfg: &SolverConfig, reference: &ReferenceData) -> Result<(), RunError> {
        let sc = self.scenario;
        let model = sc.model.as_model();
        let scheme = cfg.scheme.name();
        let dw = cfg.grid.dw();
        let entropy = |v: &[f64], r: Option<&Density>| {
            r.and_then(|r| relative_entropy_values(v, r.values(), dw).ok()).unwrap_or(f64::NAN)
        };
        let trace: Option<TraceFn<'_>> = if sc.entropy { Some(&entropy) } else { None };
        for &m in &sc.nodes {
            let start = Instant::now();
            let (runs, weights) = collocation_runs(model, &sc.input, m, cfg, trace)?;
            let label = series_label(UqMethod::Collocation, &scheme, m);
            self.report.timings.push((label.clone(), start.elapsed().as_secs_f64()));
            let estimates = collocation_estimates(&runs, &weights, cfg);
            let errors = errors_against(&estimates, reference)?;
            self.push_errors(UqMethod::Collocation, &scheme, m, &estimates, &[errors]);
            let steady_state_l1 = runs
                .iter()
                .map(|r| {
                    let last = r.snapshots.last()?;
                    r.steady_state.as_ref().and_then(|ss| error_norms(last, ss).ok()).map(|e| e.l1)
                })
                .collect::<Option<Vec<f64>>>()
                .map(|v| v.into_iter().fold(0.0, f64::max));
            self.report.nodes.push(NodeSummary {
                label: label.clone(),
                min_value: runs.iter().map(|r| r.min_value).fold(f64::INFINITY, f64::min),
                steady_state_l1,
            });
            if sc.entropy {
                let traces: Vec<Vec<f64>> = runs.iter().map(|r| r.trace.clone()).collect();
                let values = expected_trace(&traces, &weights);
                let times = (0..values.len()).map(|s| cfg.time.time(s)).collect();
                self.report.entropy.push(TimeSeries { label: format!("{scheme}_m{m}"), times, values });
            }
            self.push_series(UqMethod::Collocation, &scheme, m, estimates)?;
        }
        Ok(())
    }

    fn sampling(&mut self, method: UqMethod, cfg: &SolverConfig, reference: &ReferenceData) -> Result<(), RunError> {
        let sc = self.scenario;
        let model = sc.model.as_model();
        let scheme = cfg.scheme.name();
        let max_n = sc.samples.iter().copied().max().unwrap_or(0);
        let mut per_n: Vec<Vec<SlotErrors>> = vec![Vec::new(); sc.samples.len()];
        let mut first: Vec<Option<Vec<UqEstimate>>> = vec![None; sc.samples.len()];
        let mut min_value = f64::INFINITY;
        let shared_bank = match (method, sc.equilibrium) {
            (UqMethod::M3c, EquilibriumMean::Quadrature(_)) => {
                Some(equilibrium_bank(model, &sc.input, sc.equilibrium, &cfg.grid, sc.seed)?)
            }
            _ => None,
        };
        let start = Instant::now();
        for rep in 0..sc.repetitions {
            let seed = sc.seed.wrapping_add(rep as u64);
            match method {
                UqMethod::Mc => {
                    let runs = mc_runs(model, &sc.input, max_n, cfg, seed)?;
                    min_value = runs.iter().map(|r| r.min_value).fold(min_value, f64::min);
                    for (i, &n) in sc.samples.iter().enumerate() {
                        let est = mc_estimates(&runs[..n], cfg, seed);
                        per_n[i].push(errors_against(&est, reference)?);
                        first[i].get_or_insert(est);
                    }
                }
                UqMethod::M3c => {
                    let bank = match &shared_bank {
                        Some(b) => b.clone(),
                        None => equilibrium_bank(model, &sc.input, sc.equilibrium, &cfg.grid, seed)?,
                    };
                    let runs = perturbation_runs(model, &sc.input, max_n, cfg, seed)?;
                    for (i, &n) in sc.samples.iter().enumerate() {
                        let out = m3c_estimates(&bank, &runs[..n], cfg, seed);
                        per_n[i].push(errors_against(&out.estimates, reference)?);
                        if rep == 0 {
                            self.report.perturbation_variance.push(TimeSeries {
                                label: series_label(method, &scheme, n),
                                times: cfg.time.output_times(),
                                values: out.perturbation_variance.clone(),
                            });
                        }
                        first[i].get_or_insert(out.estimates);
                    }
                }
                UqMethod::Fm3c => {
                    for (i, &n) in sc.samples.iter().enumerate() {
                        let out = fm3c_estimate(model, &sc.input, sc.equilibrium, n, cfg, seed)?;
                        per_n[i].push(errors_against(&out.estimates, reference)?);
                        self.report.sample_traces.push(SampleTrace {
                            initial: n,
                            repetition: rep,
                            counts: out.sample_trace,
                            variance: out.variance_trace,
                        });
                        first[i].get_or_insert(out.estimates);
                    }
                }
                _ => unreachable!("sampling called with {method:?}"),
            }
        }
        self.report.timings.push((format!("{}_{}", method.name(), scheme), start.elapsed().as_secs_f64()));
        if method == UqMethod::Mc {
            self.report.nodes.push(NodeSummary { label: format!("mc_{scheme}"), min_value, steady_state_l1: None });
        }
        for (i, &n) in sc.samples.iter().enumerate() {
            let estimates = first[i].take().expect("at least one repetition");
            self.push_errors(method, &scheme, n, &estimates, &per_n[i]);
            self.push_series(method, &scheme, n, estimates)?;
        }
        Ok(())
    }

    fn galerkin(&mut self, method: UqMethod, cfg: &SolverConfig, reference: &ReferenceData) -> Result<(), RunError> {
        let sc = self.scenario;
        let scheme = GALERKIN_SCHEME;
        for &order in &sc.orders {
            let start = Instant::now();
            let run = galerkin_run(
                sc.model.as_model(),
                &sc.input,
                order,
                &cfg.grid,
                &cfg.time,
                cfg.stepper,
                method == UqMethod::MmGalerkin,
            )?;
            self.report.timings.push((series_label(method, scheme, order), start.elapsed().as_secs_f64()));
            let errors = errors_against(&run.estimates, reference)?;
            self.push_errors(method, scheme, order, &run.estimates, &[errors]);
            self.push_series(method, scheme, order, run.estimates)?;
        }
        Ok(())
    }

    fn run_phase(&mut self, model: &kinetic_uq::models::Swarming) -> Result<(), RunError> {
        let sc = self.scenario;
        let rule = match sc.schemes.first() {
            Some(FluxScheme::ChangCooper(q)) => *q,
            _ => QuadratureRule::default(),
        };
        let space = sc.space.expect("swarming scenarios carry a space grid");
        let cfg = PhaseConfig { space, velocity: sc.velocity.clone(), rule, time: sc.time.clone() };
        for &method in &sc.methods {
            for &n in &sc.samples {
                let start = Instant::now();
                let run = match method {
                    UqMethod::Mc => phase_mc(model, &sc.input, n, &cfg, sc.seed)?,
                    _ => phase_m3c(model, &sc.input, sc.equilibrium, n, &cfg, sc.seed)?,
                };
                let label = format!("{}_m{}", method.name(), n);
                self.report.timings.push((label.clone(), start.elapsed().as_secs_f64()));
                if method == UqMethod::M3c {
                    self.report.perturbation_variance.push(TimeSeries {
                        label: label.clone(),
                        times: cfg.time.output_times(),
                        values: run.perturbation_variance.clone(),
                    });
                }
                let w_header = header_of(sc.velocity.centers());
                let x_header = header_of(&(0..space.n_x).map(|i| space.center(i)).collect::<Vec<_>>());
                let table = |pick: &dyn Fn(&kinetic_uq::phase_sampling::PhaseEstimate) -> &[f64], header: &str| {
                    let mut s = format!("{header}\n");
                    for e in &run.estimates {
                        row(&mut s, e.time, pick(e));
                    }
                    s
                };
                let vm = table(&|e| &e.velocity_mean, &w_header);
                let vv = table(&|e| &e.velocity_variance, &w_header);
                let xm = table(&|e| &e.space_mean, &x_header);
                self.write(&format!("velocity_mean_{label}.csv"), &vm)?;
                self.write(&format!("velocity_variance_{label}.csv"), &vv)?;
                self.write(&format!("space_mean_{label}.csv"), &xm)?;
                self.report.phase.push(run);
                self.write_tables()?;
            }
        }
        Ok(())
    }

    fn push_errors(&mut self, method: UqMethod, scheme: &str, n: usize, estimates: &[UqEstimate], reps: &[SlotErrors]) {
        let slots = reps.iter().map(|r| r.len()).min().unwrap_or(0);
        let count = reps.len() as f64;
        for slot in 0..slots {
            let mean = |f: &dyn Fn(&(ErrorNorms, f64)) -> f64| reps.iter().map(|r| f(&r[slot])).sum::<f64>() / count;
            let l1 = mean(&|e| e.0.l1);
            let l1_std = if reps.len() > 1 {
                (reps.iter().map(|r| (r[slot].0.l1 - l1).powi(2)).sum::<f64>() / (count - 1.0)).sqrt()
            } else {
                0.0
            };
            self.report.errors.push(ErrorRow {
                method,
                scheme: scheme.to_string(),
                n,
                time: estimates[slot].time,
                l1,
                l2: mean(&|e| e.0.l2),
                linf: mean(&|e| e.0.linf),
                variance_l1: mean(&|e| e.1),
                l1_std,
                repetitions: reps.len(),
            });
        }
    }

    fn push_series(&mut self, method: UqMethod, scheme: &str, n: usize, estimates: Vec<UqEstimate>) -> Result<(), RunError> {
        let label = series_label(method, scheme, n);
        let header = header_of(self.scenario.velocity.centers());
        let mut mean = format!("{header}\n");
        let mut var = format!("{header}\n");
        for e in &estimates {
            row(&mut mean, e.time, e.mean.values());
            row(&mut var, e.time, e.variance.values());
        }
        self.write(&format!("mean_{label}.csv"), &mean)?;
        self.write(&format!("variance_{label}.csv"), &var)?;
        self.report.series.push(Series { method, scheme: scheme.to_string(), n, estimates });
        Ok(())
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), RunError> {
        if let Some(dir) = &self.out {
            let path = dir.join(name);
            fs::write(&path, contents)?;
            if !self.report.files.contains(&path) {
                self.report.files.push(path);
            }
        }
        Ok(())
    }

    fn write_tables(&mut self) -> Result<(), RunError> {
        if self.out.is_none() {
            return Ok(());
        }
        let stats = "l1,l2,linf,variance_l1,l1_std,repetitions";
        if !self.report.errors.is_empty() {
            let mut by_time = format!("time,method,scheme,n,{stats}\n");
            for r in &self.report.errors {
                let _ = writeln!(by_time, "{},{},{},{},{}", num(r.time), r.method.name(), r.scheme, r.n, error_stats(r));
            }
            let last_time = self.report.errors.iter().map(|r| r.time).fold(f64::NEG_INFINITY, f64::max);
            let mut by_n = format!("n,method,scheme,time,{stats}\n");
            for r in self.report.errors.iter().filter(|r| r.time == last_time) {
                let _ = writeln!(by_n, "{},{},{},{},{}", r.n, r.method.name(), r.scheme, num(r.time), error_stats(r));
            }
            self.write("error_vs_time.csv", &by_time)?;
            self.write("error_vs_m.csv", &by_n)?;
        }
        if !self.report.entropy.is_empty() {
            let text = series_table("step,time", &self.report.entropy, true);
            self.write("entropy.csv", &text)?;
        }
        if !self.report.perturbation_variance.is_empty() {
            let text = series_table("time", &self.report.perturbation_variance, false);
            self.write("perturbation_variance.csv", &text)?;
        }
        if !self.report.sample_traces.is_empty() {
            let counts: Vec<TimeSeries> = self.sample_series(|t| t.counts.iter().map(|&c| c as f64).collect());
            let variance: Vec<TimeSeries> = self.sample_series(|t| t.variance.clone());
            let mut text = String::from("step,time");
            for s in &counts {
                let _ = write!(text, ",{}", s.label);
            }
            text.push('\n');
            let len = counts.iter().map(|s| s.values.len()).max().unwrap_or(0);
            for step in 0..len {
                let _ = write!(text, "{step},{}", num(self.scenario.time.time(step)));
                for s in &counts {
                    match s.values.get(step) {
                        Some(&v) => {
                            let _ = write!(text, ",{}", v as usize);
                        }
                        None => text.push(','),
                    }
                }
                text.push('\n');
            }
            self.write("samples.csv", &text)?;
            let text = series_table("step,time", &variance, true);
            self.write("sample_variance.csv", &text)?;
        }
        Ok(())
    }

    fn sample_series(&self, values: impl Fn(&SampleTrace) -> Vec<f64>) -> Vec<TimeSeries> {
        self.report
            .sample_traces
            .iter()
            .map(|t| TimeSeries {
                label: format!("fm3c_m{}_rep{}", t.initial, t.repetition),
                times: (0..t.counts.len()).map(|k| self.scenario.time.time(k)).collect(),
                values: values(t),
            })
            .collect()
    }
}

fn error_stats(r: &ErrorRow) -> String {
    format!("{},{},{},{},{},{}", num(r.l1), num(r.l2), num(r.linf), num(r.variance_l1), num(r.l1_std), r.repetitions)
}

fn header_of(centers: &[f64]) -> String {
    let mut s = String::from("time");
    for c in centers {
        let _ = write!(s, ",{}", num(*c));
    }
    s
}

fn row(out: &mut String, time: f64, values: &[f64]) {
    out.push_str(&num(time));
    for v in values {
        out.push(',');
        out.push_str(&num(*v));
    }
    out.push('\n');
}

/// Columns of several series over a shared index; `by_step` rows are time steps.
fn series_table(index: &str, series: &[TimeSeries], by_step: bool) -> String {
    let mut text = index.to_string();
    for s in series {
        let _ = write!(text, ",{}", s.label);
    }
    text.push('\n');
    let len = series.iter().map(|s| s.values.len()).max().unwrap_or(0);
    for k in 0..len {
        let time = num(series.iter().find_map(|s| s.times.get(k)).copied().unwrap_or(f64::NAN));
        if by_step {
            let _ = write!(text, "{k},{time}");
        } else {
            text.push_str(&time);
        }
        for s in series {
            match s.values.get(k) {
                Some(v) => {
                    let _ = write!(text, ",{}", num(*v));
                }
                None => text.push(','),
            }
        }
        text.push('\n');
    }
    text
}

/// Writes `manifest.txt`: status, version, resolved configuration, monitors, timings and files.
#[allow(clippy::too_many_arguments)]
pub fn write_manifest(
    dir: &Path,
    scenario: &Scenario,
    resolved: &[(String, String)],
    report: &RunReport,
    failure: Option<&RunError>,
    threads: usize,
    version: &str,
) -> std::io::Result<PathBuf> {
    let mut m = String::new();
    let mut kv = |k: &str, v: &dyn std::fmt::Display| {
        let _ = writeln!(m, "{k} = {v}");
    };
    kv("status", &if failure.is_some() { "failed" } else { "complete" });
    if let Some(e) = failure {
        kv("error", &e);
        kv("partial_artifacts", &true);
    }
    kv("scenario", &scenario.name);
    kv("version", &version);
    kv("seed", &scenario.seed);
    kv("threads", &threads);
    for (k, v) in resolved {
        kv(&format!("config.{k}"), v);
    }
    kv("derived.dw", &num(scenario.velocity.dw()));
    if let Some(space) = &scenario.space {
        kv("derived.dx", &num(space.dx));
    }
    kv("derived.dt", &num(scenario.time.dt));
    kv("derived.n_steps", &scenario.time.n_steps);
    let outputs: Vec<String> = scenario.time.output_times().iter().map(|t| num(*t)).collect();
    kv("derived.output_times", &outputs.join(", "));
    let schemes: Vec<String> = scenario.schemes.iter().map(|s| s.name()).collect();
    kv("derived.schemes", &schemes.join(", "));
    kv("derived.stepper", &scenario.stepper.name());
    kv("derived.reference", &scenario.reference.name());
    kv("derived.equilibrium", &equilibrium_name(scenario.equilibrium));
    for node in &report.nodes {
        kv(&format!("monitor.{}.min_value", node.label), &num(node.min_value));
        if let Some(l1) = node.steady_state_l1 {
            kv(&format!("monitor.{}.steady_state_l1", node.label), &num(l1));
        }
    }
    for run in &report.phase {
        let label = format!("{}_m{}", run.method.name(), run.samples);
        kv(&format!("monitor.{label}.mass_drift"), &num(run.mass_drift));
        kv(&format!("monitor.{label}.min_value"), &num(run.min_value));
        kv(&format!("monitor.{label}.bank_seconds"), &format!("{:.3}", run.bank_seconds));
    }
    for (label, seconds) in &report.timings {
        kv(&format!("timing.{label}"), &format!("{seconds:.3}"));
    }
    let files: Vec<String> = report
        .files
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    kv("files", &files.join(", "));
    let path = dir.join("manifest.txt");
    fs::write(&path, m)?;
    Ok(path)
}
