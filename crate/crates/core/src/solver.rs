//! Deterministic Fokker–Planck solves at a fixed value of the random input.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::flux::{
    cc_flux_into, check_entropic_mesh, entropic_flux_into, exact_weights, Boundary,
    DriftDiffusion, FluxWeights, WeightBuilder,
};
use crate::mesh::{Density, VelocityGrid};
use crate::quadrature::QuadratureRule;
use crate::time::{euler_update, StepControl, Stepper, Tridiagonal};

/// Face flux discretisation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FluxScheme {
    /// Chang–Cooper flux with weights integrated by the given rule.
    ChangCooper(QuadratureRule),
    /// Logarithmic-mean flux with drift integrated by the given rule.
    Entropic(QuadratureRule),
    /// Chang–Cooper flux with weights taken from a known steady state.
    ExactChangCooper,
    /// Logarithmic-mean flux with drift taken from a known steady state.
    ExactEntropic,
}

impl FluxScheme {
    pub fn name(&self) -> String {
        match self {
            FluxScheme::ChangCooper(r) => format!("cc_{}", r.name()),
            FluxScheme::Entropic(r) => format!("entropic_{}", r.name()),
            FluxScheme::ExactChangCooper => "exact_cc".into(),
            FluxScheme::ExactEntropic => "exact_entropic".into(),
        }
    }

    pub fn needs_steady_state(&self) -> bool {
        matches!(self, FluxScheme::ExactChangCooper | FluxScheme::ExactEntropic)
    }

    pub fn is_entropic(&self) -> bool {
        matches!(self, FluxScheme::Entropic(_) | FluxScheme::ExactEntropic)
    }
}

/// Reusable buffers for stepping.
#[derive(Clone, Debug)]
pub struct StepScratch {
    weights: FluxWeights,
    flux: Vec<f64>,
    aux_flux: Vec<f64>,
    stage: Vec<f64>,
    stage2: Vec<f64>,
    sum: Vec<f64>,
}

impl StepScratch {
    pub fn new(n: usize, template: &FluxWeights) -> Self {
        Self {
            weights: template.clone(),
            flux: vec![0.0; n + 1],
            aux_flux: vec![0.0; n + 1],
            stage: vec![0.0; n],
            stage2: vec![0.0; n],
            sum: vec![0.0; n],
        }
    }
}

/// Flux operator `f -> (F_{i+1/2})` for one realisation of the random input.
#[derive(Clone)]
pub struct FpOperator {
    grid: Arc<VelocityGrid>,
    dd: Arc<dyn DriftDiffusion>,
    scheme: FluxScheme,
    builder: Option<WeightBuilder>,
    frozen: Option<FluxWeights>,
}

impl FpOperator {
    /// `f_inf` is required by the exact-weight schemes and ignored otherwise.
    pub fn new(
        grid: Arc<VelocityGrid>,
        dd: Arc<dyn DriftDiffusion>,
        boundary: Boundary,
        scheme: FluxScheme,
        f_inf: Option<&Density>,
    ) -> Result<Self> {
        let (builder, frozen) = match scheme {
            FluxScheme::ExactChangCooper | FluxScheme::ExactEntropic => {
                let f_inf = f_inf.ok_or_else(|| {
                    Error::Unsupported("exact weights need a closed-form steady state".into())
                })?;
                (None, Some(exact_weights(f_inf, dd.as_ref())?))
            }
            FluxScheme::ChangCooper(rule) | FluxScheme::Entropic(rule) => {
                let builder = WeightBuilder::new(grid.clone(), dd.as_ref(), rule, boundary)?;
                let frozen = dd
                    .is_linear()
                    .then(|| builder.weights(&vec![0.0; grid.n_cells()], dd.as_ref()));
                (Some(builder), frozen)
            }
        };
        Ok(Self { grid, dd, scheme, builder, frozen })
    }

    pub fn grid(&self) -> &Arc<VelocityGrid> {
        &self.grid
    }

    pub fn drift_diffusion(&self) -> &Arc<dyn DriftDiffusion> {
        &self.dd
    }

    pub fn scheme(&self) -> FluxScheme {
        self.scheme
    }

    /// True when the flux is a fixed linear map of the density.
    pub fn is_linear(&self) -> bool {
        self.frozen.is_some() && !self.scheme.is_entropic()
    }

    pub fn scratch(&self) -> StepScratch {
        let template = match &self.frozen {
            Some(w) => w.clone(),
            None => self.weights(&vec![0.0; self.grid.n_cells()]),
        };
        StepScratch::new(self.grid.n_cells(), &template)
    }

    /// Weights for the density `f`.
    pub fn weights(&self, f: &[f64]) -> FluxWeights {
        match (&self.frozen, &self.builder) {
            (Some(w), _) => w.clone(),
            (None, Some(b)) => b.weights(f, self.dd.as_ref()),
            (None, None) => unreachable!("operator without weights"),
        }
    }

    fn refresh<'a>(&'a self, f: &[f64], buf: &'a mut FluxWeights) -> &'a FluxWeights {
        match (&self.frozen, &self.builder) {
            (Some(w), _) => w,
            (None, Some(b)) => {
                b.update(f, self.dd.as_ref(), buf);
                buf
            }
            (None, None) => unreachable!("operator without weights"),
        }
    }

    fn flux_with(&self, f: &[f64], w: &FluxWeights, out: &mut [f64]) -> Result<()> {
        if self.scheme.is_entropic() {
            entropic_flux_into(f, w, out)
        } else {
            cc_flux_into(f, w, out)
        }
    }

    /// Face fluxes of `f` with weights rebuilt for `f`.
    pub fn flux(&self, f: &[f64]) -> Result<Vec<f64>> {
        let w = self.weights(f);
        let mut out = vec![0.0; f.len() + 1];
        self.flux_with(f, &w, &mut out)?;
        Ok(out)
    }

    /// Zero-flux state of frozen weights, `f_{i+1} / f_i = exp(-lambda_{i+1/2})`, scaled to `mass`.
    pub fn discrete_equilibrium(&self, mass: f64) -> Option<Result<Density>> {
        let w = self.frozen.as_ref()?;
        let n = self.grid.n_cells();
        let mut logs = vec![0.0; n];
        for i in 1..n {
            logs[i] = logs[i - 1] - w.lambda[i];
        }
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let values = logs.iter().map(|l| (l - top).exp()).collect();
        Some(Density::new(self.grid.clone(), values).and_then(|d| d.normalized()).map(|d| {
            let v = d.values().iter().map(|x| x * mass).collect();
            d.with_values(v)
        }))
    }

    /// Warns if `dt` exceeds the positivity bound at the density `f`.
    pub fn check_step(&self, f: &[f64], dt: f64, stepper: Stepper) -> bool {
        let w = self.weights(f);
        if self.scheme.is_entropic() {
            check_entropic_mesh(&w);
        }
        StepControl::new(dt, stepper).check(&w)
    }

    /// Advances `f` in place by one step.
    pub fn step(&self, f: &mut [f64], dt: f64, stepper: Stepper, s: &mut StepScratch) -> Result<()> {
        let r = dt / self.grid.dw();
        match stepper {
            Stepper::SemiImplicit => {
                if self.scheme.is_entropic() {
                    return Err(Error::Unsupported(
                        "semi-implicit stepping needs the Chang–Cooper flux".into(),
                    ));
                }
                let w = self.refresh(f, &mut s.weights);
                let x = Tridiagonal::implicit_operator(w, dt).solve(f)?;
                f.copy_from_slice(&x);
                Ok(())
            }
            _ => {
                let StepScratch { weights, flux, stage, stage2, sum, .. } = s;
                ssp_in_place(f, r, stepper, stage, stage2, sum, |g, out| {
                    let w = self.refresh(g, weights);
                    self.flux_with(g, w, out)
                }, flux)
            }
        }
    }

    /// Convenience wrapper returning a new density.
    pub fn step_density(&self, f: &Density, dt: f64, stepper: Stepper) -> Result<Density> {
        let mut v = f.values().to_vec();
        let mut s = self.scratch();
        self.step(&mut v, dt, stepper, &mut s)?;
        Ok(f.with_values(v))
    }
}

/// Euler or SSP-RK step of `f' = div F(f)` in place.
#[allow(clippy::too_many_arguments)]
fn ssp_in_place(
    f: &mut [f64],
    r: f64,
    stepper: Stepper,
    stage: &mut [f64],
    stage2: &mut [f64],
    sum: &mut [f64],
    mut flux: impl FnMut(&[f64], &mut [f64]) -> Result<()>,
    buf: &mut [f64],
) -> Result<()> {
    match stepper {
        Stepper::ExplicitEuler => {
            flux(f, buf)?;
            stage.copy_from_slice(f);
            euler_update(stage, buf, r, f);
        }
        Stepper::SspRk2 => {
            flux(f, buf)?;
            euler_update(f, buf, r, stage);
            flux(stage, buf)?;
            euler_update(stage, buf, r, stage2);
            for i in 0..f.len() {
                f[i] = 0.5 * f[i] + 0.5 * stage2[i];
            }
        }
        Stepper::SspRk3 => {
            flux(f, buf)?;
            euler_update(f, buf, r, stage);
            flux(stage, buf)?;
            euler_update(stage, buf, r, sum);
            for i in 0..f.len() {
                stage2[i] = 0.75 * f[i] + 0.25 * sum[i];
            }
            flux(stage2, buf)?;
            euler_update(stage2, buf, r, sum);
            for i in 0..f.len() {
                f[i] = f[i] / 3.0 + 2.0 / 3.0 * sum[i];
            }
        }
        Stepper::SemiImplicit => unreachable!("handled by the caller"),
    }
    Ok(())
}

/// Evolution of a perturbation `g = f - f_inf` under
/// `d/dt g = div(F[f_inf + g](f_inf + g) - F[f_inf](f_inf))`.
#[derive(Clone)]
pub struct MicroMacroOperator {
    op: FpOperator,
    f_inf: Vec<f64>,
    flux_inf: Vec<f64>,
}

impl MicroMacroOperator {
    pub fn new(op: FpOperator, f_inf: &Density) -> Result<Self> {
        let flux_inf = op.flux(f_inf.values())?;
        Ok(Self { op, f_inf: f_inf.values().to_vec(), flux_inf })
    }

    pub fn operator(&self) -> &FpOperator {
        &self.op
    }

    pub fn equilibrium(&self) -> &[f64] {
        &self.f_inf
    }

    pub fn scratch(&self) -> StepScratch {
        self.op.scratch()
    }

    /// Advances `g` in place by one step.
    pub fn step(&self, g: &mut [f64], dt: f64, stepper: Stepper, s: &mut StepScratch) -> Result<()> {
        let n = g.len();
        let r = dt / self.op.grid.dw();
        let op = &self.op;
        match stepper {
            Stepper::SemiImplicit => {
                if op.scheme.is_entropic() {
                    return Err(Error::Unsupported(
                        "semi-implicit stepping needs the Chang–Cooper flux".into(),
                    ));
                }
                // (I - dt A^n) g^{n+1} = g^n + dt (A^n - A^inf) f_inf
                for i in 0..n {
                    s.sum[i] = self.f_inf[i] + g[i];
                }
                let w = op.refresh(&s.sum, &mut s.weights);
                op.flux_with(&self.f_inf, w, &mut s.flux)?;
                for i in 0..=n {
                    s.flux[i] -= self.flux_inf[i];
                }
                for i in 0..n {
                    s.stage[i] = g[i] + r * (s.flux[i + 1] - s.flux[i]);
                }
                let x = Tridiagonal::implicit_operator(w, dt).solve(&s.stage)?;
                g.copy_from_slice(&x);
                Ok(())
            }
            _ => {
                let StepScratch { weights, flux, aux_flux, stage, stage2, sum } = s;
                let linear = op.is_linear();
                let mut full = vec![0.0; n];
                ssp_in_place(g, r, stepper, stage, stage2, sum, |gv, out| {
                    if linear {
                        let w = op.refresh(gv, weights);
                        return op.flux_with(gv, w, out);
                    }
                    for i in 0..n {
                        full[i] = self.f_inf[i] + gv[i];
                    }
                    let w = op.refresh(&full, weights);
                    op.flux_with(&full, w, aux_flux)?;
                    for i in 0..=n {
                        out[i] = aux_flux[i] - self.flux_inf[i];
                    }
                    Ok(())
                }, flux)
            }
        }
    }
}

/// Uniform time levels with selected output steps.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub n_steps: usize,
    pub output_steps: Vec<usize>,
}

impl TimeGrid {
    /// Splits `[0, horizon]` into the fewest equal steps not longer than `dt`; each
    /// output time is snapped to the nearest level.
    pub fn new(horizon: f64, dt: f64, output_times: &[f64]) -> Result<Self> {
        if !(horizon > 0.0 && dt > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "horizon {horizon} and dt {dt} must be positive"
            )));
        }
        let n_steps = ((horizon / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let dt = horizon / n_steps as f64;
        let mut output_steps = Vec::with_capacity(output_times.len());
        for &t in output_times {
            if !(0.0..=horizon * (1.0 + 1e-12)).contains(&t) {
                return Err(Error::InvalidParameter(format!(
                    "output time {t} outside [0, {horizon}]"
                )));
            }
            output_steps.push(((t / dt).round() as usize).min(n_steps));
        }
        Ok(Self { dt, n_steps, output_steps })
    }

    pub fn time(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }

    pub fn output_times(&self) -> Vec<f64> {
        self.output_steps.iter().map(|&s| self.time(s)).collect()
    }
}

/// Called after every step with `(step index, time, values)`; step 0 is the datum.
pub type Observer<'a> = &'a mut dyn FnMut(usize, f64, &[f64]);

fn drive(
    init: &Density,
    time: &TimeGrid,
    mut advance: impl FnMut(&mut [f64]) -> Result<()>,
    mut observer: Option<Observer<'_>>,
) -> Result<Vec<Density>> {
    let mut v = init.values().to_vec();
    let mut snapshots = vec![None; time.output_steps.len()];
    let record = |step: usize, v: &[f64], snaps: &mut Vec<Option<Density>>| {
        for (slot, &s) in time.output_steps.iter().enumerate() {
            if s == step {
                snaps[slot] = Some(init.with_values(v.to_vec()));
            }
        }
    };
    record(0, &v, &mut snapshots);
    if let Some(obs) = observer.as_mut() {
        obs(0, 0.0, &v);
    }
    for step in 1..=time.n_steps {
        advance(&mut v)?;
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "solution blew up at step {step}; reduce the time step"
            )));
        }
        record(step, &v, &mut snapshots);
        if let Some(obs) = observer.as_mut() {
            obs(step, time.time(step), &v);
        }
    }
    Ok(snapshots.into_iter().map(|s| s.expect("all output steps visited")).collect())
}

/// Evolves `f0` and returns the snapshots at the output steps.
pub fn evolve(
    op: &FpOperator,
    f0: &Density,
    time: &TimeGrid,
    stepper: Stepper,
    observer: Option<Observer<'_>>,
) -> Result<Vec<Density>> {
    op.check_step(f0.values(), time.dt, stepper);
    let mut s = op.scratch();
    drive(f0, time, |v| op.step(v, time.dt, stepper, &mut s), observer)
}

/// Evolves the perturbation `g0` and returns the perturbation snapshots.
pub fn evolve_perturbation(
    mm: &MicroMacroOperator,
    g0: &Density,
    time: &TimeGrid,
    stepper: Stepper,
    observer: Option<Observer<'_>>,
) -> Result<Vec<Density>> {
    let full: Vec<f64> = mm.f_inf.iter().zip(g0.values()).map(|(a, b)| a + b).collect();
    mm.op.check_step(&full, time.dt, stepper);
    let mut s = mm.scratch();
    drive(g0, time, |v| mm.step(v, time.dt, stepper, &mut s), observer)
}

/// One Micro–Macro step of the signed perturbation `g` around `f_inf`.
pub fn evolve_micro_macro(
    g: &Density,
    f_inf: &Density,
    op: &FpOperator,
    dt: f64,
    stepper: Stepper,
) -> Result<Density> {
    let mm = MicroMacroOperator::new(op.clone(), f_inf)?;
    let mut v = g.values().to_vec();
    let mut s = mm.scratch();
    mm.step(&mut v, dt, stepper, &mut s)?;
    Density::signed(g.grid().clone(), v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LinearFp, Model, Opinion};
    use crate::quadrature::QuadratureRule;

    fn linear_operator(scheme: FluxScheme) -> (FpOperator, Density, Density) {
        let grid = VelocityGrid::new(-1.0, 1.0, 30).unwrap();
        let model = LinearFp::default();
        let dd = model.drift_diffusion(0.4, &grid).unwrap();
        let f_inf = model.steady_state(0.4, &grid).unwrap().unwrap();
        let datum = model.initial_datum(0.4, &grid).unwrap();
        (FpOperator::new(grid, dd, Boundary::NoFlux, scheme, Some(&f_inf)).unwrap(), f_inf, datum)
    }

    #[test]
    fn time_grid_equalizes_steps() {
        let t = TimeGrid::new(1.0, 0.3, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(t.n_steps, 4);
        assert_eq!(t.dt, 0.25);
        assert_eq!(t.output_steps, vec![0, 2, 4]);
        assert!(TimeGrid::new(1.0, 0.1, &[2.0]).is_err());
    }

    #[test]
    fn discrete_equilibrium_has_zero_flux() {
        for scheme in [FluxScheme::ChangCooper(QuadratureRule::Midpoint), FluxScheme::Entropic(QuadratureRule::default())] {
            let (op, _, _) = linear_operator(scheme);
            let eq = op.discrete_equilibrium(1.0).unwrap().unwrap();
            assert!((eq.mass() - 1.0).abs() < 1e-14);
            assert!(op.flux(eq.values()).unwrap().iter().all(|x| x.abs() < 1e-13));
        }
        let (exact, f_inf, _) = linear_operator(FluxScheme::ExactChangCooper);
        let eq = exact.discrete_equilibrium(1.0).unwrap().unwrap();
        for (a, b) in eq.values().iter().zip(f_inf.values()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn nonlinear_operator_has_no_frozen_equilibrium() {
        let grid = VelocityGrid::new(-1.0, 1.0, 20).unwrap();
        let dd = Opinion::default().drift_diffusion(0.0, &grid).unwrap();
        let op = FpOperator::new(grid, dd, Boundary::NoFlux, FluxScheme::ChangCooper(QuadratureRule::default()), None).unwrap();
        assert!(op.discrete_equilibrium(1.0).is_none());
    }

    #[test]
    fn evolution_conserves_mass_and_reaches_equilibrium() {
        let (op, f_inf, datum) = linear_operator(FluxScheme::ExactChangCooper);
        let dt = 0.4 * op.grid().dw().powi(2) / 0.2;
        let time = TimeGrid::new(15.0, dt, &[15.0]).unwrap();
        let out = evolve(&op, &datum, &time, Stepper::ExplicitEuler, None).unwrap();
        let last = out.last().unwrap();
        assert!((last.mass() - datum.mass()).abs() < 1e-13);
        for (a, b) in last.values().iter().zip(f_inf.values()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn micro_macro_matches_full_solver() {
        for scheme in [FluxScheme::ExactChangCooper, FluxScheme::ChangCooper(QuadratureRule::default())] {
            let (op, f_inf, datum) = linear_operator(scheme);
            let g0 = datum.sub(&f_inf).unwrap();
            let mut g = g0.clone();
            let mut f = datum.clone();
            for _ in 0..100 {
                g = evolve_micro_macro(&g, &f_inf, &op, 1e-5, Stepper::ExplicitEuler).unwrap();
                f = op.step_density(&f, 1e-5, Stepper::ExplicitEuler).unwrap();
            }
            for ((a, b), c) in f.values().iter().zip(g.values()).zip(f_inf.values()) {
                assert!((a - (b + c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_perturbation_is_stationary() {
        let (op, f_inf, _) = linear_operator(FluxScheme::Entropic(QuadratureRule::default()));
        let g = Density::zeros(op.grid().clone(), true);
        let mut next = g.clone();
        for _ in 0..50 {
            next = evolve_micro_macro(&next, &f_inf, &op, 1e-3, Stepper::SspRk3).unwrap();
        }
        assert!(next.values().iter().all(|&x| x == 0.0));
    }
}
