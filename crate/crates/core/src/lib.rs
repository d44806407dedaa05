//! Structure-preserving finite-volume solvers for Fokker–Planck equations with a scalar
//! random input, and the uncertainty-quantification front-ends built on them:
//! stochastic collocation, Monte Carlo with Micro–Macro variance reduction, and
//! stochastic Galerkin.

pub mod diagnostics;
pub mod error;
pub mod flux;
pub mod galerkin;
pub mod models;
pub mod mesh;
pub mod phase_sampling;
pub mod quadrature;
pub mod sampling;
pub mod solver;
pub mod time;

pub use error::{Error, Result};
pub use flux::{Boundary, DriftDiffusion, DriftField, FluxWeights};
pub use mesh::{Density, Moments, RandomInput, VelocityGrid};
pub use quadrature::QuadratureRule;
pub use solver::{FluxScheme, FpOperator, MicroMacroOperator, TimeGrid};
pub use time::{StepControl, Stepper};
