//! Explicit, unconditionally stable time-splitting sine-spectral (TSSP)
//! solver for damped focusing nonlinear Schrödinger, Gross–Pitaevskii and
//! complex Ginzburg–Landau equations in one and two dimensions.
//!
//! The crate is organised bottom-up:
//!
//! * [`spectral`]: grids, fast sine/Fourier transforms, the exact kinetic step
//! * [`damping`]: exact pointwise flow maps `h`, `F`, `G` for each damping law
//! * [`stepper`]: Strang-split time step, schedules, the evolution driver
//! * [`diagnostics`]: normalization, energy, densities, widths, blowup classifier
//! * [`experiments`]: initial data, damping-threshold bisection, fits, convergence studies
//! * [`io`]: configuration text, CSV time series, binary field snapshots
//! * [`selftest`]: quick oracle checks used by the CLI

pub mod config;
pub mod damping;
pub mod diagnostics;
mod error;
pub mod experiments;
pub mod io;
pub mod selftest;
pub mod spectral;
pub mod stepper;
mod sum;

pub use num_complex::Complex64;

pub use config::{InitSpec, SimConfig};
pub use damping::{DampingLaw, Flow, FlowContext, NumericLaw};
pub use diagnostics::{BlowupCriterion, Classification, DiagnosticsRecord};
pub use error::{Error, Result};
pub use experiments::{GaussianSpec, ThresholdResult};
pub use spectral::{Axis, Basis, ComplexField, Dispersion, Grid};
pub use stepper::{EvolveOutcome, Potential, Schedule, SimState};
