//! Fully explicit simulation configuration.
//!
//! Every field carries its value; defaults are filled in by the parser and
//! written back out by the serializer, so a config file round-trips.

use std::path::PathBuf;

use crate::damping::{DampingLaw, FlowContext};
use crate::diagnostics::{BlowupCriterion, DiagnosticsRecord, DEFAULT_ENERGY_FLOOR_FACTOR, DEFAULT_RHO_CAP_FACTOR};
use crate::error::{Error, Result};
use crate::experiments::{gaussian_init, GaussianSpec};
use crate::io::snapshot::read_snapshot;
use crate::spectral::{Axis, Basis, ComplexField, Dispersion, Grid};
use crate::stepper::{Breakpoint, Potential, Schedule, SimState, DEFAULT_STRIDE};

#[derive(Clone, Debug, PartialEq)]
pub enum InitSpec {
    Gaussian(GaussianSpec),
    Snapshot(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlowupConfig {
    pub rho_cap_factor: f64,
    /// `0` disables the energy floor.
    pub energy_floor_factor: f64,
    pub horizon: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputConfig {
    pub timeseries: PathBuf,
    /// Snapshot files are written as `<prefix>_<step>.dnls`.
    pub snapshot_prefix: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub axes: Vec<Axis>,
    pub basis: Basis,
    pub sigma: f64,
    /// Constant `beta`; with a schedule it must equal the first breakpoint's.
    pub beta: f64,
    pub dispersion: Dispersion,
    /// Empty means constant `beta` and unit damping scale.
    pub schedule: Vec<Breakpoint>,
    pub potential: Potential,
    pub law: DampingLaw,
    pub k: f64,
    pub t_end: f64,
    pub stride: usize,
    pub init: InitSpec,
    pub blowup: BlowupConfig,
    pub output: OutputConfig,
}

impl SimConfig {
    /// The two-dimensional Gaussian setup on `[-16, 16]^2` with `M` points per
    /// axis, `gamma_y = 2`, `eps = 0.2`.
    pub fn gaussian_2d(m: usize, beta: f64, law: DampingLaw, k: f64, t_end: f64) -> Result<Self> {
        let axis = Axis::new(-16.0, 16.0, m)?;
        Ok(SimConfig {
            axes: vec![axis, axis],
            basis: Basis::Sine,
            sigma: 1.0,
            beta,
            dispersion: Dispersion::Schrodinger,
            schedule: Vec::new(),
            potential: Potential::Zero,
            law,
            k,
            t_end,
            stride: DEFAULT_STRIDE,
            init: InitSpec::Gaussian(GaussianSpec::new(2.0, 0.2)?),
            blowup: BlowupConfig {
                rho_cap_factor: DEFAULT_RHO_CAP_FACTOR,
                energy_floor_factor: DEFAULT_ENERGY_FLOOR_FACTOR,
                horizon: t_end,
            },
            output: OutputConfig {
                timeseries: PathBuf::from("timeseries.csv"),
                snapshot_prefix: PathBuf::from("snapshot"),
            },
        })
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.axes.clone(), self.basis)
    }

    pub fn schedule(&self) -> Result<Schedule> {
        if self.schedule.is_empty() {
            Ok(Schedule::constant(self.beta))
        } else {
            Schedule::new(self.schedule.clone())
        }
    }

    /// Cross-field checks not covered by the component constructors.
    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        let schedule = self.schedule()?;
        if let Some(first) = self.schedule.first() {
            if first.beta != self.beta {
                return Err(Error::InvalidArgument(format!(
                    "beta = {} differs from the first schedule breakpoint's beta = {}",
                    self.beta, first.beta
                )));
            }
        }
        for p in schedule.points() {
            self.law.scaled(p.delta_scale).validate(FlowContext::new(p.beta, self.sigma))?;
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::InvalidArgument(format!("k must be positive (got {})", self.k)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!("t_end must be >= 0 (got {})", self.t_end)));
        }
        if self.stride == 0 {
            return Err(Error::InvalidArgument("stride must be >= 1".into()));
        }
        if let Dispersion::Cgl { epsilon } = self.dispersion {
            if !(epsilon >= 0.0 && epsilon.is_finite()) {
                return Err(Error::InvalidArgument(format!("CGL epsilon must be >= 0 (got {epsilon})")));
            }
        }
        let b = &self.blowup;
        if !(b.rho_cap_factor > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "rho_cap_factor must exceed 1 (got {})",
                b.rho_cap_factor
            )));
        }
        if !(b.energy_floor_factor >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "energy_floor_factor must be >= 0 (got {})",
                b.energy_floor_factor
            )));
        }
        if !(b.horizon > 0.0) {
            return Err(Error::InvalidArgument(format!("horizon must be positive (got {})", b.horizon)));
        }
        if let Potential::Tabulated { .. } = self.potential {
            return Err(Error::InvalidArgument(
                "tabulated potentials cannot be set from a config".into(),
            ));
        }
        Ok(())
    }

    /// Initial field: the sampled Gaussian, or a snapshot checked against the grid.
    pub fn initial_field(&self) -> Result<ComplexField> {
        let grid = self.grid()?;
        match &self.init {
            InitSpec::Gaussian(spec) => Ok(gaussian_init(&grid, spec).0),
            InitSpec::Snapshot(path) => Ok(read_snapshot(path, Some(&grid))?.field),
        }
    }

    pub fn build_state(&self) -> Result<SimState> {
        self.validate()?;
        let field = self.initial_field()?;
        SimState::new(
            field,
            self.k,
            self.sigma,
            self.law.clone(),
            self.potential.clone(),
            self.schedule()?,
            self.dispersion,
        )
    }

    pub fn criterion(&self, initial: &DiagnosticsRecord) -> Result<BlowupCriterion> {
        BlowupCriterion::from_initial(
            initial,
            self.blowup.rho_cap_factor,
            self.blowup.energy_floor_factor,
            self.blowup.horizon,
        )
    }
}
