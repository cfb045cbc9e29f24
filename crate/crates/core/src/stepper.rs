//! Strang-split time stepping.
//!
//! One step from `t_n` to `t_n + k` is
//!
//! ```text
//! psi*   = N(k/2) psi^n      exact pointwise damped-nonlinear flow
//! psi**  = K(k)   psi*       exact kinetic step in coefficient space
//! psi^n+1 = N(k/2) psi**
//! ```
//!
//! with `beta` and the damping scale sampled from the [`Schedule`] at the
//! step midpoint `t_n + k/2` for both half steps.

use std::ops::ControlFlow;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::damping::{DampingLaw, FlowContext};
use crate::diagnostics::{self, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::spectral::{ComplexField, Dispersion, Grid, KineticPropagator};

/// Default observer stride, in steps.
pub const DEFAULT_STRIDE: usize = 10;

const ALIGN_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub enum Potential {
    Zero,
    /// `V = 1/2 sum gamma_i^2 x_i^2`
    Harmonic { gamma: Vec<f64> },
    /// One value per grid node, row-major.
    Tabulated { values: Vec<f64> },
}

impl Potential {
    /// Potential sampled on every node of `grid`.
    pub fn sample(&self, grid: &Grid) -> Result<Vec<f64>> {
        let n = grid.node_count();
        match self {
            Potential::Zero => Ok(vec![0.0; n]),
            Potential::Harmonic { gamma } => {
                if gamma.len() != grid.dim() {
                    return Err(Error::InvalidArgument(format!(
                        "harmonic potential needs {} gamma values (got {})",
                        grid.dim(),
                        gamma.len()
                    )));
                }
                if gamma.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
                    return Err(Error::InvalidArgument(format!(
                        "harmonic gamma must be finite and >= 0 (got {gamma:?})"
                    )));
                }
                Ok((0..n)
                    .map(|flat| {
                        let x = grid.coords(&grid.unflatten(flat));
                        0.5 * x
                            .iter()
                            .zip(gamma)
                            .map(|(xi, gi)| gi * gi * xi * xi)
                            .sum::<f64>()
                    })
                    .collect())
            }
            Potential::Tabulated { values } => {
                if values.len() != n {
                    return Err(Error::Length {
                        expected: n,
                        actual: values.len(),
                    });
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument(
                        "tabulated potential must be finite".into(),
                    ));
                }
                Ok(values.clone())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Breakpoint {
    pub t: f64,
    pub beta: f64,
    pub delta_scale: f64,
}

/// Piecewise-linear time dependence of `beta` and the damping scale.
///
/// Breakpoint times are non-decreasing; two breakpoints may share a time,
/// which encodes a jump (the later one holds from that time on).
/// Evaluation clamps outside the covered range.
#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    points: Vec<Breakpoint>,
}

impl Schedule {
    pub fn constant(beta: f64) -> Self {
        Schedule {
            points: vec![Breakpoint {
                t: 0.0,
                beta,
                delta_scale: 1.0,
            }],
        }
    }

    pub fn new(points: Vec<Breakpoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Schedule("at least one breakpoint is required".into()));
        }
        for p in &points {
            if !(p.t.is_finite() && p.beta.is_finite() && p.delta_scale.is_finite()) {
                return Err(Error::Schedule(format!("non-finite breakpoint {p:?}")));
            }
            if p.delta_scale < 0.0 {
                return Err(Error::Schedule(format!(
                    "delta scale must be >= 0 (got {} at t = {})",
                    p.delta_scale, p.t
                )));
            }
        }
        for w in points.windows(2) {
            if w[1].t < w[0].t {
                return Err(Error::Schedule(format!(
                    "breakpoints must be sorted in time ({} after {})",
                    w[1].t, w[0].t
                )));
            }
        }
        for w in points.windows(3) {
            if w[0].t == w[1].t && w[1].t == w[2].t {
                return Err(Error::Schedule(format!(
                    "at most two breakpoints may share t = {}",
                    w[0].t
                )));
            }
        }
        Ok(Schedule { points })
    }

    pub fn points(&self) -> &[Breakpoint] {
        &self.points
    }

    pub fn is_constant(&self) -> bool {
        self.points.len() == 1
    }

    /// `(beta, delta_scale)` at time `t`.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let pts = &self.points;
        let first = pts[0];
        if t < first.t || pts.len() == 1 {
            return (first.beta, first.delta_scale);
        }
        // last breakpoint with p.t <= t
        let i = pts.partition_point(|p| p.t <= t) - 1;
        if i + 1 == pts.len() {
            let last = pts[i];
            return (last.beta, last.delta_scale);
        }
        let (p, q) = (pts[i], pts[i + 1]);
        let w = (t - p.t) / (q.t - p.t);
        (
            p.beta + w * (q.beta - p.beta),
            p.delta_scale + w * (q.delta_scale - p.delta_scale),
        )
    }

    pub fn beta(&self, t: f64) -> f64 {
        self.eval(t).0
    }
}

/// Number of steps of size `k` from `t0` to `t1`, if they align.
pub fn aligned_steps(t0: f64, t1: f64, k: f64) -> Result<u64> {
    let n = (t1 - t0) / k;
    let rounded = n.round();
    if !(n.is_finite() && n > -0.5) || (n - rounded).abs() > ALIGN_TOL * rounded.max(1.0) {
        return Err(Error::Misaligned(format!(
            "interval [{t0}, {t1}] is not an integer number of steps k = {k}"
        )));
    }
    Ok(rounded as u64)
}

/// Apply the exact pointwise damped-nonlinear flow over `r`, in place.
///
/// `potential` holds one value per node of `field`'s grid.
pub fn nonlinear_half_step(
    field: &mut ComplexField,
    law: &DampingLaw,
    ctx: FlowContext,
    potential: &[f64],
    r: f64,
) -> Result<()> {
    if !(r >= 0.0) {
        return Err(Error::InvalidArgument(format!("half step must be >= 0 (got {r})")));
    }
    if potential.len() != field.values().len() {
        return Err(Error::Length {
            expected: field.values().len(),
            actual: potential.len(),
        });
    }
    if field.is_diverged() {
        return Ok(());
    }
    if let Some((f, c)) = law.separable_flow(ctx, r) {
        let amp = (-f).exp();
        let sigma = ctx.sigma;
        field
            .values_mut()
            .par_iter_mut()
            .zip(potential.par_iter())
            .for_each(|(psi, &v)| {
                let s = psi.norm_sqr();
                let s_pow = if sigma == 1.0 { s } else { s.powf(sigma) };
                *psi *= Complex64::from_polar(amp, c * s_pow - v * r);
            });
        return Ok(());
    }
    field
        .values_mut()
        .par_iter_mut()
        .zip(potential.par_iter())
        .try_for_each(|(psi, &v)| {
            let s = psi.norm_sqr();
            if s == 0.0 {
                return Ok(());
            }
            let fl = law.flow(ctx, s, r)?;
            *psi *= Complex64::from_polar((-fl.f).exp(), fl.g - v * r);
            Ok(())
        })
}

/// Simulation state owned by one evolution driver.
#[derive(Clone, Debug)]
pub struct SimState {
    field: ComplexField,
    step_index: u64,
    k: f64,
    sigma: f64,
    law: DampingLaw,
    potential: Potential,
    schedule: Schedule,
    dispersion: Dispersion,
    potential_values: Arc<Vec<f64>>,
    propagator: Arc<KineticPropagator>,
}

impl SimState {
    /// The field's time must be a whole number of steps.
    pub fn new(
        field: ComplexField,
        k: f64,
        sigma: f64,
        law: DampingLaw,
        potential: Potential,
        schedule: Schedule,
        dispersion: Dispersion,
    ) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive (got {k})")));
        }
        let step_index = aligned_steps(0.0, field.time(), k)?;
        for p in schedule.points() {
            law.scaled(p.delta_scale)
                .validate(FlowContext::new(p.beta, sigma))?;
        }
        let potential_values = Arc::new(potential.sample(field.grid())?);
        let propagator = Arc::new(KineticPropagator::new(field.grid(), k, dispersion)?);
        Ok(SimState {
            field,
            step_index,
            k,
            sigma,
            law,
            potential,
            schedule,
            dispersion,
            potential_values,
            propagator,
        })
    }

    pub fn field(&self) -> &ComplexField {
        &self.field
    }

    pub fn into_field(self) -> ComplexField {
        self.field
    }

    pub fn time(&self) -> f64 {
        self.field.time()
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn law(&self) -> &DampingLaw {
        &self.law
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn potential_values(&self) -> &[f64] {
        &self.potential_values
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn dispersion(&self) -> Dispersion {
        self.dispersion
    }

    pub fn is_diverged(&self) -> bool {
        self.field.is_diverged()
    }

    /// Same state with `potential` replaced.
    pub fn with_potential(&self, potential: Potential) -> Result<Self> {
        let values = potential.sample(self.field.grid())?;
        let mut s = self.clone();
        s.potential = potential;
        s.potential_values = Arc::new(values);
        Ok(s)
    }

    /// Diagnostics of the current field, with `beta` taken from the schedule.
    pub fn record(&self) -> DiagnosticsRecord {
        diagnostics::record(
            &self.field,
            &self.potential_values,
            self.schedule.beta(self.time()),
            self.sigma,
        )
    }

    /// Advance one Strang step. A non-finite result latches the divergence
    /// flag instead of failing.
    pub fn strang_step(&mut self) -> Result<()> {
        if self.field.is_diverged() {
            return Ok(());
        }
        let mid = (self.step_index as f64 + 0.5) * self.k;
        let (beta, scale) = self.schedule.eval(mid);
        let law = self.law.scaled(scale);
        let ctx = FlowContext::new(beta, self.sigma);
        law.validate(ctx)?;
        let half = 0.5 * self.k;
        nonlinear_half_step(&mut self.field, &law, ctx, &self.potential_values, half)?;
        self.propagator.apply(&mut self.field);
        nonlinear_half_step(&mut self.field, &law, ctx, &self.potential_values, half)?;
        self.step_index += 1;
        self.field.set_time(self.step_index as f64 * self.k);
        self.field.check_finite();
        Ok(())
    }

    /// Advance `n` steps without observers.
    pub fn advance(&mut self, n: u64) -> Result<()> {
        for _ in 0..n {
            if self.field.is_diverged() {
                break;
            }
            self.strang_step()?;
        }
        Ok(())
    }
}

/// Callback invoked with each diagnostics row; `Break` stops the run.
pub type Observer<'a> = dyn FnMut(&SimState, &DiagnosticsRecord) -> ControlFlow<()> + 'a;

#[derive(Clone, Debug)]
pub struct EvolveOutcome {
    pub records: Vec<DiagnosticsRecord>,
    /// Time of the first non-finite field, if any.
    pub diverged_at: Option<f64>,
    /// An observer asked to stop before `t_end`.
    pub stopped: bool,
}

/// Step `state` to `t_end`, recording diagnostics at the start, at every
/// step index divisible by `stride`, and at the last step.
pub fn evolve(
    state: &mut SimState,
    t_end: f64,
    stride: usize,
    observers: &mut [&mut Observer<'_>],
) -> Result<EvolveOutcome> {
    if stride == 0 {
        return Err(Error::InvalidArgument("observer stride must be >= 1".into()));
    }
    let t0 = state.time();
    if t_end < t0 {
        return Err(Error::Misaligned(format!("t_end = {t_end} precedes current time {t0}")));
    }
    let n = aligned_steps(t0, t_end, state.k)?;
    for p in state.schedule.points() {
        if p.t > t0 && p.t < t_end {
            aligned_steps(t0, p.t, state.k)?;
        }
    }

    let mut records = Vec::new();
    let mut stopped = false;
    let mut notify = |state: &SimState, records: &mut Vec<DiagnosticsRecord>| {
        let rec = state.record();
        let mut flow = ControlFlow::Continue(());
        for obs in observers.iter_mut() {
            if obs(state, &rec).is_break() {
                flow = ControlFlow::Break(());
            }
        }
        records.push(rec);
        flow
    };

    if state.is_diverged() {
        let _ = notify(state, &mut records);
        return Ok(EvolveOutcome {
            records,
            diverged_at: Some(t0),
            stopped: false,
        });
    }
    if notify(state, &mut records).is_break() {
        stopped = n > 0;
    }
    let mut taken = 0u64;
    while !stopped && taken < n {
        state.strang_step()?;
        taken += 1;
        let last = taken == n;
        if state.is_diverged() || last || state.step_index % stride as u64 == 0 {
            if notify(state, &mut records).is_break() && !last {
                stopped = true;
            }
        }
        if state.is_diverged() {
            break;
        }
    }
    Ok(EvolveOutcome {
        diverged_at: state.is_diverged().then(|| state.time()),
        records,
        stopped,
    })
}

/// Whether adding `alpha` to the potential multiplies the `steps`-step
/// solution by `e^{-i alpha steps k}`, to 1e-11 per node.
pub fn phase_shift_invariance_check(state: &SimState, alpha: f64, steps: u64) -> Result<bool> {
    let mut base = state.clone();
    let shifted_values: Vec<f64> = state.potential_values.iter().map(|v| v + alpha).collect();
    let mut shifted = state.with_potential(Potential::Tabulated {
        values: shifted_values,
    })?;
    base.advance(steps)?;
    shifted.advance(steps)?;
    if base.is_diverged() || shifted.is_diverged() {
        return Ok(false);
    }
    let phase = Complex64::from_polar(1.0, -alpha * steps as f64 * state.k);
    let ok = base
        .field
        .values()
        .iter()
        .zip(shifted.field.values())
        .all(|(a, b)| (a * phase - b).norm() <= 1e-11);
    Ok(ok)
}
