//! Discrete observables and the blowup classifier.
//!
//! Quadratures use the rectangle rule on grid nodes with weight `prod h_i`;
//! the kinetic energy is evaluated in coefficient space. All reductions go
//! through a fixed-shape pairwise sum so results do not depend on the
//! thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spectral::{Basis, ComplexField};
use crate::sum::pairwise;

/// One row of the diagnostics time series.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// Normalization `N = ||psi||^2`.
    pub n: f64,
    pub e: f64,
    pub rho_center: f64,
    pub rho_max: f64,
    /// `sigma_alpha` per axis.
    pub widths: Vec<f64>,
    pub diverged: bool,
}

/// Discrete l2 norm, `sqrt(prod h_i * sum |U_j|^2)` over carrying nodes.
pub fn norm_l2(field: &ComplexField) -> f64 {
    let terms: Vec<f64> = field.values().par_iter().map(|z| z.norm_sqr()).collect();
    (field.grid().cell_volume() * pairwise(&terms)).sqrt()
}

/// Energy `int 1/2 |grad psi|^2 + V |psi|^2 - beta/(sigma+1) |psi|^{2 sigma + 2}`.
///
/// Returns NaN for a diverged field.
pub fn energy(field: &ComplexField, potential: &[f64], beta: f64, sigma: f64) -> f64 {
    if field.is_diverged() {
        return f64::NAN;
    }
    let grid = field.grid();
    let coeffs = grid.coefficients(field);
    let kk = grid.squared_wave_numbers();
    let kinetic_terms: Vec<f64> = coeffs
        .par_iter()
        .zip(kk.par_iter())
        .map(|(c, k2)| k2 * c.norm_sqr())
        .collect();
    let kinetic = 0.5 * grid.parseval_weight() * pairwise(&kinetic_terms);

    let local: Vec<f64> = field
        .values()
        .par_iter()
        .zip(potential.par_iter())
        .map(|(z, v)| {
            let rho = z.norm_sqr();
            v * rho - beta / (sigma + 1.0) * rho.powf(sigma + 1.0)
        })
        .collect();
    kinetic + grid.cell_volume() * pairwise(&local)
}

pub fn rho_max(field: &ComplexField) -> f64 {
    field
        .values()
        .par_iter()
        .map(|z| z.norm_sqr())
        .reduce(|| 0.0, |a, b| if b > a || b.is_nan() { b } else { a })
}

/// `|psi|^2` at the coordinate origin: the node value when the origin is a
/// node, bilinear interpolation otherwise.
pub fn rho_center(field: &ComplexField) -> f64 {
    let grid = field.grid();
    let shape = grid.node_shape();
    let periodic = grid.basis() == Basis::Fourier;
    // per axis: up to two (index, weight) pairs
    let stencils: Vec<Vec<(usize, f64)>> = grid
        .axes()
        .iter()
        .zip(&shape)
        .map(|(ax, &n)| {
            let pos = ((0.0 - ax.a()) / ax.h()).clamp(0.0, ax.m() as f64);
            let near = pos.round();
            if (pos - near).abs() < 1e-9 {
                vec![(wrap(near as usize, n, periodic), 1.0)]
            } else {
                let lo = pos.floor();
                let w = pos - lo;
                vec![
                    (wrap(lo as usize, n, periodic), 1.0 - w),
                    (wrap(lo as usize + 1, n, periodic), w),
                ]
            }
        })
        .collect();
    let values = field.values();
    let mut acc = 0.0;
    match stencils.len() {
        1 => {
            for &(i, w) in &stencils[0] {
                acc += w * values[i].norm_sqr();
            }
        }
        _ => {
            for &(i, wi) in &stencils[0] {
                for &(j, wj) in &stencils[1] {
                    acc += wi * wj * values[i * shape[1] + j].norm_sqr();
                }
            }
        }
    }
    acc
}

fn wrap(i: usize, n: usize, periodic: bool) -> usize {
    if periodic {
        i % n
    } else {
        i.min(n - 1)
    }
}

/// Condensate widths `sigma_alpha = sqrt(<alpha^2>)` per axis.
pub fn widths(field: &ComplexField) -> Result<Vec<f64>> {
    let grid = field.grid();
    let dens: Vec<f64> = field.values().par_iter().map(|z| z.norm_sqr()).collect();
    let mass = pairwise(&dens);
    if !(mass > 0.0) {
        return Err(Error::Diagnostics(
            "widths are undefined for a zero (or non-finite) field".into(),
        ));
    }
    let shape = grid.node_shape();
    let out = (0..grid.dim())
        .map(|d| {
            let ax = grid.axes()[d];
            let inner: usize = shape[d + 1..].iter().product();
            let n_d = shape[d];
            let terms: Vec<f64> = dens
                .par_iter()
                .enumerate()
                .map(|(flat, rho)| {
                    let x = ax.coord((flat / inner) % n_d);
                    x * x * rho
                })
                .collect();
            (pairwise(&terms) / mass).sqrt()
        })
        .collect();
    Ok(out)
}

/// Full diagnostics row for `field`.
pub fn record(field: &ComplexField, potential: &[f64], beta: f64, sigma: f64) -> DiagnosticsRecord {
    let dim = field.grid().dim();
    if field.is_diverged() {
        return DiagnosticsRecord {
            t: field.time(),
            n: f64::NAN,
            e: f64::NAN,
            rho_center: f64::NAN,
            rho_max: f64::NAN,
            widths: vec![f64::NAN; dim],
            diverged: true,
        };
    }
    let n = norm_l2(field).powi(2);
    DiagnosticsRecord {
        t: field.time(),
        n,
        e: energy(field, potential, beta, sigma),
        rho_center: rho_center(field),
        rho_max: rho_max(field),
        widths: widths(field).unwrap_or_else(|_| vec![f64::NAN; dim]),
        diverged: false,
    }
}

/// Numeric stand-in for "sharp spike" blowup detection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlowupCriterion {
    /// Blowup once `rho_max >= rho_cap`.
    pub rho_cap: f64,
    /// Blowup once `E <= e_floor`, when set.
    pub e_floor: Option<f64>,
    pub horizon: f64,
}

/// Default multiple of the initial peak density used as the cap.
pub const DEFAULT_RHO_CAP_FACTOR: f64 = 1e3;
/// Default multiple of `|E(0)|` used as the energy floor.
pub const DEFAULT_ENERGY_FLOOR_FACTOR: f64 = 1e3;

impl BlowupCriterion {
    /// Criterion scaled from the initial record: `rho_cap = rho_factor * rho_max(0)`,
    /// `e_floor = -energy_factor * |E(0)|` (inactive when `E(0) = 0` or the factor is 0).
    pub fn from_initial(
        initial: &DiagnosticsRecord,
        rho_factor: f64,
        energy_factor: f64,
        horizon: f64,
    ) -> Result<Self> {
        let rho_cap = rho_factor * initial.rho_max;
        let e_floor = (initial.e != 0.0 && energy_factor > 0.0).then(|| -energy_factor * initial.e.abs());
        let c = BlowupCriterion {
            rho_cap,
            e_floor,
            horizon,
        };
        c.validate(initial.rho_max)?;
        Ok(c)
    }

    pub fn validate(&self, initial_rho_max: f64) -> Result<()> {
        if !(self.rho_cap > initial_rho_max) {
            return Err(Error::Diagnostics(format!(
                "rho_cap = {} must exceed the initial peak density {initial_rho_max}",
                self.rho_cap
            )));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::Diagnostics(format!(
                "horizon must be positive (got {})",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Same criterion with the cap and floor doubled.
    pub fn relaxed(&self) -> Self {
        BlowupCriterion {
            rho_cap: 2.0 * self.rho_cap,
            e_floor: self.e_floor.map(|e| 2.0 * e),
            horizon: self.horizon,
        }
    }

    /// Whether a single record trips the criterion.
    pub fn trips(&self, r: &DiagnosticsRecord) -> bool {
        r.diverged
            || !r.rho_max.is_finite()
            || r.rho_max >= self.rho_cap
            || self.e_floor.is_some_and(|f| r.e <= f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Classification {
    Arrested,
    Blowup(f64),
    Diverged(f64),
}

impl Classification {
    pub fn is_arrested(&self) -> bool {
        matches!(self, Classification::Arrested)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Classification::Arrested => "arrested",
            Classification::Blowup(_) => "blowup",
            Classification::Diverged(_) => "diverged",
        }
    }
}

/// Classify a diagnostics series against `criterion`.
pub fn classify_blowup(series: &[DiagnosticsRecord], criterion: &BlowupCriterion) -> Result<Classification> {
    let Some(last) = series.last() else {
        return Err(Error::Diagnostics("cannot classify an empty series".into()));
    };
    if series.windows(2).any(|w| !(w[1].t >= w[0].t)) {
        return Err(Error::Diagnostics("series times must be non-decreasing".into()));
    }
    for r in series {
        if r.diverged || !(r.n.is_finite() && r.e.is_finite() && r.rho_max.is_finite()) {
            return Ok(Classification::Diverged(r.t));
        }
        if r.rho_max >= criterion.rho_cap || criterion.e_floor.is_some_and(|f| r.e <= f) {
            return Ok(Classification::Blowup(r.t));
        }
    }
    if last.t + 1e-12 * criterion.horizon.max(1.0) < criterion.horizon {
        return Err(Error::Diagnostics(format!(
            "series ends at t = {} before the horizon {} without a blowup",
            last.t, criterion.horizon
        )));
    }
    Ok(Classification::Arrested)
}
