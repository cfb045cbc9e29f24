//! Gaussian initial data, damping-threshold search, least-squares fits and
//! self-convergence studies.

use std::f64::consts::PI;
use std::fmt;
use std::ops::ControlFlow;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::config::SimConfig;
use crate::damping::DampingLaw;
use crate::diagnostics::{classify_blowup, norm_l2, Classification, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::spectral::{Axis, ComplexField, Grid};
use crate::stepper::evolve;

/// Amplitude below which the Gaussian tail counts as negligible at the boundary.
pub const TAIL_TOL: f64 = 1e-14;

/// `psi_0 = gamma_y^{1/4} / sqrt(pi eps) exp(-(x^2 + gamma_y y^2) / (2 eps))`
/// in 2D; `(pi eps)^{-1/4} exp(-x^2 / (2 eps))` in 1D.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianSpec {
    gamma_y: f64,
    epsilon: f64,
}

impl GaussianSpec {
    pub fn new(gamma_y: f64, epsilon: f64) -> Result<Self> {
        if !(gamma_y > 0.0 && gamma_y.is_finite() && epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "Gaussian needs gamma_y > 0 and epsilon > 0 (got {gamma_y}, {epsilon})"
            )));
        }
        Ok(GaussianSpec { gamma_y, epsilon })
    }

    pub fn gamma_y(&self) -> f64 {
        self.gamma_y
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn amplitude(&self, x: &[f64]) -> f64 {
        let eps = self.epsilon;
        match x.len() {
            1 => (PI * eps).powf(-0.25) * (-x[0] * x[0] / (2.0 * eps)).exp(),
            _ => {
                self.gamma_y.powf(0.25) / (PI * eps).sqrt()
                    * (-(x[0] * x[0] + self.gamma_y * x[1] * x[1]) / (2.0 * eps)).exp()
            }
        }
    }

    /// Largest amplitude the Gaussian takes on the domain boundary.
    pub fn boundary_amplitude(&self, axes: &[Axis]) -> f64 {
        (0..axes.len())
            .map(|d| {
                let x: Vec<f64> = axes
                    .iter()
                    .enumerate()
                    .map(|(e, ax)| {
                        if e == d {
                            ax.a().abs().min(ax.b().abs())
                        } else {
                            0.0f64.clamp(ax.a(), ax.b())
                        }
                    })
                    .collect();
                self.amplitude(&x)
            })
            .fold(0.0, f64::max)
    }
}

/// Sampled Gaussian and, when the boundary tail exceeds [`TAIL_TOL`], the
/// offending boundary amplitude.
pub fn gaussian_init(grid: &Grid, spec: &GaussianSpec) -> (ComplexField, Option<f64>) {
    let field = ComplexField::from_fn(grid, |x| Complex64::new(spec.amplitude(x), 0.0));
    let tail = spec.boundary_amplitude(grid.axes());
    (field, (tail > TAIL_TOL).then_some(tail))
}

/// Copy of `law` with its damping strength set to `delta`.
///
/// Only single-parameter strengths (linear and power law) can be searched.
pub fn law_with_delta(law: &DampingLaw, delta: f64) -> Result<DampingLaw> {
    match law {
        DampingLaw::Linear { .. } | DampingLaw::None => Ok(DampingLaw::Linear { delta }),
        DampingLaw::PowerLaw { q, .. } => Ok(DampingLaw::PowerLaw { delta, q: *q }),
        other => Err(Error::InvalidArgument(format!(
            "threshold search needs a linear or power-law damping (got {})",
            other.name()
        ))),
    }
}

/// Outcome of one run classified against the configured criterion and
/// against the same criterion with its cap doubled.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeOutcome {
    pub delta: f64,
    pub classification: Classification,
    pub relaxed: Classification,
    pub peak_rho: f64,
    pub min_energy: f64,
    pub records: usize,
}

impl ProbeOutcome {
    pub fn blows_up(&self) -> bool {
        !self.classification.is_arrested()
    }
}

/// Run `cfg` to its blowup horizon and classify it.
///
/// The run stops early once the relaxed criterion trips.
pub fn classify_run(cfg: &SimConfig) -> Result<ProbeOutcome> {
    let mut state = cfg.build_state()?;
    let initial = state.record();
    let criterion = cfg.criterion(&initial)?;
    let relaxed = criterion.relaxed();
    let mut stop = |_: &_, r: &DiagnosticsRecord| {
        if relaxed.trips(r) {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    };
    let out = evolve(&mut state, criterion.horizon, cfg.stride, &mut [&mut stop])?;
    let classification = classify_blowup(&out.records, &criterion)?;
    let relaxed_class = classify_blowup(&out.records, &relaxed)?;
    let delta = match cfg.law {
        DampingLaw::Linear { delta } | DampingLaw::PowerLaw { delta, .. } => delta,
        _ => 0.0,
    };
    Ok(ProbeOutcome {
        delta,
        classification,
        relaxed: relaxed_class,
        peak_rho: out.records.iter().map(|r| r.rho_max).fold(f64::NEG_INFINITY, f64::max),
        min_energy: out.records.iter().map(|r| r.e).fold(f64::INFINITY, f64::min),
        records: out.records.len(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Resolution {
    pub m: Vec<usize>,
    pub h: Vec<f64>,
    pub k: f64,
    pub horizon: f64,
    pub rho_cap_factor: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdResult {
    pub delta_th: f64,
    pub bracket: (f64, f64),
    /// Every probe, sorted by `delta`.
    pub evaluations: Vec<ProbeOutcome>,
    pub resolution: Resolution,
    /// No blowup was seen above an arrested `delta`.
    pub monotone: bool,
    /// The lower bracket end still blows up with the cap doubled.
    pub robust: bool,
}

impl fmt::Display for ThresholdResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "delta_th = {:.6}", self.delta_th)?;
        writeln!(f, "bracket  = [{:.6}, {:.6}]", self.bracket.0, self.bracket.1)?;
        let r = &self.resolution;
        writeln!(
            f,
            "grid M = {:?}, h = {:?}, k = {}, horizon = {}, rho_cap_factor = {}",
            r.m, r.h, r.k, r.horizon, r.rho_cap_factor
        )?;
        writeln!(f, "monotone = {}, robust under doubled cap = {}", self.monotone, self.robust)?;
        writeln!(f, "delta,classification,t_event,relaxed,peak_rho,min_E")?;
        for e in &self.evaluations {
            writeln!(
                f,
                "{:.6},{},{},{},{:.6e},{:.6e}",
                e.delta,
                e.classification.label(),
                event_time(&e.classification).map_or("-".into(), |t| format!("{t:.4}")),
                e.relaxed.label(),
                e.peak_rho,
                e.min_energy
            )?;
        }
        Ok(())
    }
}

fn event_time(c: &Classification) -> Option<f64> {
    match c {
        Classification::Arrested => None,
        Classification::Blowup(t) | Classification::Diverged(t) => Some(*t),
    }
}

fn probe_all(base: &SimConfig, deltas: &[f64], jobs: usize) -> Result<Vec<ProbeOutcome>> {
    let run = |d: &f64| -> Result<ProbeOutcome> {
        let mut cfg = base.clone();
        cfg.law = law_with_delta(&base.law, *d)?;
        classify_run(&cfg)
    };
    if jobs <= 1 {
        return deltas.iter().map(run).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {jobs} workers: {e}")))?;
    pool.install(|| deltas.par_iter().map(run).collect())
}

/// Locate the smallest damping strength that arrests blowup.
///
/// Each round probes `max(jobs, 1)` equally spaced interior points of the
/// bracket (plain bisection for one job) until its width is at most `tol`.
pub fn find_threshold(base: &SimConfig, delta_lo: f64, delta_hi: f64, tol: f64, jobs: usize) -> Result<ThresholdResult> {
    if !(delta_lo > 0.0 && delta_hi > delta_lo && delta_hi.is_finite()) {
        return Err(Error::Bracket(format!(
            "need 0 < delta_lo < delta_hi (got {delta_lo}, {delta_hi})"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive (got {tol})")));
    }
    law_with_delta(&base.law, delta_lo)?;
    let jobs = jobs.max(1);
    let mut evaluations = probe_all(base, &[delta_lo, delta_hi], jobs.min(2))?;
    let (lo_out, hi_out) = (&evaluations[0], &evaluations[1]);
    let lo_bad = !lo_out.blows_up();
    let hi_bad = hi_out.blows_up();
    if lo_bad || hi_bad {
        let mut parts = Vec::new();
        if lo_bad {
            parts.push(format!(
                "lower end delta_lo = {delta_lo} is arrested (peak density {:.4e}), expected blowup",
                lo_out.peak_rho
            ));
        }
        if hi_bad {
            parts.push(format!(
                "upper end delta_hi = {delta_hi} is {} at t = {:.4} (peak density {:.4e}), expected arrest",
                hi_out.classification.label(),
                event_time(&hi_out.classification).unwrap_or(f64::NAN),
                hi_out.peak_rho
            ));
        }
        return Err(Error::Bracket(parts.join("; ")));
    }

    let (mut lo, mut hi) = (delta_lo, delta_hi);
    while hi - lo > tol {
        let n = jobs;
        let pts: Vec<f64> = (1..=n).map(|i| lo + (hi - lo) * i as f64 / (n + 1) as f64).collect();
        let outs = probe_all(base, &pts, jobs)?;
        let mut new_lo = lo;
        let mut new_hi = hi;
        for o in &outs {
            if o.blows_up() {
                new_lo = new_lo.max(o.delta);
            }
        }
        for o in &outs {
            if !o.blows_up() && o.delta > new_lo {
                new_hi = new_hi.min(o.delta);
            }
        }
        evaluations.extend(outs);
        lo = new_lo;
        hi = new_hi;
    }
    evaluations.sort_by(|a, b| a.delta.total_cmp(&b.delta));

    let first_arrest = evaluations
        .iter()
        .filter(|e| !e.blows_up())
        .map(|e| e.delta)
        .fold(f64::INFINITY, f64::min);
    let monotone = evaluations.iter().all(|e| !e.blows_up() || e.delta < first_arrest);
    let robust = evaluations
        .iter()
        .filter(|e| e.delta == lo)
        .all(|e| !e.relaxed.is_arrested());
    let r = &base.blowup;
    Ok(ThresholdResult {
        delta_th: 0.5 * (lo + hi),
        bracket: (lo, hi),
        evaluations,
        resolution: Resolution {
            m: base.axes.iter().map(|a| a.m()).collect(),
            h: base.axes.iter().map(|a| a.h()).collect(),
            k: base.k,
            horizon: r.horizon,
            rho_cap_factor: r.rho_cap_factor,
        },
        monotone,
        robust,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Ordinary least squares `y = slope x + intercept`; with `zero_intercept`,
/// `slope = sum xy / sum x^2`.
pub fn fit_linear(points: &[(f64, f64)], zero_intercept: bool) -> Result<LinearFit> {
    if points.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "a fit needs at least 2 points (got {})",
            points.len()
        )));
    }
    if points.iter().any(|(x, y)| !(x.is_finite() && y.is_finite())) {
        return Err(Error::InvalidArgument("fit points must be finite".into()));
    }
    let n = points.len() as f64;
    if zero_intercept {
        let sxx: f64 = points.iter().map(|(x, _)| x * x).sum();
        if sxx == 0.0 {
            return Err(Error::InvalidArgument("degenerate x: all zero".into()));
        }
        let sxy: f64 = points.iter().map(|(x, y)| x * y).sum();
        return Ok(LinearFit {
            slope: sxy / sxx,
            intercept: 0.0,
        });
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("degenerate x: all values equal".into()));
    }
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ladder {
    /// Halve `k` at each level.
    TimeStep,
    /// Double `M` on every axis at each level.
    Mesh,
}

impl std::str::FromStr for Ladder {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "k" => Ok(Ladder::TimeStep),
            "M" | "m" => Ok(Ladder::Mesh),
            _ => Err(format!("unknown ladder `{s}` (expected k or M)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    /// `k` or `M` of this level.
    pub param: f64,
    /// `||u_i - u_{i+1}||`; `None` on the finest level.
    pub successive: Option<f64>,
    /// `||u_i - u_finest||`; `None` on the finest level.
    pub vs_finest: Option<f64>,
    /// `log2(successive_i / successive_{i+1})`.
    pub order: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceTable {
    pub ladder: Ladder,
    pub rows: Vec<ConvergenceRow>,
}

impl fmt::Display for ConvergenceTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self.ladder {
            Ladder::TimeStep => "k",
            Ladder::Mesh => "M",
        };
        writeln!(f, "{name},diff_next,err_vs_finest,order")?;
        let show = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.6e}"));
        for r in &self.rows {
            writeln!(
                f,
                "{},{},{},{}",
                r.param,
                show(r.successive),
                show(r.vs_finest),
                r.order.map_or("-".to_string(), |p| format!("{p:.4}"))
            )?;
        }
        Ok(())
    }
}

/// Values of a field on a grid `2^level` times coarser (every `2^level`-th node).
fn restrict(field: &ComplexField, coarse: &Grid, level: u32) -> ComplexField {
    let stride = 1usize << level;
    let fine_shape = field.grid().node_shape();
    let cs = coarse.node_shape();
    let vals = field.values();
    let values: Vec<Complex64> = (0..coarse.node_count())
        .map(|flat| {
            let idx = coarse.unflatten(flat);
            let fine_flat = match idx.len() {
                1 => idx[0] * stride,
                _ => idx[0] * stride * fine_shape[1] + idx[1] * stride,
            };
            vals[fine_flat]
        })
        .collect();
    debug_assert_eq!(values.len(), cs.iter().product::<usize>());
    ComplexField::from_values(coarse, values, field.time()).expect("restricted size matches")
}

fn difference(a: &ComplexField, b: &ComplexField) -> f64 {
    let vals: Vec<Complex64> = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
    let diff = ComplexField::from_values(a.grid(), vals, a.time()).expect("same grid");
    norm_l2(&diff)
}

/// Self-convergence study over `levels >= 3` refinements of `cfg`.
///
/// The time ladder uses `k, k/2, ...`; the mesh ladder `M, 2M, ...` compared
/// on the coarse nodes. Divergence at any level aborts with the partial table
/// in the error message.
pub fn convergence_study(cfg: &SimConfig, ladder: Ladder, levels: usize) -> Result<ConvergenceTable> {
    if levels < 3 {
        return Err(Error::InvalidArgument(format!(
            "a convergence ladder needs at least 3 levels (got {levels})"
        )));
    }
    let mut finals: Vec<ComplexField> = Vec::new();
    let mut params = Vec::new();
    for i in 0..levels {
        let mut c = cfg.clone();
        match ladder {
            Ladder::TimeStep => c.k = cfg.k / (1u64 << i) as f64,
            Ladder::Mesh => {
                c.axes = cfg
                    .axes
                    .iter()
                    .map(|a| Axis::new(a.a(), a.b(), a.m() << i))
                    .collect::<Result<_>>()?;
            }
        }
        params.push(match ladder {
            Ladder::TimeStep => c.k,
            Ladder::Mesh => c.axes[0].m() as f64,
        });
        let mut state = c.build_state()?;
        let out = evolve(&mut state, c.t_end, usize::MAX, &mut [])?;
        if let Some(t) = out.diverged_at {
            let partial = table_from(ladder, &params[..i], &finals, ladder_coarse_grids(cfg, ladder, i)?);
            return Err(Error::Convergence(format!(
                "level {i} ({} = {}) diverged at t = {t}\n{partial}",
                if ladder == Ladder::TimeStep { "k" } else { "M" },
                params[i]
            )));
        }
        finals.push(state.into_field());
    }
    let grids = ladder_coarse_grids(cfg, ladder, levels)?;
    Ok(table_from(ladder, &params, &finals, grids))
}

fn ladder_coarse_grids(cfg: &SimConfig, ladder: Ladder, n: usize) -> Result<Vec<Grid>> {
    (0..n)
        .map(|i| match ladder {
            Ladder::TimeStep => cfg.grid(),
            Ladder::Mesh => Grid::new(
                cfg.axes
                    .iter()
                    .map(|a| Axis::new(a.a(), a.b(), a.m() << i))
                    .collect::<Result<_>>()?,
                cfg.basis,
            ),
        })
        .collect()
}

fn table_from(
    ladder: Ladder,
    params: &[f64],
    finals: &[ComplexField],
    grids: Vec<Grid>,
) -> ConvergenceTable {
    let n = finals.len();
    let on_level = |field: &ComplexField, from: usize, to: usize| -> ComplexField {
        match ladder {
            Ladder::TimeStep => field.clone(),
            Ladder::Mesh => restrict(field, &grids[to], (from - to) as u32),
        }
    };
    let mut rows: Vec<ConvergenceRow> = params
        .iter()
        .map(|&p| ConvergenceRow {
            param: p,
            successive: None,
            vs_finest: None,
            order: None,
        })
        .collect();
    for i in 0..n.saturating_sub(1) {
        rows[i].successive = Some(difference(&finals[i], &on_level(&finals[i + 1], i + 1, i)));
        rows[i].vs_finest = Some(difference(&finals[i], &on_level(&finals[n - 1], n - 1, i)));
    }
    for i in 0..n.saturating_sub(2) {
        if let (Some(a), Some(b)) = (rows[i].successive, rows[i + 1].successive) {
            rows[i].order = Some((a / b).log2());
        }
    }
    ConvergenceTable { ladder, rows }
}
