//! Tensor-product grids, fast sine/Fourier transforms and the exact
//! kinetic-step propagator in coefficient space.
//!
//! A sine grid on `[a, b]` with `M` subintervals carries the nodes
//! `x_j = a + j h`, `j = 0..=M`, with the boundary values pinned to zero.
//! Its modes are `sin(mu_l (x - a))`, `mu_l = pi l / (b - a)`, `l = 1..M-1`.
//! The forward transform returns
//!
//! ```text
//! U^_l = (2/M) sum_{j=1}^{M-1} U_j sin(mu_l (x_j - a))
//! ```
//!
//! and the inverse is the plain synthesis `U_j = sum_l U^_l sin(mu_l (x_j - a))`.
//! Both are computed through a length-`2M` FFT of the odd extension.
//!
//! A Fourier grid drops the node at `x = b` (periodic) and uses
//! `e^{i mu_l (x - a)}`, `mu_l = 2 pi l / (b - a)`, with `U^ = FFT(U) / M`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Basis {
    /// Homogeneous Dirichlet data, expanded in sine modes.
    Sine,
    /// Periodic data, expanded in complex exponentials.
    Fourier,
}

impl Basis {
    pub fn code(self) -> u32 {
        match self {
            Basis::Sine => 0,
            Basis::Fourier => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Basis::Sine),
            1 => Some(Basis::Fourier),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Basis::Sine => "sine",
            Basis::Fourier => "fourier",
        }
    }
}

impl std::str::FromStr for Basis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sine" => Ok(Basis::Sine),
            "fourier" => Ok(Basis::Fourier),
            other => Err(format!("unknown basis `{other}` (expected sine or fourier)")),
        }
    }
}

/// One axis of a tensor-product mesh: `M` uniform subintervals of `[a, b]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Axis {
    a: f64,
    b: f64,
    m: usize,
}

impl Axis {
    pub fn new(a: f64, b: f64, m: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::Grid(format!("interval [{a}, {b}] is not finite")));
        }
        if b <= a {
            return Err(Error::Grid(format!("interval [{a}, {b}] is inverted or empty")));
        }
        if m % 2 != 0 {
            return Err(Error::Grid(format!("M must be even (got {m})")));
        }
        if m < 4 {
            return Err(Error::Grid(format!("M must be at least 4 (got {m})")));
        }
        Ok(Axis { a, b, m })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }

    /// Mesh size `h = (b - a) / M`.
    pub fn h(&self) -> f64 {
        (self.b - self.a) / self.m as f64
    }

    pub fn coord(&self, j: usize) -> f64 {
        self.a + j as f64 * self.h()
    }

    /// Stored nodes along this axis.
    pub fn node_count(&self, basis: Basis) -> usize {
        match basis {
            Basis::Sine => self.m + 1,
            Basis::Fourier => self.m,
        }
    }

    /// Spectral modes along this axis (and, for sine, interior nodes).
    pub fn mode_count(&self, basis: Basis) -> usize {
        match basis {
            Basis::Sine => self.m - 1,
            Basis::Fourier => self.m,
        }
    }

    /// Wave numbers in transform order.
    pub fn wave_numbers(&self, basis: Basis) -> Vec<f64> {
        let len = self.length();
        match basis {
            Basis::Sine => (1..self.m).map(|l| PI * l as f64 / len).collect(),
            Basis::Fourier => (0..self.m)
                .map(|l| {
                    let signed = if l < self.m / 2 {
                        l as f64
                    } else {
                        l as f64 - self.m as f64
                    };
                    2.0 * PI * signed / len
                })
                .collect(),
        }
    }
}

/// Per-axis 1D transform along a line of `mode_count` values.
#[derive(Clone)]
enum LineTransform {
    Sine { m: usize, fft: Arc<dyn Fft<f64>> },
    Fourier { m: usize, fwd: Arc<dyn Fft<f64>>, inv: Arc<dyn Fft<f64>> },
}

impl LineTransform {
    fn new(planner: &mut FftPlanner<f64>, m: usize, basis: Basis) -> Self {
        match basis {
            Basis::Sine => LineTransform::Sine {
                m,
                fft: planner.plan_fft_forward(2 * m),
            },
            Basis::Fourier => LineTransform::Fourier {
                m,
                fwd: planner.plan_fft_forward(m),
                inv: planner.plan_fft_inverse(m),
            },
        }
    }

    fn scratch_len(&self) -> usize {
        match self {
            LineTransform::Sine { m, fft } => 2 * m + fft.get_inplace_scratch_len(),
            LineTransform::Fourier { fwd, inv, .. } => {
                fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len())
            }
        }
    }

    /// `out_l = sum_{j=1}^{M-1} line_j sin(pi l j / M)`, in place on the
    /// `M - 1` interior samples, scaled by `scale`.
    fn sine_sum(m: usize, fft: &dyn Fft<f64>, line: &mut [Complex64], scratch: &mut [Complex64], scale: f64) {
        let (ext, fft_scratch) = scratch.split_at_mut(2 * m);
        ext[0] = ZERO;
        ext[m] = ZERO;
        for (j, &u) in line.iter().enumerate() {
            ext[j + 1] = u;
            ext[2 * m - j - 1] = -u;
        }
        fft.process_with_scratch(ext, fft_scratch);
        // V_l = -2i S_l  =>  S_l = (i/2) V_l
        let factor = Complex64::new(0.0, 0.5 * scale);
        for (l, out) in line.iter_mut().enumerate() {
            *out = ext[l + 1] * factor;
        }
    }

    fn forward(&self, line: &mut [Complex64], scratch: &mut [Complex64]) {
        match self {
            LineTransform::Sine { m, fft } => {
                Self::sine_sum(*m, fft.as_ref(), line, scratch, 2.0 / *m as f64)
            }
            LineTransform::Fourier { m, fwd, .. } => {
                fwd.process_with_scratch(line, &mut scratch[..fwd.get_inplace_scratch_len()]);
                let inv_m = 1.0 / *m as f64;
                line.iter_mut().for_each(|v| *v *= inv_m);
            }
        }
    }

    fn inverse(&self, line: &mut [Complex64], scratch: &mut [Complex64]) {
        match self {
            LineTransform::Sine { m, fft } => Self::sine_sum(*m, fft.as_ref(), line, scratch, 1.0),
            LineTransform::Fourier { inv, .. } => {
                inv.process_with_scratch(line, &mut scratch[..inv.get_inplace_scratch_len()])
            }
        }
    }
}

struct GridPlan {
    lines: Vec<LineTransform>,
    wave_numbers: Vec<Vec<f64>>,
}

/// Tensor-product grid in one or two dimensions with its transform plan.
///
/// Cloning is cheap; the FFT plans are shared.
#[derive(Clone)]
pub struct Grid {
    axes: Vec<Axis>,
    basis: Basis,
    plan: Arc<GridPlan>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("axes", &self.axes)
            .field("basis", &self.basis)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.basis == other.basis && self.axes == other.axes
    }
}

impl Grid {
    pub fn new(axes: Vec<Axis>, basis: Basis) -> Result<Self> {
        if axes.is_empty() || axes.len() > 2 {
            return Err(Error::Grid(format!(
                "dimension must be 1 or 2 (got {})",
                axes.len()
            )));
        }
        let mut planner = FftPlanner::new();
        let lines = axes
            .iter()
            .map(|ax| LineTransform::new(&mut planner, ax.m, basis))
            .collect();
        let wave_numbers = axes.iter().map(|ax| ax.wave_numbers(basis)).collect();
        Ok(Grid {
            axes,
            basis,
            plan: Arc::new(GridPlan {
                lines,
                wave_numbers,
            }),
        })
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn node_shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.node_count(self.basis)).collect()
    }

    pub fn mode_shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.mode_count(self.basis)).collect()
    }

    pub fn node_count(&self) -> usize {
        self.node_shape().iter().product()
    }

    pub fn mode_count(&self) -> usize {
        self.mode_shape().iter().product()
    }

    pub fn wave_numbers(&self, axis: usize) -> &[f64] {
        &self.plan.wave_numbers[axis]
    }

    /// Quadrature weight of a single node, `prod h_i`.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(Axis::h).product()
    }

    pub fn volume(&self) -> f64 {
        self.axes.iter().map(Axis::length).product()
    }

    /// Weight `w` with `integral |psi|^2 = w * sum |psi^|^2` for the
    /// trigonometric interpolant.
    pub fn parseval_weight(&self) -> f64 {
        match self.basis {
            Basis::Sine => self.volume() / f64::powi(2.0, self.dim() as i32),
            Basis::Fourier => self.volume(),
        }
    }

    /// Coordinates of the node with the given multi-index.
    pub fn coords(&self, index: &[usize]) -> Vec<f64> {
        self.axes
            .iter()
            .zip(index)
            .map(|(ax, &j)| ax.coord(j))
            .collect()
    }

    /// Whether a node lies on the pinned sine boundary.
    pub fn is_boundary(&self, index: &[usize]) -> bool {
        self.basis == Basis::Sine
            && self
                .axes
                .iter()
                .zip(index)
                .any(|(ax, &j)| j == 0 || j == ax.m)
    }

    /// Multi-index of the row-major flat node offset.
    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let shape = self.node_shape();
        let mut idx = vec![0; shape.len()];
        for d in (0..shape.len()).rev() {
            idx[d] = flat % shape[d];
            flat /= shape[d];
        }
        idx
    }

    /// Copy the active (interior, for sine) node values into a dense mode-shaped buffer.
    pub fn gather(&self, values: &[Complex64]) -> Vec<Complex64> {
        match (self.basis, self.dim()) {
            (Basis::Fourier, _) => values.to_vec(),
            (Basis::Sine, 1) => values[1..values.len() - 1].to_vec(),
            _ => {
                let n1 = self.axes[1].m + 1;
                let mut out = Vec::with_capacity(self.mode_count());
                for row in values.chunks_exact(n1).take(self.axes[0].m).skip(1) {
                    out.extend_from_slice(&row[1..n1 - 1]);
                }
                out
            }
        }
    }

    /// Inverse of [`Grid::gather`]; boundary nodes are left untouched.
    pub fn scatter(&self, dense: &[Complex64], values: &mut [Complex64]) {
        match (self.basis, self.dim()) {
            (Basis::Fourier, _) => values.copy_from_slice(dense),
            (Basis::Sine, 1) => {
                let n = values.len();
                values[1..n - 1].copy_from_slice(dense)
            }
            _ => {
                let n1 = self.axes[1].m + 1;
                let rows = values.chunks_exact_mut(n1).take(self.axes[0].m).skip(1);
                for (row, src) in rows.zip(dense.chunks_exact(n1 - 2)) {
                    row[1..n1 - 1].copy_from_slice(src);
                }
            }
        }
    }

    /// Forward transform of a dense mode-shaped buffer, in place.
    pub fn forward_dense(&self, data: &mut [Complex64]) {
        self.apply_axes(data, true);
    }

    /// Inverse transform of a dense mode-shaped buffer, in place.
    pub fn inverse_dense(&self, data: &mut [Complex64]) {
        self.apply_axes(data, false);
    }

    fn apply_axes(&self, data: &mut [Complex64], forward: bool) {
        let shape = self.mode_shape();
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        match shape.len() {
            1 => apply_lines(&self.plan.lines[0], data, shape[0], forward),
            _ => {
                let (n0, n1) = (shape[0], shape[1]);
                apply_lines(&self.plan.lines[1], data, n1, forward);
                let mut t = transpose(data, n0, n1);
                apply_lines(&self.plan.lines[0], &mut t, n0, forward);
                let back = transpose(&t, n1, n0);
                data.copy_from_slice(&back);
            }
        }
    }

    /// Spectral coefficients of a field on this grid, in mode-array order.
    pub fn coefficients(&self, field: &ComplexField) -> Vec<Complex64> {
        let mut dense = self.gather(&field.values);
        self.forward_dense(&mut dense);
        dense
    }

    /// `|k|^2` for each mode in mode-array order.
    pub fn squared_wave_numbers(&self) -> Vec<f64> {
        let wn = &self.plan.wave_numbers;
        match wn.len() {
            1 => wn[0].iter().map(|m| m * m).collect(),
            _ => wn[0]
                .iter()
                .flat_map(|mu| wn[1].iter().map(move |lam| mu * mu + lam * lam))
                .collect(),
        }
    }
}

fn apply_lines(t: &LineTransform, data: &mut [Complex64], n: usize, forward: bool) {
    let scratch_len = t.scratch_len();
    data.par_chunks_mut(n).for_each_init(
        || vec![ZERO; scratch_len],
        |scratch, line| {
            if forward {
                t.forward(line, scratch)
            } else {
                t.inverse(line, scratch)
            }
        },
    );
}

fn transpose(data: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![ZERO; data.len()];
    const TILE: usize = 32;
    for r0 in (0..rows).step_by(TILE) {
        for c0 in (0..cols).step_by(TILE) {
            for r in r0..(r0 + TILE).min(rows) {
                for c in c0..(c0 + TILE).min(cols) {
                    out[c * rows + r] = data[r * cols + c];
                }
            }
        }
    }
    out
}

/// Build a grid from `(a, b, M)` triples.
pub fn make_grid(axes: &[(f64, f64, usize)], basis: Basis) -> Result<Grid> {
    let axes = axes
        .iter()
        .map(|&(a, b, m)| Axis::new(a, b, m))
        .collect::<Result<Vec<_>>>()?;
    Grid::new(axes, basis)
}

/// Complex samples of the wave function on every node of a grid.
#[derive(Clone, Debug)]
pub struct ComplexField {
    grid: Grid,
    values: Vec<Complex64>,
    time: f64,
    diverged: bool,
}

impl ComplexField {
    pub fn zeros(grid: &Grid) -> Self {
        ComplexField {
            grid: grid.clone(),
            values: vec![ZERO; grid.node_count()],
            time: 0.0,
            diverged: false,
        }
    }

    /// Sample `f` at every node; sine boundary nodes are forced to zero.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(&[f64]) -> Complex64) -> Self {
        let mut field = Self::zeros(grid);
        for flat in 0..field.values.len() {
            let idx = grid.unflatten(flat);
            if !grid.is_boundary(&idx) {
                field.values[flat] = f(&grid.coords(&idx));
            }
        }
        field
    }

    pub fn from_values(grid: &Grid, values: Vec<Complex64>, time: f64) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::Length {
                expected: grid.node_count(),
                actual: values.len(),
            });
        }
        let mut field = ComplexField {
            grid: grid.clone(),
            values,
            time,
            diverged: false,
        };
        field.check_finite();
        Ok(field)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    pub fn is_diverged(&self) -> bool {
        self.diverged
    }

    pub fn mark_diverged(&mut self) {
        self.diverged = true;
    }

    /// Scan once for NaN/Inf and latch the divergence flag.
    pub fn check_finite(&mut self) -> bool {
        if !self.diverged && !self.values.par_iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            self.diverged = true;
        }
        !self.diverged
    }

    /// Node values reconstructed from `coefficients` (mode-array order).
    pub fn from_coefficients(grid: &Grid, coefficients: &[Complex64]) -> Result<Self> {
        if coefficients.len() != grid.mode_count() {
            return Err(Error::Length {
                expected: grid.mode_count(),
                actual: coefficients.len(),
            });
        }
        let mut dense = coefficients.to_vec();
        grid.inverse_dense(&mut dense);
        let mut field = Self::zeros(grid);
        grid.scatter(&dense, &mut field.values);
        Ok(field)
    }
}

/// Dispersion of the kinetic sub-problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Dispersion {
    /// `i psi_t = -1/2 Δ psi`
    Schrodinger,
    /// `i psi_t = -(1 - i eps) Δ psi`
    Cgl { epsilon: f64 },
}

impl Dispersion {
    /// Coefficient-space multiplier for `|k|^2 = kk` over a time step `dt`.
    pub fn multiplier(self, kk: f64, dt: f64) -> Complex64 {
        match self {
            Dispersion::Schrodinger => Complex64::from_polar(1.0, -0.5 * dt * kk),
            Dispersion::Cgl { epsilon } => {
                Complex64::from_polar((-epsilon * dt * kk).exp(), -dt * kk)
            }
        }
    }
}

/// Precomputed coefficient multipliers for one `(grid, k, dispersion)`.
#[derive(Clone, Debug)]
pub struct KineticPropagator {
    grid: Grid,
    dt: f64,
    dispersion: Dispersion,
    multipliers: Vec<Complex64>,
}

impl KineticPropagator {
    pub fn new(grid: &Grid, dt: f64, dispersion: Dispersion) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive (got {dt})")));
        }
        if let Dispersion::Cgl { epsilon } = dispersion {
            if !(epsilon >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "CGL epsilon must be non-negative (got {epsilon})"
                )));
            }
        }
        let multipliers = grid
            .squared_wave_numbers()
            .into_iter()
            .map(|kk| dispersion.multiplier(kk, dt))
            .collect();
        Ok(KineticPropagator {
            grid: grid.clone(),
            dt,
            dispersion,
            multipliers,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dispersion(&self) -> Dispersion {
        self.dispersion
    }

    pub fn matches(&self, grid: &Grid, dt: f64, dispersion: Dispersion) -> bool {
        self.dt == dt && self.dispersion == dispersion && &self.grid == grid
    }

    /// Advance the free (kinetic) evolution exactly by `dt`, in place.
    pub fn apply(&self, field: &mut ComplexField) {
        debug_assert_eq!(&self.grid, field.grid());
        if field.is_diverged() {
            return;
        }
        let grid = &self.grid;
        let mut dense = grid.gather(&field.values);
        grid.forward_dense(&mut dense);
        dense
            .par_iter_mut()
            .zip(self.multipliers.par_iter())
            .for_each(|(c, m)| *c *= m);
        grid.inverse_dense(&mut dense);
        grid.scatter(&dense, &mut field.values);
    }
}

/// One-shot kinetic step; steppers cache a [`KineticPropagator`] instead.
pub fn kinetic_step(field: &ComplexField, dt: f64, dispersion: Dispersion) -> Result<ComplexField> {
    let prop = KineticPropagator::new(field.grid(), dt, dispersion)?;
    let mut out = field.clone();
    prop.apply(&mut out);
    Ok(out)
}

fn sine_plan(m: usize) -> LineTransform {
    LineTransform::new(&mut FftPlanner::new(), m, Basis::Sine)
}

/// Sine coefficients `U^_1..U^_{M-1}` of a line `U_0..U_M` with zero endpoints.
pub fn sine_forward(line: &[Complex64]) -> Result<Vec<Complex64>> {
    if line.len() < 3 {
        return Err(Error::Length {
            expected: 3,
            actual: line.len(),
        });
    }
    let (first, last) = (line[0], line[line.len() - 1]);
    if first != ZERO || last != ZERO {
        return Err(Error::NonZeroEndpoint(format!("U_0 = {first}, U_M = {last}")));
    }
    let m = line.len() - 1;
    let t = sine_plan(m);
    let mut out = line[1..m].to_vec();
    let mut scratch = vec![ZERO; t.scratch_len()];
    t.forward(&mut out, &mut scratch);
    Ok(out)
}

/// Synthesis `U_j = sum_l U^_l sin(mu_l (x_j - a))` for `j = 0..=M`.
///
/// `M` is inferred as `coefficients.len() + 1` and must be even.
pub fn sine_inverse(coefficients: &[Complex64]) -> Result<Vec<Complex64>> {
    let m = coefficients.len() + 1;
    if m < 2 || m % 2 != 0 {
        return Err(Error::Length {
            expected: m + 1 - m % 2,
            actual: coefficients.len(),
        });
    }
    let t = sine_plan(m);
    let mut inner = coefficients.to_vec();
    let mut scratch = vec![ZERO; t.scratch_len()];
    t.inverse(&mut inner, &mut scratch);
    let mut out = Vec::with_capacity(m + 1);
    out.push(ZERO);
    out.extend(inner);
    out.push(ZERO);
    Ok(out)
}
