//! Exact pointwise flow of the damped nonlinear sub-problem.
//!
//! Freezing the kinetic term, each node obeys
//! `i psi_t = V psi - beta |psi|^{2 sigma} psi - i g(|psi|^2) psi`, whose
//! density solves the autonomous ODE `rho' = -2 g(rho) rho`. With
//! `h(s, tau)` the flow of that ODE from `rho(0) = s`,
//!
//! ```text
//! F(s, r) = int_0^r g(h(s, tau)) dtau        (amplitude decay)
//! G(s, r) = int_0^r beta h(s, tau)^sigma dtau (nonlinear phase)
//! psi(r)  = exp(-F + i(-V r + G)) psi(0)
//! ```
//!
//! Every law obeys `F = -1/2 ln(h / s)`. The closed forms below are written
//! with `ln_1p`/`exp_m1` so the threshold search can probe tiny damping
//! without cancellation.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Tolerance under which `q` and `sigma` dispatch to the `q = sigma` branch.
pub const Q_SIGMA_TOL: f64 = 1e-12;

/// Default RK4 substeps of the numeric fallback.
pub const DEFAULT_SUBSTEPS: usize = 64;
/// Default Simpson panels of the numeric fallback.
pub const DEFAULT_PANELS: usize = 64;

const ROOT_REL_TOL: f64 = 1e-14;
const ROOT_MAX_ITER: usize = 100;

/// Nonlinearity coefficient and exponent at the current substep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowContext {
    pub beta: f64,
    pub sigma: f64,
}

impl FlowContext {
    pub fn new(beta: f64, sigma: f64) -> Self {
        FlowContext { beta, sigma }
    }
}

/// `(h, F, G)` at one `(s, r)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Flow {
    pub h: f64,
    pub f: f64,
    pub g: f64,
}

impl Flow {
    fn zero() -> Self {
        Flow {
            h: 0.0,
            f: 0.0,
            g: 0.0,
        }
    }
}

/// Source of `g` for the numeric fallback.
#[derive(Clone)]
pub enum NumericG {
    /// `g(rho) = sum_i c_i rho^i`
    Polynomial(Vec<f64>),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl NumericG {
    pub fn eval(&self, rho: f64) -> f64 {
        match self {
            NumericG::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ci| acc * rho + ci),
            NumericG::Custom(f) => f(rho),
        }
    }
}

impl fmt::Debug for NumericG {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NumericG::Polynomial(c) => f.debug_tuple("Polynomial").field(c).finish(),
            NumericG::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl PartialEq for NumericG {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (NumericG::Polynomial(a), NumericG::Polynomial(b)) => a == b,
            (NumericG::Custom(a), NumericG::Custom(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

/// Damping law integrated with RK4 and Simpson's rule.
#[derive(Clone, Debug, PartialEq)]
pub struct NumericLaw {
    pub g: NumericG,
    pub substeps: usize,
    pub panels: usize,
}

impl NumericLaw {
    pub fn new(g: NumericG) -> Self {
        NumericLaw {
            g,
            substeps: DEFAULT_SUBSTEPS,
            panels: DEFAULT_PANELS,
        }
    }

    pub fn custom(g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(NumericG::Custom(Arc::new(g)))
    }

    pub fn with_resolution(mut self, substeps: usize, panels: usize) -> Self {
        self.substeps = substeps;
        self.panels = panels;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DampingLaw {
    None,
    /// `g = delta`
    Linear { delta: f64 },
    /// `g = delta |beta|^q rho^q`
    PowerLaw { delta: f64, q: f64 },
    /// `g = delta1 beta rho + delta2 beta^2 rho^2`, cubic NLS only
    CubicQuinticCombo { delta1: f64, delta2: f64 },
    /// `g = -delta1 + delta2 beta^2 rho^2`, cubic NLS only
    FeedingQuintic { delta1: f64, delta2: f64 },
    /// `g = delta2 rho - delta1`, used with `sigma = beta = 1`
    CglLaw { delta1: f64, delta2: f64 },
    Numeric(NumericLaw),
}

impl DampingLaw {
    pub fn name(&self) -> &'static str {
        match self {
            DampingLaw::None => "none",
            DampingLaw::Linear { .. } => "linear",
            DampingLaw::PowerLaw { .. } => "power",
            DampingLaw::CubicQuinticCombo { .. } => "cubic_quintic",
            DampingLaw::FeedingQuintic { .. } => "feeding_quintic",
            DampingLaw::CglLaw { .. } => "cgl",
            DampingLaw::Numeric(_) => "numeric",
        }
    }

    /// Whether `g(rho) >= 0` for all `rho >= 0`, so the flow never gains mass.
    ///
    /// Numeric laws are not inspected and report `false`.
    pub fn is_dissipative(&self) -> bool {
        matches!(
            self,
            DampingLaw::None
                | DampingLaw::Linear { .. }
                | DampingLaw::PowerLaw { .. }
                | DampingLaw::CubicQuinticCombo { .. }
        )
    }

    /// For laws whose `F` does not depend on `s`, the pair `(F, c)` with
    /// `G(s, r) = c s^sigma`. `None` otherwise.
    pub fn separable_flow(&self, ctx: FlowContext, r: f64) -> Option<(f64, f64)> {
        match self {
            DampingLaw::None => Some((0.0, ctx.beta * r)),
            DampingLaw::Linear { delta } => Some((
                delta * r,
                ctx.beta * r * one_minus_exp_neg_over(2.0 * delta * ctx.sigma * r),
            )),
            _ => None,
        }
    }

    /// Check parameter and context invariants.
    pub fn validate(&self, ctx: FlowContext) -> Result<()> {
        if !(ctx.sigma > 0.0 && ctx.sigma.is_finite()) {
            return Err(Error::Damping(format!("sigma must be positive (got {})", ctx.sigma)));
        }
        if !ctx.beta.is_finite() {
            return Err(Error::Damping(format!("beta must be finite (got {})", ctx.beta)));
        }
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Damping(format!("{name} must be positive (got {v})")))
            }
        };
        let cubic_focusing = |law: &str| {
            if (ctx.sigma - 1.0).abs() > Q_SIGMA_TOL || !(ctx.beta > 0.0) {
                Err(Error::Damping(format!(
                    "{law} law requires sigma = 1 and beta > 0 (got sigma = {}, beta = {})",
                    ctx.sigma, ctx.beta
                )))
            } else {
                Ok(())
            }
        };
        match self {
            DampingLaw::None => Ok(()),
            DampingLaw::Linear { delta } => positive("delta", *delta),
            DampingLaw::PowerLaw { delta, q } => {
                positive("delta", *delta)?;
                positive("q", *q)
            }
            DampingLaw::CubicQuinticCombo { delta1, delta2 } => {
                positive("delta1", *delta1)?;
                positive("delta2", *delta2)?;
                cubic_focusing("cubic_quintic")
            }
            DampingLaw::FeedingQuintic { delta1, delta2 } => {
                positive("delta1", *delta1)?;
                positive("delta2", *delta2)?;
                cubic_focusing("feeding_quintic")
            }
            DampingLaw::CglLaw { delta1, delta2 } => {
                positive("delta1", *delta1)?;
                positive("delta2", *delta2)?;
                if (ctx.sigma - 1.0).abs() > Q_SIGMA_TOL {
                    return Err(Error::Damping(format!(
                        "cgl law requires sigma = 1 (got {})",
                        ctx.sigma
                    )));
                }
                Ok(())
            }
            DampingLaw::Numeric(n) => {
                if n.substeps == 0 || n.panels == 0 || n.panels % 2 != 0 {
                    return Err(Error::Damping(format!(
                        "numeric law needs substeps > 0 and an even panel count (got {}, {})",
                        n.substeps, n.panels
                    )));
                }
                Ok(())
            }
        }
    }

    /// Damping rate `g(rho)`.
    pub fn g(&self, ctx: FlowContext, rho: f64) -> f64 {
        let beta = ctx.beta;
        match self {
            DampingLaw::None => 0.0,
            DampingLaw::Linear { delta } => *delta,
            DampingLaw::PowerLaw { delta, q } => delta * (beta.abs() * rho).powf(*q),
            DampingLaw::CubicQuinticCombo { delta1, delta2 } => {
                delta1 * beta * rho + delta2 * beta * beta * rho * rho
            }
            DampingLaw::FeedingQuintic { delta1, delta2 } => {
                -delta1 + delta2 * beta * beta * rho * rho
            }
            DampingLaw::CglLaw { delta1, delta2 } => delta2 * rho - delta1,
            DampingLaw::Numeric(n) => n.g.eval(rho),
        }
    }

    /// Same law with every damping parameter multiplied by `scale`.
    /// A zero scale switches the damping off.
    pub fn scaled(&self, scale: f64) -> DampingLaw {
        if scale == 1.0 {
            return self.clone();
        }
        if scale == 0.0 {
            return DampingLaw::None;
        }
        match self {
            DampingLaw::None => DampingLaw::None,
            DampingLaw::Linear { delta } => DampingLaw::Linear {
                delta: delta * scale,
            },
            DampingLaw::PowerLaw { delta, q } => DampingLaw::PowerLaw {
                delta: delta * scale,
                q: *q,
            },
            DampingLaw::CubicQuinticCombo { delta1, delta2 } => DampingLaw::CubicQuinticCombo {
                delta1: delta1 * scale,
                delta2: delta2 * scale,
            },
            DampingLaw::FeedingQuintic { delta1, delta2 } => DampingLaw::FeedingQuintic {
                delta1: delta1 * scale,
                delta2: delta2 * scale,
            },
            DampingLaw::CglLaw { delta1, delta2 } => DampingLaw::CglLaw {
                delta1: delta1 * scale,
                delta2: delta2 * scale,
            },
            DampingLaw::Numeric(n) => {
                let g = n.g.clone();
                DampingLaw::Numeric(NumericLaw {
                    g: NumericG::Custom(Arc::new(move |rho| scale * g.eval(rho))),
                    substeps: n.substeps,
                    panels: n.panels,
                })
            }
        }
    }

    /// Exact flow over `r` from density `s`. Parameters are assumed valid
    /// (see [`DampingLaw::validate`]); only the numeric law can fail here.
    pub fn flow(&self, ctx: FlowContext, s: f64, r: f64) -> Result<Flow> {
        if s == 0.0 {
            // F of the linear law does not depend on s
            return Ok(match self {
                DampingLaw::Linear { delta } => Flow {
                    f: delta * r,
                    ..Flow::zero()
                },
                _ => Flow::zero(),
            });
        }
        let FlowContext { beta, sigma } = ctx;
        let flow = match self {
            DampingLaw::None => Flow {
                h: s,
                f: 0.0,
                g: beta * s.powf(sigma) * r,
            },
            DampingLaw::Linear { delta } => {
                let x = 2.0 * delta * sigma * r;
                Flow {
                    h: s * (-2.0 * delta * r).exp(),
                    f: delta * r,
                    g: beta * s.powf(sigma) * r * one_minus_exp_neg_over(x),
                }
            }
            DampingLaw::PowerLaw { delta, q } => power_law_flow(*delta, *q, ctx, s, r),
            DampingLaw::CubicQuinticCombo { delta1, delta2 } => {
                combo_flow(*delta1, *delta2, beta, s, r)
            }
            DampingLaw::FeedingQuintic { delta1, delta2 } => {
                feeding_flow(*delta1, *delta2, beta, s, r)
            }
            DampingLaw::CglLaw { delta1, delta2 } => {
                let z = s * delta2 * (2.0 * r * delta1).exp_m1() / delta1;
                let l = z.ln_1p();
                let e = (-2.0 * r * delta1).exp();
                Flow {
                    h: s / (e * (1.0 + z)),
                    f: -delta1 * r + 0.5 * l,
                    g: beta * l / (2.0 * delta2),
                }
            }
            DampingLaw::Numeric(n) => {
                return numeric_flow(|rho| n.g.eval(rho), ctx, n.substeps, n.panels, s, r)
            }
        };
        Ok(flow)
    }
}

/// `(1 - e^{-x}) / x`, with the `x -> 0` limit.
fn one_minus_exp_neg_over(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        -(-x).exp_m1() / x
    }
}

fn power_law_flow(delta: f64, q: f64, ctx: FlowContext, s: f64, r: f64) -> Flow {
    let FlowContext { beta, sigma } = ctx;
    let a = 2.0 * q * delta * r * (beta.abs() * s).powf(q);
    let l = a.ln_1p();
    let base = beta * s.powf(sigma) * r;
    // G = beta s^sigma r * [(1+A)^p - 1] / (p A), p = (q - sigma)/q
    let p = (q - sigma) / q;
    let ratio = if a < 1e-8 {
        // p A underflows long before (1+A)^p - 1 does
        1.0 + 0.5 * (p - 1.0) * a
    } else if (q - sigma).abs() <= Q_SIGMA_TOL {
        l / a
    } else {
        (p * l).exp_m1() / (p * a)
    };
    Flow {
        h: s * (-l / q).exp(),
        f: l / (2.0 * q),
        g: base * ratio,
    }
}

/// `x - ln(1 + x)` without cancellation near zero.
fn x_minus_ln1p(x: f64) -> f64 {
    if x.abs() < 0.05 {
        // alternating series x^2/2 - x^3/3 + ...
        let mut term = x * x;
        let mut acc = 0.0;
        for n in 2..30 {
            let t = term / n as f64;
            acc += if n % 2 == 0 { t } else { -t };
            term *= x;
            if t.abs() < 1e-18 * acc.abs() {
                break;
            }
        }
        acc
    } else {
        x - x.ln_1p()
    }
}

/// Implicit flow for `g = d1 beta rho + d2 beta^2 rho^2`.
///
/// With `x = d1 (1/h - 1/s) / (d2 beta + d1/s)` the defining relation
/// `f(s) - f(h) = 2r` becomes `d2 (x - ln(1+x)) + (d1/(beta s)) x = 2 r d1^2`,
/// strictly increasing in `x >= 0`. Then `h = s / (1 + x (1 + d2 beta s / d1))`,
/// `F = 1/2 ln(s/h)` and `G = ln(1+x) / (2 d1)`.
fn combo_flow(d1: f64, d2: f64, beta: f64, s: f64, r: f64) -> Flow {
    if r == 0.0 {
        return Flow {
            h: s,
            f: 0.0,
            g: 0.0,
        };
    }
    let a = d2;
    let b = d1 / (beta * s);
    let target = 2.0 * r * d1 * d1;
    let psi = |x: f64| a * x_minus_ln1p(x) + b * x - target;
    let dpsi = |x: f64| a * x / (1.0 + x) + b;

    let bound_lin = target / b;
    let root = 0.5 * (1.0 + (1.0 + 4.0 * target / a).sqrt());
    let mut hi = bound_lin.min(root * root);
    let mut lo = 0.0;
    let mut x = (2.0 * target / (b + (b * b + 2.0 * a * target).sqrt())).clamp(lo, hi);
    for _ in 0..ROOT_MAX_ITER {
        let val = psi(x);
        if val == 0.0 {
            break;
        }
        if val > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let mut next = x - val / dpsi(x);
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let done = (next - x).abs() <= ROOT_REL_TOL * next.abs() || hi - lo <= ROOT_REL_TOL * hi;
        x = next;
        if done {
            break;
        }
    }
    let growth = x * (1.0 + d2 * beta * s / d1);
    Flow {
        h: s / (1.0 + growth),
        f: 0.5 * growth.ln_1p(),
        g: x.ln_1p() / (2.0 * d1),
    }
}

/// Closed form for `g = -d1 + d2 beta^2 rho^2`.
fn feeding_flow(d1: f64, d2: f64, beta: f64, s: f64, r: f64) -> Flow {
    let p = beta * s * d2.sqrt();
    let sd1 = d1.sqrt();
    let e4m1 = (4.0 * d1 * r).exp_m1();
    let e2m1 = (2.0 * d1 * r).exp_m1();
    let em = -(-4.0 * d1 * r).exp_m1();
    let e = (-4.0 * d1 * r).exp();
    let q = (d1 + p * p * e4m1).sqrt();
    let z = (p * e2m1 + p * p * e4m1 / (q + sd1)) / (sd1 + p);
    Flow {
        h: s / (e + em * p * p / d1).sqrt(),
        f: -d1 * r + 0.25 * (p * p * e4m1 / d1).ln_1p(),
        g: z.ln_1p() / (2.0 * (d1 * d2).sqrt()),
    }
}

/// Fallback for laws without closed forms.
///
/// `h` from classical RK4 on `rho' = -2 g(rho) rho` with `substeps` steps,
/// `F = -1/2 ln(h/s)`, and `G = int_s^h -beta t^{sigma-1} / (2 g(t)) dt` by
/// composite Simpson with `panels` panels.
pub fn numeric_flow(
    g: impl Fn(f64) -> f64,
    ctx: FlowContext,
    substeps: usize,
    panels: usize,
    s: f64,
    r: f64,
) -> Result<Flow> {
    if !(s >= 0.0 && r >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "flow needs s >= 0 and r >= 0 (got s = {s}, r = {r})"
        )));
    }
    if s == 0.0 {
        return Ok(Flow::zero());
    }
    if r == 0.0 {
        return Ok(Flow {
            h: s,
            f: 0.0,
            g: 0.0,
        });
    }
    if substeps == 0 || panels == 0 || panels % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "numeric flow needs substeps > 0 and an even panel count (got {substeps}, {panels})"
        )));
    }
    let rhs = |rho: f64| -2.0 * g(rho) * rho;
    let dt = r / substeps as f64;
    let mut h = s;
    for _ in 0..substeps {
        let k1 = rhs(h);
        let k2 = rhs(h + 0.5 * dt * k1);
        let k3 = rhs(h + 0.5 * dt * k2);
        let k4 = rhs(h + dt * k3);
        h += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Damping(format!(
            "numeric flow left the positive axis (h = {h}); refine substeps"
        )));
    }

    let FlowContext { beta, sigma } = ctx;
    let integrand = |t: f64| -> Result<f64> {
        let gt = g(t);
        let v = -beta * t.powf(sigma - 1.0) / (2.0 * gt);
        if gt == 0.0 || !v.is_finite() {
            Err(Error::Damping(format!(
                "g vanishes at rho = {t} on the phase integration path; use a closed-form law"
            )))
        } else {
            Ok(v)
        }
    };
    let width = (h - s) / panels as f64;
    let mut acc = integrand(s)? + integrand(h)?;
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * integrand(s + i as f64 * width)?;
    }
    Ok(Flow {
        h,
        f: -0.5 * (h / s).ln(),
        g: acc * width / 3.0,
    })
}

fn check_args(s: f64, t: f64) -> Result<()> {
    if s >= 0.0 && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "flow maps need s >= 0 and time >= 0 (got s = {s}, t = {t})"
        )))
    }
}

/// Density flow `h(s, tau)`.
pub fn flow_h(law: &DampingLaw, ctx: FlowContext, s: f64, tau: f64) -> Result<f64> {
    check_args(s, tau)?;
    law.validate(ctx)?;
    Ok(law.flow(ctx, s, tau)?.h)
}

/// Amplitude decay `F(s, r)`.
pub fn flow_f(law: &DampingLaw, ctx: FlowContext, s: f64, r: f64) -> Result<f64> {
    check_args(s, r)?;
    law.validate(ctx)?;
    Ok(law.flow(ctx, s, r)?.f)
}

/// Nonlinear phase `G(s, r)`.
pub fn flow_g(law: &DampingLaw, ctx: FlowContext, s: f64, r: f64) -> Result<f64> {
    check_args(s, r)?;
    law.validate(ctx)?;
    Ok(law.flow(ctx, s, r)?.g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ctx(beta: f64) -> FlowContext {
        FlowContext::new(beta, 1.0)
    }

    /// Independent RK4 integration of the density ODE.
    fn rk4_density(law: &DampingLaw, c: FlowContext, s: f64, t: f64, n: usize) -> f64 {
        let f = |rho: f64| -2.0 * law.g(c, rho) * rho;
        let dt = t / n as f64;
        let mut y = s;
        for _ in 0..n {
            let k1 = f(y);
            let k2 = f(y + 0.5 * dt * k1);
            let k3 = f(y + 0.5 * dt * k2);
            let k4 = f(y + dt * k3);
            y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        y
    }

    /// Simpson quadrature of `int_0^r beta h(s,tau)^sigma dtau` using the law's own `h`.
    fn simpson_phase(law: &DampingLaw, c: FlowContext, s: f64, r: f64, panels: usize) -> f64 {
        let w = r / panels as f64;
        let f = |tau: f64| c.beta * law.flow(c, s, tau).unwrap().h.powf(c.sigma);
        let mut acc = f(0.0) + f(r);
        for i in 1..panels {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * w);
        }
        acc * w / 3.0
    }

    #[test]
    fn linear_examples() {
        let law = DampingLaw::Linear { delta: 0.5 };
        let h = flow_h(&law, ctx(8.0), 1.0, 1.0).unwrap();
        assert!((h - (-1.0f64).exp()).abs() < 1e-15);
        assert!((h - 0.3678794).abs() < 1e-7);
        for s in [0.0, 0.3, 7.0] {
            assert!((flow_f(&law, ctx(8.0), s, 0.1).unwrap() - 0.05).abs() < 1e-15);
        }
        let g = flow_g(&law, ctx(8.0), 1.0, 0.1).unwrap();
        assert!((g - 8.0 * (1.0 - (-0.1f64).exp())).abs() < 1e-14);
        assert!((g - 0.7613).abs() < 1e-4);
    }

    #[test]
    fn power_law_examples() {
        let law = DampingLaw::PowerLaw { delta: 0.1, q: 1.0 };
        let c = ctx(8.0);
        assert!((flow_h(&law, c, 1.0, 0.5).unwrap() - 1.0 / 1.8).abs() < 1e-15);
        assert!((flow_f(&law, c, 1.0, 0.5).unwrap() - 0.5 * 1.8f64.ln()).abs() < 1e-15);
        assert!((flow_f(&law, c, 1.0, 0.5).unwrap() - 0.2938933).abs() < 1e-7);
        let g = flow_g(&law, c, 1.0, 0.5).unwrap();
        assert!((g - 1.8f64.ln() / 0.2).abs() < 1e-13);
        assert!((g - 2.938933).abs() < 1e-6);
    }

    #[test]
    fn tiny_densities_stay_finite() {
        let laws = [
            (DampingLaw::Linear { delta: 0.5 }, ctx(8.0)),
            (DampingLaw::PowerLaw { delta: 0.01, q: 2.0 }, ctx(8.0)),
            (DampingLaw::PowerLaw { delta: 0.05, q: 0.5 }, ctx(8.0)),
            (DampingLaw::PowerLaw { delta: 0.05, q: 2.0 }, FlowContext::new(8.0, 2.0)),
            (DampingLaw::CubicQuinticCombo { delta1: 0.1, delta2: 0.02 }, ctx(8.0)),
            (DampingLaw::FeedingQuintic { delta1: 0.5, delta2: 0.01 }, ctx(8.0)),
            (DampingLaw::CglLaw { delta1: 0.5, delta2: 1.0 }, ctx(1.0)),
        ];
        for (law, c) in &laws {
            for s in [5e-324, 1e-310, 7e-161, 1e-80, 1e-20] {
                let fl = law.flow(*c, s, 5e-4).unwrap();
                assert!(fl.h.is_finite() && fl.f.is_finite() && fl.g.is_finite(), "{law:?} at {s:e}: {fl:?}");
                // to first order in r the phase is beta s^sigma r
                let linear = c.beta * s.powf(c.sigma) * 5e-4;
                assert!((fl.g - linear).abs() <= 1e-3 * linear, "{law:?} at {s:e}: {fl:?}");
            }
        }
    }

    #[test]
    fn power_law_q_ne_sigma_matches_quadrature() {
        let law = DampingLaw::PowerLaw { delta: 0.1, q: 2.0 };
        let c = ctx(8.0);
        for &(s, r) in &[(0.3, 0.01), (1.0, 0.1), (2.5, 0.4), (0.05, 0.9)] {
            let g = law.flow(c, s, r).unwrap().g;
            let oracle = simpson_phase(&law, c, s, r, 10_000);
            assert!((g - oracle).abs() <= 1e-8 * oracle.abs().max(1.0), "{s} {r}");
        }
    }

    #[test]
    fn branch_dispatch_near_equal_exponents() {
        let c = FlowContext::new(3.0, 1.5);
        let on = DampingLaw::PowerLaw { delta: 0.2, q: 1.5 }.flow(c, 0.7, 0.3).unwrap();
        let near = DampingLaw::PowerLaw { delta: 0.2, q: 1.5 + 1e-9 }
            .flow(c, 0.7, 0.3)
            .unwrap();
        assert!((on.g - near.g).abs() < 1e-8 * on.g.abs());
    }

    #[test]
    fn combo_matches_rk4() {
        let law = DampingLaw::CubicQuinticCombo {
            delta1: 0.1,
            delta2: 0.1,
        };
        let c = ctx(8.0);
        let h = flow_h(&law, c, 1.0, 0.25).unwrap();
        let oracle = rk4_density(&law, c, 1.0, 0.25, 10_000);
        assert!((h - oracle).abs() <= 1e-8, "{h} vs {oracle}");
    }

    #[test]
    fn combo_extreme_densities() {
        let law = DampingLaw::CubicQuinticCombo {
            delta1: 0.01,
            delta2: 0.01,
        };
        let c = ctx(8.0);
        for &(s, r) in &[(1e-8, 1e-4), (1e4, 1e-4), (50.0, 0.5), (1e-3, 1e-9)] {
            let fl = law.flow(c, s, r).unwrap();
            let oracle = rk4_density(&law, c, s, r, 200_000);
            assert!(
                (fl.h - oracle).abs() <= 1e-8 * oracle.max(1e-300),
                "s={s} r={r}: {} vs {oracle}",
                fl.h
            );
            assert!(fl.h <= s && fl.h > 0.0);
            assert!(fl.f >= 0.0);
        }
    }

    #[test]
    fn feeding_fixed_point() {
        let (d1, d2, beta) = (0.3, 0.05, 2.0);
        let law = DampingLaw::FeedingQuintic {
            delta1: d1,
            delta2: d2,
        };
        let star = (d1 / d2).sqrt() / beta;
        for tau in [0.0, 0.1, 1.0, 10.0] {
            let h = flow_h(&law, ctx(beta), star, tau).unwrap();
            assert!((h - star).abs() < 1e-12 * star, "{tau}");
        }
    }

    #[test]
    fn feeding_and_cgl_match_rk4_and_quadrature() {
        let laws = [
            (
                DampingLaw::FeedingQuintic {
                    delta1: 0.4,
                    delta2: 0.02,
                },
                ctx(3.0),
            ),
            (
                DampingLaw::CglLaw {
                    delta1: 0.5,
                    delta2: 0.8,
                },
                ctx(1.0),
            ),
        ];
        for (law, c) in &laws {
            for &(s, r) in &[(0.1, 0.2), (2.0, 0.05), (4.0, 0.7)] {
                let fl = law.flow(*c, s, r).unwrap();
                let h = rk4_density(law, *c, s, r, 20_000);
                assert!((fl.h - h).abs() < 1e-9 * h.max(1.0), "{law:?} {s} {r}");
                let g = simpson_phase(law, *c, s, r, 4000);
                assert!((fl.g - g).abs() < 1e-9 * g.abs().max(1.0), "{law:?} {s} {r}");
            }
        }
    }

    #[test]
    fn cgl_fixed_point() {
        let law = DampingLaw::CglLaw {
            delta1: 0.6,
            delta2: 1.5,
        };
        let star = 0.6 / 1.5;
        for tau in [0.01, 1.0, 5.0] {
            let h = flow_h(&law, ctx(1.0), star, tau).unwrap();
            assert!((h - star).abs() < 1e-12);
        }
    }

    #[test]
    fn none_law_is_pure_phase() {
        let c = FlowContext::new(-2.0, 1.5);
        let fl = DampingLaw::None.flow(c, 0.8, 0.3).unwrap();
        assert_eq!(fl.h, 0.8);
        assert_eq!(fl.f, 0.0);
        assert_eq!(fl.g, -2.0 * 0.8f64.powf(1.5) * 0.3);
    }

    #[test]
    fn small_delta_limit_matches_none() {
        let c = ctx(8.0);
        let lin = DampingLaw::Linear { delta: 1e-8 }.flow(c, 1.3, 0.4).unwrap();
        let none = DampingLaw::None.flow(c, 1.3, 0.4).unwrap();
        assert!((lin.h - none.h).abs() < 1e-6);
        assert!((lin.g - none.g).abs() < 1e-6);
        for law in [
            DampingLaw::PowerLaw { delta: 1e-12, q: 2.0 },
            DampingLaw::CubicQuinticCombo {
                delta1: 1e-9,
                delta2: 1e-9,
            },
            DampingLaw::FeedingQuintic {
                delta1: 1e-9,
                delta2: 1e-9,
            },
        ] {
            let fl = law.flow(c, 1.3, 0.4).unwrap();
            assert!((fl.g - none.g).abs() < 1e-6 * none.g, "{law:?} {}", fl.g);
        }
    }

    #[test]
    fn separable_flow_matches_flow() {
        for sigma in [1.0, 1.5] {
            let c = FlowContext::new(8.0, sigma);
            for law in [DampingLaw::None, DampingLaw::Linear { delta: 0.37 }] {
                let (f, coef) = law.separable_flow(c, 0.05).unwrap();
                for s in [1e-3, 0.4, 9.0] {
                    let fl = law.flow(c, s, 0.05).unwrap();
                    assert!((fl.f - f).abs() < 1e-15);
                    assert!((fl.g - coef * s.powf(sigma)).abs() < 1e-13 * fl.g.abs());
                }
            }
        }
        assert!(DampingLaw::PowerLaw { delta: 0.1, q: 1.0 }
            .separable_flow(ctx(8.0), 0.1)
            .is_none());
    }

    #[test]
    fn zero_density_branch() {
        let c = ctx(8.0);
        let lin = DampingLaw::Linear { delta: 0.5 }.flow(c, 0.0, 0.3).unwrap();
        assert_eq!((lin.h, lin.g), (0.0, 0.0));
        for law in [
            DampingLaw::PowerLaw { delta: 0.1, q: 2.0 },
            DampingLaw::CubicQuinticCombo {
                delta1: 0.1,
                delta2: 0.1,
            },
        ] {
            assert_eq!(law.flow(c, 0.0, 0.3).unwrap(), Flow::zero());
        }
        let fl = numeric_flow(|_| 1.0, c, 10, 10, 0.0, 1.0).unwrap();
        assert_eq!(fl, Flow::zero());
    }

    #[test]
    fn numeric_constant_g_matches_linear() {
        let c = ctx(8.0);
        let lin = DampingLaw::Linear { delta: 0.5 };
        let fl = numeric_flow(|_| 0.5, c, 1000, 64, 1.7, 0.3).unwrap();
        let exact = lin.flow(c, 1.7, 0.3).unwrap();
        assert!((fl.h - exact.h).abs() < 1e-10);
        assert!((fl.f - exact.f).abs() < 1e-10);
        assert!((fl.g - exact.g).abs() < 1e-10);
    }

    #[test]
    fn numeric_cubic_matches_power_law() {
        let c = ctx(8.0);
        let pl = DampingLaw::PowerLaw { delta: 0.1, q: 1.0 };
        let fl = numeric_flow(|rho| 0.1 * 8.0 * rho, c, 1000, 1000, 1.0, 0.5).unwrap();
        let exact = pl.flow(c, 1.0, 0.5).unwrap();
        assert!((fl.h - exact.h).abs() < 1e-8);
        assert!((fl.f - exact.f).abs() < 1e-8);
        assert!((fl.g - exact.g).abs() < 1e-8);
    }

    #[test]
    fn numeric_singular_integrand_errors() {
        // g vanishes at rho = 1: the start point is a fixed point
        let r = numeric_flow(|rho| rho - 1.0, ctx(1.0), 10, 10, 1.0, 0.2);
        assert!(matches!(r, Err(Error::Damping(_))));
    }

    #[test]
    fn invalid_arguments() {
        let law = DampingLaw::Linear { delta: 0.5 };
        assert!(flow_h(&law, ctx(1.0), -1.0, 0.1).is_err());
        assert!(flow_f(&law, ctx(1.0), 1.0, -0.1).is_err());
        assert!(flow_g(&DampingLaw::Linear { delta: 0.0 }, ctx(1.0), 1.0, 0.1).is_err());
        let combo = DampingLaw::CubicQuinticCombo {
            delta1: 0.1,
            delta2: 0.1,
        };
        assert!(flow_h(&combo, FlowContext::new(8.0, 2.0), 1.0, 0.1).is_err());
        assert!(flow_h(&combo, FlowContext::new(-8.0, 1.0), 1.0, 0.1).is_err());
    }

    #[test]
    fn scaling() {
        let law = DampingLaw::CubicQuinticCombo {
            delta1: 0.2,
            delta2: 0.4,
        };
        assert_eq!(law.scaled(0.0), DampingLaw::None);
        assert_eq!(
            law.scaled(0.5),
            DampingLaw::CubicQuinticCombo {
                delta1: 0.1,
                delta2: 0.2
            }
        );
        let num = DampingLaw::Numeric(NumericLaw::new(NumericG::Polynomial(vec![1.0, 2.0])));
        assert!((num.scaled(3.0).g(ctx(1.0), 2.0) - 15.0).abs() < 1e-15);
    }

    fn closed_dissipative() -> impl Strategy<Value = DampingLaw> {
        prop_oneof![
            (0.01f64..2.0).prop_map(|delta| DampingLaw::Linear { delta }),
            (0.01f64..2.0, 0.5f64..3.0).prop_map(|(delta, q)| DampingLaw::PowerLaw { delta, q }),
            (0.01f64..1.0, 0.01f64..1.0).prop_map(|(delta1, delta2)| {
                DampingLaw::CubicQuinticCombo { delta1, delta2 }
            }),
        ]
    }

    proptest! {
        #[test]
        fn bounded_and_consistent(law in closed_dissipative(), beta in 0.5f64..16.0,
                                  s in 1e-6f64..20.0, r in 0.0f64..1.0) {
            let c = ctx(beta);
            let fl = law.flow(c, s, r).unwrap();
            prop_assert!(fl.h >= 0.0 && fl.h <= s);
            prop_assert!(fl.f >= 0.0);
            prop_assert!(((-2.0 * fl.f).exp() * s - fl.h).abs() <= 1e-10 * s.max(1.0));
            prop_assert!(fl.g >= 0.0);
        }

        #[test]
        fn semigroup(law in closed_dissipative(), beta in 0.5f64..16.0,
                     s in 1e-3f64..10.0, t1 in 0.0f64..0.5, t2 in 0.0f64..0.5) {
            let c = ctx(beta);
            let a = law.flow(c, law.flow(c, s, t1).unwrap().h, t2).unwrap().h;
            let b = law.flow(c, s, t1 + t2).unwrap().h;
            prop_assert!((a - b).abs() <= 1e-10 * s.max(1.0));
        }

        #[test]
        fn monotone(law in closed_dissipative(), beta in 0.5f64..16.0,
                    s in 1e-3f64..10.0, ds in 0.0f64..1.0, t in 0.0f64..1.0, dt in 0.0f64..1.0) {
            let c = ctx(beta);
            let base = law.flow(c, s, t).unwrap().h;
            prop_assert!(law.flow(c, s, t + dt).unwrap().h <= base * (1.0 + 1e-14));
            prop_assert!(law.flow(c, s + ds, t).unwrap().h >= base * (1.0 - 1e-14));
        }
    }
}
