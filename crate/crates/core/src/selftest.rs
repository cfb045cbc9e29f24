//! Oracle checks run by `tssp selftest`: transforms against direct sums and
//! flow maps against RK4/Simpson integration.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::damping::{numeric_flow, DampingLaw, FlowContext};
use crate::spectral::{kinetic_step, make_grid, sine_forward, sine_inverse, Basis, ComplexField, Dispersion};
use crate::diagnostics::norm_l2;

#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Measured error and the tolerance it was held to.
    pub detail: String,
}

fn check(name: &'static str, err: f64, tol: f64) -> Check {
    Check {
        name,
        passed: err <= tol,
        detail: format!("error {err:.3e} (tolerance {tol:.0e})"),
    }
}

fn random_line(rng: &mut ChaCha8Rng, m: usize) -> Vec<Complex64> {
    let mut v: Vec<Complex64> = (0..=m)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    v[0] = Complex64::new(0.0, 0.0);
    v[m] = Complex64::new(0.0, 0.0);
    v
}

fn max_rel(a: &[Complex64], b: &[Complex64]) -> f64 {
    let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
}

fn dst_direct_sum() -> Check {
    let m = 64;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let line = random_line(&mut rng, m);
    let fast = sine_forward(&line).expect("zero endpoints");
    let direct: Vec<Complex64> = (1..m)
        .map(|l| {
            (1..m)
                .map(|j| line[j] * (PI * (l * j) as f64 / m as f64).sin())
                .sum::<Complex64>()
                * (2.0 / m as f64)
        })
        .collect();
    check("sine transform matches direct sum (M=64)", max_rel(&fast, &direct), 1e-13)
}

fn dst_round_trip() -> Check {
    let m = 128;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let line = random_line(&mut rng, m);
    let back = sine_inverse(&sine_forward(&line).expect("zero endpoints")).expect("length");
    check("sine transform round trip (M=128)", max_rel(&back, &line), 1e-12)
}

fn parseval() -> Check {
    let m = 96;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let line = random_line(&mut rng, m);
    let coeffs = sine_forward(&line).expect("zero endpoints");
    let lhs: f64 = line.iter().map(|z| z.norm_sqr()).sum::<f64>() / m as f64;
    let rhs: f64 = 0.5 * coeffs.iter().map(|z| z.norm_sqr()).sum::<f64>();
    check("discrete Parseval identity", (lhs - rhs).abs() / lhs, 1e-12)
}

fn kinetic_unitary() -> Check {
    let g = make_grid(&[(-4.0, 4.0, 64), (-2.0, 3.0, 32)], Basis::Sine).expect("valid grid");
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let f = ComplexField::from_fn(&g, |_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let out = kinetic_step(&f, 0.37, Dispersion::Schrodinger).expect("finite field");
    let (a, b) = (norm_l2(&f), norm_l2(&out));
    check("Schrodinger kinetic step preserves the l2 norm", (a - b).abs() / a, 1e-12)
}

fn flow_vs_numeric() -> Check {
    let ctx = FlowContext::new(8.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let laws: [(DampingLaw, fn(f64) -> f64); 3] = [
        (DampingLaw::Linear { delta: 0.5 }, |_| 0.5),
        (DampingLaw::PowerLaw { delta: 0.1, q: 1.0 }, |rho| 0.8 * rho),
        (DampingLaw::PowerLaw { delta: 0.05, q: 2.0 }, |rho| 0.05 * 64.0 * rho * rho),
    ];
    let mut worst = 0.0f64;
    for (law, g) in &laws {
        for _ in 0..50 {
            let s = rng.gen_range(0.01..3.0);
            let r = rng.gen_range(0.0..0.5);
            let exact = law.flow(ctx, s, r).expect("valid law");
            let num = numeric_flow(g, ctx, 2000, 2000, s, r).expect("g > 0 on path");
            for (a, b) in [(exact.h, num.h), (exact.f, num.f), (exact.g, num.g)] {
                worst = worst.max((a - b).abs() / b.abs().max(1.0));
            }
        }
    }
    check("closed-form flows match RK4/Simpson fallback", worst, 1e-8)
}

fn combo_vs_rk4() -> Check {
    let (d1, d2, beta) = (0.1, 0.1, 8.0);
    let law = DampingLaw::CubicQuinticCombo { delta1: d1, delta2: d2 };
    let h = law.flow(FlowContext::new(beta, 1.0), 1.0, 0.25).expect("valid law").h;
    let rhs = |rho: f64| -2.0 * (d1 * beta * rho + d2 * beta * beta * rho * rho) * rho;
    let n = 10_000;
    let dt = 0.25 / n as f64;
    let mut rho = 1.0;
    for _ in 0..n {
        let k1 = rhs(rho);
        let k2 = rhs(rho + 0.5 * dt * k1);
        let k3 = rhs(rho + 0.5 * dt * k2);
        let k4 = rhs(rho + dt * k3);
        rho += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    check("implicit cubic-quintic density matches RK4", (h - rho).abs(), 1e-8)
}

fn decay_identity() -> Check {
    let ctx = FlowContext::new(8.0, 1.0);
    let laws = [
        DampingLaw::Linear { delta: 0.3 },
        DampingLaw::PowerLaw { delta: 0.2, q: 1.5 },
        DampingLaw::CubicQuinticCombo { delta1: 0.2, delta2: 0.05 },
        DampingLaw::FeedingQuintic { delta1: 0.5, delta2: 0.01 },
        DampingLaw::CglLaw { delta1: 0.5, delta2: 1.0 },
    ];
    let mut worst = 0.0f64;
    for law in &laws {
        for s in [0.05, 0.7, 2.5] {
            let fl = law.flow(ctx, s, 0.3).expect("valid law");
            worst = worst.max(((-2.0 * fl.f).exp() * s - fl.h).abs());
        }
    }
    check("exp(-2F) s = h for every closed-form law", worst, 1e-10)
}

/// Run every check; `passed` fields report the outcome.
pub fn run_all() -> Vec<Check> {
    vec![
        dst_direct_sum(),
        dst_round_trip(),
        parseval(),
        kinetic_unitary(),
        flow_vs_numeric(),
        combo_vs_rk4(),
        decay_identity(),
    ]
}
