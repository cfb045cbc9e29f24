//! Shared fixtures for the solver benchmarks.

use tssp::experiments::{gaussian_init, GaussianSpec};
use tssp::{DampingLaw, SimConfig, SimState};

/// Two-dimensional Gaussian state on `[-16, 16]^2` with `m` intervals per axis.
pub fn gaussian_state(m: usize, law: DampingLaw) -> SimState {
    SimConfig::gaussian_2d(m, 8.0, law, 1e-3, 1.0)
        .and_then(|cfg| cfg.build_state())
        .expect("benchmark configuration is valid")
}

/// Gaussian samples along one axis line, with zero endpoints.
pub fn gaussian_line(m: usize) -> Vec<tssp::Complex64> {
    let grid = tssp::spectral::make_grid(&[(-16.0, 16.0, m)], tssp::Basis::Sine).expect("valid grid");
    let spec = GaussianSpec::new(2.0, 0.2).expect("valid spec");
    gaussian_init(&grid, &spec).0.values().to_vec()
}
