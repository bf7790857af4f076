//! Shared fixtures for the kernel benchmarks.

use kinetic_core::collision::{build_spectral_operator, DEALIASING_RATIO};
use kinetic_core::velocity::{build_velocity_grid, discrete_maxwellian, evaluate_exponential};
use kinetic_core::{parse_config, Centering, MaxwellianParams, NewtonOptions, Problem, SpectralOperator, VelocityGrid};

/// Smooth non-equilibrium distribution on `grid`.
pub fn two_bumps(grid: &VelocityGrid) -> Vec<f64> {
    (0..grid.len())
        .map(|k| {
            let v = grid.point(k);
            let a: f64 = v.iter().map(|x| (x - 0.5).powi(2)).sum();
            let b: f64 = v.iter().map(|x| (x + 1.0).powi(2)).sum();
            (-a / 1.5).exp() + 0.4 * (-b / 0.6).exp()
        })
        .collect()
}

/// The 1D1V BGK grid (`K = 50`, `L = 6`).
pub fn bgk_grid() -> VelocityGrid {
    build_velocity_grid(1, 50, 6.0, Centering::CellCentered).unwrap()
}

/// Node-periodic 2D grid with `k` points per axis and its spectral operator.
pub fn spectral_fixture(k: usize) -> (VelocityGrid, SpectralOperator) {
    let grid = build_velocity_grid(2, k, DEALIASING_RATIO * 3.0, Centering::NodePeriodic).unwrap();
    let op = build_spectral_operator(&grid, 3.0).unwrap();
    (grid, op)
}

/// Cell problem data `(a, r, g₀)` with a known solution near equilibrium,
/// on `Δx = 1/256`.
pub struct CellFixture {
    pub grid: VelocityGrid,
    pub transport_weight: Vec<f64>,
    pub source: Vec<f64>,
    pub start: Vec<f64>,
    pub knudsen: f64,
}

impl CellFixture {
    pub fn new(knudsen: f64) -> Self {
        let grid = bgk_grid();
        let transport_weight: Vec<f64> = (0..grid.len()).map(|k| grid.component(k, 0).abs() * 256.0).collect();
        let m = evaluate_exponential(&MaxwellianParams::from_primitive(1.1, &[0.05], 1.3).unwrap(), &grid).unwrap();
        let gstar: Vec<f64> = (0..grid.len())
            .map(|k| m[k] * (1.0 + 0.05 * (1.3 * grid.component(k, 0)).sin()))
            .collect();
        let mg = discrete_maxwellian(&gstar, &grid, &NewtonOptions::default()).unwrap();
        let source = (0..grid.len())
            .map(|k| (mg.values[k] - gstar[k]) / knudsen - transport_weight[k] * gstar[k])
            .collect();
        Self {
            grid,
            transport_weight,
            source,
            start: m,
            knudsen,
        }
    }
}

/// The 1D1V heat-transfer problem on `n` cells with its initial field.
pub fn heat_problem(n: usize, eps: f64) -> (Problem, Vec<f64>) {
    let c = parse_config(&format!("case=heat1d1v, n={n}, k=50, eps={eps}")).unwrap();
    let p = c.build_problem().unwrap();
    let f = c.initial_field(&p).unwrap();
    (p, f)
}
