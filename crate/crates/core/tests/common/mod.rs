//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use mcmc_calculus::io::read_series_csv;
use mcmc_calculus::prelude::*;

pub const CLT_SEED: u64 = 20261016;

pub fn line() -> Grid1D {
    Grid1D::symmetric(8.0, 201).unwrap()
}

pub fn plane() -> Grid2D {
    let g = Grid1D::symmetric(5.0, 41).unwrap();
    Grid2D::new(g, g)
}

pub fn clipped(grid: &Grid1D, c: f64) -> Vec<f64> {
    grid.nodes().iter().map(|x| x.clamp(-c, c)).collect()
}

/// Barker random walk at `N(0, 1)` and `N(0.3, 1)`, warm start `N(0.2, 0.6²)`.
pub struct LineRef {
    pub grid: Grid1D,
    pub family: KernelFamily,
    pub mu: GridDensity,
    pub nu: GridDensity,
    pub rho: GridDensity,
    pub f: Vec<f64>,
}

pub fn line_ref_with(balancing: BalancingFunction) -> LineRef {
    let grid = line();
    LineRef {
        grid,
        family: KernelFamily::Hastings { proposal: ProposalKernel::random_walk(grid, 1.0).unwrap(), balancing },
        mu: GridDensity::gaussian(grid, 0.0, 1.0).unwrap(),
        nu: GridDensity::gaussian(grid, 0.3, 1.0).unwrap(),
        rho: GridDensity::gaussian(grid, 0.2, 0.6).unwrap(),
        f: clipped(&grid, 2.0),
    }
}

pub fn line_ref() -> LineRef {
    line_ref_with(BalancingFunction::Barker)
}

/// Gibbs sampler at a correlated bivariate normal and a perturbation.
pub struct PlaneRef {
    pub grid: Grid2D,
    pub family: KernelFamily,
    pub mu: GridDensity,
    pub nu: GridDensity,
    pub rho: GridDensity,
    pub f: Vec<f64>,
}

pub fn plane_ref() -> PlaneRef {
    let grid = plane();
    let mesh: Mesh = grid.into();
    PlaneRef {
        grid,
        family: KernelFamily::Gibbs,
        mu: GridDensity::gaussian_2d(grid, [0.0, 0.0], [1.0, 1.0], 0.5).unwrap(),
        nu: GridDensity::gaussian_2d(grid, [0.2, -0.1], [1.1, 0.9], 0.4).unwrap(),
        rho: GridDensity::gaussian_2d(grid, [0.1, 0.2], [0.7, 0.7], 0.3).unwrap(),
        f: mesh.tabulate(|p| p[0].sin() + 0.3 * p[1].clamp(-2.0, 2.0)),
    }
}

pub fn observations() -> Vec<f64> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/ssm_observations.csv");
    read_series_csv(std::fs::File::open(path).unwrap()).unwrap()
}

pub fn ssm_model(levels: usize) -> FeynmanKacModel {
    let grid = line();
    let phi = BoundedMap::ScaledTanh { phi_bar: 1.0 };
    SsmBootstrapModel { phi, observations: observations() }
        .feynman_kac(GridDensity::gaussian(grid, 0.0, SSM_NOISE_VAR.sqrt()).unwrap(), levels)
        .unwrap()
}

pub fn barker_rw(grid: Grid1D) -> HastingsSpec {
    HastingsSpec { proposal: ProposalKernel::random_walk(grid, 1.0).unwrap(), balancing: BalancingFunction::Barker }
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

/// Standard error of a chain average from batch means.
pub fn batch_se(x: &[f64], batches: usize) -> f64 {
    (batch_means_variance(x, batches).unwrap() / x.len() as f64).sqrt()
}
