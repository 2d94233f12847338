//! Library objects from config specs.

use std::path::PathBuf;

use mcmc_calculus::feynman_kac::{FeynmanKacModel, SsmBootstrapModel};
use mcmc_calculus::io::{load_density, read_series_csv};
use mcmc_calculus::kernels::{BalancingFunction, KernelFamily, ProposalKernel, Start};
use mcmc_calculus::measures::{Grid1D, Grid2D, GridDensity, Mesh};
use mcmc_calculus::samplers::HastingsSpec;
use mcmc_calculus::{Error, Result};

use crate::config::{BalancingSpec, DensitySpec, ExperimentConfig, FamilySpec, ProposalSpec, SsmSection, StartSpec};

pub fn mesh(cfg: &ExperimentConfig) -> Result<Mesh> {
    let g = &cfg.grid;
    let first = Grid1D::new(g.lower, g.upper, g.n_points)?;
    Ok(match g.second {
        None => first.into(),
        Some(s) => Grid2D::new(first, Grid1D::new(s.lower, s.upper, s.n_points)?).into(),
    })
}

/// Builds a density; CSV inputs are returned so the caller can digest them.
pub fn density(cfg: &ExperimentConfig, spec: &DensitySpec, mesh: &Mesh, inputs: &mut Vec<PathBuf>) -> Result<GridDensity> {
    match spec {
        DensitySpec::Gaussian { mean, sd } => GridDensity::gaussian(*mesh.line_grid()?, *mean, *sd),
        DensitySpec::Gaussian2d { mean, sd, corr } => GridDensity::gaussian_2d(*mesh.plane_grid()?, *mean, *sd, *corr),
        DensitySpec::Mixture { weights, means, sds } => {
            if weights.len() != means.len() || weights.len() != sds.len() || weights.is_empty() {
                return Err(Error::InvalidInput("mixture needs equally many weights, means and sds".into()));
            }
            if sds.iter().any(|s| !(*s > 0.0)) || weights.iter().any(|w| !(*w >= 0.0)) {
                return Err(Error::InvalidInput("mixture needs positive sds and nonnegative weights".into()));
            }
            let grid = *mesh.line_grid()?;
            GridDensity::from_fn(grid, |p| {
                weights
                    .iter()
                    .zip(means)
                    .zip(sds)
                    .map(|((w, m), s)| w / s * (-0.5 * ((p[0] - m) / s).powi(2)).exp())
                    .sum()
            })
        }
        DensitySpec::Spike { x, half_width } => {
            let grid = *mesh.line_grid()?;
            GridDensity::triangle_spike(grid, grid.nearest(*x), *half_width)
        }
        DensitySpec::Csv { path } => {
            let p = cfg.resolve(path);
            let d = load_density(&p)?;
            d.mesh().ensure_same(mesh)?;
            inputs.push(p);
            Ok(d)
        }
    }
}

pub fn balancing(spec: &BalancingSpec) -> BalancingFunction {
    match spec {
        BalancingSpec::Barker => BalancingFunction::Barker,
        BalancingSpec::MinOne => BalancingFunction::MinOne,
        BalancingSpec::Power { j } => BalancingFunction::Power(*j),
    }
}

pub fn family(cfg: &ExperimentConfig, mesh: &Mesh, inputs: &mut Vec<PathBuf>) -> Result<KernelFamily> {
    let spec = cfg.family.as_ref().ok_or_else(|| Error::InvalidInput("no family configured".into()))?;
    Ok(match spec {
        FamilySpec::Gibbs => KernelFamily::Gibbs,
        FamilySpec::Exact => KernelFamily::Exact,
        FamilySpec::Hastings { proposal, balancing: b } => {
            let proposal = match proposal {
                ProposalSpec::RandomWalk { sigma } => ProposalKernel::random_walk(*mesh.line_grid()?, *sigma)?,
                ProposalSpec::Independence { base } => ProposalKernel::independence(density(cfg, base, mesh, inputs)?)?,
            };
            KernelFamily::Hastings { proposal, balancing: balancing(b) }
        }
    })
}

pub fn hastings_spec(family: &KernelFamily) -> Result<HastingsSpec> {
    match family {
        KernelFamily::Hastings { proposal, balancing } => {
            Ok(HastingsSpec { proposal: proposal.clone(), balancing: balancing.clone() })
        }
        _ => Err(Error::InvalidInput("the samplers need a hastings family".into())),
    }
}

pub fn start(cfg: &ExperimentConfig, spec: &StartSpec, mesh: &Mesh, inputs: &mut Vec<PathBuf>) -> Result<Start> {
    Ok(match spec {
        StartSpec::Density { density: d } => Start::Density(density(cfg, d, mesh, inputs)?),
        StartSpec::Point { x, y } => match (mesh.as_line(), mesh.as_plane()) {
            (Some(g), _) => Start::Point(g.nearest(*x)),
            (_, Some(p)) => Start::Point(p.index(p.first.nearest(*x), p.second.nearest(*y))),
            _ => unreachable!("a mesh is a line or a plane"),
        },
    })
}

pub fn test_function(cfg: &ExperimentConfig, mesh: &Mesh) -> Vec<f64> {
    mesh.tabulate(|p| cfg.function.eval(p[0]))
}

pub fn ssm_model(cfg: &ExperimentConfig, ssm: &SsmSection, mesh: &Mesh, inputs: &mut Vec<PathBuf>) -> Result<FeynmanKacModel> {
    let path = cfg.resolve(&ssm.observations);
    let observations = read_series_csv(std::fs::File::open(&path)?)?;
    inputs.push(path);
    let eta1 = GridDensity::gaussian(*mesh.line_grid()?, 0.0, ssm.eta1_sd)?;
    SsmBootstrapModel { phi: ssm.phi, observations }.feynman_kac(eta1, ssm.levels)
}
