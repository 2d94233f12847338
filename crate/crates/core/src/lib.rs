//! Derivatives of Markov kernels with respect to their invariant
//! distribution, on quadrature grids.
//!
//! Targets are densities on a uniform 1-D or 2-D grid with trapezoid weights.
//! Every kernel built on such a grid is an exact finite Markov matrix, so
//! invariance, centering and the generator identity hold to rounding, and
//! the analytic derivative formulas can be checked against finite
//! differences of the same kernels.
//!
//! ```
//! use mcmc_calculus::prelude::*;
//!
//! let grid = Grid1D::symmetric(8.0, 201)?;
//! let mu = GridDensity::gaussian(grid, 0.0, 1.0)?;
//! let nu = GridDensity::gaussian(grid, 0.3, 1.0)?;
//! let family = KernelFamily::Hastings {
//!     proposal: ProposalKernel::random_walk(grid, 1.0)?,
//!     balancing: BalancingFunction::Barker,
//! };
//! let rho = GridDensity::gaussian(grid, 0.2, 0.6)?;
//! let f = grid.nodes();
//!
//! let kernel = family.at(&mu)?;
//! let d = derivative_density(&kernel, &rho, &f, DerivativeOptions::default())?;
//! let analytic = d.action(&SignedGridFunction::difference(&nu, &mu)?)?;
//! let oracle = fd_directional_derivative(&family, &mu, &nu, &Start::Density(rho), &f)?;
//! assert!((analytic - oracle).abs() <= 1e-6 * oracle.abs());
//! # Ok::<(), mcmc_calculus::Error>(())
//! ```

pub mod calculus;
pub mod derivative;
pub mod ergodicity;
pub mod error;
pub mod feynman_kac;
pub mod io;
pub mod kernels;
pub mod measures;
pub mod samplers;
pub mod stats;

pub use error::{Error, Result};

/// Common imports.
pub mod prelude {
    pub use crate::calculus::*;
    pub use crate::derivative::*;
    pub use crate::ergodicity::*;
    pub use crate::error::{Error, Result};
    pub use crate::feynman_kac::*;
    pub use crate::kernels::*;
    pub use crate::measures::*;
    pub use crate::samplers::*;
}
