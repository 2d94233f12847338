//! Hastings and two-stage Gibbs kernels on grids.
//!
//! A Hastings kernel on an `n`-node grid is stored as a dense `n x n`
//! row-stochastic matrix: off-diagonal entry `w_j q(x_i, x_j) g(r(x_i, x_j))`
//! plus the rejection mass on the diagonal. Detailed balance then holds
//! exactly for the node masses `w_i mu_i`, because `g(r) = r g(1/r)`.
//!
//! The Gibbs kernel never materializes its `N x N` matrix; applying it to a
//! function or a measure factors through the two conditionals.

use std::fmt;
use std::sync::{Arc, OnceLock};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::measures::{Grid1D, Grid2D, GridDensity, Mesh, SignedGridFunction, WeightFunction};

type Scalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Acceptance function `g` with `g(x) = x g(1/x)`.
#[derive(Clone)]
pub enum BalancingFunction {
    /// `x / (1 + x)`.
    Barker,
    /// `min(1, x)`; no derivative.
    MinOne,
    /// `N / (1 + N)` with `N = x + x^2 + ... + x^j`; tends to `min(1, x)`.
    Power(u32),
    Custom {
        name: String,
        g: Scalar,
        g_prime: Option<Scalar>,
    },
}

impl fmt::Debug for BalancingFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

impl BalancingFunction {
    /// `g ≡ c`. Only `c = 0` is a balancing function; `c = 1` is kept as a
    /// degenerate always-accept rule for independence samplers.
    pub fn constant(c: f64) -> Self {
        Self::Custom {
            name: format!("const({c})"),
            g: Arc::new(move |_| c),
            g_prime: Some(Arc::new(|_| 0.0)),
        }
    }

    pub fn tag(&self) -> String {
        match self {
            Self::Barker => "barker".into(),
            Self::MinOne => "min-one".into(),
            Self::Power(j) => format!("gj({j})"),
            Self::Custom { name, .. } => format!("custom({name})"),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            Self::Barker => {
                if x.is_infinite() {
                    1.0
                } else {
                    x / (1.0 + x)
                }
            }
            Self::MinOne => x.min(1.0),
            Self::Power(j) => power_value(*j, x),
            Self::Custom { g, .. } => g(x),
        }
    }

    pub fn has_derivative(&self) -> bool {
        match self {
            Self::MinOne => false,
            Self::Custom { g_prime, .. } => g_prime.is_some(),
            _ => true,
        }
    }

    pub fn derivative(&self, x: f64) -> Option<f64> {
        match self {
            Self::Barker => Some(1.0 / ((1.0 + x) * (1.0 + x))),
            Self::MinOne => None,
            Self::Power(j) => Some(power_derivative(*j, x)),
            Self::Custom { g_prime, .. } => g_prime.as_ref().map(|d| d(x)),
        }
    }

    /// Bound on `|g'|` used in the mean-value constants; `min(1, x)` uses the
    /// indicator of `x <= 1`, the a.e. derivative that the `g_j` converge to.
    pub(crate) fn derivative_bound(&self, x: f64) -> Result<f64> {
        match self {
            Self::MinOne => Ok(if x <= 1.0 { 1.0 } else { 0.0 }),
            _ => self
                .derivative(x)
                .map(f64::abs)
                .ok_or_else(|| Error::Precondition(format!("{} has no derivative", self.tag()))),
        }
    }
}

fn power_value(j: u32, x: f64) -> f64 {
    if x <= 1.0 {
        let n: f64 = (1..=j).map(|k| x.powi(k as i32)).sum();
        n / (1.0 + n)
    } else {
        let u = 1.0 / x;
        let a: f64 = (0..j).map(|k| u.powi(k as i32)).sum();
        a / (a + u.powi(j as i32))
    }
}

fn power_derivative(j: u32, x: f64) -> f64 {
    if x <= 1.0 {
        let n: f64 = (1..=j).map(|k| x.powi(k as i32)).sum();
        let dn: f64 = (1..=j).map(|k| k as f64 * x.powi(k as i32 - 1)).sum();
        dn / ((1.0 + n) * (1.0 + n))
    } else {
        let u = 1.0 / x;
        let num: f64 = (1..=j).map(|k| k as f64 * u.powi((2 * j + 1 - k) as i32)).sum();
        let den: f64 = (0..=j).map(|m| u.powi(m as i32)).sum();
        num / (den * den)
    }
}

/// Proposal family.
#[derive(Clone, Debug)]
pub enum ProposalKind {
    /// Gaussian step reflected at both ends of the grid.
    RandomWalk { sigma: f64 },
    /// Draws from a fixed density regardless of the current state.
    Independence { base: GridDensity },
}

/// Proposal kernel tabulated on a grid.
#[derive(Clone, Debug)]
pub struct ProposalKernel {
    kind: ProposalKind,
    grid: Grid1D,
    matrix: Arc<[f64]>,
    sampler: Option<Arc<InverseCdf>>,
}

impl ProposalKernel {
    pub fn random_walk(grid: Grid1D, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::OutOfRange { what: "sigma", value: sigma, range: "(0, inf)" });
        }
        let nodes = grid.nodes();
        let n = nodes.len();
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let q = reflected_normal(grid, sigma, nodes[i], nodes[j]);
                m[i * n + j] = q;
                m[j * n + i] = q;
            }
        }
        Ok(Self {
            kind: ProposalKind::RandomWalk { sigma },
            grid,
            matrix: m.into(),
            sampler: None,
        })
    }

    pub fn independence(base: GridDensity) -> Result<Self> {
        let grid = *base.mesh().line_grid()?;
        let n = grid.len();
        let mut m = Vec::with_capacity(n * n);
        for _ in 0..n {
            m.extend_from_slice(base.values());
        }
        let sampler = InverseCdf::new(grid, base.values())?;
        Ok(Self {
            kind: ProposalKind::Independence { base },
            grid,
            matrix: m.into(),
            sampler: Some(Arc::new(sampler)),
        })
    }

    pub fn kind(&self) -> &ProposalKind {
        &self.kind
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn tag(&self) -> String {
        match &self.kind {
            ProposalKind::RandomWalk { sigma } => format!("random-walk(sigma={sigma})"),
            ProposalKind::Independence { .. } => "independence(base)".into(),
        }
    }

    /// `q(x_i, x_j)` on the grid.
    pub fn density(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.grid.len() + j]
    }

    /// `q(x, y)` for arbitrary points of the interval.
    pub fn density_at(&self, x: f64, y: f64) -> f64 {
        match &self.kind {
            ProposalKind::RandomWalk { sigma } => reflected_normal(self.grid, *sigma, x, y),
            ProposalKind::Independence { base } => base.interpolate(y),
        }
    }

    /// Largest deviation of a row's quadrature mass from 1.
    pub fn row_mass_error(&self) -> f64 {
        let n = self.grid.len();
        let w = self.grid.weights();
        (0..n)
            .map(|i| {
                let s: f64 = (0..n).map(|j| w[j] * self.density(i, j)).sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }

    /// The tabulated density is finite, hence bounded in both arguments.
    pub fn is_bounded(&self) -> bool {
        self.matrix.iter().all(|v| v.is_finite())
    }

    /// Draws a proposal; the flag records a reflection at the boundary.
    pub fn sample<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> (f64, bool) {
        match &self.kind {
            ProposalKind::RandomWalk { sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                let y = x + sigma * z;
                if self.grid.contains(y) {
                    (y, false)
                } else {
                    (reflect_into(self.grid, y), true)
                }
            }
            ProposalKind::Independence { .. } => {
                let u: f64 = rng.random();
                (self.sampler.as_ref().expect("independence sampler").sample(u), false)
            }
        }
    }
}

fn reflected_normal(grid: Grid1D, sigma: f64, x: f64, y: f64) -> f64 {
    let (a, w) = (grid.lower(), grid.upper() - grid.lower());
    let c = 1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let phi = |d: f64| {
        let z = d / sigma;
        c * (-0.5 * z * z).exp()
    };
    let reach = (12.0 * sigma / (2.0 * w)).ceil() as i64 + 1;
    (-reach..=reach)
        .map(|k| {
            let s = 2.0 * k as f64 * w;
            phi(y - x + s) + phi(2.0 * a - y - x + s)
        })
        .sum()
}

fn reflect_into(grid: Grid1D, z: f64) -> f64 {
    let (a, w) = (grid.lower(), grid.upper() - grid.lower());
    let mut u = (z - a).rem_euclid(2.0 * w);
    if u > w {
        u = 2.0 * w - u;
    }
    a + u
}

/// Inverse CDF of a piecewise-linear grid density. The CDF is linear inside
/// each cell, i.e. draws are uniform within a cell chosen by its trapezoid
/// mass.
#[derive(Clone, Debug)]
pub struct InverseCdf {
    grid: Grid1D,
    cumulative: Vec<f64>,
}

impl InverseCdf {
    pub fn new(grid: Grid1D, values: &[f64]) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch("inverse CDF values".into()));
        }
        let h = grid.spacing();
        let mut c = Vec::with_capacity(values.len());
        let mut acc = 0.0;
        c.push(0.0);
        for pair in values.windows(2) {
            acc += 0.5 * h * (pair[0] + pair[1]);
            c.push(acc);
        }
        if !(acc > 0.0) {
            return Err(invalid("inverse CDF of a zero density"));
        }
        for v in &mut c {
            *v /= acc;
        }
        Ok(Self { grid, cumulative: c })
    }

    pub fn sample(&self, u: f64) -> f64 {
        let c = &self.cumulative;
        let i = c.partition_point(|v| *v <= u).clamp(1, c.len() - 1) - 1;
        let span = c[i + 1] - c[i];
        let s = if span > 0.0 { ((u - c[i]) / span).clamp(0.0, 1.0) } else { 0.5 };
        self.grid.node(i) + s * self.grid.spacing()
    }
}

/// Result of one transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step<S> {
    pub state: S,
    pub accepted: bool,
    pub truncated: bool,
}

/// One Hastings transition with an arbitrary target evaluator.
///
/// Stream order: the proposal draw(s) first, then exactly one uniform for
/// the accept decision.
pub fn hastings_step<R: Rng + ?Sized>(
    proposal: &ProposalKernel,
    balancing: &BalancingFunction,
    target: impl Fn(f64) -> f64,
    x: f64,
    rng: &mut R,
) -> Step<f64> {
    let (y, truncated) = proposal.sample(x, rng);
    let u: f64 = rng.random();
    // The reflected random walk is symmetric, so its densities cancel.
    let (q_yx, q_xy) = match proposal.kind() {
        ProposalKind::RandomWalk { .. } => (1.0, 1.0),
        ProposalKind::Independence { .. } => (proposal.density_at(y, x), proposal.density_at(x, y)),
    };
    let num = target(y) * q_yx;
    let den = target(x) * q_xy;
    let r = if den > 0.0 { num / den } else { 1.0 };
    if u < balancing.value(r) {
        Step { state: y, accepted: true, truncated }
    } else {
        Step { state: x, accepted: false, truncated }
    }
}

/// Hastings kernel for a target on a 1-D grid.
#[derive(Clone, Debug)]
pub struct HastingsKernel {
    target: GridDensity,
    floored: Arc<[f64]>,
    proposal: ProposalKernel,
    balancing: BalancingFunction,
    matrix: OnceLock<Arc<[f64]>>,
}

impl HastingsKernel {
    pub fn new(target: GridDensity, proposal: ProposalKernel, balancing: BalancingFunction) -> Result<Self> {
        let grid = target.mesh().line_grid()?;
        if grid != proposal.grid() {
            return Err(Error::GridMismatch("proposal and target grids differ".into()));
        }
        if !target.is_positive() {
            return Err(Error::Precondition("Hastings targets must be positive on the grid".into()));
        }
        Ok(Self {
            floored: target.floored().into(),
            target,
            proposal,
            balancing,
            matrix: OnceLock::new(),
        })
    }

    pub fn target(&self) -> &GridDensity {
        &self.target
    }

    pub fn proposal(&self) -> &ProposalKernel {
        &self.proposal
    }

    pub fn balancing(&self) -> &BalancingFunction {
        &self.balancing
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `mu(y) q(y,x) / (mu(x) q(x,y))`, or 1 when the denominator vanishes.
    pub fn hastings_ratio(&self, x: usize, y: usize) -> f64 {
        ratio(&self.floored, &self.proposal, x, y)
    }

    /// Dense transition matrix, built on first use.
    pub fn matrix(&self) -> Result<&[f64]> {
        if let Some(m) = self.matrix.get() {
            return Ok(m);
        }
        let m = build_hastings_matrix(&self.floored, &self.proposal, &self.balancing)?;
        Ok(self.matrix.get_or_init(|| m.into()))
    }

    /// `P(x_i, f)`.
    pub fn apply(&self, x: usize, f: &[f64]) -> Result<f64> {
        let n = self.len();
        if x >= n {
            return Err(invalid(format!("node {x} is off the grid")));
        }
        self.target.mesh().ensure_len(f.len(), "function")?;
        let m = self.matrix()?;
        Ok(m[x * n..(x + 1) * n].iter().zip(f).map(|(a, b)| a * b).sum())
    }

    /// `∫ rho(dx) P(x, f)`.
    pub fn apply_to_density(&self, rho: &GridDensity, f: &[f64]) -> Result<f64> {
        self.target.mesh().ensure_same(rho.mesh())?;
        let pf = Kernel::Hastings(self.clone()).apply_all(f)?;
        crate::measures::integrate(&pf, rho)
    }

    /// `∫∫ mu(dx) q(x, dy) g(r(x, y))` by quadrature. Unlike the transition
    /// matrix this keeps the diagonal, where `g(1)` of the proposals are
    /// accepted moves of length zero.
    pub fn expected_acceptance(&self) -> f64 {
        let n = self.len();
        let w = self.target.mesh().weights();
        let mu = self.target.values();
        (0..n)
            .map(|i| {
                let a: f64 = (0..n)
                    .map(|j| w[j] * self.proposal.density(i, j) * self.balancing.value(self.hastings_ratio(i, j)))
                    .sum();
                w[i] * mu[i] * a
            })
            .sum()
    }

    /// One transition from a continuous state using the interpolated target.
    pub fn step<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> Step<f64> {
        hastings_step(&self.proposal, &self.balancing, |z| self.target.interpolate(z), x, rng)
    }
}

pub(crate) fn ratio(mu: &[f64], q: &ProposalKernel, x: usize, y: usize) -> f64 {
    if x == y {
        return 1.0;
    }
    let den = mu[x] * q.density(x, y);
    if den > 0.0 {
        mu[y] * q.density(y, x) / den
    } else {
        1.0
    }
}

fn build_hastings_matrix(mu: &[f64], q: &ProposalKernel, g: &BalancingFunction) -> Result<Vec<f64>> {
    let n = mu.len();
    let w = q.grid().weights();
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        let row = &mut m[i * n..(i + 1) * n];
        let mut accepted = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let a = w[j] * q.density(i, j) * g.value(ratio(mu, q, i, j));
            row[j] = a;
            accepted += a;
        }
        let reject = 1.0 - accepted;
        if reject < -1e-9 {
            return Err(Error::Consistency(format!("negative rejection mass {reject:.3e} at node {i}")));
        }
        // The proposal's own self-transition is kept with the rejection mass.
        row[i] = reject.max(0.0);
    }
    Ok(m)
}

/// Deterministic-scan two-stage Gibbs kernel for a joint density on a 2-D grid.
#[derive(Clone, Debug)]
pub struct GibbsKernel {
    joint: GridDensity,
    grid: Grid2D,
    w1: Vec<f64>,
    w2: Vec<f64>,
    marg1: Vec<f64>,
    marg2: Vec<f64>,
    /// `[u2][w1]`: density of the first coordinate given the second.
    cond12: Vec<f64>,
    /// `[w1][w2]`: density of the second coordinate given the first.
    cond21: Vec<f64>,
}

impl GibbsKernel {
    pub fn new(joint: GridDensity) -> Result<Self> {
        let grid = *joint.mesh().plane_grid()?;
        let (n1, n2) = (grid.first.len(), grid.second.len());
        let (w1, w2) = (grid.first.weights(), grid.second.weights());
        let v = joint.values();
        let mut marg1 = vec![0.0; n1];
        let mut marg2 = vec![0.0; n2];
        for i1 in 0..n1 {
            for i2 in 0..n2 {
                marg1[i1] += w2[i2] * v[i1 * n2 + i2];
                marg2[i2] += w1[i1] * v[i1 * n2 + i2];
            }
        }
        if let Some(i) = marg1.iter().position(|m| !(*m > 0.0)) {
            return Err(Error::Precondition(format!("first marginal vanishes at node {i}")));
        }
        if let Some(i) = marg2.iter().position(|m| !(*m > 0.0)) {
            return Err(Error::Precondition(format!("second marginal vanishes at node {i}")));
        }
        let mut cond12 = vec![0.0; n2 * n1];
        let mut cond21 = vec![0.0; n1 * n2];
        for i1 in 0..n1 {
            for i2 in 0..n2 {
                let j = v[i1 * n2 + i2];
                cond12[i2 * n1 + i1] = j / marg2[i2];
                cond21[i1 * n2 + i2] = j / marg1[i1];
            }
        }
        let k = Self { joint, grid, w1, w2, marg1, marg2, cond12, cond21 };
        let err = k.conditional_mass_error();
        if err > 1e-6 {
            return Err(Error::Consistency(format!("conditionals off unit mass by {err:.3e}")));
        }
        Ok(k)
    }

    pub fn joint(&self) -> &GridDensity {
        &self.joint
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn first_marginal(&self) -> &[f64] {
        &self.marg1
    }

    pub fn second_marginal(&self) -> &[f64] {
        &self.marg2
    }

    /// Density of the first coordinate at node `w1` given second coordinate node `u2`.
    pub fn cond_first(&self, u2: usize, w1: usize) -> f64 {
        self.cond12[u2 * self.grid.first.len() + w1]
    }

    /// Density of the second coordinate at node `w2` given first coordinate node `w1`.
    pub fn cond_second(&self, w1: usize, w2: usize) -> f64 {
        self.cond21[w1 * self.grid.second.len() + w2]
    }

    pub(crate) fn weights(&self) -> (&[f64], &[f64]) {
        (&self.w1, &self.w2)
    }

    fn conditional_mass_error(&self) -> f64 {
        let (n1, n2) = (self.grid.first.len(), self.grid.second.len());
        let mut err: f64 = 0.0;
        for u2 in 0..n2 {
            let s: f64 = (0..n1).map(|w1| self.w1[w1] * self.cond_first(u2, w1)).sum();
            err = err.max((s - 1.0).abs());
        }
        for w1 in 0..n1 {
            let s: f64 = (0..n2).map(|w2| self.w2[w2] * self.cond_second(w1, w2)).sum();
            err = err.max((s - 1.0).abs());
        }
        err
    }

    /// Conditional mean of `f` in the second coordinate: `m(w1) = E[f(w1, ·) | w1]`.
    pub(crate) fn inner_mean(&self, f: &[f64]) -> Vec<f64> {
        let n2 = self.grid.second.len();
        (0..self.grid.first.len())
            .map(|w1| (0..n2).map(|w2| self.w2[w2] * self.cond_second(w1, w2) * f[w1 * n2 + w2]).sum())
            .collect()
    }

    /// `Pf(u2) = ∫ mu_{1|2}(u2, dw1) m(w1)`.
    pub(crate) fn outer_mean(&self, m: &[f64]) -> Vec<f64> {
        let n1 = self.grid.first.len();
        (0..self.grid.second.len())
            .map(|u2| (0..n1).map(|w1| self.w1[w1] * self.cond_first(u2, w1) * m[w1]).sum())
            .collect()
    }

    /// `P((x1, x2), f)` for node indices; independent of `x1`.
    pub fn apply(&self, x: (usize, usize), f: &[f64]) -> Result<f64> {
        self.joint.mesh().ensure_len(f.len(), "function")?;
        if x.0 >= self.grid.first.len() || x.1 >= self.grid.second.len() {
            return Err(invalid(format!("node {x:?} is off the grid")));
        }
        let m = self.inner_mean(f);
        let n1 = self.grid.first.len();
        Ok((0..n1).map(|w1| self.w1[w1] * self.cond_first(x.1, w1) * m[w1]).sum())
    }

    fn apply_all(&self, f: &[f64]) -> Vec<f64> {
        let pf = self.outer_mean(&self.inner_mean(f));
        let n2 = self.grid.second.len();
        (0..self.grid.len()).map(|k| pf[k % n2]).collect()
    }

    fn propagate(&self, masses: &[f64]) -> Vec<f64> {
        let (n1, n2) = (self.grid.first.len(), self.grid.second.len());
        let mut r = vec![0.0; n2];
        for (k, m) in masses.iter().enumerate() {
            r[k % n2] += m;
        }
        let a: Vec<f64> = (0..n1)
            .map(|y1| (0..n2).map(|u2| r[u2] * self.w1[y1] * self.cond_first(u2, y1)).sum())
            .collect();
        let mut out = vec![0.0; n1 * n2];
        for y1 in 0..n1 {
            for y2 in 0..n2 {
                out[y1 * n2 + y2] = a[y1] * self.w2[y2] * self.cond_second(y1, y2);
            }
        }
        out
    }

    /// Gibbs sweep from a continuous state. Conditional rows are linearly
    /// interpolated between neighbouring nodes, then sampled by inverse CDF.
    pub fn step<R: Rng + ?Sized>(&self, x: [f64; 2], rng: &mut R) -> Result<Step<[f64; 2]>> {
        let (g1, g2) = (self.grid.first, self.grid.second);
        let (n1, n2) = (g1.len(), g2.len());
        let (i2, s2) = g2.bracket(x[1]);
        let row1: Vec<f64> = (0..n1)
            .map(|w1| (1.0 - s2) * self.cond_first(i2, w1) + s2 * self.cond_first(i2 + 1, w1))
            .collect();
        let y1 = InverseCdf::new(g1, &row1)?.sample(rng.random());
        let (i1, s1) = g1.bracket(y1);
        let row2: Vec<f64> = (0..n2)
            .map(|w2| (1.0 - s1) * self.cond_second(i1, w2) + s1 * self.cond_second(i1 + 1, w2))
            .collect();
        let y2 = InverseCdf::new(g2, &row2)?.sample(rng.random());
        Ok(Step { state: [y1, y2], accepted: true, truncated: false })
    }
}

/// A kernel of one of the supported families.
#[derive(Clone, Debug)]
pub enum Kernel {
    Hastings(HastingsKernel),
    Gibbs(GibbsKernel),
    /// Draws directly from the target: `P(x, ·) = mu`.
    Exact(GridDensity),
}

impl Kernel {
    pub fn target(&self) -> &GridDensity {
        match self {
            Self::Hastings(k) => k.target(),
            Self::Gibbs(k) => k.joint(),
            Self::Exact(mu) => mu,
        }
    }

    pub fn mesh(&self) -> &Mesh {
        self.target().mesh()
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Hastings(k) => format!("hastings[{}; {}]", k.proposal.tag(), k.balancing.tag()),
            Self::Gibbs(_) => "gibbs[two-stage deterministic scan]".into(),
            Self::Exact(_) => "exact[iid from target]".into(),
        }
    }

    /// `x ↦ P(x, f)` on every node.
    pub fn apply_all(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.mesh().ensure_len(f.len(), "function")?;
        Ok(match self {
            Self::Hastings(k) => {
                let n = k.len();
                let m = k.matrix()?;
                m.chunks_exact(n).map(|row| row.iter().zip(f).map(|(a, b)| a * b).sum()).collect()
            }
            Self::Gibbs(k) => k.apply_all(f),
            Self::Exact(mu) => vec![crate::measures::integrate(f, mu)?; f.len()],
        })
    }

    /// Node masses of `m P`.
    pub fn propagate(&self, masses: &[f64]) -> Result<Vec<f64>> {
        self.mesh().ensure_len(masses.len(), "measure")?;
        Ok(match self {
            Self::Hastings(k) => {
                let n = k.len();
                let m = k.matrix()?;
                let mut out = vec![0.0; n];
                for (i, mi) in masses.iter().enumerate() {
                    if *mi == 0.0 {
                        continue;
                    }
                    for (o, p) in out.iter_mut().zip(&m[i * n..(i + 1) * n]) {
                        *o += mi * p;
                    }
                }
                out
            }
            Self::Gibbs(k) => k.propagate(masses),
            Self::Exact(mu) => {
                let total: f64 = masses.iter().sum();
                mu.masses().into_iter().map(|v| total * v).collect()
            }
        })
    }

    /// One transition from a continuous state (second coordinate unused on a line).
    pub fn sample_step<R: Rng + ?Sized>(&self, x: [f64; 2], rng: &mut R) -> Result<Step<[f64; 2]>> {
        match self {
            Self::Hastings(k) => {
                let s = k.step(x[0], rng);
                Ok(Step { state: [s.state, 0.0], accepted: s.accepted, truncated: s.truncated })
            }
            Self::Gibbs(k) => k.step(x, rng),
            Self::Exact(mu) => {
                let g = mu.mesh().line_grid()?;
                let y = InverseCdf::new(*g, mu.values())?.sample(rng.random());
                Ok(Step { state: [y, 0.0], accepted: true, truncated: false })
            }
        }
    }
}

/// A rule that produces a kernel for every target.
#[derive(Clone, Debug)]
pub enum KernelFamily {
    Hastings {
        proposal: ProposalKernel,
        balancing: BalancingFunction,
    },
    Gibbs,
    Exact,
}

impl KernelFamily {
    pub fn at(&self, target: &GridDensity) -> Result<Kernel> {
        Ok(match self {
            Self::Hastings { proposal, balancing } => {
                Kernel::Hastings(HastingsKernel::new(target.clone(), proposal.clone(), balancing.clone())?)
            }
            Self::Gibbs => Kernel::Gibbs(GibbsKernel::new(target.clone())?),
            Self::Exact => Kernel::Exact(target.clone()),
        })
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Hastings { proposal, balancing } => format!("hastings[{}; {}]", proposal.tag(), balancing.tag()),
            Self::Gibbs => "gibbs".into(),
            Self::Exact => "exact".into(),
        }
    }
}

/// Where a chain starts: a density or a grid node (flat index on 2-D grids).
#[derive(Clone, Debug)]
pub enum Start {
    Density(GridDensity),
    Point(usize),
}

impl Start {
    /// Node masses of the starting measure.
    pub fn masses(&self, mesh: &Mesh) -> Result<Vec<f64>> {
        match self {
            Self::Density(rho) => {
                mesh.ensure_same(rho.mesh())?;
                Ok(rho.masses())
            }
            Self::Point(x) => {
                if *x >= mesh.len() {
                    return Err(invalid(format!("start node {x} is off the grid")));
                }
                let mut m = vec![0.0; mesh.len()];
                m[*x] = 1.0;
                Ok(m)
            }
        }
    }
}

/// `P^steps(start, f)`, propagating `f` backwards.
pub fn iterate_kernel(kernel: &Kernel, start: &Start, f: &[f64], steps: usize) -> Result<f64> {
    const MAX_STEPS: usize = 1_000_000;
    if steps > MAX_STEPS {
        return Err(Error::Resource(format!("{steps} steps exceed the limit of {MAX_STEPS}")));
    }
    let mut g = f.to_vec();
    kernel.mesh().ensure_len(g.len(), "function")?;
    for _ in 0..steps {
        g = kernel.apply_all(&g)?;
    }
    let m = start.masses(kernel.mesh())?;
    Ok(m.iter().zip(&g).map(|(a, b)| a * b).sum())
}

/// Residual of `mu P = mu` in total variation.
#[derive(Clone, Debug, serde::Serialize)]
pub struct InvarianceReport {
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Checks that the kernel leaves its own target invariant.
pub fn check_invariance(kernel: &Kernel, tol: f64) -> Result<InvarianceReport> {
    check_invariance_of(kernel, kernel.target(), tol)
}

/// Checks `mu P = mu` for a supplied `mu`, which need not be the kernel's target.
pub fn check_invariance_of(kernel: &Kernel, mu: &GridDensity, tol: f64) -> Result<InvarianceReport> {
    let out = kernel.propagate(&mu.masses())?;
    let w = mu.mesh().weights();
    let diff: Vec<f64> = out.iter().zip(mu.masses()).zip(w).map(|((a, b), w)| (a - b) / w).collect();
    let chi = SignedGridFunction::new(mu.mesh().clone(), diff)?;
    let residual = crate::measures::v_norm_measure(&chi, &WeightFunction::Constant)?;
    Ok(InvarianceReport { residual, tolerance: tol, pass: residual <= tol })
}
