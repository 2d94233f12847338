//! Feynman–Kac flows on a 1-D grid: the Boltzmann–Gibbs map, the bootstrap
//! state-space model, the `Q̄` operators and the sequential-MCMC variance.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measures::{Grid1D, GridDensity};

/// Bounded maps `R -> [-bound, bound]` used as latent drifts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BoundedMap {
    /// `phi_bar * tanh(x)`.
    ScaledTanh { phi_bar: f64 },
    /// `phi_bar * sin(x)`.
    ScaledSin { phi_bar: f64 },
}

impl BoundedMap {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::ScaledTanh { phi_bar } => phi_bar * x.tanh(),
            Self::ScaledSin { phi_bar } => phi_bar * x.sin(),
        }
    }

    pub fn bound(&self) -> f64 {
        match self {
            Self::ScaledTanh { phi_bar } | Self::ScaledSin { phi_bar } => *phi_bar,
        }
    }

    fn validate(&self) -> Result<()> {
        let b = self.bound();
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::OutOfRange { what: "phi_bar", value: b, range: "(0, inf)" });
        }
        Ok(())
    }
}

/// Potential `G^(p)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Potential {
    Constant,
    /// Gaussian likelihood `exp(-(obs - x)^2 / (2 var))`, unnormalized.
    GaussianLikelihood { obs: f64, var: f64 },
}

impl Potential {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Constant => 1.0,
            Self::GaussianLikelihood { obs, var } => (-(obs - x).powi(2) / (2.0 * var)).exp(),
        }
    }
}

/// Mutation kernel `M^(p)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Mutation {
    /// `N(phi(x), var)`.
    GaussianAr { phi: BoundedMap, var: f64 },
}

impl Mutation {
    fn mean(&self, x: f64) -> f64 {
        match self {
            Self::GaussianAr { phi, .. } => phi.eval(x),
        }
    }

    fn var(&self) -> f64 {
        match self {
            Self::GaussianAr { var, .. } => *var,
        }
    }

    /// Transition density `M(x, y)`.
    pub fn density(&self, x: f64, y: f64) -> f64 {
        let v = self.var();
        (-(y - self.mean(x)).powi(2) / (2.0 * v)).exp() / (std::f64::consts::TAU * v).sqrt()
    }

    /// `M(x, .)` at every node of `grid`, written into `out`.
    pub fn row_into(&self, grid: &Grid1D, x: f64, out: &mut [f64]) {
        gaussian_row(grid, self.mean(x), self.var(), out);
    }
}

/// Normal density with mean `m` and variance `v` at the nodes, built outward
/// from the nearest node by multiplicative recurrences (three `exp` calls per
/// row instead of one per node).
pub fn gaussian_row(grid: &Grid1D, m: f64, v: f64, out: &mut [f64]) {
    let n = grid.len();
    let h = grid.spacing();
    let c = 1.0 / (std::f64::consts::TAU * v).sqrt();
    let i0 = grid.nearest(m.clamp(grid.lower(), grid.upper()));
    let d0 = grid.node(i0) - m;
    out[i0] = c * (-d0 * d0 / (2.0 * v)).exp();
    let step = (-h * h / v).exp();
    // Going up: e_{k+1} = e_k * exp(-((x_k - m) h + h^2 / 2) / v).
    let mut r = (-(d0 * h + 0.5 * h * h) / v).exp();
    for k in i0 + 1..n {
        out[k] = out[k - 1] * r;
        r *= step;
    }
    // Going down: e_{k-1} = e_k * exp(((x_k - m) h - h^2 / 2) / v).
    let mut r = ((d0 * h - 0.5 * h * h) / v).exp();
    for k in (0..i0).rev() {
        out[k] = out[k + 1] * r;
        r *= step;
    }
}

/// Equally weighted samples.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmpiricalMeasure {
    samples: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid("an empirical measure needs at least one sample"));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(invalid("non-finite sample"));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean_of(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.samples.iter().map(|x| f(*x)).sum::<f64>() / self.samples.len() as f64
    }
}

/// Input to the Boltzmann–Gibbs map.
#[derive(Clone, Copy, Debug)]
pub enum Eta<'a> {
    Grid(&'a GridDensity),
    Empirical(&'a EmpiricalMeasure),
}

/// A Feynman–Kac model on a 1-D grid: `eta^(p+1) = Φ_p(eta^(p))` with
/// `Φ_p(eta)(dx) = ∫ eta(dy) G^(p)(y) M^(p)(y, dx) / eta(G^(p))`.
#[derive(Clone, Debug)]
pub struct FeynmanKacModel {
    grid: Grid1D,
    potentials: Vec<Potential>,
    mutations: Vec<Mutation>,
    eta1: GridDensity,
}

impl FeynmanKacModel {
    /// `potentials[p - 1]` and `mutations[p - 1]` form the step from level
    /// `p` to level `p + 1`.
    pub fn new(eta1: GridDensity, potentials: Vec<Potential>, mutations: Vec<Mutation>) -> Result<Self> {
        let grid = *eta1.mesh().line_grid()?;
        if potentials.len() != mutations.len() {
            return Err(invalid("one potential per mutation is required"));
        }
        for p in &potentials {
            if let Potential::GaussianLikelihood { var, obs } = p {
                if !(*var > 0.0) || !obs.is_finite() {
                    return Err(invalid("likelihood needs a finite observation and positive variance"));
                }
            }
        }
        for m in &mutations {
            let Mutation::GaussianAr { phi, var } = m;
            phi.validate()?;
            if !(*var > 0.0) {
                return Err(Error::OutOfRange { what: "mutation variance", value: *var, range: "(0, inf)" });
            }
        }
        Ok(Self { grid, potentials, mutations, eta1 })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn eta1(&self) -> &GridDensity {
        &self.eta1
    }

    /// Number of levels, counting `eta^(1)`.
    pub fn levels(&self) -> usize {
        self.potentials.len() + 1
    }

    fn step(&self, level: usize) -> Result<(&Potential, &Mutation)> {
        if level == 0 || level > self.potentials.len() {
            return Err(invalid(format!("level {level} has no outgoing step (levels 1..={})", self.potentials.len())));
        }
        Ok((&self.potentials[level - 1], &self.mutations[level - 1]))
    }

    pub fn potential(&self, level: usize) -> Result<&Potential> {
        Ok(self.step(level)?.0)
    }

    pub fn mutation(&self, level: usize) -> Result<&Mutation> {
        Ok(self.step(level)?.1)
    }

    /// `G^(level)` on the nodes.
    pub fn potential_on_grid(&self, level: usize) -> Result<Vec<f64>> {
        let g = self.potential(level)?;
        Ok(self.grid.nodes().into_iter().map(|x| g.eval(x)).collect())
    }

    /// `M^(level)(x, .)` on the nodes, one row per node `x`.
    fn mutation_matrix(&self, level: usize) -> Result<Vec<f64>> {
        let m = self.mutation(level)?;
        let n = self.grid.len();
        let mut out = vec![0.0; n * n];
        for (i, x) in self.grid.nodes().into_iter().enumerate() {
            m.row_into(&self.grid, x, &mut out[i * n..(i + 1) * n]);
        }
        Ok(out)
    }

    /// Reference flow `eta^(1), ..., eta^(levels)` by grid iteration of Φ.
    pub fn reference_flow(&self) -> Result<Vec<GridDensity>> {
        let mut flow = vec![self.eta1.clone()];
        for level in 1..self.levels() {
            let next = boltzmann_gibbs(self, level, Eta::Grid(&flow[level - 1]))?;
            flow.push(next);
        }
        Ok(flow)
    }
}

/// The bootstrap state-space model with latent `W' | W ~ N(phi(W), 1/2)`
/// and observations `S | W ~ N(W, 1/2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsmBootstrapModel {
    pub phi: BoundedMap,
    pub observations: Vec<f64>,
}

/// Latent and observation noise variance.
pub const SSM_NOISE_VAR: f64 = 0.5;

impl SsmBootstrapModel {
    /// The model with `levels` levels, which uses the first `levels - 1`
    /// observations. `eta1` is the law of the first latent state.
    pub fn feynman_kac(&self, eta1: GridDensity, levels: usize) -> Result<FeynmanKacModel> {
        self.phi.validate()?;
        if levels == 0 || levels > self.observations.len() + 1 {
            return Err(invalid(format!(
                "{levels} levels need {} observations, {} supplied",
                levels.saturating_sub(1),
                self.observations.len()
            )));
        }
        let potentials = self.observations[..levels - 1]
            .iter()
            .map(|&obs| Potential::GaussianLikelihood { obs, var: SSM_NOISE_VAR })
            .collect();
        let mutations = vec![Mutation::GaussianAr { phi: self.phi, var: SSM_NOISE_VAR }; levels - 1];
        FeynmanKacModel::new(eta1, potentials, mutations)
    }

    /// Simulates `(W_j, S_j)` for `j = 1..=len`, with `W_1 ~ N(0, 1/2)`.
    pub fn simulate<R: rand::Rng + ?Sized>(phi: BoundedMap, len: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        use rand_distr::{Distribution, StandardNormal};
        let sd = SSM_NOISE_VAR.sqrt();
        let mut w = Vec::with_capacity(len);
        let mut s = Vec::with_capacity(len);
        let z0: f64 = StandardNormal.sample(rng);
        let mut x = sd * z0;
        for j in 0..len {
            if j > 0 {
                let z: f64 = StandardNormal.sample(rng);
                x = phi.eval(x) + sd * z;
            }
            let e: f64 = StandardNormal.sample(rng);
            w.push(x);
            s.push(x + sd * e);
        }
        (w, s)
    }
}

/// Normalized weights `G(y_i) / Σ G(y_j)` of an empirical measure.
pub fn reweight(eta: &EmpiricalMeasure, g: &Potential, level: usize) -> Result<Vec<f64>> {
    let raw: Vec<f64> = eta.samples().iter().map(|y| g.eval(*y)).collect();
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateWeights { level });
    }
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// `Φ_level(eta)` on the grid.
pub fn boltzmann_gibbs(model: &FeynmanKacModel, level: usize, eta: Eta<'_>) -> Result<GridDensity> {
    let (g, m) = model.step(level)?;
    let grid = *model.grid();
    let n = grid.len();
    let mut acc = MixtureAccumulator::new(grid, m.clone(), g.clone(), None);
    match eta {
        Eta::Grid(rho) => {
            rho.mesh().ensure_same(&grid.into())?;
            let w = grid.weights();
            for (i, x) in grid.nodes().into_iter().enumerate() {
                let mass = w[i] * rho.values()[i] * g.eval(x);
                if mass > 0.0 {
                    acc.add_weighted(x, mass);
                }
            }
        }
        Eta::Empirical(e) => {
            for y in e.samples() {
                acc.add(*y);
            }
        }
    }
    if !(acc.weight_total > 0.0) {
        return Err(Error::DegenerateWeights { level });
    }
    let values: Vec<f64> = acc.sums.iter().map(|s| s / acc.weight_total).collect();
    debug_assert_eq!(values.len(), n);
    GridDensity::new(grid, values)
}

/// Running unnormalized mixture `S(x) = Σ_j G(y_j) M(y_j, x)` on the grid
/// with `O(grid)` updates and `O(1)` access to the normalized mixture's
/// expectation of a fixed function.
#[derive(Clone, Debug)]
pub struct MixtureAccumulator {
    grid: Grid1D,
    weights: Vec<f64>,
    mutation: Mutation,
    potential: Potential,
    sums: Vec<f64>,
    weight_total: f64,
    f: Option<Vec<f64>>,
    f_total: f64,
    mass_total: f64,
    row: Vec<f64>,
}

impl MixtureAccumulator {
    /// `f`, when given, is tracked through [`Self::expectation`].
    pub fn new(grid: Grid1D, mutation: Mutation, potential: Potential, f: Option<Vec<f64>>) -> Self {
        let n = grid.len();
        Self {
            grid,
            weights: grid.weights(),
            mutation,
            potential,
            sums: vec![0.0; n],
            weight_total: 0.0,
            f,
            f_total: 0.0,
            mass_total: 0.0,
            row: vec![0.0; n],
        }
    }

    pub fn add(&mut self, y: f64) {
        let g = self.potential.eval(y);
        self.add_weighted(y, g);
    }

    /// Adds `weight * M(y, .)`, with `weight` used in place of `G(y)`.
    pub fn add_weighted(&mut self, y: f64, weight: f64) {
        self.mutation.row_into(&self.grid, y, &mut self.row);
        let mut mass = 0.0;
        let mut fm = 0.0;
        match &self.f {
            Some(f) => {
                for k in 0..self.row.len() {
                    let r = self.row[k];
                    self.sums[k] += weight * r;
                    mass += self.weights[k] * r;
                    fm += self.weights[k] * r * f[k];
                }
            }
            None => {
                for k in 0..self.row.len() {
                    self.sums[k] += weight * self.row[k];
                }
            }
        }
        self.weight_total += weight;
        self.mass_total += weight * mass;
        self.f_total += weight * fm;
    }

    pub fn weight_total(&self) -> f64 {
        self.weight_total
    }

    /// Nodal values of the normalized mixture.
    pub fn values(&self) -> Vec<f64> {
        self.sums.iter().map(|s| s / self.weight_total).collect()
    }

    /// Value of the normalized mixture at a node.
    pub fn value_at(&self, k: usize) -> f64 {
        self.sums[k] / self.weight_total
    }

    /// Linear interpolation of the normalized mixture, 0 off the grid.
    pub fn interpolate(&self, x: f64) -> f64 {
        if !self.grid.contains(x) {
            return 0.0;
        }
        let (i, s) = self.grid.bracket(x);
        let hi = if s > 0.0 { self.sums[i + 1] } else { 0.0 };
        ((1.0 - s) * self.sums[i] + s * hi) / self.weight_total
    }

    /// Trapezoid expectation of the tracked `f` under the mixture.
    pub fn expectation(&self) -> Option<f64> {
        self.f.as_ref().map(|_| self.f_total / self.mass_total)
    }

    pub fn density(&self) -> Result<GridDensity> {
        GridDensity::new(self.grid, self.values())
    }
}

/// `Q̄^(level)(x, f) = G(x) M(x, f) / eta^(level)(G)` on the nodes.
pub fn q_bar_operator(model: &FeynmanKacModel, flow: &[GridDensity], level: usize, f: &[f64]) -> Result<Vec<f64>> {
    let eta = flow.get(level - 1).ok_or_else(|| invalid(format!("reference flow lacks level {level}")))?;
    let g = model.potential_on_grid(level)?;
    let eta_g = eta.expect(&g)?;
    if !(eta_g > 0.0) {
        return Err(Error::DegenerateWeights { level });
    }
    let n = model.grid().len();
    if f.len() != n {
        return Err(Error::GridMismatch(format!("function has {} values, grid has {n}", f.len())));
    }
    let m = model.mutation_matrix(level)?;
    let w = model.grid().weights();
    Ok((0..n)
        .map(|i| {
            let mf: f64 = m[i * n..(i + 1) * n].iter().zip(&w).zip(f).map(|((a, b), c)| a * b * c).sum();
            g[i] * mf / eta_g
        })
        .collect())
}

/// `Q̄^(j) ∘ ... ∘ Q̄^(p-1) f`, the identity when `j = p`.
pub fn q_bar_chain(model: &FeynmanKacModel, flow: &[GridDensity], j: usize, p: usize, f: &[f64]) -> Result<Vec<f64>> {
    if j == 0 || j > p {
        return Err(invalid(format!("need 1 <= j <= p, got j = {j}, p = {p}")));
    }
    let mut out = f.to_vec();
    for level in (j..p).rev() {
        out = q_bar_operator(model, flow, level, &out)?;
    }
    Ok(out)
}

/// Both sides of `[Φ(eta_n) - Φ(eta)](f) = [eta_n - eta](Q̄ (f - Φ(eta_n)(f)))`.
#[derive(Clone, Debug, Serialize)]
pub struct FkDecomposition {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// Checks the decomposition at `level` for an empirical `eta_n`.
pub fn fk_decomposition_check(
    model: &FeynmanKacModel,
    flow: &[GridDensity],
    level: usize,
    eta_n: &EmpiricalMeasure,
    f: &[f64],
) -> Result<FkDecomposition> {
    let (g, m) = model.step(level)?;
    let grid = *model.grid();
    let w = grid.weights();
    let eta = &flow[level - 1];
    // M f at an arbitrary point, by trapezoid over the nodes.
    let mut row = vec![0.0; grid.len()];
    let mut m_apply = |y: f64, h: &[f64]| -> f64 {
        m.row_into(&grid, y, &mut row);
        row.iter().zip(&w).zip(h).map(|((a, b), c)| a * b * c).sum()
    };
    let nodes = grid.nodes();
    let eta_of = |vals: &dyn Fn(usize) -> f64| -> f64 { (0..nodes.len()).map(|i| w[i] * eta.values()[i] * vals(i)).sum() };
    let mf_nodes: Vec<f64> = nodes.iter().map(|y| m_apply(*y, f)).collect();
    let mf_samples: Vec<f64> = eta_n.samples().iter().map(|y| m_apply(*y, f)).collect();
    let g_nodes: Vec<f64> = nodes.iter().map(|y| g.eval(*y)).collect();
    let g_samples: Vec<f64> = eta_n.samples().iter().map(|y| g.eval(*y)).collect();
    let n = eta_n.len() as f64;
    let eta_g = eta_of(&|i| g_nodes[i]);
    let etan_g = g_samples.iter().sum::<f64>() / n;
    if !(eta_g > 0.0 && etan_g > 0.0) {
        return Err(Error::DegenerateWeights { level });
    }
    let phi_eta = eta_of(&|i| g_nodes[i] * mf_nodes[i]) / eta_g;
    let phi_etan = g_samples.iter().zip(&mf_samples).map(|(a, b)| a * b).sum::<f64>() / n / etan_g;
    let lhs = phi_etan - phi_eta;
    // The identity needs M 1 = 1, which the trapezoid rule meets to rounding
    // on grids that hold the mutation rows.
    let shifted: Vec<f64> = f.iter().map(|v| v - phi_etan).collect();
    let qs_nodes: Vec<f64> = nodes.iter().map(|y| g.eval(*y) * m_apply(*y, &shifted) / eta_g).collect();
    let qs_samples: Vec<f64> = eta_n.samples().iter().map(|y| g.eval(*y) * m_apply(*y, &shifted) / eta_g).collect();
    let rhs = qs_samples.iter().sum::<f64>() / n - eta_of(&|i| qs_nodes[i]);
    Ok(FkDecomposition { lhs, rhs, residual: (lhs - rhs).abs() })
}

/// Centering used inside the variance recursion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Centering {
    /// `f - eta^(p)(f)` at every level.
    #[default]
    FinalLevel,
    /// `f - eta^(j)(f)` at level `j`.
    PerLevel,
}

/// Asymptotic variance `σ²_{eta^(j)}(g)` of the level-`j` limiting chain.
pub trait VarianceFunctional {
    fn sigma2(&self, level: usize, g: &[f64]) -> Result<f64>;
}

/// Predicted variance `Σ_{j=1}^p σ²_{eta^(j)}(Q̄^(j:p)(f - c_j))`.
pub fn smcmc_variance_recursion(
    model: &FeynmanKacModel,
    flow: &[GridDensity],
    p: usize,
    f: &[f64],
    sigma2: &dyn VarianceFunctional,
    centering: Centering,
) -> Result<f64> {
    if p == 0 || p > flow.len() {
        return Err(invalid(format!("level {p} is outside the reference flow")));
    }
    let mut total = 0.0;
    for j in 1..=p {
        let c = match centering {
            Centering::FinalLevel => flow[p - 1].expect(f)?,
            Centering::PerLevel => flow[j - 1].expect(f)?,
        };
        let centred: Vec<f64> = f.iter().map(|v| v - c).collect();
        let g = q_bar_chain(model, flow, j, p, &centred)?;
        total += sigma2.sigma2(j, &g)?;
    }
    Ok(total)
}

/// `2 σ²_{eta^(1)}(Q̄^(1)(f - eta^(2)(f)))`, the extra interacting-MCMC term
/// for two levels.
pub fn imcmc_extra_variance(model: &FeynmanKacModel, flow: &[GridDensity], f: &[f64], sigma2: &dyn VarianceFunctional) -> Result<f64> {
    if flow.len() < 2 {
        return Err(invalid("the interacting term needs two levels"));
    }
    let c = flow[1].expect(f)?;
    let centred: Vec<f64> = f.iter().map(|v| v - c).collect();
    let g = q_bar_operator(model, flow, 1, &centred)?;
    Ok(2.0 * sigma2.sigma2(1, &g)?)
}
