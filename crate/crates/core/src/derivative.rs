//! Derivatives of kernels with respect to their invariant distribution.
//!
//! For a start measure `m` and a test function `f`, the derivative of
//! `mu ↦ P_mu(m, f)` in the direction of a zero-mass `chi` is a linear
//! functional
//!
//! ```text
//! chi ↦ Σ_y w_y chi_y D(y) + Σ_y s_y chi_y S(y)
//! ```
//!
//! with a density part `D` and, for starts that are not densities, a singular
//! part `S` acting through the node masses `s`. For a point start `x` in one
//! dimension `s` is the unit mass at `x`; for a Gibbs point start it is the
//! line `{y : y_2 = x_2}` weighted by the first-axis quadrature weights.
//!
//! All formulas are the exact derivatives of the grid kernels, so they can be
//! compared against finite differences to near machine precision.

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::kernels::{iterate_kernel, GibbsKernel, HastingsKernel, Kernel, KernelFamily, Start};
use crate::measures::{ContaminationCurve, GridDensity, Mesh, SignedGridFunction};

/// Default ceiling on the warm-start ratios.
pub const DEFAULT_WARM_START_CEILING: f64 = 1e6;

/// Singular component of a derivative.
#[derive(Clone, Debug, PartialEq)]
pub struct SingularPart {
    /// `S(y)`.
    pub values: Vec<f64>,
    /// Node masses through which `S` acts on `chi`.
    pub support: Vec<f64>,
}

/// Kind of start a derivative was computed for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartKind {
    Density,
    Point(usize),
    Measure,
}

/// Density and singular parts of a kernel derivative.
#[derive(Clone, Debug)]
pub struct KernelDerivative {
    pub density_part: Vec<f64>,
    pub singular_part: Option<SingularPart>,
    pub at: GridDensity,
    pub start: StartKind,
    pub test_function: Vec<f64>,
    /// `|∫ mu D|` before any recentring; exact zero is expected for densities.
    pub centering_residual: f64,
}

impl KernelDerivative {
    /// Action on a zero-mass signed measure given by its density.
    pub fn action(&self, chi: &SignedGridFunction) -> Result<f64> {
        self.at.mesh().ensure_same(chi.mesh())?;
        Ok(self.action_values(chi.values()))
    }

    pub(crate) fn action_values(&self, chi: &[f64]) -> f64 {
        let w = self.at.mesh().weights();
        let mut s: f64 = w.iter().zip(chi).zip(&self.density_part).map(|((w, c), d)| w * c * d).sum();
        if let Some(sp) = &self.singular_part {
            s += sp.support.iter().zip(chi).zip(&sp.values).map(|((m, c), v)| m * c * v).sum::<f64>();
        }
        s
    }

    /// `∫ mu D` of the stored density part.
    pub fn centering(&self) -> f64 {
        centering(&self.at, &self.density_part)
    }
}

fn centering(mu: &GridDensity, d: &[f64]) -> f64 {
    mu.masses().iter().zip(d).map(|(a, b)| a * b).sum()
}

/// Options shared by the analytic derivatives.
#[derive(Clone, Copy, Debug)]
pub struct DerivativeOptions {
    /// Ceiling on `rho / mu^2` (Hastings) or `rho_2 / mu_2` (Gibbs).
    pub warm_start_ceiling: f64,
}

impl Default for DerivativeOptions {
    fn default() -> Self {
        Self { warm_start_ceiling: DEFAULT_WARM_START_CEILING }
    }
}

impl DerivativeOptions {
    /// No ceiling; used where the start is the target itself.
    pub fn unbounded() -> Self {
        Self { warm_start_ceiling: f64::INFINITY }
    }
}

/// Precomputed `g'(r(a, b))` for a Hastings kernel.
struct HastingsContext<'a> {
    kernel: &'a HastingsKernel,
    mu: Vec<f64>,
    gp: Vec<f64>,
}

impl<'a> HastingsContext<'a> {
    fn new(kernel: &'a HastingsKernel) -> Result<Self> {
        let g = kernel.balancing();
        if !g.has_derivative() {
            return Err(Error::Precondition(format!(
                "balancing function {} is not differentiable",
                g.tag()
            )));
        }
        let n = kernel.len();
        let mut gp = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                gp[a * n + b] = g.derivative(kernel.hastings_ratio(a, b)).expect("checked above");
            }
        }
        Ok(Self { kernel, mu: kernel.target().floored(), gp })
    }

    /// Gain term `Σ_z m_z (f_y - f_z) / mu_z g'(r(z, y)) q(y, z)`.
    fn gain(&self, masses: &[f64], f: &[f64]) -> Vec<f64> {
        let n = self.mu.len();
        let q = self.kernel.proposal();
        let mut d = vec![0.0; n];
        for (z, mz) in masses.iter().enumerate() {
            if *mz == 0.0 {
                continue;
            }
            let c = mz / self.mu[z];
            for (y, dy) in d.iter_mut().enumerate() {
                *dy += c * (f[y] - f[z]) * self.gp[z * n + y] * q.density(y, z);
            }
        }
        d
    }

    /// Loss term `S(y) = -mu_y^{-2} Σ_z w_z (f_z - f_y) q(z, y) g'(r(y, z)) mu_z`.
    fn loss(&self, f: &[f64]) -> Vec<f64> {
        let n = self.mu.len();
        let q = self.kernel.proposal();
        let w = self.kernel.target().mesh().weights();
        (0..n)
            .map(|y| {
                let b: f64 = (0..n)
                    .map(|z| w[z] * (f[z] - f[y]) * q.density(z, y) * self.gp[y * n + z] * self.mu[z])
                    .sum();
                -b / (self.mu[y] * self.mu[y])
            })
            .collect()
    }
}

fn check_hastings_warm_start(kernel: &HastingsKernel, rho: &[f64], ceiling: f64, skip: Option<usize>) -> Result<()> {
    let mu = kernel.target().floored();
    let mut worst = (0, 0.0f64);
    for (i, (r, m)) in rho.iter().zip(&mu).enumerate() {
        if Some(i) == skip {
            continue;
        }
        let ratio = r.abs() / (m * m);
        if ratio > worst.1 {
            worst = (i, ratio);
        }
    }
    if worst.1 > ceiling {
        return Err(Error::WarmStart { node: worst.0, ratio: worst.1, ceiling });
    }
    Ok(())
}

fn check_gibbs_warm_start(kernel: &GibbsKernel, r2: &[f64], ceiling: f64) -> Result<()> {
    let w2 = kernel.weights().1;
    let mut worst = (0, 0.0f64);
    for (i, ((r, w), m)) in r2.iter().zip(w2).zip(kernel.second_marginal()).enumerate() {
        let ratio = (r / w).abs() / m;
        if ratio > worst.1 {
            worst = (i, ratio);
        }
    }
    if worst.1 > ceiling {
        return Err(Error::WarmStart { node: worst.0, ratio: worst.1, ceiling });
    }
    Ok(())
}

fn check_f(mesh: &Mesh, f: &[f64]) -> Result<()> {
    mesh.ensure_len(f.len(), "test function")?;
    if let Some(i) = f.iter().position(|v| !v.is_finite()) {
        return Err(invalid(format!("test function is not finite at node {i}")));
    }
    Ok(())
}

/// Raw parts for a general start measure; `fold` merges the singular part
/// into the density when the start is a density.
fn raw_parts(kernel: &Kernel, masses: &[f64], f: &[f64], fold: bool) -> Result<(Vec<f64>, Option<SingularPart>)> {
    let mesh = kernel.mesh();
    let w = mesh.weights();
    match kernel {
        Kernel::Hastings(k) => {
            let ctx = HastingsContext::new(k)?;
            let mut d = ctx.gain(masses, f);
            let s = ctx.loss(f);
            if fold {
                for y in 0..d.len() {
                    d[y] += masses[y] / w[y] * s[y];
                }
                Ok((d, None))
            } else {
                Ok((d, Some(SingularPart { values: s, support: masses.to_vec() })))
            }
        }
        Kernel::Gibbs(k) => {
            let g = k.grid();
            let (n1, n2) = (g.first.len(), g.second.len());
            let (w1, w2) = k.weights();
            let m = k.inner_mean(f);
            let pf = k.outer_mean(&m);
            let mut r = vec![0.0; n2];
            for (idx, v) in masses.iter().enumerate() {
                r[idx % n2] += v;
            }
            let a: Vec<f64> = (0..n1)
                .map(|y1| (0..n2).map(|u2| r[u2] * k.cond_first(u2, y1)).sum::<f64>() / k.first_marginal()[y1])
                .collect();
            let mu2 = k.second_marginal();
            let mut d = vec![0.0; n1 * n2];
            let mut s = vec![0.0; n1 * n2];
            let mut support = vec![0.0; n1 * n2];
            for y1 in 0..n1 {
                for y2 in 0..n2 {
                    let idx = y1 * n2 + y2;
                    d[idx] = a[y1] * (f[idx] - m[y1]);
                    s[idx] = (m[y1] - pf[y2]) / mu2[y2];
                    support[idx] = w1[y1] * r[y2];
                }
            }
            if fold {
                for y1 in 0..n1 {
                    for y2 in 0..n2 {
                        let idx = y1 * n2 + y2;
                        d[idx] += r[y2] / w2[y2] * s[idx];
                    }
                }
                Ok((d, None))
            } else {
                Ok((d, Some(SingularPart { values: s, support })))
            }
        }
        Kernel::Exact(mu) => {
            let total: f64 = masses.iter().sum();
            let mf = crate::measures::integrate(f, mu)?;
            Ok((f.iter().map(|v| total * (v - mf)).collect(), None))
        }
    }
}

fn finish(
    kernel: &Kernel,
    start: StartKind,
    f: &[f64],
    parts: (Vec<f64>, Option<SingularPart>),
) -> KernelDerivative {
    let (mut d, singular) = parts;
    let mu = kernel.target().clone();
    let residual = centering(&mu, &d).abs();
    if start != StartKind::Density {
        // Shifting by a constant does not change the action on zero-mass chi.
        let c = centering(&mu, &d);
        for v in &mut d {
            *v -= c;
        }
    }
    KernelDerivative {
        density_part: d,
        singular_part: singular,
        at: mu,
        start,
        test_function: f.to_vec(),
        centering_residual: residual,
    }
}

/// Derivative for a density start (Hastings, Gibbs or exact family).
pub fn derivative_density(kernel: &Kernel, rho: &GridDensity, f: &[f64], opts: DerivativeOptions) -> Result<KernelDerivative> {
    kernel.mesh().ensure_same(rho.mesh())?;
    check_f(kernel.mesh(), f)?;
    let masses = rho.masses();
    match kernel {
        Kernel::Hastings(k) => check_hastings_warm_start(k, rho.values(), opts.warm_start_ceiling, None)?,
        Kernel::Gibbs(k) => {
            let n2 = k.grid().second.len();
            let mut r2 = vec![0.0; n2];
            for (i, m) in masses.iter().enumerate() {
                r2[i % n2] += m;
            }
            check_gibbs_warm_start(k, &r2, opts.warm_start_ceiling)?;
        }
        Kernel::Exact(_) => {}
    }
    let parts = raw_parts(kernel, &masses, f, true)?;
    Ok(finish(kernel, StartKind::Density, f, parts))
}

/// Derivative for a point start; `x` is a flat node index.
pub fn derivative_point(kernel: &Kernel, x: usize, f: &[f64]) -> Result<KernelDerivative> {
    check_f(kernel.mesh(), f)?;
    let masses = Start::Point(x).masses(kernel.mesh())?;
    let parts = raw_parts(kernel, &masses, f, false)?;
    Ok(finish(kernel, StartKind::Point(x), f, parts))
}

/// Derivative for an arbitrary start measure given by node masses.
pub fn derivative_masses(kernel: &Kernel, masses: &[f64], f: &[f64]) -> Result<KernelDerivative> {
    check_f(kernel.mesh(), f)?;
    kernel.mesh().ensure_len(masses.len(), "start measure")?;
    let parts = raw_parts(kernel, masses, f, false)?;
    Ok(finish(kernel, StartKind::Measure, f, parts))
}

/// Derivative for either kind of start.
pub fn derivative(kernel: &Kernel, start: &Start, f: &[f64], opts: DerivativeOptions) -> Result<KernelDerivative> {
    match start {
        Start::Density(rho) => derivative_density(kernel, rho, f, opts),
        Start::Point(x) => derivative_point(kernel, *x, f),
    }
}

/// Hastings derivative for a density start.
pub fn hastings_derivative(k: &HastingsKernel, rho: &GridDensity, f: &[f64], opts: DerivativeOptions) -> Result<KernelDerivative> {
    derivative_density(&Kernel::Hastings(k.clone()), rho, f, opts)
}

/// Hastings derivative for a point start.
pub fn hastings_derivative_at_point(k: &HastingsKernel, x: usize, f: &[f64]) -> Result<KernelDerivative> {
    derivative_point(&Kernel::Hastings(k.clone()), x, f)
}

/// Gibbs derivative for a density start on the 2-D grid.
pub fn gibbs_derivative(k: &GibbsKernel, rho: &GridDensity, f: &[f64], opts: DerivativeOptions) -> Result<KernelDerivative> {
    derivative_density(&Kernel::Gibbs(k.clone()), rho, f, opts)
}

/// Gibbs derivative for a point start `(x1, x2)` given as node indices.
pub fn gibbs_derivative_at_point(k: &GibbsKernel, x: (usize, usize), f: &[f64]) -> Result<KernelDerivative> {
    let idx = k.grid().index(x.0, x.1);
    derivative_point(&Kernel::Gibbs(k.clone()), idx, f)
}

/// `f - P f`, the density part obtained with `rho = mu`.
pub fn generator_density(kernel: &Kernel, f: &[f64]) -> Result<Vec<f64>> {
    let mu = kernel.target().clone();
    Ok(derivative_density(kernel, &mu, f, DerivativeOptions::unbounded())?.density_part)
}

/// Richardson-extrapolated one-sided difference quotient.
#[derive(Clone, Debug)]
pub struct DirectionalDerivativeOracle {
    /// Halving sequence of step sizes.
    pub steps: Vec<f64>,
    /// Allowed disagreement between the two first-order estimates, relative.
    pub tolerance: f64,
}

impl Default for DirectionalDerivativeOracle {
    fn default() -> Self {
        Self { steps: vec![1e-2, 5e-3, 2.5e-3], tolerance: 1e-3 }
    }
}

/// Oracle output.
#[derive(Clone, Debug, Serialize)]
pub struct OracleEstimate {
    pub value: f64,
    pub difference_quotients: Vec<f64>,
    pub first_order: Vec<f64>,
}

impl DirectionalDerivativeOracle {
    /// `d/dt P^power_{mu + t(nu - mu)}(start, f)` at `t = 0`.
    pub fn estimate(
        &self,
        family: &KernelFamily,
        mu: &GridDensity,
        nu: &GridDensity,
        start: &Start,
        f: &[f64],
        power: usize,
    ) -> Result<OracleEstimate> {
        self.estimate_fn(mu, nu, |target| {
            let k = family.at(target)?;
            iterate_kernel(&k, start, f, power)
        })
    }

    /// Same, for any functional of the target.
    pub fn estimate_fn(
        &self,
        mu: &GridDensity,
        nu: &GridDensity,
        functional: impl Fn(&GridDensity) -> Result<f64>,
    ) -> Result<OracleEstimate> {
        if self.steps.len() != 3 {
            return Err(invalid("the oracle uses exactly three steps"));
        }
        for pair in self.steps.windows(2) {
            if (pair[0] - 2.0 * pair[1]).abs() > 1e-15 * pair[0] {
                return Err(invalid("oracle steps must halve"));
            }
        }
        let curve = ContaminationCurve::new(mu.clone(), nu.clone())?;
        let f0 = functional(mu)?;
        let mut dq = Vec::with_capacity(3);
        for &t in &self.steps {
            dq.push((functional(&curve.at(t)?)? - f0) / t);
        }
        let r1 = vec![2.0 * dq[1] - dq[0], 2.0 * dq[2] - dq[1]];
        let value = (4.0 * r1[1] - r1[0]) / 3.0;
        let scale = value.abs().max(1e-9 * (1.0 + f0.abs()));
        if (r1[1] - r1[0]).abs() > self.tolerance * scale {
            return Err(Error::OracleFailure(format!(
                "first-order estimates {:.6e} and {:.6e} disagree",
                r1[0], r1[1]
            )));
        }
        Ok(OracleEstimate { value, difference_quotients: dq, first_order: r1 })
    }
}

/// Convenience wrapper over the default oracle for one kernel step.
pub fn fd_directional_derivative(
    family: &KernelFamily,
    mu: &GridDensity,
    nu: &GridDensity,
    start: &Start,
    f: &[f64],
) -> Result<f64> {
    Ok(DirectionalDerivativeOracle::default().estimate(family, mu, nu, start, f, 1)?.value)
}

/// Oracle values for point starts replaced by triangle spikes of shrinking
/// half-width, with the exact point value for comparison.
#[derive(Clone, Debug, Serialize)]
pub struct SpikeRefinement {
    pub half_widths: Vec<usize>,
    pub spike_values: Vec<f64>,
    pub point_value: f64,
}

pub fn spike_refinement(
    family: &KernelFamily,
    mu: &GridDensity,
    nu: &GridDensity,
    x: usize,
    f: &[f64],
    half_widths: &[usize],
) -> Result<SpikeRefinement> {
    let grid = *mu.mesh().line_grid()?;
    let oracle = DirectionalDerivativeOracle::default();
    let mut spike_values = Vec::new();
    for &hw in half_widths {
        let rho = GridDensity::triangle_spike(grid, x, hw)?;
        spike_values.push(oracle.estimate(family, mu, nu, &Start::Density(rho), f, 1)?.value);
    }
    let point_value = oracle.estimate(family, mu, nu, &Start::Point(x), f, 1)?.value;
    Ok(SpikeRefinement { half_widths: half_widths.to_vec(), spike_values, point_value })
}

/// Terms of the iterated-kernel derivative.
#[derive(Clone, Debug, Serialize)]
pub struct IteratedDerivative {
    /// Action of the `j`-th summand, `j = 0..k`.
    pub terms: Vec<f64>,
    pub total: f64,
}

/// Action of `∂P^k(mu; start, f)` on `nu - mu`, as the sum over
/// `j = 0..k` of single-step derivatives at start `start P^{k-j-1}` and
/// function `P^j f`.
pub fn iterated_derivative(
    kernel: &Kernel,
    k_steps: usize,
    nu: &GridDensity,
    start: &Start,
    f: &[f64],
    opts: DerivativeOptions,
) -> Result<IteratedDerivative> {
    if k_steps == 0 {
        return Err(invalid("iterated derivative needs at least one step"));
    }
    let mesh = kernel.mesh().clone();
    check_f(&mesh, f)?;
    let chi = SignedGridFunction::difference(nu, kernel.target())?;
    let w = mesh.weights();
    // Shifted starts start P^i, i = 0..k.
    let mut starts = vec![start.masses(&mesh)?];
    for _ in 1..k_steps {
        let next = kernel.propagate(starts.last().expect("nonempty"))?;
        starts.push(next);
    }
    let mut fs = vec![f.to_vec()];
    for _ in 1..k_steps {
        let next = kernel.apply_all(fs.last().expect("nonempty"))?;
        fs.push(next);
    }
    let mut failing = Vec::new();
    if let (Start::Density(_), Kernel::Hastings(h)) = (start, kernel) {
        for (i, m) in starts.iter().enumerate() {
            let rho: Vec<f64> = m.iter().zip(w).map(|(a, b)| a / b).collect();
            if check_hastings_warm_start(h, &rho, opts.warm_start_ceiling, None).is_err() {
                failing.push(k_steps - 1 - i);
            }
        }
    }
    if !failing.is_empty() {
        failing.sort_unstable();
        return Err(Error::Precondition(format!("shifted starts fail the warm-start ceiling for j = {failing:?}")));
    }
    let mut terms = Vec::with_capacity(k_steps);
    for j in 0..k_steps {
        let m = &starts[k_steps - 1 - j];
        let d = derivative_masses(kernel, m, &fs[j])?;
        terms.push(d.action_values(chi.values()));
    }
    let total = terms.iter().sum();
    Ok(IteratedDerivative { terms, total })
}

/// Report of the iterated-derivative limit study.
#[derive(Clone, Debug, Serialize)]
pub struct IteratedLimitReport {
    pub limit: f64,
    pub actions: Vec<f64>,
    pub gaps: Vec<f64>,
    /// Fitted per-step contraction of the gaps (0 when they vanish).
    pub decay_rate: f64,
    pub final_gap: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Checks that `∂P^k(mu; rho, f)[nu - mu] → (nu - mu)(f)` as `k` grows.
pub fn iterated_derivative_limit_check(
    family: &KernelFamily,
    mu: &GridDensity,
    nu: &GridDensity,
    start: &Start,
    f: &[f64],
    k_max: usize,
    tol: f64,
) -> Result<IteratedLimitReport> {
    let kernel = family.at(mu)?;
    let chi = SignedGridFunction::difference(nu, mu)?;
    let limit = mu.mesh().integral(&chi.values().iter().zip(f).map(|(a, b)| a * b).collect::<Vec<_>>());
    let mut actions = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        actions.push(iterated_derivative(&kernel, k, nu, start, f, DerivativeOptions::unbounded())?.total);
    }
    let gaps: Vec<f64> = actions.iter().map(|a| (a - limit).abs()).collect();
    let scale = limit.abs().max(1e-300);
    let final_gap = *gaps.last().unwrap_or(&f64::INFINITY);
    let decay_rate = crate::stats::log_linear_rate(&gaps, 1, 1e-14 * scale);
    let blown_up = gaps.iter().any(|g| !g.is_finite());
    let pass = !blown_up && final_gap < tol && decay_rate < 1.0;
    Ok(IteratedLimitReport { limit, actions, gaps, decay_rate, final_gap, tolerance: tol, pass })
}

/// Worst violation of `-(f - P f)(x) <= -1 + b 1_C(x)`.
#[derive(Clone, Debug, Serialize)]
pub struct DriftDerivativeReport {
    pub worst_violation: f64,
    pub worst_node: usize,
    pub pass: bool,
}

/// Drift condition through the generator identity.
pub fn drift_via_derivative(kernel: &Kernel, f: &[f64], in_c: &[bool], b: f64) -> Result<DriftDerivativeReport> {
    kernel.mesh().ensure_len(in_c.len(), "set indicator")?;
    if let Some(i) = f.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(invalid(format!("drift function must be finite and nonnegative (node {i})")));
    }
    let gen = generator_density(kernel, f)?;
    let mut worst = (0, f64::NEG_INFINITY);
    for (i, g) in gen.iter().enumerate() {
        let v = -g + 1.0 - if in_c[i] { b } else { 0.0 };
        if v > worst.1 {
            worst = (i, v);
        }
    }
    Ok(DriftDerivativeReport { worst_violation: worst.1, worst_node: worst.0, pass: worst.1 <= 1e-12 })
}

/// Dominated-integrand diagnostic for exchanging `d/dt` and the integrals.
#[derive(Clone, Debug, Serialize)]
pub struct InterchangeMargin {
    /// Max over `t ∈ {0, 1/2, 1}` of the integrand mass.
    pub integrand_mass: f64,
    /// Mass of the `t`-free dominating function (Hastings only).
    pub dominating_mass: Option<f64>,
}

/// For Hastings kernels the integrand is
/// `V(w) |g'(r_t(u,w))| q(w,u) |chi(w) mu_t(u) - chi(u) mu_t(w)| / mu_t(u)^2 rho(u)`
/// and it is dominated by `c V(w) (mu(w)nu(u)/mu(u)^2 + mu(w)nu(u)/nu(u)^2 +
/// nu(w)mu(u)/mu(u)^2 + nu(w)mu(u)/nu(u)^2) q(w,u) rho(u)` with `c = sup |g'|`.
/// Other families report `∫ V |d/dt (rho P_t)|` by a one-sided difference.
pub fn interchange_margin(
    family: &KernelFamily,
    mu: &GridDensity,
    nu: &GridDensity,
    rho: &GridDensity,
    v: &crate::measures::WeightFunction,
) -> Result<InterchangeMargin> {
    let curve = ContaminationCurve::new(mu.clone(), nu.clone())?;
    let chi = curve.direction();
    let chi = chi.values();
    let vv = v.on_mesh(mu.mesh());
    let w = mu.mesh().weights();
    let r = rho.values();
    let ts = [0.0, 0.5, 1.0];
    match family {
        KernelFamily::Hastings { proposal, balancing } => {
            let n = w.len();
            let mut integrand_mass: f64 = 0.0;
            let mut c: f64 = 0.0;
            for t in ts {
                let mt = curve.at(t)?.floored();
                let mut s = 0.0;
                for u in 0..n {
                    for z in 0..n {
                        if u == z {
                            continue;
                        }
                        let gp = balancing.derivative_bound(crate::kernels::ratio(&mt, proposal, u, z))?;
                        c = c.max(gp);
                        s += w[u] * w[z] * vv[z] * gp * proposal.density(z, u) * (chi[z] * mt[u] - chi[u] * mt[z]).abs()
                            / (mt[u] * mt[u])
                            * r[u];
                    }
                }
                integrand_mass = integrand_mass.max(s);
            }
            let (m, nn) = (mu.floored(), nu.floored());
            let mut s = 0.0;
            for u in 0..n {
                for z in 0..n {
                    let dom = m[z] * nn[u] / (m[u] * m[u])
                        + m[z] * nn[u] / (nn[u] * nn[u])
                        + nn[z] * m[u] / (m[u] * m[u])
                        + nn[z] * m[u] / (nn[u] * nn[u]);
                    s += w[u] * w[z] * vv[z] * c * dom * proposal.density(z, u) * r[u];
                }
            }
            Ok(InterchangeMargin { integrand_mass, dominating_mass: Some(s) })
        }
        _ => {
            let dt = 1e-4;
            let mut integrand_mass: f64 = 0.0;
            for t in ts {
                let (lo, hi) = if t + dt <= 1.0 { (t, t + dt) } else { (t - dt, t) };
                let a = family.at(&curve.at(lo)?)?.propagate(&rho.masses())?;
                let b = family.at(&curve.at(hi)?)?.propagate(&rho.masses())?;
                let s: f64 = (0..a.len()).map(|i| vv[i] * ((b[i] - a[i]) / dt).abs()).sum();
                integrand_mass = integrand_mass.max(s);
            }
            Ok(InterchangeMargin { integrand_mass, dominating_mass: None })
        }
    }
}
