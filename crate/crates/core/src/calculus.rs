//! The fundamental theorem along the contamination curve, its pushforward
//! form, and Lipschitz constants for the mean-value inequalities.
//!
//! Orientation: with `mu_t = (1-t) mu + t nu`,
//! `P_nu(rho, f) - P_mu(rho, f) = ∫_0^1 ∂P_{mu_t}(rho, f)[nu - mu] dt`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::derivative::{derivative, DerivativeOptions};
use crate::error::{invalid, Error, Result};
use crate::kernels::{iterate_kernel, ratio, BalancingFunction, KernelFamily, Start};
use crate::measures::{
    simpson_rule, weighted_abs_mass, ContaminationCurve, Grid1D, GridDensity, Mesh, SignedGridFunction,
    WeightFunction,
};

/// Outcome of an FTC check.
#[derive(Clone, Debug, Serialize)]
pub struct FtcReport {
    /// `P_nu(rho, f) - P_mu(rho, f)`.
    pub lhs: f64,
    /// Simpson quadrature of the derivative actions.
    pub rhs: f64,
    pub residual: f64,
    pub t_nodes: Vec<f64>,
    /// Integrand at each node.
    pub integrand: Vec<f64>,
}

fn at_t<T>(t: f64, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::WarmStart { .. } | Error::Precondition(_) => Error::Precondition(format!("at t = {t}: {e}")),
        other => other,
    })
}

/// Checks the FTC with `t_nodes` Simpson nodes.
pub fn verify_ftc(
    family: &KernelFamily,
    mu: &GridDensity,
    nu: &GridDensity,
    start: &Start,
    f: &[f64],
    t_nodes: usize,
    opts: DerivativeOptions,
) -> Result<FtcReport> {
    if t_nodes < 5 {
        return Err(invalid("the FTC check needs at least 5 nodes"));
    }
    let (ts, ws) = simpson_rule(t_nodes)?;
    let curve = ContaminationCurve::new(mu.clone(), nu.clone())?;
    let chi = curve.direction();
    let integrand = ts
        .par_iter()
        .map(|&t| {
            let k = family.at(&curve.at(t)?)?;
            at_t(t, derivative(&k, start, f, opts))?.action(&chi)
        })
        .collect::<Result<Vec<f64>>>()?;
    let rhs = integrand.iter().zip(&ws).map(|(a, w)| a * w).sum();
    let p_mu = iterate_kernel(&family.at(mu)?, start, f, 1)?;
    let p_nu = iterate_kernel(&family.at(nu)?, start, f, 1)?;
    let lhs = p_nu - p_mu;
    Ok(FtcReport { lhs, rhs, residual: (lhs - rhs).abs(), t_nodes: ts, integrand })
}

/// Smooth increasing map of a 1-D interval into itself.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Transport {
    Identity,
    /// `y + shift * s(y)`, where the taper `s` is 1 on `[lower + margin,
    /// upper - margin]` and falls to 0 at the ends as a squared cosine.
    TaperedShift { shift: f64, margin: f64 },
}

impl Transport {
    fn taper(grid: &Grid1D, margin: f64, y: f64) -> (f64, f64) {
        let (a, b) = (grid.lower(), grid.upper());
        let half_pi = std::f64::consts::FRAC_PI_2;
        let edge = |d: f64| {
            // d is the distance into the margin band, in [0, margin].
            let u = half_pi * d / margin;
            (u.cos().powi(2), half_pi / margin * 2.0 * u.cos() * u.sin())
        };
        if y < a + margin {
            let (s, ds) = edge(a + margin - y);
            (s, ds)
        } else if y > b - margin {
            let (s, ds) = edge(y - (b - margin));
            (s, -ds)
        } else {
            (1.0, 0.0)
        }
    }

    /// `(T(y), T'(y))`.
    pub fn eval(&self, grid: &Grid1D, y: f64) -> (f64, f64) {
        match self {
            Self::Identity => (y, 1.0),
            Self::TaperedShift { shift, margin } => {
                let (s, ds) = Self::taper(grid, *margin, y);
                (y + shift * s, 1.0 + shift * ds)
            }
        }
    }

    /// Checks monotonicity and that the interval maps into itself.
    pub fn validate(&self, grid: &Grid1D) -> Result<()> {
        if let Self::TaperedShift { margin, .. } = self {
            if !(*margin > 0.0 && 2.0 * margin < grid.upper() - grid.lower()) {
                return Err(Error::Precondition("taper margin does not fit the grid".into()));
            }
        }
        let fine = grid.refined(8);
        for y in fine.nodes() {
            let (ty, d) = self.eval(grid, y);
            if !(d > 0.0) {
                return Err(Error::Precondition(format!("transport is not increasing at {y}")));
            }
            if ty < grid.lower() - 1e-12 || ty > grid.upper() + 1e-12 {
                return Err(Error::Precondition(format!("transport leaves the interval at {y}")));
            }
        }
        Ok(())
    }

    fn inverse(&self, grid: &Grid1D, y: f64) -> f64 {
        if let Self::Identity = self {
            return y;
        }
        let (mut lo, mut hi) = (grid.lower(), grid.upper());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.eval(grid, mid).0 < y {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * (1.0 + y.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Density of the pushforward of `mu`, renormalized on the grid.
    pub fn pushforward(&self, mu: &GridDensity) -> Result<GridDensity> {
        let grid = *mu.mesh().line_grid()?;
        self.validate(&grid)?;
        let values = grid
            .nodes()
            .into_iter()
            .map(|y| {
                let x = self.inverse(&grid, y);
                let (_, d) = self.eval(&grid, x);
                mu.interpolate_smooth(x) / d
            })
            .collect();
        GridDensity::new(grid, values)
    }
}

impl GridDensity {
    /// Cubic (four-point Lagrange) interpolation on a 1-D grid, clamped at 0.
    pub fn interpolate_smooth(&self, x: f64) -> f64 {
        match self.mesh().as_line() {
            Some(g) if g.contains(x) => cubic(g, self.values(), x).max(0.0),
            _ => 0.0,
        }
    }
}

fn cubic(g: &Grid1D, v: &[f64], x: f64) -> f64 {
    let (i, s) = g.bracket(x);
    let n = v.len();
    if s == 0.0 {
        return v[i];
    }
    let i0 = i.saturating_sub(1).min(n - 4);
    let u = (x - g.node(i0)) / g.spacing();
    let mut out = 0.0;
    for a in 0..4 {
        let mut l = 1.0;
        for b in 0..4 {
            if a != b {
                l *= (u - b as f64) / (a as f64 - b as f64);
            }
        }
        out += l * v[i0 + a];
    }
    out
}

/// Fourth-order central differences, dropping to second order near the ends.
fn spatial_derivative(g: &Grid1D, d: &[f64]) -> Vec<f64> {
    let n = d.len();
    let h = g.spacing();
    (0..n)
        .map(|i| {
            if i >= 2 && i + 2 < n {
                (d[i - 2] - 8.0 * d[i - 1] + 8.0 * d[i + 1] - d[i + 2]) / (12.0 * h)
            } else if i >= 1 && i + 1 < n {
                (d[i + 1] - d[i - 1]) / (2.0 * h)
            } else if i == 0 {
                (-3.0 * d[0] + 4.0 * d[1] - d[2]) / (2.0 * h)
            } else {
                (3.0 * d[n - 1] - 4.0 * d[n - 2] + d[n - 3]) / (2.0 * h)
            }
        })
        .collect()
}

/// FTC along `mu_t = (1-t) mu + t T_*mu` in the transport form
/// `∫_0^1 ∫ (T(y) - y) ∫_0^1 D_t'(y + s (T(y) - y)) ds mu(dy) dt`.
pub fn verify_ftc_intrinsic(
    family: &KernelFamily,
    mu: &GridDensity,
    transport: &Transport,
    rho: &GridDensity,
    f: &[f64],
    t_nodes: usize,
    s_nodes: usize,
    opts: DerivativeOptions,
) -> Result<FtcReport> {
    let grid = *mu.mesh().line_grid()?;
    let nu = transport.pushforward(mu)?;
    let (ts, wt) = simpson_rule(t_nodes)?;
    let (ss, ws) = simpson_rule(s_nodes)?;
    let curve = ContaminationCurve::new(mu.clone(), nu.clone())?;
    let nodes = grid.nodes();
    let masses = mu.masses();
    let start = Start::Density(rho.clone());
    let integrand = ts
        .par_iter()
        .map(|&t| {
            let k = family.at(&curve.at(t)?)?;
            let d = at_t(t, derivative(&k, &start, f, opts))?;
            let dp = spatial_derivative(&grid, &d.density_part);
            let mut acc = 0.0;
            for (i, y) in nodes.iter().enumerate() {
                let jump = transport.eval(&grid, *y).0 - y;
                if jump == 0.0 {
                    continue;
                }
                let inner: f64 = ss.iter().zip(&ws).map(|(s, w)| w * cubic(&grid, &dp, y + s * jump)).sum();
                acc += masses[i] * jump * inner;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<f64>>>()?;
    let rhs = integrand.iter().zip(&wt).map(|(a, w)| a * w).sum();
    let p_mu = iterate_kernel(&family.at(mu)?, &start, f, 1)?;
    let p_nu = iterate_kernel(&family.at(&nu)?, &start, f, 1)?;
    let lhs = p_nu - p_mu;
    Ok(FtcReport { lhs, rhs, residual: (lhs - rhs).abs(), t_nodes: ts, integrand })
}

/// How the singular constant of a Gibbs point start is integrated in `t`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SingularTimeForm {
    /// `∫_0^1 ... dt` like the other constants.
    #[default]
    Integrated,
    /// Evaluated at `t = 0` only.
    Initial,
}

/// Options for the mean-value constants.
#[derive(Clone, Copy, Debug)]
pub struct MviOptions {
    pub t_nodes: usize,
    pub warm_start_ceiling: f64,
    pub singular_time_form: SingularTimeForm,
}

impl Default for MviOptions {
    fn default() -> Self {
        Self {
            t_nodes: 17,
            warm_start_ceiling: crate::derivative::DEFAULT_WARM_START_CEILING,
            singular_time_form: SingularTimeForm::Integrated,
        }
    }
}

/// Measure of `|mu - nu|` that multiplies the singular constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SingularNorm {
    /// No singular contribution.
    None,
    /// `|mu(x) - nu(x)|`.
    PointValue(usize),
    /// `∫ V(y1, x2) |mu - nu|(y1, x2) dy1` along the line through `x`.
    Section(usize),
}

/// Lipschitz constants of a mean-value inequality.
#[derive(Clone, Debug, Serialize)]
pub struct MviConstants {
    pub m_rho: f64,
    pub m_perp: f64,
    pub singular_norm: SingularNorm,
    pub v_tag: String,
    pub t_nodes: Vec<f64>,
}

impl MviConstants {
    /// `m_rho ‖mu - nu‖_V + m_perp * (singular norm)`.
    pub fn bound(&self, mu: &GridDensity, nu: &GridDensity, v: &WeightFunction) -> Result<f64> {
        let chi = SignedGridFunction::difference(nu, mu)?;
        let vn = crate::measures::v_norm_measure(&chi, v)?;
        Ok(self.m_rho * vn + self.m_perp * singular_norm(self.singular_norm, &chi, v)?)
    }
}

fn singular_norm(kind: SingularNorm, chi: &SignedGridFunction, v: &WeightFunction) -> Result<f64> {
    Ok(match kind {
        SingularNorm::None => 0.0,
        SingularNorm::PointValue(x) => chi.values()[x].abs(),
        SingularNorm::Section(x) => {
            let g = chi.mesh().plane_grid()?;
            let (_, x2) = g.split(x);
            let w1 = g.first.weights();
            let vv = v.on_mesh(chi.mesh());
            (0..g.first.len())
                .map(|y1| {
                    let k = g.index(y1, x2);
                    w1[y1] * vv[k] * chi.values()[k].abs()
                })
                .sum()
        }
    })
}

fn sup_ratio(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, f64::max)
}

/// Constants for any supported family; the balancing function selects the
/// Hastings or Metropolis–Hastings forms.
pub fn mvi_constants(
    family: &KernelFamily,
    mu: &GridDensity,
    nu: &GridDensity,
    start: &Start,
    v: &WeightFunction,
    opts: MviOptions,
) -> Result<MviConstants> {
    v.validate(mu.mesh())?;
    let (ts, wt) = simpson_rule(opts.t_nodes)?;
    let curve = ContaminationCurve::new(mu.clone(), nu.clone())?;
    let vv = v.on_mesh(mu.mesh());
    let per_t = ts
        .par_iter()
        .map(|&t| {
            let mt = curve.at(t)?;
            at_t(t, constants_at(family, &mt, start, &vv, opts.warm_start_ceiling))
        })
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let m_rho = per_t.iter().zip(&wt).map(|(c, w)| w * c.0).sum();
    let m_perp = match (family, opts.singular_time_form) {
        (KernelFamily::Gibbs, SingularTimeForm::Initial) => per_t[0].1,
        _ => per_t.iter().zip(&wt).map(|(c, w)| w * c.1).sum(),
    };
    let singular_norm = match (family, start) {
        (_, Start::Density(_)) => SingularNorm::None,
        (KernelFamily::Gibbs, Start::Point(x)) => SingularNorm::Section(*x),
        (KernelFamily::Exact, Start::Point(_)) => SingularNorm::None,
        (KernelFamily::Hastings { .. }, Start::Point(x)) => SingularNorm::PointValue(*x),
    };
    Ok(MviConstants { m_rho, m_perp, singular_norm, v_tag: v.tag(), t_nodes: ts })
}

/// Hastings constants with a differentiable balancing function.
pub fn hastings_mvi_constants(
    family: &KernelFamily,
    mu: &GridDensity,
    nu: &GridDensity,
    start: &Start,
    v: &WeightFunction,
    opts: MviOptions,
) -> Result<MviConstants> {
    match family {
        KernelFamily::Hastings { balancing, .. } if balancing.has_derivative() => {
            mvi_constants(family, mu, nu, start, v, opts)
        }
        _ => Err(Error::Precondition("expected a Hastings family with a differentiable balancing function".into())),
    }
}

/// Metropolis–Hastings constants (`|g'| <= 1`, indicator of `r <= 1`).
pub fn mh_mvi_constants(
    family: &KernelFamily,
    mu: &GridDensity,
    nu: &GridDensity,
    start: &Start,
    v: &WeightFunction,
    opts: MviOptions,
) -> Result<MviConstants> {
    match family {
        KernelFamily::Hastings { balancing: BalancingFunction::MinOne, .. } => {
            mvi_constants(family, mu, nu, start, v, opts)
        }
        _ => Err(Error::Precondition("expected a Metropolis–Hastings family".into())),
    }
}

/// Gibbs constants.
pub fn gibbs_mvi_constants(
    mu: &GridDensity,
    nu: &GridDensity,
    start: &Start,
    v: &WeightFunction,
    opts: MviOptions,
) -> Result<MviConstants> {
    mvi_constants(&KernelFamily::Gibbs, mu, nu, start, v, opts)
}

/// Integrands of `(m_rho, m_perp)` at one point of the curve.
fn constants_at(family: &KernelFamily, mt: &GridDensity, start: &Start, vv: &[f64], ceiling: f64) -> Result<(f64, f64)> {
    match family {
        KernelFamily::Hastings { proposal, balancing } => {
            let mu = mt.floored();
            let w = mt.mesh().weights();
            let n = mu.len();
            let gp = |a: usize, b: usize| balancing.derivative_bound(ratio(&mu, proposal, a, b));
            let gp_sup = |a: usize, b: usize| -> Result<f64> {
                // The limit argument uses sup_j |g_j'| <= 1 for the density terms.
                if matches!(balancing, BalancingFunction::MinOne) {
                    Ok(1.0)
                } else {
                    gp(a, b)
                }
            };
            match start {
                Start::Density(rho) => {
                    let r = rho.values();
                    let worst = r.iter().zip(&mu).map(|(a, m)| a / (m * m)).fold(0.0, f64::max);
                    if worst > ceiling {
                        return Err(Error::Precondition(format!(
                            "rho / mu_t^2 reaches {worst:.3e}, above the ceiling {ceiling:.3e}"
                        )));
                    }
                    let mut c = 0.0;
                    for z in 0..n {
                        let mut s1: f64 = 0.0;
                        let mut s2: f64 = 0.0;
                        for y in 0..n {
                            let a = (vv[y] + vv[z]) / vv[y];
                            s1 = s1.max(a * r[z] / mu[z] * proposal.density(y, z) * gp_sup(z, y)?);
                            s2 = s2.max(a * mu[z] * proposal.density(z, y) * gp_sup(y, z)? * r[y] / (mu[y] * mu[y]));
                        }
                        c += w[z] * (s1 + s2);
                    }
                    Ok((c, 0.0))
                }
                Start::Point(x) => {
                    let x = *x;
                    let m_x = sup_ratio((0..n).map(|y| {
                        (vv[x] + vv[y]) / vv[y] * gp_sup(x, y).unwrap_or(f64::INFINITY) * proposal.density(y, x) / mu[x]
                    }));
                    let mut m_perp = 0.0;
                    for z in 0..n {
                        m_perp += w[z] * (vv[x] + vv[z]) * mu[z] / (mu[x] * mu[x]) * proposal.density(z, x) * gp(x, z)?;
                    }
                    Ok((m_x, m_perp))
                }
            }
        }
        KernelFamily::Gibbs => {
            let k = crate::kernels::GibbsKernel::new(mt.clone())?;
            gibbs_constants_at(&k, start, vv, ceiling)
        }
        KernelFamily::Exact => {
            // P(x, .) = mu: |P_mu(rho, f) - P_nu(rho, f)| <= rho(1) ‖mu - nu‖_V.
            Ok((1.0, 0.0))
        }
    }
}

fn gibbs_constants_at(
    k: &crate::kernels::GibbsKernel,
    start: &Start,
    vv: &[f64],
    ceiling: f64,
) -> Result<(f64, f64)> {
    let g = *k.grid();
    let (n1, n2) = (g.first.len(), g.second.len());
    let (w1, w2) = k.weights();
    let (mu1, mu2) = (k.first_marginal(), k.second_marginal());
    let v = |a: usize, b: usize| vv[a * n2 + b];
    let vmin_given_first: Vec<f64> = (0..n1).map(|a| (0..n2).map(|b| v(a, b)).fold(f64::INFINITY, f64::min)).collect();
    let vmin_given_second: Vec<f64> = (0..n2).map(|b| (0..n1).map(|a| v(a, b)).fold(f64::INFINITY, f64::min)).collect();
    // m_V(y1) = ∫ V(y1, w2) mu_{2|1}(y1, dw2).
    let m_v: Vec<f64> = (0..n1).map(|a| (0..n2).map(|b| w2[b] * k.cond_second(a, b) * v(a, b)).sum()).collect();
    match start {
        Start::Density(rho) => {
            let mesh = rho.mesh();
            mesh.ensure_same(k.joint().mesh())?;
            let masses = rho.masses();
            let mut r2 = vec![0.0; n2];
            for (i, m) in masses.iter().enumerate() {
                r2[i % n2] += m;
            }
            let rho2: Vec<f64> = r2.iter().zip(w2).map(|(a, b)| a / b).collect();
            let worst = rho2.iter().zip(mu2).map(|(a, b)| a / b).fold(0.0, f64::max);
            if worst > ceiling {
                return Err(Error::Precondition(format!(
                    "rho_2 / mu_t,2 reaches {worst:.3e}, above the ceiling {ceiling:.3e}"
                )));
            }
            let lr: Vec<f64> = rho2.iter().zip(mu2).map(|(a, b)| a / b).collect();
            // Term 1: Σ_w2 ω sup_y V(y1,w2) mu_{2|1}(y1,w2) rho2(y2)/mu2(y2) / V(y).
            let mut t1 = 0.0;
            for b in 0..n2 {
                let mut s: f64 = 0.0;
                for y1 in 0..n1 {
                    let a = v(y1, b) * k.cond_second(y1, b);
                    for y2 in 0..n2 {
                        s = s.max(a * lr[y2] / v(y1, y2));
                    }
                }
                t1 += w2[b] * s;
            }
            // Term 2: Σ_w ωω V(w) mu_{2|1}(w1,w2) sup_y2 [lr(y2) mu_{1|2}(y2,w1) / min_y1 V(y1,y2)].
            let mut t2 = 0.0;
            for a in 0..n1 {
                let s = sup_ratio((0..n2).map(|y2| lr[y2] * k.cond_first(y2, a) / vmin_given_second[y2]));
                let inner: f64 = (0..n2).map(|b| w2[b] * v(a, b) * k.cond_second(a, b)).sum();
                t2 += w1[a] * inner * s;
            }
            // Term 3: Σ_u2 ω rho2(u2) sup_y1 mu_{1|2}(u2,y1)/mu1(y1).
            let mut t3 = 0.0;
            for u2 in 0..n2 {
                t3 += w2[u2] * rho2[u2] * sup_ratio((0..n1).map(|y1| k.cond_first(u2, y1) / mu1[y1]));
            }
            // Term 4: Σ_{u2,w2} ωω rho2(u2) sup_y1 V(y1,w2) mu_{1|2}(u2,y1) mu_{2|1}(y1,w2) / (mu1(y1) min_y2 V(y1,y2)).
            let mut t4 = 0.0;
            for u2 in 0..n2 {
                if rho2[u2] == 0.0 {
                    continue;
                }
                for b in 0..n2 {
                    let s = sup_ratio((0..n1).map(|y1| {
                        v(y1, b) * k.cond_first(u2, y1) * k.cond_second(y1, b) / (mu1[y1] * vmin_given_first[y1])
                    }));
                    t4 += w2[u2] * w2[b] * rho2[u2] * s;
                }
            }
            Ok((t1 + t2 + t3 + t4, 0.0))
        }
        Start::Point(x) => {
            let (_, x2) = g.split(*x);
            let m_x = sup_ratio((0..n1).flat_map(|y1| {
                let m_v = &m_v;
                (0..n2).map(move |y2| (v(y1, y2) + m_v[y1]) * k.cond_first(x2, y1) / (mu1[y1] * v(y1, y2)))
            }));
            let pv: f64 = (0..n1).map(|a| w1[a] * k.cond_first(x2, a) * m_v[a]).sum();
            let m_perp = sup_ratio((0..n1).map(|y1| (m_v[y1] + pv) / (mu2[x2] * v(y1, x2))));
            Ok((m_x, m_perp))
        }
    }
}

/// Random `f` with `|f| <= V`: `V` times a clipped trigonometric mixture.
pub fn random_bounded_function<R: Rng + ?Sized>(mesh: &Mesh, v: &WeightFunction, rng: &mut R) -> Vec<f64> {
    let terms: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(-1.0..1.0),
                rng.random_range(0.2..3.0),
                rng.random_range(-1.5..1.5),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let norm: f64 = terms.iter().map(|t| t.0.abs()).sum::<f64>().max(1e-12);
    mesh.tabulate(|p| {
        let s: f64 = terms.iter().map(|(a, w1, w2, ph)| a * (w1 * p[0] + w2 * p[1] + ph).sin()).sum();
        v.eval(p) * (s / norm).clamp(-1.0, 1.0)
    })
}

/// Randomized check of a mean-value inequality.
#[derive(Clone, Debug, Serialize)]
pub struct MviCheck {
    pub constants: MviConstants,
    pub bound: f64,
    /// `‖P_mu(start, ·) - P_nu(start, ·)‖_V`, the supremum over `|f| <= V`.
    pub exact_lhs: f64,
    pub trials: usize,
    pub empirical_max_ratio: f64,
    pub exact_ratio: f64,
    pub violations: usize,
}

/// Compares the bound with `|P_mu(start, f) - P_nu(start, f)|` for `trials`
/// random `f` and with the exact supremum.
pub fn check_mvi(
    family: &KernelFamily,
    mu: &GridDensity,
    nu: &GridDensity,
    start: &Start,
    v: &WeightFunction,
    trials: usize,
    seed: u64,
    opts: MviOptions,
) -> Result<MviCheck> {
    let constants = mvi_constants(family, mu, nu, start, v, opts)?;
    let bound = constants.bound(mu, nu, v)?;
    let (kmu, knu) = (family.at(mu)?, family.at(nu)?);
    let mesh = mu.mesh().clone();
    let m0 = start.masses(&mesh)?;
    let a = kmu.propagate(&m0)?;
    let b = knu.propagate(&m0)?;
    let vv = v.on_mesh(&mesh);
    let exact_lhs: f64 = a.iter().zip(&b).zip(&vv).map(|((x, y), v)| v * (x - y).abs()).sum();
    let diffs: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let f = random_bounded_function(&mesh, v, &mut rng);
            a.iter().zip(&b).zip(&f).map(|((x, y), f)| (x - y) * f).sum::<f64>().abs()
        })
        .collect();
    let ratio = |d: f64| if bound > 0.0 { d / bound } else if d > 0.0 { f64::INFINITY } else { 0.0 };
    let tol = 1e-12 * (1.0 + bound);
    let violations = diffs.iter().filter(|d| **d > bound + tol).count() + usize::from(exact_lhs > bound + tol);
    Ok(MviCheck {
        empirical_max_ratio: diffs.iter().map(|d| ratio(*d)).fold(0.0, f64::max),
        exact_ratio: ratio(exact_lhs),
        constants,
        bound,
        exact_lhs,
        trials,
        violations,
    })
}

/// Point-start constants over a set of starting nodes.
#[derive(Clone, Debug, Serialize)]
pub struct UniformBoundednessReport {
    pub nodes: Vec<usize>,
    pub m_x: Vec<f64>,
    pub m_perp_x: Vec<f64>,
    pub max_m_x: f64,
    pub max_m_perp_x: f64,
    pub finite: bool,
    /// Whether `M_x` at the outermost scanned node exceeds ten times its
    /// value at the innermost one.
    pub grows_toward_boundary: bool,
}

pub fn uniform_boundedness_scan(
    family: &KernelFamily,
    mu: &GridDensity,
    nu: &GridDensity,
    v: &WeightFunction,
    x_nodes: &[usize],
    opts: MviOptions,
) -> Result<UniformBoundednessReport> {
    let pairs = x_nodes
        .par_iter()
        .map(|&x| mvi_constants(family, mu, nu, &Start::Point(x), v, opts).map(|c| (c.m_rho, c.m_perp)))
        .collect::<Result<Vec<_>>>()?;
    let m_x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let m_perp_x: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let max_m_x = m_x.iter().copied().fold(0.0, f64::max);
    let max_m_perp_x = m_perp_x.iter().copied().fold(0.0, f64::max);
    let centre = |k: usize| {
        let p = mu.mesh().point(x_nodes[k]);
        p[0].abs() + p[1].abs()
    };
    let (mut inner, mut outer) = (0, 0);
    for k in 0..x_nodes.len() {
        if centre(k) < centre(inner) {
            inner = k;
        }
        if centre(k) > centre(outer) {
            outer = k;
        }
    }
    let grows_toward_boundary = !x_nodes.is_empty() && m_x[outer] > 10.0 * m_x[inner];
    Ok(UniformBoundednessReport {
        nodes: x_nodes.to_vec(),
        finite: max_m_x.is_finite() && max_m_perp_x.is_finite(),
        m_x,
        m_perp_x,
        max_m_x,
        max_m_perp_x,
        grows_toward_boundary,
    })
}

/// `rho(|chi|)`, the second half of the metric `‖chi‖_V + rho(|chi|)`.
pub fn rho_abs(rho: &GridDensity, chi: &SignedGridFunction) -> Result<f64> {
    rho.mesh().ensure_same(chi.mesh())?;
    Ok(weighted_abs_mass(rho.mesh(), chi.values(), rho.values()))
}
