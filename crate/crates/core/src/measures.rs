//! Grids, densities, signed measures and weighted norms.
//!
//! Everything lives on a uniform grid with composite trapezoid weights. A
//! density is stored by its node values; the measure it represents puts mass
//! `w_i * value_i` on node `i`. With that convention all kernels built later
//! are exact finite Markov matrices, so identities such as invariance hold to
//! rounding rather than to quadrature accuracy.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Floor applied to target values before forming ratios.
pub const POSITIVE_FLOOR: f64 = 1e-300;

/// Uniform grid on `[lower, upper]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    lower: f64,
    upper: f64,
    n_points: usize,
}

impl Grid1D {
    pub fn new(lower: f64, upper: f64, n_points: usize) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
            return Err(invalid(format!("grid bounds [{lower}, {upper}] are not an interval")));
        }
        if n_points < 3 {
            return Err(invalid(format!("grid needs at least 3 nodes, got {n_points}")));
        }
        Ok(Self { lower, upper, n_points })
    }

    /// Symmetric grid `[-half_width, half_width]`.
    pub fn symmetric(half_width: f64, n_points: usize) -> Result<Self> {
        Self::new(-half_width, half_width, n_points)
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        (self.upper - self.lower) / (self.n_points - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.upper
        } else {
            self.lower + i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.node(i)).collect()
    }

    /// Composite trapezoid weights.
    pub fn weights(&self) -> Vec<f64> {
        let h = self.spacing();
        let mut w = vec![h; self.n_points];
        w[0] = 0.5 * h;
        w[self.n_points - 1] = 0.5 * h;
        w
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    /// Index of the node closest to `x` (clamped to the grid).
    pub fn nearest(&self, x: f64) -> usize {
        let u = ((x - self.lower) / self.spacing()).round();
        u.clamp(0.0, (self.n_points - 1) as f64) as usize
    }

    /// Cell containing `x` and the fractional position inside it.
    pub fn bracket(&self, x: f64) -> (usize, f64) {
        let u = ((x - self.lower) / self.spacing()).clamp(0.0, (self.n_points - 1) as f64);
        let i = (u.floor() as usize).min(self.n_points - 2);
        (i, u - i as f64)
    }

    /// Grid with `factor` times as many cells on the same interval.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            n_points: (self.n_points - 1) * factor.max(1) + 1,
            ..*self
        }
    }
}

/// Product of two 1-D grids; node `(i1, i2)` is stored at `i1 * n2 + i2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub first: Grid1D,
    pub second: Grid1D,
}

impl Grid2D {
    pub fn new(first: Grid1D, second: Grid1D) -> Self {
        Self { first, second }
    }

    pub fn len(&self) -> usize {
        self.first.len() * self.second.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, i1: usize, i2: usize) -> usize {
        i1 * self.second.len() + i2
    }

    pub fn split(&self, k: usize) -> (usize, usize) {
        (k / self.second.len(), k % self.second.len())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Shape {
    Line(Grid1D),
    Plane(Grid2D),
}

/// A 1-D or 2-D grid together with its quadrature weights.
#[derive(Clone, Debug)]
pub struct Mesh {
    shape: Shape,
    weights: Arc<[f64]>,
}

impl PartialEq for Mesh {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape
    }
}

impl From<Grid1D> for Mesh {
    fn from(g: Grid1D) -> Self {
        Mesh::line(g)
    }
}

impl From<Grid2D> for Mesh {
    fn from(g: Grid2D) -> Self {
        Mesh::plane(g)
    }
}

impl Mesh {
    pub fn line(grid: Grid1D) -> Self {
        Self {
            shape: Shape::Line(grid),
            weights: grid.weights().into(),
        }
    }

    pub fn plane(grid: Grid2D) -> Self {
        let (w1, w2) = (grid.first.weights(), grid.second.weights());
        let w: Vec<f64> = w1.iter().flat_map(|a| w2.iter().map(move |b| a * b)).collect();
        Self {
            shape: Shape::Plane(grid),
            weights: w.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        match self.shape {
            Shape::Line(_) => 1,
            Shape::Plane(_) => 2,
        }
    }

    pub fn as_line(&self) -> Option<&Grid1D> {
        match &self.shape {
            Shape::Line(g) => Some(g),
            Shape::Plane(_) => None,
        }
    }

    pub fn as_plane(&self) -> Option<&Grid2D> {
        match &self.shape {
            Shape::Plane(g) => Some(g),
            Shape::Line(_) => None,
        }
    }

    pub fn line_grid(&self) -> Result<&Grid1D> {
        self.as_line().ok_or_else(|| Error::GridMismatch("expected a 1-D grid".into()))
    }

    pub fn plane_grid(&self) -> Result<&Grid2D> {
        self.as_plane().ok_or_else(|| Error::GridMismatch("expected a 2-D grid".into()))
    }

    /// Coordinates of node `k`; the second entry is 0 on a line.
    pub fn point(&self, k: usize) -> [f64; 2] {
        match &self.shape {
            Shape::Line(g) => [g.node(k), 0.0],
            Shape::Plane(g) => {
                let (i1, i2) = g.split(k);
                [g.first.node(i1), g.second.node(i2)]
            }
        }
    }

    /// Evaluate `f` at every node.
    pub fn tabulate(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|k| f(self.point(k))).collect()
    }

    pub fn ensure_same(&self, other: &Mesh) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{:?} vs {:?}", self.shape, other.shape)))
        }
    }

    pub fn ensure_len(&self, n: usize, what: &str) -> Result<()> {
        if n == self.len() {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{what} has {n} values, grid has {}", self.len())))
        }
    }

    /// Trapezoid integral of node values.
    pub fn integral(&self, values: &[f64]) -> f64 {
        values.iter().zip(self.weights.iter()).map(|(v, w)| v * w).sum()
    }
}

fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(invalid(format!("{what} is not finite at node {i}"))),
        None => Ok(()),
    }
}

/// Probability density on a mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDensity {
    mesh: Mesh,
    values: Arc<[f64]>,
}

impl GridDensity {
    /// Normalizes `values` to unit trapezoid mass.
    pub fn new(mesh: impl Into<Mesh>, values: Vec<f64>) -> Result<Self> {
        let mesh = mesh.into();
        mesh.ensure_len(values.len(), "density")?;
        ensure_finite(&values, "density")?;
        if let Some(i) = values.iter().position(|v| *v < 0.0) {
            return Err(invalid(format!("density is negative at node {i}")));
        }
        let mass = mesh.integral(&values);
        if mass <= 0.0 || !mass.is_finite() {
            return Err(invalid("density has no mass on the grid"));
        }
        let values: Vec<f64> = values.into_iter().map(|v| v / mass).collect();
        Ok(Self { mesh, values: values.into() })
    }

    /// Accepts already normalized values without rescaling.
    pub fn from_normalized(mesh: impl Into<Mesh>, values: Vec<f64>) -> Result<Self> {
        let mesh = mesh.into();
        mesh.ensure_len(values.len(), "density")?;
        ensure_finite(&values, "density")?;
        if let Some(i) = values.iter().position(|v| *v < 0.0) {
            return Err(invalid(format!("density is negative at node {i}")));
        }
        let mass = mesh.integral(&values);
        if (mass - 1.0).abs() > 1e-10 {
            return Err(invalid(format!("density mass {mass} differs from 1")));
        }
        Ok(Self { mesh, values: values.into() })
    }

    pub fn from_fn(mesh: impl Into<Mesh>, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let mesh = mesh.into();
        let values = mesh.tabulate(f);
        Self::new(mesh, values)
    }

    /// Truncated and renormalized normal density.
    pub fn gaussian(grid: Grid1D, mean: f64, sd: f64) -> Result<Self> {
        if !(sd > 0.0) {
            return Err(Error::OutOfRange { what: "sd", value: sd, range: "(0, inf)" });
        }
        Self::from_fn(grid, |p| {
            let z = (p[0] - mean) / sd;
            (-0.5 * z * z).exp()
        })
    }

    /// Truncated bivariate normal with correlation `corr`.
    pub fn gaussian_2d(grid: Grid2D, mean: [f64; 2], sd: [f64; 2], corr: f64) -> Result<Self> {
        if !(sd[0] > 0.0 && sd[1] > 0.0) {
            return Err(invalid("bivariate normal needs positive scales"));
        }
        if !(corr.abs() < 1.0) {
            return Err(Error::OutOfRange { what: "correlation", value: corr, range: "(-1, 1)" });
        }
        let k = 1.0 / (1.0 - corr * corr);
        Self::from_fn(grid, |p| {
            let a = (p[0] - mean[0]) / sd[0];
            let b = (p[1] - mean[1]) / sd[1];
            (-0.5 * k * (a * a - 2.0 * corr * a * b + b * b)).exp()
        })
    }

    /// Normalized point mass spread as a triangle of half-width `half_width`
    /// nodes centred on node `center` of a 1-D grid.
    pub fn triangle_spike(grid: Grid1D, center: usize, half_width: usize) -> Result<Self> {
        if center >= grid.len() {
            return Err(invalid(format!("spike centre {center} is off the grid")));
        }
        let hw = half_width.max(1) as f64;
        let values = (0..grid.len())
            .map(|i| (1.0 - (i as f64 - center as f64).abs() / hw).max(0.0))
            .collect();
        Self::new(grid, values)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.mesh.integral(&self.values)
    }

    pub fn is_positive(&self) -> bool {
        self.values.iter().all(|v| *v > 0.0)
    }

    /// Values with the positivity floor applied.
    pub fn floored(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.max(POSITIVE_FLOOR)).collect()
    }

    /// Node masses `w_i * value_i`.
    pub fn masses(&self) -> Vec<f64> {
        self.values.iter().zip(self.mesh.weights()).map(|(v, w)| v * w).collect()
    }

    /// Piecewise-linear interpolation on a 1-D grid; zero outside it.
    pub fn interpolate(&self, x: f64) -> f64 {
        match self.mesh.as_line() {
            Some(g) if g.contains(x) => {
                let (i, s) = g.bracket(x);
                self.values[i] * (1.0 - s) + self.values[i + 1] * s
            }
            _ => 0.0,
        }
    }

    /// First and second marginals of a 2-D density.
    pub fn marginals(&self) -> Result<(GridDensity, GridDensity)> {
        let g = self.mesh.plane_grid()?;
        let (n1, n2) = (g.first.len(), g.second.len());
        let (w1, w2) = (g.first.weights(), g.second.weights());
        let mut m1 = vec![0.0; n1];
        let mut m2 = vec![0.0; n2];
        for i1 in 0..n1 {
            for i2 in 0..n2 {
                let v = self.values[i1 * n2 + i2];
                m1[i1] += w2[i2] * v;
                m2[i2] += w1[i1] * v;
            }
        }
        Ok((GridDensity::new(g.first, m1)?, GridDensity::new(g.second, m2)?))
    }

    /// Expectation of a grid function; same as [`integrate`].
    pub fn expect(&self, f: &[f64]) -> Result<f64> {
        integrate(f, self)
    }
}

/// Real function on a mesh representing a signed measure by its density.
#[derive(Clone, Debug, PartialEq)]
pub struct SignedGridFunction {
    mesh: Mesh,
    values: Vec<f64>,
}

impl SignedGridFunction {
    pub fn new(mesh: impl Into<Mesh>, values: Vec<f64>) -> Result<Self> {
        let mesh = mesh.into();
        mesh.ensure_len(values.len(), "signed function")?;
        ensure_finite(&values, "signed function")?;
        Ok(Self { mesh, values })
    }

    /// `nu - mu`, a zero-mass signed measure.
    pub fn difference(nu: &GridDensity, mu: &GridDensity) -> Result<Self> {
        nu.mesh.ensure_same(&mu.mesh)?;
        let values = nu.values.iter().zip(mu.values.iter()).map(|(a, b)| a - b).collect();
        Ok(Self { mesh: mu.mesh.clone(), values })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mass(&self) -> f64 {
        self.mesh.integral(&self.values)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.mesh.ensure_same(&other.mesh)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Self { mesh: self.mesh.clone(), values })
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            mesh: self.mesh.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }
}

/// Weight `V >= 1` defining the weighted norms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightFunction {
    /// `V = 1`; the measure norm is total variation with value 2 for
    /// mutually singular probabilities.
    Constant,
    /// `V = 1 + |x|^2`.
    Quadratic,
    /// `V = exp(gamma * |x|_1)`.
    ExpAbs { gamma: f64 },
    /// `V = base^alpha`.
    Power { base: Box<WeightFunction>, alpha: f64 },
}

impl WeightFunction {
    pub fn eval(&self, p: [f64; 2]) -> f64 {
        match self {
            Self::Constant => 1.0,
            Self::Quadratic => 1.0 + p[0] * p[0] + p[1] * p[1],
            Self::ExpAbs { gamma } => (gamma * (p[0].abs() + p[1].abs())).exp(),
            Self::Power { base, alpha } => base.eval(p).powf(*alpha),
        }
    }

    pub fn on_mesh(&self, mesh: &Mesh) -> Vec<f64> {
        mesh.tabulate(|p| self.eval(p))
    }

    pub fn pow(&self, alpha: f64) -> Self {
        Self::Power { base: Box::new(self.clone()), alpha }
    }

    pub fn tag(&self) -> String {
        match self {
            Self::Constant => "const-1".into(),
            Self::Quadratic => "one-plus-square".into(),
            Self::ExpAbs { gamma } => format!("exp-gamma-abs(gamma={gamma})"),
            Self::Power { base, alpha } => format!("{}^{alpha}", base.tag()),
        }
    }

    /// Checks `V >= 1` on every node.
    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        if let Self::Power { alpha, .. } = self {
            if !(*alpha > 0.0) {
                return Err(Error::OutOfRange { what: "alpha", value: *alpha, range: "(0, inf)" });
            }
        }
        let v = self.on_mesh(mesh);
        match v.iter().position(|x| !(x.is_finite() && *x >= 1.0)) {
            Some(i) => Err(invalid(format!("weight {} is not >= 1 at node {i}", self.tag()))),
            None => Ok(()),
        }
    }
}

/// `max |f| / V` over the nodes.
pub fn v_norm_function(mesh: &Mesh, f: &[f64], v: &WeightFunction) -> Result<f64> {
    mesh.ensure_len(f.len(), "function")?;
    ensure_finite(f, "function")?;
    Ok(f.iter()
        .zip(v.on_mesh(mesh))
        .map(|(a, b)| a.abs() / b)
        .fold(0.0, f64::max))
}

/// `∫ V |chi|`, the dual norm of `v_norm_function`.
pub fn v_norm_measure(chi: &SignedGridFunction, v: &WeightFunction) -> Result<f64> {
    let vv = v.on_mesh(&chi.mesh);
    Ok(weighted_abs_mass(&chi.mesh, &chi.values, &vv))
}

pub(crate) fn weighted_abs_mass(mesh: &Mesh, density: &[f64], v: &[f64]) -> f64 {
    density
        .iter()
        .zip(v)
        .zip(mesh.weights())
        .map(|((c, v), w)| w * v * c.abs())
        .sum()
}

/// Trapezoid approximation of `∫ f dρ`.
pub fn integrate(f: &[f64], rho: &GridDensity) -> Result<f64> {
    rho.mesh.ensure_len(f.len(), "function")?;
    let s = rho.mesh.integral(&f.iter().zip(rho.values.iter()).map(|(a, b)| a * b).collect::<Vec<_>>());
    if s.is_nan() {
        return Err(invalid("integral is NaN"));
    }
    Ok(s)
}

/// The segment `(1-t) mu + t nu`.
#[derive(Clone, Debug)]
pub struct ContaminationCurve {
    mu: GridDensity,
    nu: GridDensity,
}

impl ContaminationCurve {
    pub fn new(mu: GridDensity, nu: GridDensity) -> Result<Self> {
        mu.mesh.ensure_same(&nu.mesh)?;
        Ok(Self { mu, nu })
    }

    pub fn mu(&self) -> &GridDensity {
        &self.mu
    }

    pub fn nu(&self) -> &GridDensity {
        &self.nu
    }

    pub fn at(&self, t: f64) -> Result<GridDensity> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::OutOfRange { what: "t", value: t, range: "[0, 1]" });
        }
        if t == 0.0 {
            return Ok(self.mu.clone());
        }
        if t == 1.0 {
            return Ok(self.nu.clone());
        }
        let values = self
            .mu
            .values
            .iter()
            .zip(self.nu.values.iter())
            .map(|(m, n)| m + t * (n - m))
            .collect();
        Ok(GridDensity {
            mesh: self.mu.mesh.clone(),
            values: values_arc(values),
        })
    }

    pub fn direction(&self) -> SignedGridFunction {
        SignedGridFunction::difference(&self.nu, &self.mu).expect("meshes checked at construction")
    }
}

fn values_arc(v: Vec<f64>) -> Arc<[f64]> {
    v.into()
}

/// Equally spaced Simpson nodes on `[0, 1]` and their weights.
pub fn simpson_rule(n_nodes: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n_nodes < 3 || n_nodes.is_multiple_of(2) {
        return Err(invalid(format!("Simpson's rule needs an odd node count >= 3, got {n_nodes}")));
    }
    let h = 1.0 / (n_nodes - 1) as f64;
    let t = (0..n_nodes).map(|i| i as f64 * h).collect();
    let w = (0..n_nodes)
        .map(|i| {
            let c = if i == 0 || i == n_nodes - 1 {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect();
    Ok((t, w))
}
