//! Limiting chains, sequential and interacting MCMC for Feynman–Kac flows,
//! batch means, and the CLT replication harness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calculus::{uniform_boundedness_scan, MviOptions};
use crate::ergodicity::{asymptotic_variance, poisson_resolvent};
use crate::error::{invalid, Error, Result};
use crate::feynman_kac::{
    imcmc_extra_variance, smcmc_variance_recursion, Centering, EmpiricalMeasure, FeynmanKacModel, MixtureAccumulator,
    VarianceFunctional,
};
use crate::kernels::{hastings_step, BalancingFunction, InverseCdf, Kernel, KernelFamily, ProposalKernel};
use crate::measures::{Grid1D, GridDensity, WeightFunction};
use crate::stats::{normality_stats, variance, NormalityGate, NormalityStats};

/// A point of the state space; the second coordinate is 0 on a line.
pub type State = [f64; 2];

const MAX_CHAIN_LENGTH: usize = 50_000_000;

/// A simulated chain `X_1, ..., X_n` started from `x0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainRun {
    pub x0: State,
    pub states: Vec<State>,
    pub accepted: Vec<bool>,
    pub seed: u64,
    pub kernel_descriptor: String,
    pub acceptance_rate: f64,
    pub truncation_events: u64,
}

impl ChainRun {
    fn with_capacity(x0: State, n: usize, seed: u64, kernel_descriptor: String) -> Self {
        Self {
            x0,
            states: Vec::with_capacity(n),
            accepted: Vec::with_capacity(n),
            seed,
            kernel_descriptor,
            acceptance_rate: 0.0,
            truncation_events: 0,
        }
    }

    fn finish(mut self) -> Self {
        let n = self.accepted.len();
        self.acceptance_rate = if n == 0 { 0.0 } else { self.accepted.iter().filter(|a| **a).count() as f64 / n as f64 };
        self
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// First coordinates.
    pub fn first_coordinates(&self) -> Vec<f64> {
        self.states.iter().map(|s| s[0]).collect()
    }

    pub fn values(&self, f: impl Fn(State) -> f64) -> Vec<f64> {
        self.states.iter().map(|s| f(*s)).collect()
    }

    pub fn empirical(&self) -> Result<EmpiricalMeasure> {
        EmpiricalMeasure::new(self.first_coordinates())
    }
}

fn check_length(n: usize) -> Result<()> {
    if n > MAX_CHAIN_LENGTH {
        return Err(Error::Resource(format!("chain length {n} exceeds {MAX_CHAIN_LENGTH}")));
    }
    Ok(())
}

/// The homogeneous chain of `kernel`, deterministic in `seed`.
pub fn run_limiting_chain(kernel: &Kernel, x0: State, n: usize, seed: u64) -> Result<ChainRun> {
    check_length(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut run = ChainRun::with_capacity(x0, n, seed, kernel.describe());
    let mut x = x0;
    match kernel {
        Kernel::Exact(mu) => {
            let sampler = InverseCdf::new(*mu.mesh().line_grid()?, mu.values())?;
            for _ in 0..n {
                x = [sampler.sample(rand::Rng::random(&mut rng)), 0.0];
                run.states.push(x);
                run.accepted.push(true);
            }
        }
        _ => {
            for _ in 0..n {
                let s = kernel.sample_step(x, &mut rng)?;
                x = s.state;
                run.states.push(x);
                run.accepted.push(s.accepted);
                run.truncation_events += u64::from(s.truncated);
            }
        }
    }
    Ok(run.finish())
}

/// A Hastings chain on a line whose target is an arbitrary evaluator.
pub fn run_target_chain(
    proposal: &ProposalKernel,
    balancing: &BalancingFunction,
    target: impl Fn(f64) -> f64,
    x0: f64,
    n: usize,
    rng: &mut ChaCha8Rng,
    seed: u64,
    descriptor: String,
) -> Result<ChainRun> {
    check_length(n)?;
    let mut run = ChainRun::with_capacity([x0, 0.0], n, seed, descriptor);
    let mut x = x0;
    for _ in 0..n {
        let s = hastings_step(proposal, balancing, &target, x, rng);
        x = s.state;
        run.states.push([x, 0.0]);
        run.accepted.push(s.accepted);
        run.truncation_events += u64::from(s.truncated);
    }
    Ok(run.finish())
}

/// Hastings family used by the Feynman–Kac samplers.
#[derive(Clone, Debug)]
pub struct HastingsSpec {
    pub proposal: ProposalKernel,
    pub balancing: BalancingFunction,
}

impl HastingsSpec {
    pub fn family(&self) -> KernelFamily {
        KernelFamily::Hastings { proposal: self.proposal.clone(), balancing: self.balancing.clone() }
    }

    fn describe(&self, what: &str) -> String {
        format!("hastings[{}; {}] -> {what}", self.proposal.tag(), self.balancing.tag())
    }
}

/// Where a level's chain starts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LevelStart {
    /// The configured `x0` at every level.
    #[default]
    Fixed,
    /// The final state of the previous level.
    PreviousFinal,
}

/// Options shared by both schemes.
#[derive(Clone, Debug)]
pub struct SchemeOptions {
    pub x0: f64,
    pub level_start: LevelStart,
    /// Function whose running target expectations are tracked.
    pub tracked: Option<Vec<f64>>,
    /// Records the adaptation diagnostics of the top level.
    pub monitor: Option<MonitorOptions>,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        Self { x0: 0.0, level_start: LevelStart::PreviousFinal, tracked: None, monitor: None }
    }
}

/// One level of a sequential run.
#[derive(Clone, Debug)]
pub struct SmcmcLevel {
    pub run: ChainRun,
    pub empirical: EmpiricalMeasure,
    /// Target expectation of the tracked function, `μ_n(f)`.
    pub target_expectation: Option<f64>,
}

fn mixture(model: &FeynmanKacModel, level: usize, tracked: Option<Vec<f64>>) -> Result<MixtureAccumulator> {
    Ok(MixtureAccumulator::new(
        *model.grid(),
        model.mutation(level)?.clone(),
        model.potential(level)?.clone(),
        tracked,
    ))
}

fn check_levels(model: &FeynmanKacModel, p_levels: usize) -> Result<()> {
    if p_levels == 0 || p_levels > model.levels() {
        return Err(invalid(format!("{p_levels} levels requested, the model has {}", model.levels())));
    }
    Ok(())
}

fn check_spec(spec: &HastingsSpec, grid: &Grid1D) -> Result<()> {
    if spec.proposal.grid() != grid {
        return Err(Error::GridMismatch("proposal grid differs from the model grid".into()));
    }
    Ok(())
}

/// Sequential MCMC with a fresh chain per level.
pub fn run_smcmc(
    spec: &HastingsSpec,
    model: &FeynmanKacModel,
    p_levels: usize,
    n: usize,
    seed: u64,
    opts: &SchemeOptions,
) -> Result<Vec<SmcmcLevel>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_smcmc_with(spec, model, p_levels, n, seed, &mut rng, opts)
}

fn run_smcmc_with(
    spec: &HastingsSpec,
    model: &FeynmanKacModel,
    p_levels: usize,
    n: usize,
    seed: u64,
    rng: &mut ChaCha8Rng,
    opts: &SchemeOptions,
) -> Result<Vec<SmcmcLevel>> {
    check_levels(model, p_levels)?;
    check_spec(spec, model.grid())?;
    if n == 0 {
        return Err(invalid("sequential MCMC needs n >= 1"));
    }
    let mut levels: Vec<SmcmcLevel> = Vec::with_capacity(p_levels);
    let eta1 = model.eta1().clone();
    let run = run_target_chain(&spec.proposal, &spec.balancing, |x| eta1.interpolate(x), opts.x0, n, rng, seed, spec.describe("level 1"))?;
    let target_expectation = opts.tracked.as_ref().map(|f| eta1.expect(f)).transpose()?;
    levels.push(SmcmcLevel { empirical: run.empirical()?, run, target_expectation });
    for p in 2..=p_levels {
        let prev = &levels[p - 2];
        let mut acc = mixture(model, p - 1, opts.tracked.clone())?;
        for y in prev.empirical.samples() {
            acc.add(*y);
        }
        if !(acc.weight_total() > 0.0) {
            return Err(Error::DegenerateWeights { level: p - 1 });
        }
        let x0 = match opts.level_start {
            LevelStart::Fixed => opts.x0,
            LevelStart::PreviousFinal => prev.run.states.last().map_or(opts.x0, |s| s[0]),
        };
        let descr = spec.describe(&format!("level {p}"));
        let run = run_target_chain(&spec.proposal, &spec.balancing, |x| acc.interpolate(x), x0, n, rng, seed, descr)?;
        levels.push(SmcmcLevel { empirical: run.empirical()?, run, target_expectation: acc.expectation() });
    }
    Ok(levels)
}

/// Output of an interacting run.
#[derive(Clone, Debug)]
pub struct ImcmcRun {
    pub levels: Vec<ChainRun>,
    /// `Σ_i μ_i(f)` per level, with `μ_i` the target that generated step `i`.
    pub centring_sums: Vec<Option<f64>>,
    pub monitor: Option<AdaptationMonitor>,
}

/// Interacting MCMC: at step `n` level `p` moves by the kernel targeting
/// `Φ(eta_n^(p-1))`, the running measure of the level below including its
/// newest state.
pub fn run_imcmc(
    spec: &HastingsSpec,
    model: &FeynmanKacModel,
    p_levels: usize,
    n: usize,
    seed: u64,
    opts: &SchemeOptions,
) -> Result<ImcmcRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    run_imcmc_with(spec, model, p_levels, n, seed, &mut rng, opts)
}

fn run_imcmc_with(
    spec: &HastingsSpec,
    model: &FeynmanKacModel,
    p_levels: usize,
    n: usize,
    seed: u64,
    rng: &mut ChaCha8Rng,
    opts: &SchemeOptions,
) -> Result<ImcmcRun> {
    check_levels(model, p_levels)?;
    check_spec(spec, model.grid())?;
    check_length(n)?;
    let eta1 = model.eta1().clone();
    let mut runs: Vec<ChainRun> = (1..=p_levels)
        .map(|p| ChainRun::with_capacity([opts.x0, 0.0], n, seed, spec.describe(&format!("level {p}"))))
        .collect();
    let mut accs = (1..p_levels).map(|p| mixture(model, p, opts.tracked.clone())).collect::<Result<Vec<_>>>()?;
    let mut sums: Vec<Option<f64>> = vec![None; p_levels];
    if let Some(f) = &opts.tracked {
        sums[0] = Some(n as f64 * eta1.expect(f)?);
        for s in sums.iter_mut().skip(1) {
            *s = Some(0.0);
        }
    }
    let mut monitor = match (&opts.monitor, p_levels) {
        (Some(m), p) if p >= 2 => Some(AdaptationMonitor::new(*model.grid(), m.clone())?),
        _ => None,
    };
    let mut xs: Vec<f64> = vec![opts.x0; p_levels];
    for _ in 0..n {
        for p in 0..p_levels {
            let s = if p == 0 {
                hastings_step(&spec.proposal, &spec.balancing, |x| eta1.interpolate(x), xs[0], rng)
            } else {
                let acc = &accs[p - 1];
                if let (Some(sum), Some(e)) = (sums[p].as_mut(), acc.expectation()) {
                    *sum += e;
                }
                hastings_step(&spec.proposal, &spec.balancing, |x| acc.interpolate(x), xs[p], rng)
            };
            xs[p] = s.state;
            runs[p].states.push([s.state, 0.0]);
            runs[p].accepted.push(s.accepted);
            runs[p].truncation_events += u64::from(s.truncated);
            if p + 1 < p_levels {
                accs[p].add(s.state);
                if !(accs[p].weight_total() > 0.0) {
                    return Err(Error::DegenerateWeights { level: p + 1 });
                }
                if p + 2 == p_levels {
                    if let Some(m) = monitor.as_mut() {
                        m.push_mixture(&accs[p]);
                    }
                }
            }
        }
    }
    Ok(ImcmcRun { levels: runs.into_iter().map(ChainRun::finish).collect(), centring_sums: sums, monitor })
}

/// Batch-means estimate of the asymptotic variance of `n^{-1/2} Σ f(X_i)`.
pub fn batch_means_variance(values: &[f64], batch_count: usize) -> Result<f64> {
    if batch_count < 20 {
        return Err(invalid(format!("batch means needs at least 20 batches, got {batch_count}")));
    }
    let size = values.len() / batch_count;
    if size < 1 {
        return Err(invalid(format!("{} values cannot fill {batch_count} batches", values.len())));
    }
    let means: Vec<f64> = values.chunks_exact(size).take(batch_count).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    Ok(size as f64 * variance(&means))
}

/// Streaming adaptation diagnostics over a sequence of grid targets.
#[derive(Clone, Debug)]
pub struct MonitorOptions {
    pub v: WeightFunction,
    /// Limit density for the pointwise-gap trajectory.
    pub limit: Option<GridDensity>,
    /// Steps at which statistics are recorded.
    pub checkpoints: Vec<usize>,
    /// Checkpoints at which `(μ_{k-1}, μ_k)` pairs are kept for the
    /// bounded-derivative scan.
    pub snapshot_at: Vec<usize>,
}

impl MonitorOptions {
    /// Roughly geometric checkpoints up to `n`.
    pub fn geometric(v: WeightFunction, limit: Option<GridDensity>, n: usize, per_decade: usize) -> Self {
        let mut checkpoints = Vec::new();
        let mut k = 10.0_f64;
        let ratio = 10f64.powf(1.0 / per_decade as f64);
        while (k as usize) <= n {
            let c = k.round() as usize;
            if checkpoints.last() != Some(&c) {
                checkpoints.push(c);
            }
            k *= ratio;
        }
        Self { v, limit, checkpoints, snapshot_at: Vec::new() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MonitorPoint {
    pub step: usize,
    /// `max_x |μ_k(x) - μ(x)|`, when a limit is known.
    pub pointwise_gap: Option<f64>,
    /// `k^{-1/2} Σ_{i<=k} max_x |μ_i(x) - μ_{i-1}(x)|`.
    pub d1_sup: f64,
    /// `k^{-1/2} Σ_{i<=k} ‖μ_i - μ_{i-1}‖_V`.
    pub d1_v: f64,
}

#[derive(Clone, Debug)]
pub struct AdaptationMonitor {
    grid: Grid1D,
    weights: Vec<f64>,
    v: Vec<f64>,
    opts: MonitorOptions,
    prev: Option<Vec<f64>>,
    step: usize,
    sum_sup: f64,
    sum_v: f64,
    points: Vec<MonitorPoint>,
    snapshots: Vec<(usize, GridDensity, GridDensity)>,
    scratch: Vec<f64>,
}

impl AdaptationMonitor {
    pub fn new(grid: Grid1D, opts: MonitorOptions) -> Result<Self> {
        let mesh = grid.into();
        opts.v.validate(&mesh)?;
        if let Some(l) = &opts.limit {
            l.mesh().ensure_same(&mesh)?;
        }
        Ok(Self {
            weights: grid.weights(),
            v: opts.v.on_mesh(&mesh),
            grid,
            opts,
            prev: None,
            step: 0,
            sum_sup: 0.0,
            sum_v: 0.0,
            points: Vec::new(),
            snapshots: Vec::new(),
            scratch: vec![0.0; grid.len()],
        })
    }

    fn push_mixture(&mut self, acc: &MixtureAccumulator) {
        for (k, s) in self.scratch.iter_mut().enumerate() {
            *s = acc.value_at(k);
        }
        let cur = std::mem::take(&mut self.scratch);
        self.push_values(&cur);
        self.scratch = cur;
    }

    /// Records the next target `μ_k`, as nodal values of a density.
    pub fn push_values(&mut self, cur: &[f64]) {
        match &mut self.prev {
            None => self.prev = Some(cur.to_vec()),
            Some(prev) => {
                self.step += 1;
                let mut sup: f64 = 0.0;
                let mut vn = 0.0;
                for k in 0..cur.len() {
                    let d = (cur[k] - prev[k]).abs();
                    sup = sup.max(d);
                    vn += self.weights[k] * self.v[k] * d;
                }
                self.sum_sup += sup;
                self.sum_v += vn;
                let step = self.step;
                if self.opts.snapshot_at.contains(&step) {
                    if let (Ok(a), Ok(b)) = (GridDensity::new(self.grid, prev.clone()), GridDensity::new(self.grid, cur.to_vec())) {
                        self.snapshots.push((step, a, b));
                    }
                }
                prev.copy_from_slice(cur);
                if self.opts.checkpoints.contains(&step) {
                    let root = (step as f64).sqrt();
                    let pointwise_gap = self
                        .opts
                        .limit
                        .as_ref()
                        .map(|l| l.values().iter().zip(cur).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
                    self.points.push(MonitorPoint { step, pointwise_gap, d1_sup: self.sum_sup / root, d1_v: self.sum_v / root });
                }
            }
        }
    }

    pub fn points(&self) -> &[MonitorPoint] {
        &self.points
    }
}

/// Summary of the adaptation diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct AdaptationReport {
    pub points: Vec<MonitorPoint>,
    /// Log-log slopes over the second half of the checkpoints.
    pub d1_sup_slope: f64,
    pub d1_v_slope: f64,
    pub pointwise_gap_slope: Option<f64>,
    pub d1_pass: bool,
    /// Largest point-start constants along the realized sequence.
    pub max_m_x: Option<f64>,
    pub max_m_perp_x: Option<f64>,
}

fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).filter(|(_, y)| **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

/// Checks the pointwise convergence and D1 trends of a monitored run, and
/// scans point-start constants on the kept snapshots.
pub fn check_adaptation_conditions(
    monitor: &AdaptationMonitor,
    family: Option<&KernelFamily>,
    scan_nodes: &[usize],
) -> Result<AdaptationReport> {
    let pts = monitor.points().to_vec();
    let half = &pts[pts.len() / 2..];
    let xs: Vec<f64> = half.iter().map(|p| p.step as f64).collect();
    let d1_sup_slope = log_log_slope(&xs, &half.iter().map(|p| p.d1_sup).collect::<Vec<_>>());
    let d1_v_slope = log_log_slope(&xs, &half.iter().map(|p| p.d1_v).collect::<Vec<_>>());
    let pointwise_gap_slope = half
        .iter()
        .map(|p| p.pointwise_gap)
        .collect::<Option<Vec<f64>>>()
        .map(|g| log_log_slope(&xs, &g));
    let all_zero = pts.iter().all(|p| p.d1_sup == 0.0 && p.d1_v == 0.0);
    let d1_pass = all_zero || (d1_sup_slope < 0.0 && d1_v_slope < 0.0);
    let (mut max_m_x, mut max_m_perp_x) = (None, None);
    if let Some(fam) = family {
        let mut a: f64 = 0.0;
        let mut b: f64 = 0.0;
        for (_, prev, cur) in &monitor.snapshots {
            let r = uniform_boundedness_scan(fam, cur, prev, &monitor.opts.v, scan_nodes, MviOptions { t_nodes: 5, ..MviOptions::default() })?;
            a = a.max(r.max_m_x);
            b = b.max(r.max_m_perp_x);
        }
        if !monitor.snapshots.is_empty() {
            max_m_x = Some(a);
            max_m_perp_x = Some(b);
        }
    }
    Ok(AdaptationReport { points: pts, d1_sup_slope, d1_v_slope, pointwise_gap_slope, d1_pass, max_m_x, max_m_perp_x })
}

/// Which approximating scheme a CLT experiment runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Smcmc,
    Imcmc,
}

/// σ² of the level chains from Poisson resolvents of grid kernels.
pub struct PoissonVariance {
    kernels: Vec<Kernel>,
    tol: f64,
}

impl PoissonVariance {
    /// Kernels of `family` at each density of the reference flow.
    pub fn new(family: &KernelFamily, flow: &[GridDensity], tol: f64) -> Result<Self> {
        Ok(Self { kernels: flow.iter().map(|d| family.at(d)).collect::<Result<_>>()?, tol })
    }
}

impl VarianceFunctional for PoissonVariance {
    fn sigma2(&self, level: usize, g: &[f64]) -> Result<f64> {
        let k = self
            .kernels
            .get(level.wrapping_sub(1))
            .ok_or_else(|| invalid(format!("no variance functional for level {level}")))?;
        let t = poisson_resolvent(k, g, self.tol)?;
        asymptotic_variance(k, &t)
    }
}

/// Setup of a CLT experiment.
#[derive(Clone, Debug)]
pub struct CltSetup {
    pub scheme: Scheme,
    pub spec: HastingsSpec,
    pub model: FeynmanKacModel,
    pub levels: usize,
    pub x0: f64,
    pub level_start: LevelStart,
    pub batches: usize,
    pub gate: NormalityGate,
    /// Relative tolerance of the variance comparisons.
    pub variance_tolerance: f64,
    /// Adaptation diagnostics recorded on replication 0 of an interacting
    /// run; monitoring draws no random numbers, so the run is unchanged.
    pub monitor: Option<MonitorOptions>,
}

/// Per-replication statistics.
#[derive(Clone, Debug, Serialize)]
pub struct CltReplication {
    pub replication: usize,
    pub level: usize,
    pub random_centred: f64,
    pub deterministic_centred: f64,
    pub ergodic_average: f64,
    pub batch_means: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CltReport {
    pub scheme: Scheme,
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    /// Mean over replications of the top-level ergodic average.
    pub estimate: f64,
    pub reference_value: f64,
    pub asymptotic_variance_batchmeans: f64,
    pub asymptotic_variance_poisson: f64,
    /// `v²` (sequential) or `w²` (interacting).
    pub extra_variance: f64,
    pub replication_variance: f64,
    pub replication_variance_deterministic: f64,
    pub normality_stats: NormalityStats,
    pub normality_stats_deterministic: NormalityStats,
    pub random_ratio: f64,
    pub deterministic_ratio: f64,
    pub batch_poisson_ratio: f64,
    pub random_pass: bool,
    pub deterministic_pass: bool,
    pub normality_pass: bool,
    pub adaptation: Option<AdaptationReport>,
    #[serde(skip)]
    pub per_replication: Vec<CltReplication>,
}

impl CltReport {
    pub fn pass(&self) -> bool {
        self.random_pass && self.deterministic_pass && self.normality_pass && self.adaptation.as_ref().is_none_or(|a| a.d1_pass)
    }
}

/// Replicates the scheme and compares the spread of the centred, scaled
/// statistics with the predicted asymptotic variances.
pub fn clt_experiment(setup: &CltSetup, f: &[f64], n: usize, replications: usize, seed: u64) -> Result<CltReport> {
    if replications < 100 {
        return Err(invalid(format!("the CLT harness needs at least 100 replications, got {replications}")));
    }
    let p = setup.levels;
    if p < 2 {
        return Err(invalid("the CLT harness compares approximating schemes and needs two or more levels"));
    }
    let model = &setup.model;
    let flow = model.reference_flow()?;
    let family = setup.spec.family();
    let sigma = PoissonVariance::new(&family, &flow, 1e-10)?;
    let reference_value = flow[p - 1].expect(f)?;
    let centred: Vec<f64> = f.iter().map(|v| v - reference_value).collect();
    let sigma2 = sigma.sigma2(p, &centred)?;
    let extra = match setup.scheme {
        Scheme::Smcmc => smcmc_variance_recursion(model, &flow, p, f, &sigma, Centering::FinalLevel)? - sigma2,
        Scheme::Imcmc => {
            if p != 2 {
                return Err(invalid("the interacting variance is available for two levels only"));
            }
            imcmc_extra_variance(model, &flow, f, &sigma)?
        }
    };
    let opts = SchemeOptions { x0: setup.x0, level_start: setup.level_start, tracked: Some(f.to_vec()), monitor: None };
    let monitored = SchemeOptions { monitor: setup.monitor.clone(), ..opts.clone() };
    let grid = *model.grid();
    let eval = |x: f64| {
        // f is given on the nodes; states between nodes use linear interpolation.
        let (i, s) = grid.bracket(x);
        if s > 0.0 {
            (1.0 - s) * f[i] + s * f[i + 1]
        } else {
            f[i]
        }
    };
    let root = (n as f64).sqrt();
    let outcomes = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let mut monitor = None;
            let (values, centre_sum) = match setup.scheme {
                Scheme::Smcmc => {
                    let levels = run_smcmc_with(&setup.spec, model, p, n, seed, &mut rng, &opts)?;
                    let top = &levels[p - 1];
                    let mu_n = top.target_expectation.expect("tracked");
                    (top.run.values(|s| eval(s[0])), n as f64 * mu_n)
                }
                Scheme::Imcmc => {
                    let o = if r == 0 { &monitored } else { &opts };
                    let run = run_imcmc_with(&setup.spec, model, p, n, seed, &mut rng, o)?;
                    let c = run.centring_sums[p - 1].expect("tracked");
                    monitor = run.monitor;
                    (run.levels[p - 1].values(|s| eval(s[0])), c)
                }
            };
            let total: f64 = values.iter().sum();
            let rep = CltReplication {
                replication: r,
                level: p,
                random_centred: (total - centre_sum) / root,
                deterministic_centred: (total - n as f64 * reference_value) / root,
                ergodic_average: total / n as f64,
                batch_means: batch_means_variance(&values, setup.batches)?,
            };
            Ok((rep, monitor))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut adaptation = None;
    let mut per_replication = Vec::with_capacity(replications);
    for (rep, monitor) in outcomes {
        if let Some(m) = monitor {
            adaptation = Some(check_adaptation_conditions(&m, None, &[])?);
        }
        per_replication.push(rep);
    }
    let random: Vec<f64> = per_replication.iter().map(|r| r.random_centred).collect();
    let det: Vec<f64> = per_replication.iter().map(|r| r.deterministic_centred).collect();
    let bm = per_replication.iter().map(|r| r.batch_means).sum::<f64>() / replications as f64;
    let replication_variance = variance(&random);
    let replication_variance_deterministic = variance(&det);
    let normality = normality_stats(&random);
    let normality_det = normality_stats(&det);
    let random_ratio = replication_variance / sigma2;
    let deterministic_ratio = replication_variance_deterministic / (sigma2 + extra);
    let tol = setup.variance_tolerance;
    Ok(CltReport {
        scheme: setup.scheme,
        n,
        replications,
        seed,
        estimate: per_replication.iter().map(|r| r.ergodic_average).sum::<f64>() / replications as f64,
        reference_value,
        asymptotic_variance_batchmeans: bm,
        asymptotic_variance_poisson: sigma2,
        extra_variance: extra,
        replication_variance,
        replication_variance_deterministic,
        normality_stats: normality,
        normality_stats_deterministic: normality_det,
        random_ratio,
        deterministic_ratio,
        batch_poisson_ratio: bm / sigma2,
        random_pass: (random_ratio - 1.0).abs() <= tol,
        deterministic_pass: (deterministic_ratio - 1.0).abs() <= tol,
        normality_pass: setup.gate.passes(&normality),
        adaptation,
        per_replication,
    })
}
