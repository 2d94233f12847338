//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use mcmc_calculus::calculus::{SingularTimeForm, Transport};
use mcmc_calculus::feynman_kac::BoundedMap;
use mcmc_calculus::measures::WeightFunction;
use mcmc_calculus::samplers::{LevelStart, Scheme};
use mcmc_calculus::stats::NormalityGate;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    DerivativeCheck,
    FtcCheck,
    MviCheck,
    ErgodicityCheck,
    SmcmcRun,
    ImcmcRun,
    CltReport,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::DerivativeCheck => "derivative-check",
            Self::FtcCheck => "ftc-check",
            Self::MviCheck => "mvi-check",
            Self::ErgodicityCheck => "ergodicity-check",
            Self::SmcmcRun => "smcmc-run",
            Self::ImcmcRun => "imcmc-run",
            Self::CltReport => "clt-report",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub lower: f64,
    pub upper: f64,
    pub n_points: usize,
}

/// A line, or a plane when `second` is present.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lower: f64,
    pub upper: f64,
    pub n_points: usize,
    #[serde(default)]
    pub second: Option<AxisSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DensitySpec {
    Gaussian { mean: f64, sd: f64 },
    Gaussian2d { mean: [f64; 2], sd: [f64; 2], #[serde(default)] corr: f64 },
    /// Normal mixture with unnormalized weights.
    Mixture { weights: Vec<f64>, means: Vec<f64>, sds: Vec<f64> },
    /// Triangle of `half_width` nodes around the node nearest `x`.
    Spike { x: f64, half_width: usize },
    /// A density file; relative paths resolve against the config file.
    Csv { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProposalSpec {
    RandomWalk { sigma: f64 },
    Independence { base: DensitySpec },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BalancingSpec {
    Barker,
    MinOne,
    Power { j: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FamilySpec {
    Hastings { proposal: ProposalSpec, balancing: BalancingSpec },
    Gibbs,
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StartSpec {
    Density { density: DensitySpec },
    /// The node nearest `x` (and `y` on a plane).
    Point { x: f64, #[serde(default)] y: f64 },
}

/// Test function on the first coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionSpec {
    /// `x` clipped to `[-clip, clip]`.
    ClippedIdentity { clip: f64 },
    Sin { frequency: f64 },
    /// `1{x <= threshold}`.
    Indicator { threshold: f64 },
}

impl Default for FunctionSpec {
    fn default() -> Self {
        Self::ClippedIdentity { clip: 2.0 }
    }
}

impl FunctionSpec {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::ClippedIdentity { clip } => x.clamp(-clip, *clip),
            Self::Sin { frequency } => (frequency * x).sin(),
            Self::Indicator { threshold } => f64::from(u8::from(x <= *threshold)),
        }
    }
}

fn default_v() -> WeightFunction {
    WeightFunction::Quadratic
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub derivative_relative: f64,
    pub centering: f64,
    pub invariance: f64,
    pub ftc_density: f64,
    pub ftc_point: f64,
    pub poisson_residual: f64,
    pub resolvent_identity: f64,
    pub kappa_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            derivative_relative: 1e-3,
            centering: 1e-6,
            invariance: 1e-10,
            ftc_density: 1e-6,
            ftc_point: 1e-5,
            poisson_residual: 1e-6,
            resolvent_identity: 1e-5,
            kappa_floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FtcSection {
    pub t_nodes: usize,
    /// Also check the transport (pushforward) form with this map.
    pub transport: Option<Transport>,
    pub s_nodes: usize,
}

impl Default for FtcSection {
    fn default() -> Self {
        Self { t_nodes: 33, transport: None, s_nodes: 33 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MviSection {
    pub trials: usize,
    pub t_nodes: usize,
    pub singular_time_form: SingularTimeForm,
    pub warm_start_ceiling: f64,
}

impl Default for MviSection {
    fn default() -> Self {
        Self { trials: 1000, t_nodes: 17, singular_time_form: SingularTimeForm::Integrated, warm_start_ceiling: 1e6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErgodicitySection {
    pub drift_rates: Vec<f64>,
    pub minorization_steps: usize,
    pub rate_steps: usize,
    pub rate_starts: Vec<f64>,
    pub resolvent_tolerance: f64,
}

impl Default for ErgodicitySection {
    fn default() -> Self {
        Self {
            drift_rates: vec![0.5, 0.7, 0.8, 0.9, 0.95, 0.99, 0.995, 0.999],
            minorization_steps: 1,
            rate_steps: 60,
            rate_starts: vec![0.0, 2.0, -5.0],
            resolvent_tolerance: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsmSection {
    pub phi: BoundedMap,
    /// Observation series; relative paths resolve against the config file.
    pub observations: PathBuf,
    pub levels: usize,
    #[serde(default = "default_eta1_sd")]
    pub eta1_sd: f64,
}

fn default_eta1_sd() -> f64 {
    mcmc_calculus::feynman_kac::SSM_NOISE_VAR.sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSection {
    pub n: usize,
    pub x0: f64,
    pub level_start: LevelStart,
    pub batches: usize,
    /// Exponent of the weighted norms used by the interacting scheme.
    pub alpha: Option<f64>,
}

impl Default for ChainSection {
    fn default() -> Self {
        Self { n: 100_000, x0: 0.0, level_start: LevelStart::PreviousFinal, batches: 20, alpha: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CltSection {
    pub scheme: Scheme,
    #[serde(default = "default_reps")]
    pub replications: usize,
    #[serde(default = "default_var_tol")]
    pub variance_tolerance: f64,
    #[serde(default)]
    pub gate: NormalityGate,
}

fn default_reps() -> usize {
    200
}

fn default_var_tol() -> f64 {
    0.2
}

fn default_seed() -> u64 {
    42
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub grid: GridSpec,
    #[serde(default)]
    pub family: Option<FamilySpec>,
    #[serde(default)]
    pub target: Option<DensitySpec>,
    #[serde(default)]
    pub approximation: Option<DensitySpec>,
    /// Density claimed invariant for the kernel at `target`; defaults to
    /// `target` itself.
    #[serde(default)]
    pub claimed_invariant: Option<DensitySpec>,
    #[serde(default)]
    pub start: Option<StartSpec>,
    #[serde(default)]
    pub function: FunctionSpec,
    #[serde(default = "default_v")]
    pub v: WeightFunction,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub ftc: FtcSection,
    #[serde(default)]
    pub mvi: MviSection,
    #[serde(default)]
    pub ergodicity: ErgodicitySection,
    #[serde(default)]
    pub ssm: Option<SsmSection>,
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub clt: Option<CltSection>,
    /// Directory of the config file, for relative paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Every problem with the config, not just the first.
    pub fn validate(&self) -> Vec<String> {
        use ExperimentKind::*;
        let mut errs = Vec::new();
        let mut axis = |name: &str, lower: f64, upper: f64, n: usize| {
            if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                errs.push(format!("{name}: lower must be below upper"));
            }
            if n < 5 {
                errs.push(format!("{name}: n_points must be at least 5"));
            }
        };
        axis("grid", self.grid.lower, self.grid.upper, self.grid.n_points);
        if let Some(s) = self.grid.second {
            axis("grid.second", s.lower, s.upper, s.n_points);
        }
        let plane = self.grid.second.is_some();
        let needs_pair = matches!(self.kind, DerivativeCheck | FtcCheck | MviCheck);
        let needs_family = needs_pair || self.kind == ErgodicityCheck;
        let on_ssm = matches!(self.kind, SmcmcRun | ImcmcRun | CltReport);
        if needs_family || on_ssm {
            match &self.family {
                None => errs.push("family: required for this experiment".into()),
                Some(FamilySpec::Gibbs) if !plane => errs.push("family: gibbs needs a plane grid (grid.second)".into()),
                Some(FamilySpec::Hastings { .. }) if plane => errs.push("family: hastings needs a line grid".into()),
                Some(FamilySpec::Hastings { proposal: ProposalSpec::RandomWalk { sigma }, .. }) if !(*sigma > 0.0) => {
                    errs.push("family.proposal.sigma must be positive".into())
                }
                Some(f) if on_ssm && !matches!(f, FamilySpec::Hastings { .. }) => {
                    errs.push("family: the Feynman-Kac samplers use a hastings family".into())
                }
                _ => {}
            }
        }
        if (needs_family) && self.target.is_none() {
            errs.push("target: required for this experiment".into());
        }
        if needs_pair && self.approximation.is_none() {
            errs.push("approximation: required for this experiment".into());
        }
        if needs_pair && self.start.is_none() {
            errs.push("start: required for this experiment".into());
        }
        if on_ssm {
            match &self.ssm {
                None => errs.push("ssm: required for this experiment".into()),
                Some(s) => {
                    if s.levels < 1 {
                        errs.push("ssm.levels must be at least 1".into());
                    }
                    if plane {
                        errs.push("ssm: the state-space model lives on a line grid".into());
                    }
                }
            }
            if self.chain.n < 1 {
                errs.push("chain.n must be positive".into());
            }
            if self.chain.batches < 20 {
                errs.push("chain.batches must be at least 20".into());
            }
        }
        if let Some(a) = self.chain.alpha {
            if !(a > 0.0 && a < 0.5) {
                errs.push(format!("chain.alpha = {a}: α must lie in (0,1/2)"));
            }
        }
        if self.kind == CltReport {
            match &self.clt {
                None => errs.push("clt: required for clt-report".into()),
                Some(c) => {
                    if c.replications < 100 {
                        errs.push("clt.replications must be at least 100".into());
                    }
                    if !(c.variance_tolerance > 0.0) {
                        errs.push("clt.variance_tolerance must be positive".into());
                    }
                }
            }
        }
        if self.kind == FtcCheck && (self.ftc.t_nodes < 5 || self.ftc.t_nodes.is_multiple_of(2)) {
            errs.push("ftc.t_nodes must be odd and at least 5".into());
        }
        if self.kind == MviCheck && self.mvi.trials == 0 {
            errs.push("mvi.trials must be positive".into());
        }
        if self.kind == ErgodicityCheck {
            let e = &self.ergodicity;
            if e.drift_rates.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
                errs.push("ergodicity.drift_rates must lie in (0, 1)".into());
            }
            if !matches!(e.minorization_steps, 1 | 2) {
                errs.push("ergodicity.minorization_steps must be 1 or 2".into());
            }
        }
        errs
    }
}

/// Reads, parses and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(vec![format!("{}: {e}", path.display())]))?;
    let mut cfg = parse_config(&text)?;
    cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(vec![e.to_string()]))?;
    let errs = cfg.validate();
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Config(errs))
    }
}
