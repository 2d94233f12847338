//! One function per experiment kind.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use mcmc_calculus::calculus::{check_mvi, verify_ftc, verify_ftc_intrinsic, MviOptions};
use mcmc_calculus::derivative::{derivative, fd_directional_derivative, generator_density, DerivativeOptions};
use mcmc_calculus::ergodicity::{
    asymptotic_variance, certify_ssm_mixtures, check_minorization, check_resolvent_identity, estimate_geometric_rate,
    level_set, poisson_resolvent, rw_minorization_bound, scan_drift, Minorization,
};
use mcmc_calculus::feynman_kac::{imcmc_extra_variance, smcmc_variance_recursion, Centering, FeynmanKacModel};
use mcmc_calculus::io::{write_chain_csv, write_density_csv, write_json, write_replications_csv};
use mcmc_calculus::kernels::{check_invariance_of, KernelFamily, Start};
use mcmc_calculus::measures::{GridDensity, Mesh, SignedGridFunction};
use mcmc_calculus::samplers::{
    batch_means_variance, check_adaptation_conditions, clt_experiment, run_imcmc, run_smcmc, ChainRun, CltSetup,
    MonitorOptions, PoissonVariance, Scheme, SchemeOptions,
};
use mcmc_calculus::{Error, Result};
use serde::Serialize;
use serde_json::json;

use crate::build;
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::manifest::{sha256_file, CheckOutcome, FileDigest, RunManifest};
use crate::CliError;

/// Accumulates outputs, inputs and check outcomes of one run.
pub struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub out_dir: PathBuf,
    inputs: Vec<PathBuf>,
    artifacts: Vec<String>,
    checks: Vec<CheckOutcome>,
    stage: &'static str,
}

impl<'a> Context<'a> {
    pub fn new(cfg: &'a ExperimentConfig, out_dir: PathBuf) -> Self {
        Self { cfg, out_dir, inputs: Vec::new(), artifacts: Vec::new(), checks: Vec::new(), stage: "setting up" }
    }

    pub fn record_input(&mut self, path: &Path) -> std::result::Result<(), CliError> {
        self.inputs.push(path.to_path_buf());
        Ok(())
    }

    fn fail(&self, source: Error) -> CliError {
        CliError::Run { kind: self.cfg.kind.name(), stage: self.stage, source }
    }

    fn lift<T>(&self, r: Result<T>) -> std::result::Result<T, CliError> {
        r.map_err(|e| self.fail(e))
    }

    fn check(&mut self, name: &str, pass: bool, detail: String) {
        self.checks.push(CheckOutcome { name: name.into(), pass, detail });
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> std::result::Result<(), CliError> {
        let r = write_json(&self.out_dir.join(name), value);
        self.lift(r)?;
        self.artifacts.push(name.into());
        Ok(())
    }

    fn file(&mut self, name: &str, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> std::result::Result<(), CliError> {
        let path = self.out_dir.join(name);
        let f = File::create(&path).map_err(|source| CliError::Io { path: path.clone(), source })?;
        let mut w = BufWriter::new(f);
        let r = write(&mut w).and_then(|_| w.flush().map_err(Error::from));
        self.lift(r)?;
        self.artifacts.push(name.into());
        Ok(())
    }

    /// Writes the manifest and returns it.
    pub fn finish(self, config_path: &Path, started: chrono::DateTime<chrono::Utc>) -> std::result::Result<RunManifest, CliError> {
        let mut inputs = Vec::new();
        for p in &self.inputs {
            inputs.push(FileDigest { path: p.display().to_string(), sha256: sha256_file(p)? });
        }
        let mut artifacts = Vec::new();
        for a in &self.artifacts {
            artifacts.push(FileDigest { path: a.clone(), sha256: sha256_file(&self.out_dir.join(a))? });
        }
        let manifest = RunManifest {
            kind: self.cfg.kind.name().into(),
            seed: self.cfg.seed,
            config_sha256: sha256_file(config_path)?,
            artifact_version: env!("CARGO_PKG_VERSION").into(),
            started_at: started.to_rfc3339(),
            finished_at: chrono::Utc::now().to_rfc3339(),
            inputs,
            artifacts,
            pass: self.checks.iter().all(|c| c.pass),
            checks: self.checks,
        };
        write_json(&self.out_dir.join("manifest.json"), &manifest)
            .map_err(|source| CliError::Run { kind: self.cfg.kind.name(), stage: "writing the manifest", source })?;
        Ok(manifest)
    }
}

pub fn dispatch(ctx: &mut Context<'_>) -> std::result::Result<(), CliError> {
    match ctx.cfg.kind {
        ExperimentKind::DerivativeCheck => derivative_check(ctx),
        ExperimentKind::FtcCheck => ftc_check(ctx),
        ExperimentKind::MviCheck => mvi_check(ctx),
        ExperimentKind::ErgodicityCheck => ergodicity_check(ctx),
        ExperimentKind::SmcmcRun => smcmc_run(ctx),
        ExperimentKind::ImcmcRun => imcmc_run(ctx),
        ExperimentKind::CltReport => clt_report(ctx),
    }
}

/// Mesh, family, target, approximation and start of a pair experiment.
struct Pair {
    mesh: Mesh,
    family: KernelFamily,
    mu: GridDensity,
    nu: Option<GridDensity>,
    start: Option<Start>,
    f: Vec<f64>,
}

fn pair(ctx: &mut Context<'_>) -> std::result::Result<Pair, CliError> {
    ctx.stage = "building the targets";
    let cfg = ctx.cfg;
    let mut inputs = Vec::new();
    let r = (|| -> Result<Pair> {
        let mesh = build::mesh(cfg)?;
        let family = build::family(cfg, &mesh, &mut inputs)?;
        let mu = build::density(cfg, cfg.target.as_ref().expect("validated"), &mesh, &mut inputs)?;
        let nu = cfg.approximation.as_ref().map(|s| build::density(cfg, s, &mesh, &mut inputs)).transpose()?;
        let start = cfg.start.as_ref().map(|s| build::start(cfg, s, &mesh, &mut inputs)).transpose()?;
        let f = build::test_function(cfg, &mesh);
        Ok(Pair { mesh, family, mu, nu, start, f })
    })();
    ctx.inputs.extend(inputs);
    ctx.lift(r)
}

fn start_tag(start: &Start) -> &'static str {
    match start {
        Start::Density(_) => "density",
        Start::Point(_) => "point",
    }
}

fn sup_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn derivative_check(ctx: &mut Context<'_>) -> std::result::Result<(), CliError> {
    let p = pair(ctx)?;
    let cfg = ctx.cfg;
    let tol = &cfg.tolerances;
    let (nu, start) = (p.nu.as_ref().expect("validated"), p.start.as_ref().expect("validated"));
    ctx.stage = "building the kernel";
    let kernel = ctx.lift(p.family.at(&p.mu))?;
    let claimed = match &cfg.claimed_invariant {
        None => p.mu.clone(),
        Some(s) => {
            let mut inputs = Vec::new();
            let d = ctx.lift(build::density(cfg, s, &p.mesh, &mut inputs))?;
            ctx.inputs.extend(inputs);
            d
        }
    };
    let inv = ctx.lift(check_invariance_of(&kernel, &claimed, tol.invariance))?;
    ctx.check("invariance", inv.pass, format!("residual {:.3e} (tolerance {:.1e})", inv.residual, tol.invariance));
    ctx.stage = "computing the derivative";
    let d = ctx.lift(derivative(&kernel, start, &p.f, DerivativeOptions::default()))?;
    let chi = ctx.lift(SignedGridFunction::difference(nu, &p.mu))?;
    let analytic = ctx.lift(d.action(&chi))?;
    ctx.stage = "running the finite-difference oracle";
    let oracle = ctx.lift(fd_directional_derivative(&p.family, &p.mu, nu, start, &p.f))?;
    let relative_error = (analytic - oracle).abs() / oracle.abs().max(1e-12);
    ctx.check(
        "derivative-oracle",
        relative_error <= tol.derivative_relative,
        format!("relative error {relative_error:.3e} (tolerance {:.1e})", tol.derivative_relative),
    );
    let centering_residual = d.centering_residual;
    if matches!(start, Start::Density(_)) {
        ctx.check(
            "centering",
            centering_residual <= tol.centering,
            format!("|∫ mu D| = {centering_residual:.3e} (tolerance {:.1e})", tol.centering),
        );
    }
    let gen = ctx.lift(generator_density(&kernel, &p.f))?;
    let pf = ctx.lift(kernel.apply_all(&p.f))?;
    let expected: Vec<f64> = p.f.iter().zip(&pf).map(|(a, b)| a - b).collect();
    let generator_residual = sup_abs(&gen, &expected);
    ctx.check(
        "generator-identity",
        generator_residual <= tol.centering,
        format!("sup residual {generator_residual:.3e} (tolerance {:.1e})", tol.centering),
    );
    ctx.json(
        "derivative.json",
        &json!({
            "family": p.family.describe(),
            "start": start_tag(start),
            "analytic_action": analytic,
            "oracle_action": oracle,
            "relative_error": relative_error,
            "centering_residual": centering_residual,
            "generator_residual": generator_residual,
            "invariance_residual": inv.residual,
        }),
    )?;
    let mesh = p.mesh.clone();
    ctx.file("derivative.csv", |w| {
        let plane = mesh.dim() == 2;
        writeln!(w, "{}density_part,singular_part", if plane { "node1,node2," } else { "node," })?;
        for k in 0..mesh.len() {
            let pt = mesh.point(k);
            let s = d.singular_part.as_ref().map_or(0.0, |s| s.values[k] * s.support[k]);
            if plane {
                writeln!(w, "{:.16e},{:.16e},{:.16e},{:.16e}", pt[0], pt[1], d.density_part[k], s)?;
            } else {
                writeln!(w, "{:.16e},{:.16e},{:.16e}", pt[0], d.density_part[k], s)?;
            }
        }
        Ok(())
    })
}

fn ftc_check(ctx: &mut Context<'_>) -> std::result::Result<(), CliError> {
    let p = pair(ctx)?;
    let cfg = ctx.cfg;
    let (nu, start) = (p.nu.as_ref().expect("validated"), p.start.as_ref().expect("validated"));
    let tol = match start {
        Start::Density(_) => cfg.tolerances.ftc_density,
        Start::Point(_) => cfg.tolerances.ftc_point,
    };
    ctx.stage = "integrating the derivative";
    let n = cfg.ftc.t_nodes;
    let fine = ctx.lift(verify_ftc(&p.family, &p.mu, nu, start, &p.f, n, DerivativeOptions::default()))?;
    let coarse_n = (n - 1) / 2 + 1;
    let coarse = if coarse_n >= 5 {
        Some(ctx.lift(verify_ftc(&p.family, &p.mu, nu, start, &p.f, coarse_n, DerivativeOptions::default()))?)
    } else {
        None
    };
    ctx.check("ftc-residual", fine.residual <= tol, format!("residual {:.3e} at {n} nodes (tolerance {tol:.1e})", fine.residual));
    let refinement = coarse.as_ref().map(|c| c.residual / fine.residual.max(1e-300));
    if let (Some(c), Some(r)) = (&coarse, refinement) {
        // Both at rounding level counts as converged.
        let floor = 1e-13 * (1.0 + fine.lhs.abs());
        let pass = r >= 2.0 || c.residual <= floor;
        ctx.check("ftc-refinement", pass, format!("residual ratio {r:.2} from {coarse_n} to {n} nodes"));
    }
    let intrinsic = match (&cfg.ftc.transport, start) {
        (Some(t), Start::Density(rho)) => {
            ctx.stage = "checking the transport form";
            let r = ctx.lift(verify_ftc_intrinsic(&p.family, &p.mu, t, rho, &p.f, n, cfg.ftc.s_nodes, DerivativeOptions::default()))?;
            ctx.check("ftc-transport", r.residual <= tol, format!("residual {:.3e}", r.residual));
            Some(r)
        }
        _ => None,
    };
    ctx.json(
        "ftc.json",
        &json!({
            "family": p.family.describe(),
            "start": start_tag(start),
            "lhs": fine.lhs,
            "rhs": fine.rhs,
            "residuals": {
                "fine": fine.residual,
                "coarse": coarse.as_ref().map(|c| c.residual),
                "refinement_ratio": refinement,
                "transport": intrinsic.as_ref().map(|r| r.residual),
            },
        }),
    )?;
    ctx.file("ftc_trace.csv", |w| {
        writeln!(w, "t,integrand")?;
        for (t, v) in fine.t_nodes.iter().zip(&fine.integrand) {
            writeln!(w, "{t:.16e},{v:.16e}")?;
        }
        Ok(())
    })
}

fn mvi_check(ctx: &mut Context<'_>) -> std::result::Result<(), CliError> {
    let p = pair(ctx)?;
    let cfg = ctx.cfg;
    let (nu, start) = (p.nu.as_ref().expect("validated"), p.start.as_ref().expect("validated"));
    let opts = MviOptions {
        t_nodes: cfg.mvi.t_nodes,
        warm_start_ceiling: cfg.mvi.warm_start_ceiling,
        singular_time_form: cfg.mvi.singular_time_form,
    };
    ctx.stage = "computing the constants";
    let r = ctx.lift(check_mvi(&p.family, &p.mu, nu, start, &cfg.v, cfg.mvi.trials, cfg.seed, opts))?;
    ctx.check(
        "mvi-bound",
        r.violations == 0,
        format!("{} violations in {} trials, largest ratio {:.3}", r.violations, r.trials, r.empirical_max_ratio),
    );
    ctx.json(
        "mvi.json",
        &json!({
            "family": p.family.describe(),
            "start": start_tag(start),
            "constants": r.constants,
            "bound": r.bound,
            "exact_lhs": r.exact_lhs,
            "empirical_max_ratio": r.empirical_max_ratio,
            "exact_ratio": r.exact_ratio,
            "violations": r.violations,
            "trials": r.trials,
        }),
    )?;
    let ts = r.constants.t_nodes.clone();
    ctx.file("mvi_t_nodes.csv", |w| {
        writeln!(w, "t")?;
        for t in &ts {
            writeln!(w, "{t:.16e}")?;
        }
        Ok(())
    })
}

fn ergodicity_check(ctx: &mut Context<'_>) -> std::result::Result<(), CliError> {
    let p = pair(ctx)?;
    let cfg = ctx.cfg;
    let e = &cfg.ergodicity;
    let tol = &cfg.tolerances;
    ctx.stage = "building the kernels";
    let mut kernels = vec![ctx.lift(p.family.at(&p.mu))?];
    if let Some(nu) = &p.nu {
        kernels.push(ctx.lift(p.family.at(nu))?);
    }
    ctx.stage = "searching a drift certificate";
    let cert = ctx.lift(scan_drift(&kernels, &cfg.v, &e.drift_rates))?;
    ctx.check(
        "drift",
        cert.is_some(),
        cert.as_ref().map_or("no rate and level set satisfy the drift".into(), |c| {
            format!("lambda {} b {:.4} d {:.4}", c.drift_rate, c.b, c.d)
        }),
    );
    let mut minor = None;
    if let Some(c) = &cert {
        ctx.stage = "checking the minorization";
        let set = level_set(&kernels[0], &cfg.v, c.d);
        let m = ctx.lift(check_minorization(&kernels, &set, e.minorization_steps, tol.kappa_floor))?;
        ctx.check("minorization", m.pass, format!("kappa {:.3e} with j = {}", m.inf_kappa, m.j));
        minor = Some((m, rw_minorization_bound(&kernels[0], &set)));
    }
    ctx.stage = "estimating the geometric rate";
    let grid_starts: Vec<usize> = match p.mesh.as_line() {
        Some(g) => e.rate_starts.iter().map(|x| g.nearest(*x)).collect(),
        None => {
            let g = p.mesh.plane_grid().expect("a mesh is a line or a plane");
            e.rate_starts.iter().map(|x| g.index(g.first.nearest(*x), g.second.nearest(0.0))).collect()
        }
    };
    let rate = ctx.lift(estimate_geometric_rate(&kernels[0], &grid_starts, e.rate_steps, &cfg.v))?;
    ctx.stage = "solving the Poisson equation";
    let table = ctx.lift(poisson_resolvent(&kernels[0], &p.f, e.resolvent_tolerance))?;
    let sigma2 = ctx.lift(asymptotic_variance(&kernels[0], &table))?;
    ctx.check(
        "poisson-residual",
        table.poisson_residual <= tol.poisson_residual,
        format!("residual {:.3e} after {} terms", table.poisson_residual, table.truncation_k),
    );
    let identity = match &p.nu {
        Some(nu) => {
            let r = ctx.lift(check_resolvent_identity(&p.family, &p.mu, nu, &p.f, e.resolvent_tolerance))?;
            ctx.check("resolvent-identity", r.residual <= tol.resolvent_identity, format!("residual {:.3e}", r.residual));
            Some(r)
        }
        None => None,
    };
    let ssm = match &cfg.ssm {
        Some(s) => {
            ctx.stage = "certifying the state-space mixtures";
            let mut inputs = Vec::new();
            let model = ctx.lift(build::ssm_model(cfg, s, &p.mesh, &mut inputs))?;
            ctx.inputs.extend(inputs);
            let c = ctx.lift(certify_ssm_mixtures(&model, s.phi.bound(), &p.family, 50, 100, &e.drift_rates, cfg.seed))?;
            ctx.check(
                "ssm-certification",
                c.pass(),
                format!("tail margin {:.3e}, drift {}", c.tails.worst_margin, if c.drift.is_some() { "found" } else { "missing" }),
            );
            Some(c)
        }
        None => None,
    };
    let (j, kappa) = minor.as_ref().map_or((None, None), |(m, _)| (Some(m.j), Some(m.inf_kappa)));
    let certificate = cert.clone().map(|c| match (j, kappa) {
        (Some(j), Some(kappa)) => c.with_minorization(Minorization { j, kappa }),
        _ => c,
    });
    ctx.json(
        "ergodicity.json",
        &json!({
            "certificate": {
                "V_tag": cfg.v.tag(),
                "drift_rate": cert.as_ref().map(|c| c.drift_rate),
                "b": cert.as_ref().map(|c| c.b),
                "d": cert.as_ref().map(|c| c.d),
                "j": j,
                "kappa": kappa,
                "beta_est": rate.beta_est,
                "C_est": rate.c_est,
            },
            "full_certificate": certificate,
            "analytic_kappa_bound": minor.as_ref().and_then(|m| m.1),
            "rate_r_squared": rate.r_squared,
            "l_constant": rate.l_constant(),
            "resolvent": {
                "truncation_k": table.truncation_k,
                "tail_bound": table.tail_bound,
                "poisson_residual": table.poisson_residual,
                "centering": table.centering,
                "asymptotic_variance": sigma2,
            },
            "resolvent_identity": identity,
            "ssm": ssm,
        }),
    )?;
    let mesh = p.mesh.clone();
    ctx.file("resolvent.csv", |w| {
        writeln!(w, "node,f,resolvent")?;
        for k in 0..mesh.len() {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", mesh.point(k)[0], p.f[k], table.values[k])?;
        }
        Ok(())
    })
}

/// Shared setup of the Feynman–Kac experiments.
struct SsmSetup {
    mesh: Mesh,
    family: KernelFamily,
    model: FeynmanKacModel,
    flow: Vec<GridDensity>,
    f: Vec<f64>,
}

fn ssm_setup(ctx: &mut Context<'_>) -> std::result::Result<SsmSetup, CliError> {
    ctx.stage = "building the state-space model";
    let cfg = ctx.cfg;
    let mut inputs = Vec::new();
    let r = (|| -> Result<SsmSetup> {
        let mesh = build::mesh(cfg)?;
        let family = build::family(cfg, &mesh, &mut inputs)?;
        let model = build::ssm_model(cfg, cfg.ssm.as_ref().expect("validated"), &mesh, &mut inputs)?;
        let flow = model.reference_flow()?;
        let f = build::test_function(cfg, &mesh);
        Ok(SsmSetup { mesh, family, model, flow, f })
    })();
    ctx.inputs.extend(inputs);
    ctx.lift(r)
}

fn write_flow(ctx: &mut Context<'_>, flow: &[GridDensity]) -> std::result::Result<(), CliError> {
    for (i, d) in flow.iter().enumerate() {
        let level = i + 1;
        ctx.file(&format!("flow_level{level}.csv"), |w| write_density_csv(w, d, &format!("reference flow, level {level}")))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct LevelSummary {
    level: usize,
    ergodic_average: f64,
    reference_value: f64,
    batch_means_variance: f64,
    predicted_variance: Option<f64>,
    standard_error: f64,
    acceptance_rate: f64,
}

fn level_summaries(
    ctx: &mut Context<'_>,
    s: &SsmSetup,
    runs: &[&ChainRun],
    predicted: impl Fn(usize) -> Result<Option<f64>>,
) -> std::result::Result<Vec<LevelSummary>, CliError> {
    let cfg = ctx.cfg;
    let grid = *s.mesh.line_grid().expect("line");
    let f = &s.f;
    let eval = |x: f64| {
        let (i, t) = grid.bracket(x);
        if t > 0.0 {
            (1.0 - t) * f[i] + t * f[i + 1]
        } else {
            f[i]
        }
    };
    let mut out = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        let level = i + 1;
        let values = run.values(|st| eval(st[0]));
        let n = values.len() as f64;
        let avg = values.iter().sum::<f64>() / n;
        let bm = ctx.lift(batch_means_variance(&values, cfg.chain.batches))?;
        let reference_value = ctx.lift(s.flow[i].expect(f))?;
        let pred = ctx.lift(predicted(level))?;
        let se = (pred.unwrap_or(bm).max(bm) / n).sqrt();
        ctx.check(
            &format!("level{level}-mean"),
            (avg - reference_value).abs() <= 3.0 * se,
            format!("average {avg:.5} vs flow {reference_value:.5}, 3 SE = {:.5}", 3.0 * se),
        );
        out.push(LevelSummary {
            level,
            ergodic_average: avg,
            reference_value,
            batch_means_variance: bm,
            predicted_variance: pred,
            standard_error: se,
            acceptance_rate: run.acceptance_rate,
        });
    }
    Ok(out)
}

fn smcmc_run(ctx: &mut Context<'_>) -> std::result::Result<(), CliError> {
    let s = ssm_setup(ctx)?;
    let cfg = ctx.cfg;
    let spec = ctx.lift(build::hastings_spec(&s.family))?;
    let levels = cfg.ssm.as_ref().expect("validated").levels;
    let opts = SchemeOptions { x0: cfg.chain.x0, level_start: cfg.chain.level_start, tracked: Some(s.f.clone()), monitor: None };
    ctx.stage = "running the sequential sampler";
    let out = ctx.lift(run_smcmc(&spec, &s.model, levels, cfg.chain.n, cfg.seed, &opts))?;
    ctx.stage = "predicting the variances";
    let sigma = ctx.lift(PoissonVariance::new(&s.family, &s.flow, 1e-10))?;
    let runs: Vec<&ChainRun> = out.iter().map(|l| &l.run).collect();
    let summaries = level_summaries(ctx, &s, &runs, |p| {
        smcmc_variance_recursion(&s.model, &s.flow, p, &s.f, &sigma, Centering::FinalLevel).map(Some)
    })?;
    for (i, l) in out.iter().enumerate() {
        ctx.file(&format!("chain_level{}.csv", i + 1), |w| write_chain_csv(w, &l.run, false))?;
    }
    write_flow(ctx, &s.flow)?;
    ctx.json("smcmc.json", &json!({ "scheme": "smcmc", "n": cfg.chain.n, "seed": cfg.seed, "levels": summaries }))
}

fn imcmc_run(ctx: &mut Context<'_>) -> std::result::Result<(), CliError> {
    let s = ssm_setup(ctx)?;
    let cfg = ctx.cfg;
    let spec = ctx.lift(build::hastings_spec(&s.family))?;
    let levels = cfg.ssm.as_ref().expect("validated").levels;
    let v = match cfg.chain.alpha {
        Some(a) => cfg.v.pow(a),
        None => cfg.v.clone(),
    };
    let monitor = (levels >= 2).then(|| {
        let mut m = MonitorOptions::geometric(v.clone(), Some(s.flow[levels - 1].clone()), cfg.chain.n, 4);
        m.snapshot_at = m.checkpoints.iter().copied().filter(|c| [100, 1000, 10000].contains(c)).collect();
        m
    });
    let opts = SchemeOptions { x0: cfg.chain.x0, level_start: cfg.chain.level_start, tracked: Some(s.f.clone()), monitor };
    ctx.stage = "running the interacting sampler";
    let out = ctx.lift(run_imcmc(&spec, &s.model, levels, cfg.chain.n, cfg.seed, &opts))?;
    ctx.stage = "predicting the variances";
    let sigma = ctx.lift(PoissonVariance::new(&s.family, &s.flow, 1e-10))?;
    let runs: Vec<&ChainRun> = out.levels.iter().collect();
    let summaries = level_summaries(ctx, &s, &runs, |p| {
        if p == 1 {
            let c = s.flow[0].expect(&s.f)?;
            let centred: Vec<f64> = s.f.iter().map(|x| x - c).collect();
            return Ok(Some(mcmc_calculus::feynman_kac::VarianceFunctional::sigma2(&sigma, 1, &centred)?));
        }
        if p != 2 {
            return Ok(None);
        }
        let c = s.flow[1].expect(&s.f)?;
        let centred: Vec<f64> = s.f.iter().map(|x| x - c).collect();
        let s2 = mcmc_calculus::feynman_kac::VarianceFunctional::sigma2(&sigma, 2, &centred)?;
        Ok(Some(s2 + imcmc_extra_variance(&s.model, &s.flow, &s.f, &sigma)?))
    })?;
    let adaptation = match &out.monitor {
        Some(m) => {
            ctx.stage = "checking the adaptation conditions";
            let grid = *s.mesh.line_grid().expect("line");
            let nodes = [grid.nearest(-1.0), grid.nearest(0.0), grid.nearest(1.0)];
            let r = ctx.lift(check_adaptation_conditions(m, Some(&s.family), &nodes))?;
            ctx.check(
                "d1-diagnostics",
                r.d1_pass,
                format!("slopes {:.3} (sup) and {:.3} (V-norm)", r.d1_sup_slope, r.d1_v_slope),
            );
            Some(r)
        }
        None => None,
    };
    for (i, run) in out.levels.iter().enumerate() {
        ctx.file(&format!("chain_level{}.csv", i + 1), |w| write_chain_csv(w, run, false))?;
    }
    write_flow(ctx, &s.flow)?;
    ctx.json(
        "imcmc.json",
        &json!({
            "scheme": "imcmc",
            "n": cfg.chain.n,
            "seed": cfg.seed,
            "alpha": cfg.chain.alpha,
            "levels": summaries,
            "adaptation": adaptation,
        }),
    )
}

fn clt_report(ctx: &mut Context<'_>) -> std::result::Result<(), CliError> {
    let s = ssm_setup(ctx)?;
    let cfg = ctx.cfg;
    let clt = cfg.clt.as_ref().expect("validated");
    let spec = ctx.lift(build::hastings_spec(&s.family))?;
    let setup = CltSetup {
        scheme: clt.scheme,
        spec,
        model: s.model.clone(),
        levels: cfg.ssm.as_ref().expect("validated").levels,
        x0: cfg.chain.x0,
        level_start: cfg.chain.level_start,
        batches: cfg.chain.batches,
        gate: clt.gate,
        variance_tolerance: clt.variance_tolerance,
        monitor: (clt.scheme == Scheme::Imcmc).then(|| {
            let levels = cfg.ssm.as_ref().expect("validated").levels;
            MonitorOptions::geometric(cfg.v.clone(), Some(s.flow[levels - 1].clone()), cfg.chain.n, 4)
        }),
    };
    ctx.stage = "replicating the sampler";
    let r = ctx.lift(clt_experiment(&setup, &s.f, cfg.chain.n, clt.replications, cfg.seed))?;
    ctx.check("random-centring-variance", r.random_pass, format!("ratio to sigma^2 {:.3}", r.random_ratio));
    ctx.check(
        "deterministic-centring-variance",
        r.deterministic_pass,
        format!("ratio to sigma^2 + extra {:.3}", r.deterministic_ratio),
    );
    ctx.check(
        "normality",
        r.normality_pass,
        format!(
            "skewness {:.3}, excess kurtosis {:.3}, KS {:.3}",
            r.normality_stats.skewness, r.normality_stats.excess_kurtosis, r.normality_stats.ks_distance
        ),
    );
    if let Some(a) = &r.adaptation {
        ctx.check("d1-diagnostics", a.d1_pass, format!("slopes {:.3} (sup) and {:.3} (V-norm) on replication 0", a.d1_sup_slope, a.d1_v_slope));
    }
    ctx.file("replications.csv", |w| write_replications_csv(w, &r.per_replication))?;
    ctx.json("clt.json", &r)
}
