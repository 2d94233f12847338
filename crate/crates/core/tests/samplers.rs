mod common;

use common::*;
use mcmc_calculus::prelude::*;
use mcmc_calculus::stats::NormalityGate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian_noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Linear interpolant of nodal values.
fn interp(grid: &Grid1D, f: &[f64], x: f64) -> f64 {
    let (i, s) = grid.bracket(x);
    if s > 0.0 {
        (1.0 - s) * f[i] + s * f[i + 1]
    } else {
        f[i]
    }
}

#[test]
fn empty_and_frozen_chains() {
    let l = line_ref();
    let k = l.family.at(&l.mu).unwrap();
    let run = run_limiting_chain(&k, [0.0, 0.0], 0, 1).unwrap();
    assert!(run.is_empty() && run.acceptance_rate == 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let rw = ProposalKernel::random_walk(l.grid, 1.0).unwrap();
    let run = run_target_chain(&rw, &BalancingFunction::constant(0.0), |x| l.mu.interpolate(x), 1.3, 500, &mut rng, 2, "frozen".into())
        .unwrap();
    assert!(run.states.iter().all(|s| s[0] == 1.3));

    let model = ssm_model(2);
    assert!(run_smcmc(&barker_rw(l.grid), &model, 2, 0, 1, &SchemeOptions::default()).is_err());
    assert!(run_smcmc(&barker_rw(l.grid), &model, 3, 10, 1, &SchemeOptions::default()).is_err());
    let other = barker_rw(Grid1D::symmetric(8.0, 101).unwrap());
    assert!(run_imcmc(&other, &model, 2, 10, 1, &SchemeOptions::default()).is_err());
}

#[test]
fn ergodic_average_matches_the_target() {
    let l = line_ref();
    let k = l.family.at(&l.mu).unwrap();
    let f: Vec<f64> = l.grid.nodes().iter().map(|x| (x * x).min(4.0)).collect();
    let run = run_limiting_chain(&k, [0.0, 0.0], 200_000, 17).unwrap();
    let values = run.values(|s| interp(&l.grid, &f, s[0]));
    let avg = values.iter().sum::<f64>() / values.len() as f64;
    let se = batch_se(&values, 100);
    let exact = l.mu.expect(&f).unwrap();
    assert!((avg - exact).abs() <= 3.0 * se, "{avg} vs {exact} (se {se})");
}

#[test]
fn one_level_schemes_are_the_limiting_chain() {
    let l = line_ref();
    let model = ssm_model(2);
    let spec = barker_rw(l.grid);
    let opts = SchemeOptions { x0: 0.4, ..SchemeOptions::default() };
    let seq = run_smcmc(&spec, &model, 1, 2000, 5, &opts).unwrap();
    let int = run_imcmc(&spec, &model, 1, 2000, 5, &opts).unwrap();
    let eta1 = model.eta1().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let direct = run_target_chain(&spec.proposal, &spec.balancing, |x| eta1.interpolate(x), 0.4, 2000, &mut rng, 5, String::new()).unwrap();
    assert_eq!(seq[0].run.states, direct.states);
    assert_eq!(int.levels[0].states, direct.states);
}

#[test]
fn schemes_are_deterministic_in_the_seed() {
    let l = line_ref();
    let model = ssm_model(3);
    let spec = barker_rw(l.grid);
    let opts = SchemeOptions { tracked: Some(l.f.clone()), ..SchemeOptions::default() };
    let a = run_smcmc(&spec, &model, 3, 3000, 9, &opts).unwrap();
    let b = run_smcmc(&spec, &model, 3, 3000, 9, &opts).unwrap();
    let c = run_smcmc(&spec, &model, 3, 3000, 10, &opts).unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| x.run == y.run));
    assert_ne!(a[2].run.states, c[2].run.states);
    let a = run_imcmc(&spec, &model, 3, 3000, 9, &opts).unwrap();
    let b = run_imcmc(&spec, &model, 3, 3000, 9, &opts).unwrap();
    assert_eq!(a.levels, b.levels);
    assert_eq!(a.centring_sums, b.centring_sums);
}

#[test]
fn smcmc_targets_approach_the_flow() {
    let l = line_ref();
    let model = ssm_model(2);
    let flow = model.reference_flow().unwrap();
    let opts = SchemeOptions { tracked: Some(l.f.clone()), ..SchemeOptions::default() };
    let levels = run_smcmc(&barker_rw(l.grid), &model, 2, 40_000, 3, &opts).unwrap();
    let exact = flow[1].expect(&l.f).unwrap();
    let got = levels[1].target_expectation.unwrap();
    assert!((got - exact).abs() < 0.05, "{got} vs {exact}");
    assert_eq!(levels[0].target_expectation.unwrap(), flow[0].expect(&l.f).unwrap());
}

#[test]
fn batch_means_on_iid_and_constant_input() {
    let x = gaussian_noise(100_000, 4);
    let v = batch_means_variance(&x, 100).unwrap();
    assert!((v - 1.0).abs() < 0.15, "{v}");
    assert_eq!(batch_means_variance(&vec![3.0; 1000], 20).unwrap(), 0.0);
    assert!(batch_means_variance(&x, 19).is_err());
    assert!(batch_means_variance(&x[..10], 20).is_err());
}

#[test]
fn batch_means_agree_with_the_resolvent() {
    let l = line_ref();
    let k = l.family.at(&l.mu).unwrap();
    let table = poisson_resolvent(&k, &l.f, 1e-10).unwrap();
    let sigma2 = asymptotic_variance(&k, &table).unwrap();
    let run = run_limiting_chain(&k, [0.0, 0.0], 1_000_000, 23).unwrap();
    let values = run.values(|s| interp(&l.grid, &l.f, s[0]));
    let bm = batch_means_variance(&values, 400).unwrap();
    assert!((bm / sigma2 - 1.0).abs() < 0.15, "{bm} vs {sigma2}");
}

#[test]
fn monitor_flags_targets_that_keep_moving() {
    let grid = line();
    let a = GridDensity::gaussian(grid, -1.0, 1.0).unwrap();
    let b = GridDensity::gaussian(grid, 1.0, 1.0).unwrap();
    let opts = MonitorOptions::geometric(WeightFunction::Constant, Some(a.clone()), 10_000, 4);
    assert_eq!(opts.checkpoints.first(), Some(&10));
    assert!(opts.checkpoints.windows(2).all(|w| w[0] < w[1]));

    let mut alternating = AdaptationMonitor::new(grid, opts.clone()).unwrap();
    let mut fixed = AdaptationMonitor::new(grid, opts).unwrap();
    for k in 0..=10_000 {
        alternating.push_values(if k % 2 == 0 { a.values() } else { b.values() });
        fixed.push_values(a.values());
    }
    let r = check_adaptation_conditions(&alternating, None, &[]).unwrap();
    assert!(!r.d1_pass && r.d1_sup_slope > 0.4, "{r:?}");
    let r = check_adaptation_conditions(&fixed, None, &[]).unwrap();
    assert!(r.d1_pass);
    assert!(r.points.iter().all(|p| p.pointwise_gap == Some(0.0)));
}

#[test]
fn converging_targets_pass_the_monitor() {
    // mu_k = (1 - 1/k) a + b / k moves by O(k^-2) per step.
    let grid = line();
    let a = GridDensity::gaussian(grid, 0.0, 1.0).unwrap();
    let b = GridDensity::gaussian(grid, 1.0, 1.0).unwrap();
    let mut m = AdaptationMonitor::new(grid, MonitorOptions::geometric(WeightFunction::Quadratic, Some(a.clone()), 10_000, 4)).unwrap();
    for k in 1..=10_001 {
        let t = 1.0 / k as f64;
        let v: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| (1.0 - t) * x + t * y).collect();
        m.push_values(&v);
    }
    let r = check_adaptation_conditions(&m, None, &[]).unwrap();
    assert!(r.d1_pass && r.d1_sup_slope < -0.4, "{r:?}");
    assert!(r.pointwise_gap_slope.unwrap() < -0.9);
}

#[test]
fn clt_harness_rejects_small_setups() {
    let l = line_ref();
    let setup = CltSetup {
        scheme: Scheme::Smcmc,
        spec: barker_rw(l.grid),
        model: ssm_model(2),
        levels: 2,
        x0: 0.0,
        level_start: LevelStart::PreviousFinal,
        batches: 20,
        gate: NormalityGate::default(),
        variance_tolerance: 0.2,
        monitor: None,
    };
    assert!(clt_experiment(&setup, &l.f, 1000, 99, 1).is_err());
    let one = CltSetup { levels: 1, ..setup.clone() };
    assert!(clt_experiment(&one, &l.f, 1000, 100, 1).is_err());
    let three = CltSetup { scheme: Scheme::Imcmc, levels: 3, model: ssm_model(3), ..setup };
    assert!(clt_experiment(&three, &l.f, 1000, 100, 1).is_err());
}
