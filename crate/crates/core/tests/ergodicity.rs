mod common;

use common::*;
use mcmc_calculus::prelude::*;

fn iid(mu: &GridDensity) -> Kernel {
    KernelFamily::Exact.at(mu).unwrap()
}

fn cauchy(grid: Grid1D) -> GridDensity {
    GridDensity::from_fn(grid, |p| 1.0 / (1.0 + p[0] * p[0])).unwrap()
}

#[test]
fn iid_drift_at_one_half() {
    // P V = mu(V) everywhere, so V > 2 mu(V) is outside the small set.
    let grid = line();
    let mu = GridDensity::gaussian(grid, 0.0, 1.0).unwrap();
    let v = WeightFunction::Quadratic;
    let b = mu.expect(&v.on_mesh(mu.mesh())).unwrap();
    let k = [iid(&mu)];
    assert!(check_drift(&k, &v, 0.5, b, 2.0 * b).unwrap().pass());
    let short = check_drift(&k, &v, 0.5, b, 0.75 * 2.0 * b).unwrap();
    assert!(!short.pass() && short.worst_violation > 0.0);
    assert!(check_drift(&k, &v, 0.5, b, 0.0).is_err());
    assert!(check_drift(&k, &v, 1.0, b, 10.0).is_err());
}

#[test]
fn random_walk_drift_scan() {
    let l = line_ref();
    let k = [l.family.at(&l.mu).unwrap(), l.family.at(&l.nu).unwrap()];
    let v = WeightFunction::Quadratic;
    let cert = scan_drift(&k, &v, &[0.5, 0.7, 0.9, 0.95]).unwrap().expect("a certificate");
    assert!(cert.d >= DriftCertificate::d_floor(cert.drift_rate, cert.b));
    assert!(check_drift(&k, &v, cert.drift_rate, cert.b, cert.d).unwrap().pass());
    // A smaller b at the same level fails.
    assert!(!check_drift(&k, &v, cert.drift_rate, 0.9 * cert.b, cert.d.max(DriftCertificate::d_floor(cert.drift_rate, 0.9 * cert.b))).unwrap().pass());
}

#[test]
fn heavy_tails_break_exponential_drift() {
    // For a Cauchy-like target a random walk barely notices the tail, so
    // P V / V is about (1 + e^{1/2}) / 2 > 1 far out.
    let grid = line();
    let rw = ProposalKernel::random_walk(grid, 1.0).unwrap();
    let fam = KernelFamily::Hastings { proposal: rw, balancing: BalancingFunction::Barker };
    let v = WeightFunction::ExpAbs { gamma: 1.0 };
    let heavy = [fam.at(&cauchy(grid)).unwrap()];
    let light = [fam.at(&GridDensity::gaussian(grid, 0.0, 1.0).unwrap()).unwrap()];
    let d = 4f64.exp();
    assert!(!check_drift(&heavy, &v, 0.95, 5.0, d).unwrap().pass());
    assert!(check_drift(&light, &v, 0.95, 5.0, d).unwrap().pass());
}

#[test]
fn independence_minorization() {
    // min(q(y), mu(y) q(x) / mu(x)) >= beta mu(y) with beta = inf_C q / mu.
    let grid = line();
    let mu = GridDensity::gaussian(grid, 0.0, 1.0).unwrap();
    let base = GridDensity::gaussian(grid, 0.0, 1.6).unwrap();
    let fam = KernelFamily::Hastings {
        proposal: ProposalKernel::independence(base.clone()).unwrap(),
        balancing: BalancingFunction::MinOne,
    };
    let k = [fam.at(&mu).unwrap()];
    let c = level_set(&k[0], &WeightFunction::Quadratic, 5.0);
    let beta = c.iter().map(|&i| base.values()[i] / mu.values()[i]).fold(f64::INFINITY, f64::min);
    let mass: f64 = c.iter().map(|&i| mu.masses()[i]).sum();
    let r = check_minorization(&k, &c, 1, 0.0).unwrap();
    assert!(r.pass && r.inf_kappa >= beta * mass * (1.0 - 1e-9), "{} vs {}", r.inf_kappa, beta * mass);

    // An iid chain draws from mu itself, so kappa is mu(C).
    let r = check_minorization(&[iid(&mu)], &c, 1, 0.0).unwrap();
    assert!((r.inf_kappa - mass).abs() < 1e-12);
    assert!(check_minorization(&k, &c, 3, 0.0).is_err());
    assert!(check_minorization(&k, &[], 1, 0.0).is_err());
}

#[test]
fn random_walk_minorization() {
    let l = line_ref();
    let k = l.family.at(&l.mu).unwrap();
    let c = level_set(&k, &WeightFunction::Quadratic, 5.0);
    let bound = rw_minorization_bound(&k, &c).unwrap();
    for j in [1, 2] {
        let r = check_minorization(std::slice::from_ref(&k), &c, j, bound).unwrap();
        assert!(r.pass && r.inf_kappa >= bound, "j={j}: {} < {bound}", r.inf_kappa);
    }
    assert!(rw_minorization_bound(&iid(&l.mu), &c).is_none());
}

#[test]
fn a_proposal_hole_kills_the_minorization() {
    let grid = line();
    let mu = GridDensity::gaussian(grid, 0.0, 1.0).unwrap();
    let holed = GridDensity::from_fn(grid, |p| if p[0].abs() < 0.5 { 0.0 } else { (-p[0] * p[0] / 4.0).exp() }).unwrap();
    let fam = KernelFamily::Hastings {
        proposal: ProposalKernel::independence(holed).unwrap(),
        balancing: BalancingFunction::Barker,
    };
    let k = fam.at(&mu).unwrap();
    let c = level_set(&k, &WeightFunction::Quadratic, 5.0);
    let r = check_minorization(&[k], &c, 1, 0.0).unwrap();
    assert_eq!(r.inf_kappa, 0.0);
    assert!(!r.pass);
}

#[test]
fn log_concave_tails() {
    let grid = line();
    let gauss = GridDensity::gaussian(grid, 0.0, 1.0).unwrap();
    assert!(check_log_concave_tails(std::slice::from_ref(&gauss), 1.0, 1.0).unwrap().pass);
    let r = check_log_concave_tails(&[gauss, cauchy(grid)], 1.0, 1.0).unwrap();
    assert!(!r.pass && r.worst_density == 1);
    assert!(check_log_concave_tails(&[], 1.0, 1.0).is_err());
}

#[test]
fn geometric_rates() {
    let l = line_ref();
    let starts = [l.grid.nearest(0.0), l.grid.nearest(2.0), l.grid.nearest(-3.0)];
    let r = estimate_geometric_rate(&iid(&l.mu), &starts, 10, &WeightFunction::Constant).unwrap();
    assert_eq!(r.beta_est, 0.0);
    assert!(r.distances.iter().all(|a| a[1..].iter().all(|x| *x < 1e-14)));

    let rw = l.family.at(&l.mu).unwrap();
    let a = estimate_geometric_rate(&rw, &starts, 60, &WeightFunction::Quadratic).unwrap();
    assert!(a.beta_est > 0.0 && a.beta_est < 1.0, "{}", a.beta_est);
    assert!(a.r_squared > 0.99, "{}", a.r_squared);
    let b = estimate_geometric_rate(&l.family.at(&l.nu).unwrap(), &starts, 60, &WeightFunction::Quadratic).unwrap();
    assert!(a.l_constant().max(b.l_constant()).is_finite());
    assert!(estimate_geometric_rate(&rw, &starts, 4, &WeightFunction::Constant).is_err());
}

#[test]
fn resolvent_of_an_iid_chain() {
    let l = line_ref();
    let k = iid(&l.mu);
    let t = poisson_resolvent(&k, &l.f, 1e-10).unwrap();
    let mean = l.mu.expect(&l.f).unwrap();
    assert!(t.values.iter().zip(&l.f).all(|(r, f)| (r - (f - mean)).abs() < 1e-12));
    let var: f64 = l.mu.expect(&l.f.iter().map(|f| (f - mean).powi(2)).collect::<Vec<_>>()).unwrap();
    assert!((asymptotic_variance(&k, &t).unwrap() - var).abs() < 1e-10);

    let flat = poisson_resolvent(&l.family.at(&l.mu).unwrap(), &vec![2.5; l.grid.len()], 1e-10).unwrap();
    assert!(flat.values.iter().all(|v| v.abs() < 1e-12));
    assert!(poisson_resolvent(&k, &l.f, 0.0).is_err());
}

#[test]
fn resolvent_solves_poisson_and_the_identity_holds() {
    let l = line_ref();
    let t = poisson_resolvent(&l.family.at(&l.mu).unwrap(), &l.f, 1e-10).unwrap();
    assert!(t.poisson_residual < 1e-8 && t.centering < 1e-8, "{t:?}");
    let same = check_resolvent_identity(&l.family, &l.mu, &l.mu, &l.f, 1e-10).unwrap();
    assert!(same.residual < 1e-12 && same.lhs_sup < 1e-12);
    let r = check_resolvent_identity(&l.family, &l.mu, &l.nu, &l.f, 1e-10).unwrap();
    assert!(r.residual < 1e-6 && r.lhs_sup > 0.01, "{r:?}");
}

#[test]
fn moment_growth_and_root_drift() {
    let l = line_ref();
    let k = [l.family.at(&l.mu).unwrap(), l.family.at(&l.nu).unwrap()];
    let v = WeightFunction::Quadratic;
    let cert = scan_drift(&k, &v, &[0.5, 0.7, 0.9]).unwrap().unwrap();
    let r = check_v_moment_growth(&k, &v, 2, Some(&cert)).unwrap();
    assert!(r.finite && r.jensen_holds && r.root_drift_holds == Some(true), "{r:?}");
    // mu(V^2) = E(1 + X^2)^2 = 1 + 2 + 3 = 6 for N(0, 1).
    assert!((r.moments[0] - 6.0).abs() < 1e-3, "{}", r.moments[0]);
    assert!(check_v_moment_growth(&k, &v, 0, None).is_err());
}

#[test]
fn simulated_drift_respects_the_certificate() {
    let l = line_ref();
    let k = l.family.at(&l.mu).unwrap();
    let cert = scan_drift(std::slice::from_ref(&k), &WeightFunction::Quadratic, &[0.7, 0.9]).unwrap().unwrap();
    let sim = simulate_drift_bound(&k, &cert, [5.0, 0.0], 20, 400, 11).unwrap();
    assert!(sim.pass, "{sim:?}");
    assert_eq!(sim.mean_v[0], 26.0);
    assert!(sim.mean_v[20] < sim.mean_v[0]);
}
