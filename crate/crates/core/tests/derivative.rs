mod common;

use common::*;
use mcmc_calculus::prelude::*;

fn action(family: &KernelFamily, mu: &GridDensity, nu: &GridDensity, start: &Start, f: &[f64]) -> f64 {
    let d = derivative(&family.at(mu).unwrap(), start, f, DerivativeOptions::default()).unwrap();
    d.action(&SignedGridFunction::difference(nu, mu).unwrap()).unwrap()
}

#[test]
fn oracle_vanishes_without_direction_and_is_linear() {
    let l = line_ref();
    let start = Start::Density(l.rho.clone());
    let zero = fd_directional_derivative(&l.family, &l.mu, &l.mu, &start, &l.f).unwrap();
    assert_eq!(zero, 0.0);
    let half = ContaminationCurve::new(l.mu.clone(), l.nu.clone()).unwrap().at(0.5).unwrap();
    let full = fd_directional_derivative(&l.family, &l.mu, &l.nu, &start, &l.f).unwrap();
    let halved = fd_directional_derivative(&l.family, &l.mu, &half, &start, &l.f).unwrap();
    assert!((halved - 0.5 * full).abs() < 1e-5 * full.abs());
}

#[test]
fn reference_hastings_density_start() {
    let l = line_ref();
    let start = Start::Density(l.rho.clone());
    let a = action(&l.family, &l.mu, &l.nu, &start, &l.f);
    let o = fd_directional_derivative(&l.family, &l.mu, &l.nu, &start, &l.f).unwrap();
    assert!(rel(a, o) < 1e-4, "{a} {o}");
}

#[test]
fn wide_start_is_not_warm() {
    // rho = N(0, 2) has rho / mu^2 of order e^56 at the grid ends.
    let l = line_ref();
    let rho = GridDensity::gaussian(l.grid, 0.0, 2.0).unwrap();
    let k = l.family.at(&l.mu).unwrap();
    let f = l.grid.nodes();
    match derivative_density(&k, &rho, &f, DerivativeOptions::default()) {
        Err(Error::WarmStart { node, ratio, .. }) => {
            assert!(node == 0 || node == l.grid.len() - 1, "{node}");
            assert!(ratio > 1e6);
        }
        other => panic!("expected a warm-start error, got {other:?}"),
    }
    // Without the ceiling the grid derivative still agrees with the oracle.
    let d = derivative_density(&k, &rho, &f, DerivativeOptions::unbounded()).unwrap();
    let a = d.action(&SignedGridFunction::difference(&l.nu, &l.mu).unwrap()).unwrap();
    let o = fd_directional_derivative(&l.family, &l.mu, &l.nu, &Start::Density(rho), &f).unwrap();
    assert!(rel(a, o) < 1e-4, "{a} {o}");
}

#[test]
fn constant_functions_have_zero_derivative() {
    let l = line_ref();
    let p = plane_ref();
    let c = |n| vec![1.7; n];
    for (k, start) in [
        (l.family.at(&l.mu).unwrap(), Start::Density(l.rho.clone())),
        (l.family.at(&l.mu).unwrap(), Start::Point(l.grid.nearest(0.3))),
        (p.family.at(&p.mu).unwrap(), Start::Density(p.rho.clone())),
        (p.family.at(&p.mu).unwrap(), Start::Point(p.grid.index(20, 25))),
    ] {
        let n = k.mesh().len();
        let d = derivative(&k, &start, &c(n), DerivativeOptions::default()).unwrap();
        assert!(d.density_part.iter().all(|v| v.abs() < 1e-8));
        if let Some(s) = &d.singular_part {
            assert!(s.values.iter().all(|v| v.abs() < 1e-8));
        }
        let chi = SignedGridFunction::difference(&if n == l.grid.len() { l.nu.clone() } else { p.nu.clone() }, k.target()).unwrap();
        assert!(d.action(&chi).unwrap().abs() < 1e-8);
    }
}

#[test]
fn generator_identity_both_families() {
    let l = line_ref();
    let p = plane_ref();
    for (k, f) in [(l.family.at(&l.mu).unwrap(), &l.f), (p.family.at(&p.mu).unwrap(), &p.f)] {
        let d = derivative_density(&k, &k.target().clone(), f, DerivativeOptions::unbounded()).unwrap();
        let pf = k.apply_all(f).unwrap();
        let worst = d.density_part.iter().zip(&pf).zip(f.iter()).map(|((d, p), f)| (d - (f - p)).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
        assert!(d.centering_residual < 1e-12);
    }
}

#[test]
fn point_start_matches_spike_refinement() {
    let l = line_ref();
    let x = l.grid.nearest(0.5);
    let a = action(&l.family, &l.mu, &l.nu, &Start::Point(x), &l.f);
    let r = spike_refinement(&l.family, &l.mu, &l.nu, x, &l.f, &[8, 4, 2, 1]).unwrap();
    assert!(rel(a, r.point_value) < 5e-4);
    let gaps: Vec<f64> = r.spike_values.iter().map(|s| (s - r.point_value).abs()).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(rel(*r.spike_values.last().unwrap(), a) < 5e-2);
}

#[test]
fn metropolis_hastings_has_no_derivative() {
    let l = line_ref_with(BalancingFunction::MinOne);
    let k = l.family.at(&l.mu).unwrap();
    assert!(matches!(derivative_point(&k, 100, &l.f), Err(Error::Precondition(_))));
    assert!(matches!(
        derivative_density(&k, &l.rho, &l.f, DerivativeOptions::default()),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn gibbs_against_oracle() {
    let p = plane_ref();
    for start in [Start::Density(p.rho.clone()), Start::Point(p.grid.index(17, 24))] {
        let a = action(&p.family, &p.mu, &p.nu, &start, &p.f);
        let o = fd_directional_derivative(&p.family, &p.mu, &p.nu, &start, &p.f).unwrap();
        assert!(rel(a, o) < 1e-4, "{a} {o}");
    }
}

#[test]
fn gibbs_product_joint_point_start_closed_form() {
    // With mu = m1 x m2 and nu = n1 x m2 the sweep from x is
    // P_t(x, f) = ∫ f(y1) m1_t(y1) dy1 for f depending on y1 only, so the
    // derivative is (n1 - m1)(f).
    let g = Grid1D::symmetric(5.0, 41).unwrap();
    let grid = Grid2D::new(g, g);
    let (m1, n1, m2) = (
        GridDensity::gaussian(g, 0.0, 1.0).unwrap(),
        GridDensity::gaussian(g, 0.4, 1.2).unwrap(),
        GridDensity::gaussian(g, 0.0, 0.8).unwrap(),
    );
    let mu = GridDensity::from_fn(grid, |p| m1.interpolate(p[0]) * m2.interpolate(p[1])).unwrap();
    let nu = GridDensity::from_fn(grid, |p| n1.interpolate(p[0]) * m2.interpolate(p[1])).unwrap();
    let f1: Vec<f64> = g.nodes().iter().map(|x| x.sin() + 0.5 * x).collect();
    let f = Mesh::from(grid).tabulate(|p| p[0].sin() + 0.5 * p[0]);
    let expect = integrate(&f1, &n1).unwrap() - integrate(&f1, &m1).unwrap();
    let a = action(&KernelFamily::Gibbs, &mu, &nu, &Start::Point(grid.index(30, 12)), &f);
    assert!((a - expect).abs() < 1e-10, "{a} {expect}");
}

#[test]
fn exact_family_derivative_is_the_direction() {
    let l = line_ref();
    let a = action(&KernelFamily::Exact, &l.mu, &l.nu, &Start::Density(l.rho.clone()), &l.f);
    let expect = integrate(&l.f, &l.nu).unwrap() - integrate(&l.f, &l.mu).unwrap();
    assert!((a - expect).abs() < 1e-12);
}

/// Reference pair with a target wide enough for the shifted starts to stay warm.
fn wide() -> (KernelFamily, GridDensity, GridDensity, GridDensity, Vec<f64>) {
    let l = line_ref();
    (
        l.family,
        GridDensity::gaussian(l.grid, 0.0, 2.0).unwrap(),
        GridDensity::gaussian(l.grid, 0.3, 2.0).unwrap(),
        GridDensity::gaussian(l.grid, 0.2, 0.8).unwrap(),
        l.f,
    )
}

#[test]
fn iterated_derivative_matches_oracle() {
    let (family, mu, nu, rho, f) = wide();
    let k = family.at(&mu).unwrap();
    let start = Start::Density(rho);
    let oracle = DirectionalDerivativeOracle::default();
    for (steps, tol) in [(2, 5e-4), (3, 1e-3)] {
        let a = iterated_derivative(&k, steps, &nu, &start, &f, DerivativeOptions::default()).unwrap();
        let o = oracle.estimate(&family, &mu, &nu, &start, &f, steps).unwrap().value;
        assert!(rel(a.total, o) < tol, "k={steps}: {} {o}", a.total);
        assert_eq!(a.terms.len(), steps);
    }
    let same = iterated_derivative(&k, 2, &mu, &start, &f, DerivativeOptions::default()).unwrap();
    assert_eq!(same.total, 0.0);
}

#[test]
fn iterated_derivative_rejects_cold_shifted_starts() {
    let l = line_ref();
    let k = l.family.at(&l.mu).unwrap();
    let r = iterated_derivative(&k, 3, &l.nu, &Start::Density(l.rho.clone()), &l.f, DerivativeOptions::default());
    assert!(matches!(r, Err(Error::Precondition(m)) if m.contains("j = [")));
}

#[test]
fn iid_chain_derivative_is_exact_from_the_first_step() {
    // Proposing from the target and always accepting: P_mu(x, .) = mu.
    let l = line_ref();
    let r = iterated_derivative_limit_check(&KernelFamily::Exact, &l.mu, &l.nu, &Start::Density(l.rho.clone()), &l.f, 5, 1e-3).unwrap();
    assert!(r.gaps.iter().all(|g| *g < 1e-12), "{:?}", r.gaps);
    let r = iterated_derivative_limit_check(&l.family, &l.mu, &l.mu, &Start::Density(l.rho.clone()), &l.f, 4, 1e-3).unwrap();
    assert!(r.actions.iter().all(|a| *a == 0.0));
}

#[test]
fn barker_independence_limit() {
    let l = line_ref();
    let family = KernelFamily::Hastings {
        proposal: ProposalKernel::independence(GridDensity::gaussian(l.grid, 0.0, 1.6).unwrap()).unwrap(),
        balancing: BalancingFunction::Barker,
    };
    let r = iterated_derivative_limit_check(&family, &l.mu, &l.nu, &Start::Density(l.rho.clone()), &l.f, 30, 1e-3).unwrap();
    assert!(r.pass && r.final_gap < 1e-3, "{}", r.final_gap);
    assert!(r.decay_rate > 0.0 && r.decay_rate < 1.0);
}

#[test]
fn drift_through_the_generator() {
    let l = line_ref();
    let k = l.family.at(&l.mu).unwrap();
    let zero = vec![0.0; l.grid.len()];
    assert!(!drift_via_derivative(&k, &zero, &vec![false; l.grid.len()], 0.0).unwrap().pass);

    // -(V - PV) <= -1 + b 1_C with V = 1 + x^2 and C = {|x| <= 3}; the
    // smallest admissible b is the largest PV - V + 1 on C.
    let v = WeightFunction::Quadratic.on_mesh(k.mesh());
    let pv = k.apply_all(&v).unwrap();
    let in_c: Vec<bool> = l.grid.nodes().iter().map(|x| x.abs() <= 3.0).collect();
    let b = (0..v.len()).filter(|i| in_c[*i]).map(|i| pv[i] - v[i] + 1.0).fold(0.0, f64::max);
    assert!(drift_via_derivative(&k, &v, &in_c, b).unwrap().pass);
    assert!(!drift_via_derivative(&k, &v, &in_c, 0.5 * b).unwrap().pass);

    // For the iid chain the condition reads P f(x) >= f(x) + 1 - b 1_C.
    let iid = Kernel::Hastings(
        HastingsKernel::new(l.mu.clone(), ProposalKernel::independence(l.mu.clone()).unwrap(), BalancingFunction::constant(1.0)).unwrap(),
    );
    let f: Vec<f64> = v.iter().map(|x| x - 1.0).collect();
    let mf = integrate(&f, &l.mu).unwrap();
    let b = 3.0;
    let direct = (0..f.len()).all(|i| mf >= f[i] + 1.0 - if in_c[i] { b } else { 0.0 } - 1e-12);
    assert_eq!(drift_via_derivative(&iid, &f, &in_c, b).unwrap().pass, direct);
}

#[test]
fn interchange_margin_is_dominated() {
    let l = line_ref();
    let m = interchange_margin(&l.family, &l.mu, &l.nu, &l.rho, &WeightFunction::Quadratic).unwrap();
    let dom = m.dominating_mass.unwrap();
    assert!(m.integrand_mass.is_finite() && dom.is_finite() && m.integrand_mass <= dom);
}
