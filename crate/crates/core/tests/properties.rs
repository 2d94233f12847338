use mcmc_calculus::io::{read_density_csv, write_density_csv};
use mcmc_calculus::prelude::*;
use proptest::prelude::*;

fn grid() -> Grid1D {
    Grid1D::symmetric(6.0, 61).unwrap()
}

prop_compose! {
    fn gaussian()(m in -1.0..1.0f64, s in 0.7..1.5f64) -> GridDensity {
        GridDensity::gaussian(grid(), m, s).unwrap()
    }
}

prop_compose! {
    /// Positive density with random bumps.
    fn bumpy()(a in prop::collection::vec(0.0..1.0f64, 3), c in prop::collection::vec(-3.0..3.0f64, 3)) -> GridDensity {
        GridDensity::from_fn(grid(), |p| 1e-3 + a.iter().zip(&c).map(|(a, c)| a * (-(p[0] - c).powi(2)).exp()).sum::<f64>()).unwrap()
    }
}

fn balancing() -> impl Strategy<Value = BalancingFunction> {
    prop_oneof![
        Just(BalancingFunction::Barker),
        Just(BalancingFunction::MinOne),
        (1u32..12).prop_map(BalancingFunction::Power),
    ]
}

fn family(sigma: f64, g: BalancingFunction) -> KernelFamily {
    KernelFamily::Hastings { proposal: ProposalKernel::random_walk(grid(), sigma).unwrap(), balancing: g }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kernels_leave_their_target_invariant(mu in bumpy(), sigma in 0.3..2.0f64, g in balancing()) {
        let k = family(sigma, g).at(&mu).unwrap();
        prop_assert!(check_invariance(&k, 1e-12).unwrap().pass);
    }

    #[test]
    fn rows_are_stochastic(mu in bumpy(), sigma in 0.3..2.0f64, g in balancing()) {
        let k = family(sigma, g).at(&mu).unwrap();
        let p1 = k.apply_all(&vec![1.0; grid().len()]).unwrap();
        prop_assert!(p1.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn balancing_is_balanced(g in balancing(), x in 1e-4..1e4f64) {
        let (a, b) = (g.value(x), x * g.value(1.0 / x));
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
    }

    #[test]
    fn derivatives_are_centred(mu in gaussian(), start in -3.0..3.0f64, coef in prop::collection::vec(-1.0..1.0f64, 3)) {
        let k = family(1.0, BalancingFunction::Barker).at(&mu).unwrap();
        let f: Vec<f64> = grid().nodes().iter().map(|x| coef[0] + coef[1] * x.sin() + coef[2] * x.clamp(-2.0, 2.0)).collect();
        let rho = GridDensity::gaussian(grid(), start / 4.0, 0.6).unwrap();
        // Centering does not depend on how warm the start is.
        let d = derivative(&k, &Start::Density(rho), &f, DerivativeOptions::unbounded()).unwrap();
        prop_assert!(d.centering_residual < 1e-12, "{}", d.centering_residual);
        // Point starts are recentred; the action on zero-mass chi ignores the shift.
        let x = Start::Point(grid().nearest(start));
        let d = derivative(&k, &x, &f, DerivativeOptions::default()).unwrap();
        prop_assert!(d.centering().abs() < 1e-12);
        let shifted: Vec<f64> = f.iter().map(|v| v + 3.0).collect();
        let e = derivative(&k, &x, &shifted, DerivativeOptions::default()).unwrap();
        let chi = SignedGridFunction::difference(&GridDensity::gaussian(grid(), 0.2, 1.0).unwrap(), &mu).unwrap();
        prop_assert!((d.action(&chi).unwrap() - e.action(&chi).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn total_variation_is_at_most_two(a in bumpy(), b in bumpy()) {
        let tv = v_norm_measure(&SignedGridFunction::difference(&a, &b).unwrap(), &WeightFunction::Constant).unwrap();
        prop_assert!((0.0..=2.0 + 1e-12).contains(&tv));
    }

    #[test]
    fn density_csv_round_trips(mu in bumpy()) {
        let mut buf = Vec::new();
        write_density_csv(&mut buf, &mu, "p").unwrap();
        let (back, _) = read_density_csv(&buf[..]).unwrap();
        prop_assert!(mu.values().iter().zip(back.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
