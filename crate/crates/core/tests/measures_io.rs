mod common;

use common::*;
use mcmc_calculus::io::{load_density, read_chain_states, read_density_csv, save_density, write_chain_csv, write_density_csv};
use mcmc_calculus::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

#[test]
fn v_norm_of_functions() {
    let grid = Grid1D::symmetric(5.0, 101).unwrap();
    let mesh: Mesh = grid.into();
    let zero = vec![0.0; grid.len()];
    assert_eq!(v_norm_function(&mesh, &zero, &WeightFunction::Quadratic).unwrap(), 0.0);
    let v = WeightFunction::Quadratic.on_mesh(&mesh);
    assert!((v_norm_function(&mesh, &v, &WeightFunction::Quadratic).unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(v_norm_function(&mesh, &grid.nodes(), &WeightFunction::Constant).unwrap(), 5.0);
}

#[test]
fn total_variation_of_identical_and_disjoint_measures() {
    let grid = line();
    let mu = GridDensity::gaussian(grid, 0.0, 1.0).unwrap();
    let zero = SignedGridFunction::difference(&mu, &mu).unwrap();
    assert_eq!(v_norm_measure(&zero, &WeightFunction::Constant).unwrap(), 0.0);

    let a = GridDensity::triangle_spike(grid, grid.nearest(-3.0), 4).unwrap();
    let b = GridDensity::triangle_spike(grid, grid.nearest(3.0), 4).unwrap();
    let chi = SignedGridFunction::difference(&a, &b).unwrap();
    assert!((v_norm_measure(&chi, &WeightFunction::Constant).unwrap() - 2.0).abs() < 1e-14);
}

#[test]
fn total_variation_of_shifted_normals() {
    // Closed form 2 (2 Phi(1/2) - 1), and the value is stable under 4x refinement.
    let tv = |n: usize| {
        let grid = Grid1D::new(-8.0, 9.0, n).unwrap();
        let mu = GridDensity::gaussian(grid, 0.0, 1.0).unwrap();
        let nu = GridDensity::gaussian(grid, 1.0, 1.0).unwrap();
        v_norm_measure(&SignedGridFunction::difference(&nu, &mu).unwrap(), &WeightFunction::Constant).unwrap()
    };
    let exact = 2.0 * (2.0 * Normal::standard().cdf(0.5) - 1.0);
    let (coarse, fine) = (tv(341), tv(1361));
    assert!((coarse - fine).abs() < 1e-3, "{coarse} {fine}");
    assert!((fine - exact).abs() < 1e-4, "{fine} vs {exact}");
}

#[test]
fn contamination_curve_endpoints_and_mass() {
    let grid = line();
    let mu = GridDensity::gaussian(grid, 0.0, 1.0).unwrap();
    let nu = GridDensity::gaussian(grid, 1.5, 0.7).unwrap();
    let c = ContaminationCurve::new(mu.clone(), nu.clone()).unwrap();
    assert_eq!(c.at(0.0).unwrap().values(), mu.values());
    assert_eq!(c.at(1.0).unwrap().values(), nu.values());
    assert!((c.at(0.5).unwrap().mass() - 1.0).abs() < 1e-12);
    assert!(c.at(1.5).is_err());
}

#[test]
fn integration_oracles() {
    let grid = line();
    let rho = GridDensity::gaussian(grid, 0.0, 1.0).unwrap();
    assert!((integrate(&vec![3.5; grid.len()], &rho).unwrap() - 3.5).abs() < 1e-10);
    assert!(integrate(&grid.nodes(), &rho).unwrap().abs() < 1e-14);
    let sq: Vec<f64> = grid.nodes().iter().map(|x| x * x).collect();
    let fine = grid.refined(4);
    let rho4 = GridDensity::gaussian(fine, 0.0, 1.0).unwrap();
    let sq4: Vec<f64> = fine.nodes().iter().map(|x| x * x).collect();
    let (a, b) = (integrate(&sq, &rho).unwrap(), integrate(&sq4, &rho4).unwrap());
    assert!((a - 1.0).abs() < 1e-4 && (a - b).abs() < 1e-6, "{a} {b}");
}

#[test]
fn simpson_is_exact_for_cubics() {
    let (t, w) = simpson_rule(33).unwrap();
    let s: f64 = t.iter().zip(&w).map(|(t, w)| w * (4.0 * t * t * t - 3.0 * t * t + 1.0)).sum();
    assert!((s - 1.0).abs() < 1e-14);
    assert!(simpson_rule(32).is_err());
}

#[test]
fn densities_must_be_valid() {
    let grid = Grid1D::symmetric(1.0, 5).unwrap();
    assert!(GridDensity::new(grid, vec![1.0, -1.0, 1.0, 1.0, 1.0]).is_err());
    assert!(GridDensity::new(grid, vec![0.0; 5]).is_err());
    assert!(GridDensity::new(grid, vec![1.0; 4]).is_err());
    assert!(Grid1D::new(1.0, 0.0, 5).is_err());
    assert!(GridDensity::new(grid, vec![1.0, f64::NAN, 1.0, 1.0, 1.0]).is_err());
}

#[test]
fn density_csv_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let grid = line();
    let mu = GridDensity::from_fn(grid, |p| (-(p[0] - 0.1).powi(2) / 1.7).exp() * (1.0 + 0.3 * p[0].sin().powi(2))).unwrap();
    let path = dir.path().join("mu.csv");
    save_density(&path, &mu, "skewed bump").unwrap();
    let back = load_density(&path).unwrap();
    assert!(mu.values().iter().zip(back.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    back.mesh().ensure_same(mu.mesh()).unwrap();

    let joint = plane_ref().mu;
    let mut buf = Vec::new();
    write_density_csv(&mut buf, &joint, "joint").unwrap();
    let (back, header) = read_density_csv(&buf[..]).unwrap();
    assert_eq!(header.description, "joint");
    assert!(header.second.is_some());
    assert!(joint.values().iter().zip(back.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn malformed_density_csv_is_rejected() {
    let grid = Grid1D::symmetric(1.0, 3).unwrap();
    let mut buf = Vec::new();
    write_density_csv(&mut buf, &GridDensity::new(grid, vec![1.0, 2.0, 1.0]).unwrap(), "").unwrap();
    let text = String::from_utf8(buf).unwrap();
    let truncated: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
    assert!(read_density_csv(truncated.as_bytes()).is_err());
    let moved = text.replacen("0.0000000000000000e0", "1.0000000000000000e-1", 1);
    assert!(read_density_csv(moved.as_bytes()).is_err());
}

#[test]
fn chain_csv_round_trip() {
    let l = line_ref();
    let k = l.family.at(&l.mu).unwrap();
    let run = run_limiting_chain(&k, [0.0, 0.0], 500, 3).unwrap();
    let mut buf = Vec::new();
    write_chain_csv(&mut buf, &run, false).unwrap();
    let states = read_chain_states(&buf[..]).unwrap();
    assert_eq!(states.len(), 500);
    assert!(states.iter().zip(&run.states).all(|(a, b)| a[0].to_bits() == b[0].to_bits()));
    let header = String::from_utf8(buf).unwrap();
    assert!(header.starts_with("# {"));
    assert!(header.contains("\"seed\":3"));
}
