use mcmc_calculus_cli::config::{ExperimentKind, FunctionSpec};
use mcmc_calculus_cli::{parse_config, CliError};

const MINIMAL: &str = r#"
kind = "ergodicity-check"
[grid]
lower = -8.0
upper = 8.0
n_points = 101
[family]
kind = "hastings"
proposal = { kind = "random-walk", sigma = 1.0 }
balancing = { kind = "barker" }
[target]
kind = "gaussian"
mean = 0.0
sd = 1.0
"#;

fn errors(text: &str) -> Vec<String> {
    match parse_config(text) {
        Err(CliError::Config(e)) => e,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn minimal_config_gets_defaults() {
    let cfg = parse_config(MINIMAL).unwrap();
    assert_eq!(cfg.kind, ExperimentKind::ErgodicityCheck);
    assert_eq!(cfg.seed, 42);
    assert_eq!(cfg.function, FunctionSpec::ClippedIdentity { clip: 2.0 });
    assert_eq!(cfg.tolerances.derivative_relative, 1e-3);
    assert_eq!(cfg.tolerances.ftc_density, 1e-6);
    assert_eq!(cfg.ftc.t_nodes, 33);
    assert_eq!(cfg.mvi.trials, 1000);
    assert_eq!(cfg.chain.n, 100_000);
    assert_eq!(cfg.chain.batches, 20);
    assert_eq!(cfg.ergodicity.minorization_steps, 1);
}

#[test]
fn unknown_keys_are_named() {
    let e = errors(&format!("{MINIMAL}\n[chain]\nlength = 10\n"));
    assert!(e.iter().any(|m| m.contains("length")), "{e:?}");
    let e = errors(&MINIMAL.replace("n_points = 101", "n_points = 101\nspacing = 0.1"));
    assert!(e.iter().any(|m| m.contains("spacing")), "{e:?}");
}

#[test]
fn alpha_outside_the_open_half_interval() {
    for a in ["0.7", "0.0", "0.5"] {
        let e = errors(&format!("{MINIMAL}\n[chain]\nalpha = {a}\n"));
        assert!(e.iter().any(|m| m.contains("α must lie in (0,1/2)")), "{e:?}");
    }
    assert!(parse_config(&format!("{MINIMAL}\n[chain]\nalpha = 0.25\n")).is_ok());
}

#[test]
fn every_problem_is_reported() {
    let text = MINIMAL.replace("kind = \"ergodicity-check\"", "kind = \"mvi-check\"").replace("n_points = 101", "n_points = 3");
    let e = errors(&text);
    for needle in ["n_points", "approximation", "start"] {
        assert!(e.iter().any(|m| m.contains(needle)), "{needle}: {e:?}");
    }
}

#[test]
fn family_must_fit_the_grid() {
    let e = errors(&MINIMAL.replace("kind = \"hastings\"\nproposal = { kind = \"random-walk\", sigma = 1.0 }\nbalancing = { kind = \"barker\" }", "kind = \"gibbs\""));
    assert!(e.iter().any(|m| m.contains("plane")), "{e:?}");
}

#[test]
fn shipped_configs_parse() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            mcmc_calculus_cli::load_config(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            count += 1;
        }
    }
    assert!(count >= 10);
}
