use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mcmc_calculus_cli::manifest::{sha256_file, RunManifest};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcmc-calculus"))
        .args(args)
        .env_remove("MCMC_CALCULUS_OUT")
        .env("MCMC_CALCULUS_THREADS", "2")
        .output()
        .unwrap()
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn small_smcmc(dir: &Path) -> PathBuf {
    let obs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/ssm_observations.csv");
    let text = format!(
        r#"kind = "smcmc-run"
seed = 5
[grid]
lower = -8.0
upper = 8.0
n_points = 201
[family]
kind = "hastings"
proposal = {{ kind = "random-walk", sigma = 1.0 }}
balancing = {{ kind = "barker" }}
[ssm]
phi = {{ kind = "scaled-tanh", phi_bar = 1.0 }}
observations = "{}"
levels = 2
[chain]
n = 4000
"#,
        obs.display()
    );
    let path = dir.join("smcmc.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn help_lists_the_subcommands() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for s in ["derivative-check", "ftc-check", "mvi-check", "ergodicity-check", "smcmc-run", "imcmc-run", "clt-report"] {
        assert!(text.contains(s), "{s}");
    }
}

#[test]
fn derivative_check_passes_and_writes_its_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("derivative_hastings.toml");
    let out = run(&["derivative-check", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("derivative.json")).unwrap()).unwrap();
    assert!(report.is_object());
    let m = manifest(dir.path());
    assert!(m.pass && m.checks.iter().all(|c| c.pass));
    assert_eq!(m.config_sha256, sha256_file(&cfg).unwrap());
    for a in &m.artifacts {
        assert_eq!(a.sha256, sha256_file(&dir.path().join(&a.path)).unwrap(), "{}", a.path);
    }
}

#[test]
fn negative_control_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("negative_control_wrong_target.toml");
    let out = run(&["derivative-check", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let m = manifest(dir.path());
    assert!(!m.pass);
    let inv = m.checks.iter().find(|c| c.name == "invariance").unwrap();
    assert!(!inv.pass);
    assert!(String::from_utf8(out.stdout).unwrap().contains("FAIL invariance"));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "kind = \"ftc-check\"\ncolour = 1\n").unwrap();
    let out = run(&["ftc-check", "--config", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("colour"));
    // A config for another subcommand is refused.
    let cfg = configs().join("derivative_hastings.toml");
    let out = run(&["ftc-check", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_smcmc(dir.path());
    let digests = |name: &str, seed: &str| {
        let out_dir = dir.path().join(name);
        let out = run(&["smcmc-run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--seed", seed]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        manifest(&out_dir).artifacts
    };
    let (a, b, c) = (digests("a", "5"), digests("b", "5"), digests("c", "6"));
    assert_eq!(a, b);
    let chain = |d: &[mcmc_calculus_cli::manifest::FileDigest]| d.iter().find(|f| f.path == "chain_level2.csv").unwrap().sha256.clone();
    assert_ne!(chain(&a), chain(&c));
}

#[test]
fn output_directory_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("derivative_hastings.toml");
    let out = Command::new(env!("CARGO_BIN_EXE_mcmc-calculus"))
        .args(["derivative-check", "--config", cfg.to_str().unwrap()])
        .env("MCMC_CALCULUS_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("manifest.json").exists());
}
