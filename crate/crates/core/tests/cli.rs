use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], config: Option<&str>, dir: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_edgecurrents"));
    cmd.args(args).arg("--out").arg(dir.join("out"));
    if let Some(text) = config {
        let path = dir.join("run.toml");
        std::fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().expect("binary runs")
}

const PARABOLIC: &str = "fields = [3.0]\n[potential]\nkind = \"parabolic\"\nstiffness = 4.0\n\
[window]\nlower = 1.5\nupper = 2.5\n[packet]\ngamma = 1.0\nnodes = 21\n[sampling]\nk_samples = 41\n";

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for text in ["bogus = 1\n", "[verify]\nsuites = []\n", "[verify]\nsuites = [\"nope\"]\n", "fields = [-1.0]\n"] {
        let out = run(&["verify"], Some(text), dir.path());
        assert_eq!(out.status.code(), Some(2), "{text}");
    }
    let out = run(&["current"], None, dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["cylinder"], Some(PARABOLIC), dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["scaling"], Some(PARABOLIC), dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn coarse_grid_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["verify"],
        Some("[solver]\nresolution = 4.0\n[verify]\nsuites = [\"oracle\"]\nfast = true\n"),
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let lines = std::fs::read_to_string(dir.path().join("out/verdicts.jsonl")).unwrap();
    assert!(lines.lines().all(|l| l.contains("\"status\":\"fail\"")));
}

#[test]
fn dispersion_writes_curves_plot_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["dispersion"], Some(PARABOLIC), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/dispersion_parabolic_B3.csv")).unwrap();
    assert_eq!(csv.lines().count(), 42);
    assert!(csv.starts_with("k,omega_0,d_omega_fh_0,d_omega_fd_0\n"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/dispersion.json")).unwrap()).unwrap();
    assert_eq!(report["units"]["k"], "1/length");
    assert!(dir.path().join("out/dispersion.gp").exists());
}

#[test]
fn seeded_profiles_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let read = |seed: &str| {
        let out = run(&["current", "--seed", seed, "--threads", "2"], Some(PARABOLIC), dir.path());
        assert_eq!(out.status.code(), Some(0));
        std::fs::read_to_string(dir.path().join("out/current_profiles.csv")).unwrap()
    };
    let (a, b, c) = (read("11"), read("11"), read("12"));
    assert_eq!(a, b);
    assert_ne!(a, c);
}
