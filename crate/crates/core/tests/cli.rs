//! End-to-end runs of the `primeq` binary: exit codes and artifacts.

use std::fs;
use std::path::Path;
use std::process::Command;

use primeq::io::{check_same_digest, read_digest};

const BASE: &str = "
domain.nx = 4
domain.nz = 4
grid.n_steps = 60
grid.t_end = 0.5
noise.d_w = 6
experiment.paths = 6
experiment.trials = 10
rate.iters = 300
output.formats = csv, bin
";

fn run(sub: &str, config: &str, out: &Path, extra: &[&str]) -> i32 {
    let cfg = out.with_extension("cfg");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_primeq"))
        .arg(sub)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

#[test]
fn every_subcommand_succeeds_on_a_small_config() {
    let tmp = tempfile::tempdir().unwrap();
    for (sub, file) in [
        ("identities", "identities.csv"),
        ("hypotheses", "hypotheses.csv"),
        ("simulate", "deterministic.bin"),
        ("strong", "strong.csv"),
        ("clt", "clt.csv"),
        ("mdp", "mdp_diagnostics.csv"),
        ("skeleton", "control.bin"),
        ("rate", "rate.csv"),
    ] {
        let out = tmp.path().join(sub);
        assert_eq!(run(sub, BASE, &out, &[]), 0, "{sub}");
        assert!(out.join(file).exists(), "{sub} missing {file}");
        assert!(out.join("metadata.txt").exists());
        assert!(!out.join("error.csv").exists());
    }
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("x");
    assert_eq!(run("frobnicate", BASE, &out, &[]), 2);
    let err = fs::read_to_string(out.join("error.csv")).unwrap();
    assert!(err.contains("frobnicate"));
}

#[test]
fn bad_config_reports_every_line() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bad");
    let text = "domain.nx = 4\ndomain.nz = four\nnoise.kind = loud\n";
    assert_eq!(run("strong", text, &out, &[]), 2);
    let err = fs::read_to_string(out.join("error.csv")).unwrap();
    assert!(err.contains("line 2") && err.contains("line 3"), "{err}");
}

#[test]
fn silent_noise_skips_the_regression() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("quiet");
    let text = format!("{BASE}noise.sigma = 0\n");
    assert_eq!(run("strong", &text, &out, &[]), 0);
    let csv = fs::read_to_string(out.join("strong.csv")).unwrap();
    assert!(csv.contains("regression_skipped,true"), "{csv}");
}

#[test]
fn step_guard_violation_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("unstable");
    let text = format!("{BASE}solver.c_nl = 1e-6\n");
    assert_eq!(run("simulate", &text, &out, &[]), 3);
    assert!(fs::read_to_string(out.join("error.csv")).unwrap().contains("stability"));
}

#[test]
fn reruns_are_byte_identical_and_seed_changes_the_digest() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    assert_eq!(run("clt", BASE, &a, &["--seed", "9"]), 0);
    assert_eq!(run("clt", BASE, &b, &["--seed", "9"]), 0);
    assert_eq!(run("clt", BASE, &c, &["--seed", "10"]), 0);
    let read = |d: &Path| fs::read(d.join("clt.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert!(check_same_digest(&[&a.join("clt.csv"), &b.join("clt.csv")]).is_ok());
    assert!(check_same_digest(&[&a.join("clt.csv"), &c.join("clt.csv")]).is_err());
    assert_ne!(read_digest(&a.join("clt.csv")).unwrap(), read_digest(&c.join("clt.csv")).unwrap());
}
