//! End-to-end runs of the compiled binary: flags, config files, exit codes,
//! and the compare subcommand.

use std::path::Path;
use std::process::{Command, Output};

fn entmatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_entmatch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_fixture(out: &Path, fine_balance: bool) -> Output {
    let mut args = vec![
        "run",
        "--input",
        "tests/data/small_example.csv",
        "--out",
        out.to_str().unwrap(),
        "--treatment",
        "treat",
        "--id-col",
        "id",
        "--covariates",
        "drug",
        "--scores",
        "pscore",
        "-K",
        "3",
        "--policy",
        "fail",
        "--distance-file",
        "tests/data/small_example_distances.csv",
        "--seed",
        "7",
    ];
    if fine_balance {
        args.extend(["--fine-balance", "drug"]);
    }
    entmatch(&args)
}

#[test]
fn run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_fixture(dir.path(), true);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    for name in [
        "match.csv",
        "discards.csv",
        "balance_unmatched.csv",
        "balance_matched.csv",
        "balance_unmatched.txt",
        "balance_matched.txt",
        "qq_matched.csv",
        "manifest.toml",
    ] {
        assert!(dir.path().join(name).exists(), "{name} missing");
    }
    let match_csv = std::fs::read_to_string(dir.path().join("match.csv")).unwrap();
    assert!(match_csv.starts_with("set_id,stratum,treated_id,control_id,k_i\n"));
    assert!(match_csv.contains("1,1,t1,c6,1"));
    assert!(match_csv.contains(",3,t8,c15,3"));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("matched 8 treated to 13 controls"));
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = entmatch(&[
        "run",
        "--config",
        "tests/data/small_example_fb.toml",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let manifest = std::fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
    assert!(manifest.contains("total_deviation = 2"));
}

#[test]
fn unknown_column_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = entmatch(&[
        "run",
        "--input",
        "tests/data/small_example.csv",
        "--out",
        dir.path().to_str().unwrap(),
        "--treatment",
        "nope",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("match.csv").exists());
}

#[test]
fn scarcity_under_fail_policy_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    // two treated but a single control in the pair stratum
    let input = dir.path().join("scarce.csv");
    std::fs::write(
        &input,
        "id,z,x,ps\na,1,1,0.6\nb,1,0,0.55\nc,0,1,0.5\nd,0,0,0.1\n",
    )
    .unwrap();
    let out = entmatch(&[
        "run",
        "--input",
        input.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "--treatment",
        "z",
        "--id-col",
        "id",
        "--covariates",
        "x",
        "--scores",
        "ps",
        "-K",
        "2",
        "--policy",
        "fail",
    ]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("stratum 1"), "stderr: {stderr}");
}

#[test]
fn compare_reports_zero_deltas_for_identical_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    assert!(run_fixture(&out_a, true).status.success());
    assert!(run_fixture(&out_b, true).status.success());
    let out = entmatch(&[
        "compare",
        out_a.join("manifest.toml").to_str().unwrap(),
        out_b.join("manifest.toml").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("std diff A"));
    assert!(stdout.contains("|std diff| >= 0.1: 0 vs 0"));
}

#[test]
fn dump_networks_writes_arc_lists() {
    let dir = tempfile::tempdir().unwrap();
    let out = entmatch(&[
        "run",
        "--config",
        "tests/data/small_example_fb.toml",
        "--out",
        dir.path().to_str().unwrap(),
        "--dump-networks",
    ]);
    assert!(out.status.success());
    let dump = std::fs::read_to_string(dir.path().join("network_stratum_1.txt")).unwrap();
    assert!(dump.contains("supply 0 1"));
    assert!(dump.contains("arc 0 4 cap 1 cost 12000"));
}
