use std::path::Path;
use std::process::{Command, Output};

use semopt_bench::results::{read_results, Status};
use semopt_core::Scheme;

fn semopt(args: &[&str], out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_semopt"));
    cmd.args(args).env_remove("RUST_LOG").env("SEMOPT_JOBS", "1");
    if let Some(dir) = out {
        cmd.arg("--out").arg(dir);
    }
    cmd.output().expect("binary runs")
}

fn rows(dir: &Path) -> Vec<semopt_bench::results::ResultRow> {
    read_results(std::fs::File::open(dir.join("results.csv")).unwrap()).unwrap()
}

#[test]
fn default_run_solves_every_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let out = semopt(&["run"], Some(dir.path()));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = rows(dir.path());
    assert_eq!(r.len(), 3);
    assert!(r.iter().all(|r| r.status == Status::Ok && r.seed == 7 && r.parameter.is_none()));
    let rsma = r.iter().find(|r| r.scheme == Scheme::PscRsma).unwrap();
    let sdma = r.iter().find(|r| r.scheme == Scheme::PscSdma).unwrap();
    assert!(rsma.sum_semantic_rate_bps >= sdma.sum_semantic_rate_bps);
    assert!(dir.path().join("traces/psc_rsma_seed7_outer.csv").exists());
    assert!(dir.path().join("traces/psc_sdma_seed7_sca.csv").exists());
    assert!(dir.path().join("timings.csv").exists());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().any(|l| l.starts_with("non_semantic")));
}

#[test]
fn starved_power_marks_psc_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let out = semopt(&["run", "--set", "scenario.max_power_dbm=13"], Some(dir.path()));
    assert_eq!(out.status.code(), Some(0));
    for r in rows(dir.path()) {
        let expect = if r.scheme == Scheme::NonSemantic { Status::Ok } else { Status::Infeasible };
        assert_eq!(r.status, expect, "{r:?}");
    }
}

#[test]
fn all_infeasible_exits_2() {
    let out = semopt(
        &["run", "--set", "scenario.max_power_dbm=13", "--set", r#"experiment.schemes=["psc_rsma","psc_sdma"]"#],
        None,
    );
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn seed_range_is_inclusive() {
    let dir = tempfile::tempdir().unwrap();
    let out = semopt(
        &["run", "--seeds", "3..4", "--set", r#"experiment.schemes=["psc_sdma"]"#],
        Some(dir.path()),
    );
    assert_eq!(out.status.code(), Some(0));
    let seeds: Vec<u64> = rows(dir.path()).iter().map(|r| r.seed).collect();
    assert_eq!(seeds, vec![3, 4]);
}

#[test]
fn sweep_output_is_reproducible() {
    let args = [
        "sweep",
        "--set",
        r#"experiment.sweep={"parameter":"max_power_dbm","values":[25,30]}"#,
        "--set",
        r#"experiment.schemes=["psc_sdma","non_semantic"]"#,
        "--seed",
        "5",
    ];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(semopt(&args, Some(a.path())).status.code(), Some(0));
    let mut two = Command::new(env!("CARGO_BIN_EXE_semopt"));
    two.args(args).arg("--jobs").arg("2").arg("--out").arg(b.path());
    assert_eq!(two.output().unwrap().status.code(), Some(0));
    let ra = std::fs::read(a.path().join("results.csv")).unwrap();
    let rb = std::fs::read(b.path().join("results.csv")).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(rows(a.path()).len(), 4);
    let means = std::fs::read_to_string(a.path().join("means.csv")).unwrap();
    assert_eq!(means.lines().count(), 5);
    assert!(std::fs::read_to_string(a.path().join("plot.gp")).unwrap().contains("means.csv"));
}

#[test]
fn usage_errors_exit_1() {
    for args in [
        &["run", "--set", "scenario.nope=1"][..],
        &["run", "--seeds", "5..2"],
        &["run", "--seeds", "x"],
        &["run", "--seed", "1", "--seeds", "1..2"],
        &["sweep"],
        &["run", "--config", "/definitely/not/here.json"],
        &["frobnicate"],
    ] {
        let out = semopt(args, None);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn help_exits_0() {
    let out = semopt(&["--help"], None);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for sub in ["run", "sweep", "validate"] {
        assert!(text.contains(sub));
    }
}
