//! End-to-end runs of the `pflow` binary.

use std::path::Path;
use std::process::{Command, Output};

fn pflow(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pflow"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn gen_then_split_inner_format() {
    let dir = tempfile::tempdir().unwrap();
    let out = pflow(
        &["gen", "--kind", "planes", "--rows", "2000", "--seed", "7", "--out", "planes.ptbl"],
        dir.path(),
    );
    assert_ok(&out);
    assert!(dir.path().join("planes.ptbl").exists());

    let out = pflow(
        &["split", "--in", "planes.ptbl", "--bits", "2", "--codec", "zstd", "--out-dir", "parts"],
        dir.path(),
    );
    assert_ok(&out);
    for j in 0..4 {
        assert!(dir.path().join(format!("parts/part-0{j}.ptbl")).exists());
    }
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("skew:"), "missing skew line: {stdout}");
}

#[test]
fn gen_outer_container_and_split_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = pflow(
        &["gen", "--kind", "ships", "--rows", "1000", "--out", "ships.pchk"],
        dir.path(),
    );
    assert_ok(&out);
    let out = pflow(
        &["split", "--in", "ships.pchk", "--bits", "1", "--out-dir", "parts"],
        dir.path(),
    );
    assert_ok(&out);
    assert!(dir.path().join("parts/part-00.pchk").exists());
    assert!(dir.path().join("parts/part-01.pchk").exists());
}

#[test]
fn bench_writes_csv_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = pflow(
        &[
            "bench", "ratios", "--kind", "particles", "--rows", "5000", "--codecs",
            "lz4f,zstd,deflate", "--threads", "1,2", "--reps", "1", "--csv", "ratios.csv",
        ],
        dir.path(),
    );
    assert_ok(&out);
    let text = std::fs::read_to_string(dir.path().join("ratios.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "metric,dataset,codec,param,value,unit,config"
    );
    assert!(lines.clone().count() >= 4);
    assert!(text.contains("inner_zstd_ratio"));
}

#[test]
fn flowsim_writes_csv_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = pflow(
        &[
            "flowsim", "--rows", "5000", "--bits", "1", "--depth", "2", "--capacity", "512",
            "--codec", "zstd", "--csv", "flow.csv",
        ],
        dir.path(),
    );
    assert_ok(&out);
    let text = std::fs::read_to_string(dir.path().join("flow.csv")).unwrap();
    assert!(text.contains("ingested_rows"));
    assert!(text.contains("leaf_rows"));
}

#[test]
fn failures_exit_nonzero_with_one_line_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = pflow(
        &["bench", "warp-speed", "--csv", "x.csv"],
        dir.path(),
    );
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "stderr: {stderr}");
    assert!(stderr.starts_with("error:"));

    let out = pflow(
        &["split", "--in", "missing.ptbl", "--bits", "2", "--out-dir", "d"],
        dir.path(),
    );
    assert!(!out.status.success());

    let out = pflow(&["gen", "--kind", "asteroids", "--rows", "1", "--out", "x.ptbl"], dir.path());
    assert!(!out.status.success());
}
