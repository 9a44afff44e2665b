use std::path::Path;
use std::process::{Command, Output};

fn sweepdt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sweepdt")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_run_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let sites = dir.path().join("box.bin");
    let out = sweepdt(&["generate", "box", "--dx", "2", "--density", "1000", "--seed", "3", "-o", s(&sites)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::metadata(&sites).unwrap().len(), 2000 * 28);

    let run_dir = dir.path().join("run");
    let out = sweepdt(&["run", s(&sites), "-o", s(&run_dir), "--budget", "64MiB", "--stats-interval", "10"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["edges.bin", "volumes.bin", "stats.csv", "header.txt", "report.json"] {
        assert!(run_dir.join(f).exists(), "{f} missing");
    }
    let plot = sweepdt(&["stats-plot", s(&run_dir.join("stats.csv")), "--bins", "20"]);
    assert!(plot.status.success());
    let text = String::from_utf8(plot.stdout).unwrap();
    assert!(text.starts_with("sites_inserted,sweep_x,online_tetrahedra"));
    assert!(text.lines().count() <= 22);
}

#[test]
fn csv_generation_feeds_csv_run() {
    let dir = tempfile::tempdir().unwrap();
    let sites = dir.path().join("shell.csv");
    let out = sweepdt(&["generate", "shell", "-n", "500", "--format", "csv", "-o", s(&sites)]);
    assert!(out.status.success());
    let run_dir = dir.path().join("run");
    let out = sweepdt(&[
        "run",
        s(&sites),
        "-o",
        s(&run_dir),
        "--budget",
        "64MiB",
        "--input-format",
        "csv",
        "--output-format",
        "csv",
        "--trim",
        "0",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let volumes = std::fs::read_to_string(run_dir.join("volumes.csv")).unwrap();
    assert_eq!(volumes.lines().filter(|l| !l.starts_with("id")).count(), 500);
}

#[test]
fn verify_passes() {
    let out = sweepdt(&["verify", "-n", "100", "--seed", "9"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("PASS"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.bin");
    let out_dir = dir.path().join("out");
    let small = sweepdt(&["run", s(&missing), "-o", s(&out_dir), "--budget", "1MiB"]);
    assert_eq!(small.status.code(), Some(2));
    let absent = sweepdt(&["run", s(&missing), "-o", s(&out_dir), "--budget", "64MiB"]);
    assert_eq!(absent.status.code(), Some(3));
    let bad_flag = sweepdt(&["run", "--offlining", "sometimes"]);
    assert_eq!(bad_flag.status.code(), Some(2));
}

#[test]
fn bench_deltax_prints_rows() {
    let out = sweepdt(&["bench-deltax", "--dx", "1,2", "--density", "500"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("1,500,improved,"));
    assert!(rows[2].starts_with("2,1000,improved,"));
}
