use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn pacekit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pacekit"))
        .args(args)
        .env("PACEKIT_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

const TRACE: &str = "t,f_coeff,b_coeff\n1,0.9,1.0\n2,0.4,0.5\n3,1.2,0.8\n";

#[test]
fn plan_writes_one_target_per_period() {
    let dir = TempDir::new().unwrap();
    let trace = write(dir.path(), "trace.csv", TRACE);
    let out = dir.path().join("targets.csv");
    let res = pacekit(&["plan", "--trace", s(&trace), "--budget", "1", "--out", s(&out)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    assert!(String::from_utf8_lossy(&res.stdout).contains("mu_tilde = 0.9"));
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows, ["1,1", "2,0", "3,0.8"]);
}

#[test]
fn plan_rejects_malformed_csv() {
    let dir = TempDir::new().unwrap();
    let trace = write(dir.path(), "trace.csv", "t,f_coeff,b_coeff\n1,abc,1.0\n");
    let res = pacekit(&[
        "plan",
        "--trace",
        s(&trace),
        "--budget",
        "1",
        "--out",
        s(&dir.path().join("o.csv")),
    ]);
    assert_eq!(code(&res), 2);
}

#[test]
fn plan_rejects_ratio_ties_and_names_the_rows() {
    let dir = TempDir::new().unwrap();
    let trace = write(dir.path(), "trace.csv", "t,f_coeff,b_coeff\n1,0.5,0.5\n2,1.0,1.0\n");
    let out = dir.path().join("o.csv");
    let res = pacekit(&["plan", "--trace", s(&trace), "--budget", "1", "--out", s(&out)]);
    assert_eq!(code(&res), 2);
    assert!(!out.exists());
    let err = String::from_utf8_lossy(&res.stderr).to_string();
    assert!(err.contains("requests 1 and 2") && err.contains("--perturb"), "{err}");

    let res = pacekit(&[
        "plan",
        "--trace",
        s(&trace),
        "--budget",
        "1",
        "--perturb",
        "1e-6",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn simulate_replays_targets() {
    let dir = TempDir::new().unwrap();
    let trace = write(dir.path(), "trace.csv", TRACE);
    let targets = dir.path().join("targets.csv");
    assert_eq!(
        code(&pacekit(&[
            "plan",
            "--trace",
            s(&trace),
            "--budget",
            "1",
            "--out",
            s(&targets)
        ])),
        0
    );
    let traj = dir.path().join("traj.csv");
    let res = pacekit(&[
        "simulate",
        "--stream",
        s(&trace),
        "--budget",
        "1",
        "--targets",
        s(&targets),
        "--out",
        s(&traj),
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let text = fs::read_to_string(&traj).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 4);

    let res = pacekit(&["simulate", "--stream", s(&trace), "--budget", "1", "--out", s(&traj)]);
    assert_eq!(code(&res), 2, "ftrl without targets is an input error");
}

#[test]
fn experiment_reports_every_algorithm() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let cfg = config_path("fragility.cfg");
    let res = pacekit(&["experiment", "--config", s(&cfg), "--out", s(&out), "--trials", "3"]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    let algos: Vec<&str> = report
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(algos, ["ftrl", "static", "fixed"]);
    for a in algos {
        assert!(out.join(format!("trajectory_{a}.csv")).exists());
    }
}

#[test]
fn experiment_is_reproducible_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = config_path("iid.cfg");
    let mut reports = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(threads);
        let res = Command::new(env!("CARGO_BIN_EXE_pacekit"))
            .args([
                "experiment",
                "--config",
                s(&cfg),
                "--out",
                s(&out),
                "--trials",
                "4",
                "--seed",
                "5",
            ])
            .env("PACEKIT_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
        reports.push(fs::read_to_string(out.join("report.csv")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn experiment_rejects_config_without_instance() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "bad.cfg", "[true_dists]\n1 = type=point f=1 b=1\n");
    let out = dir.path().join("run");
    let res = pacekit(&["experiment", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains("[instance]"));
    assert!(!out.exists());
}

#[test]
fn experiment_with_unwritable_output_is_a_runtime_error() {
    let dir = TempDir::new().unwrap();
    let blocker = write(dir.path(), "file", "");
    let out = blocker.join("run");
    let cfg = config_path("fragility.cfg");
    let res = pacekit(&["experiment", "--config", s(&cfg), "--out", s(&out), "--trials", "2"]);
    assert_eq!(code(&res), 3);
    assert!(!out.exists());
}

#[test]
fn bench_prints_fluid_and_consumption_series() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "pm.cfg",
        "[instance]\nhorizon = 2\nbudget = 1\naction_cap = 1\nconsumption_bound = 1\nreward_bound = 2\nrate_bound = 2\n\
         [true_dists]\n1 = type=point f=0.5 b=1\n2 = type=point f=1.5 b=1\n",
    );
    let res = pacekit(&["bench", "--dists", s(&cfg)]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("# fluid = 1.5"), "{stdout}");
    let rows: Vec<&str> = stdout.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows, ["t,beta", "1,0", "2,1"]);
}

#[test]
fn verify_quick_passes() {
    let res = pacekit(&["verify", "--quick", "--seed", "3"]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stdout));
}
