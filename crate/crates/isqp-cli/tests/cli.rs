//! End-to-end checks of the binary: exit codes, report schema, determinism,
//! and usage-error handling.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn isqp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isqp"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_tiny_feasible(dir: &Path) -> String {
    // min 1/2 x^2 - x s.t. x >= 0
    let text = r#"{"n":1,"m":1,"p":0,"H":{"diag":[1.0]},"c":[-1.0],"A":[[1.0]],"b":[0.0]}"#;
    let path = dir.join("feasible.json");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn write_tiny_infeasible(dir: &Path) -> String {
    // x >= 1 and -x >= 0
    let text =
        r#"{"n":1,"m":2,"p":0,"H":{"diag":[1.0]},"c":[0.0],"A":[[1.0],[-1.0]],"b":[1.0,0.0]}"#;
    let path = dir.join("infeasible.json");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn solve_feasible_exits_zero_with_stable_schema() {
    let dir = tempfile::tempdir().unwrap();
    let problem = write_tiny_feasible(dir.path());
    let out = isqp(&["solve", &problem, "--x0", "random:5"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = stdout_json(&out);
    assert_eq!(v["status"], "optimal");
    assert!((v["x"][0].as_f64().unwrap() - 1.0).abs() <= 1e-6);
    for key in [
        "status",
        "x",
        "pi",
        "omega",
        "objective",
        "iterations",
        "phi_final",
        "phi_increases",
        "err",
        "relaxation_inf",
        "monotone_violations",
        "time_ms",
        "certificate",
        "relaxation",
        "trace",
    ] {
        assert!(v.get(key).is_some(), "missing report key {key}");
    }
}

#[test]
fn solve_infeasible_exits_two_with_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let problem = write_tiny_infeasible(dir.path());
    let out = isqp(&["solve", &problem], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let v = stdout_json(&out);
    assert_eq!(v["status"], "infeasible");
    assert!(v["certificate"]["gain"].as_f64().unwrap() > 0.0);
    assert!(v["relaxation"]["b_prime"].is_array());
}

#[test]
fn solve_iteration_limit_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let problem = write_tiny_feasible(dir.path());
    let out = isqp(
        &["solve", &problem, "--x0", "random:5", "--max-iter", "1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stdout_json(&out)["status"], "iteration_limit");
}

#[test]
fn solve_missing_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = isqp(&["solve", "no-such-file.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn trace_csv_has_fixed_columns() {
    let dir = tempfile::tempdir().unwrap();
    let problem = write_tiny_feasible(dir.path());
    let out = isqp(
        &[
            "solve",
            &problem,
            "--x0",
            "random:5",
            "--trace",
            "trace.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header, "iter,phi,mu,err,q_size,obj,penalty_obj,z_inf_norm");
    assert!(text.lines().count() > 2);
}

#[test]
fn gen_is_deterministic_and_writes_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str| {
        let s = isqp(
            &[
                "gen", "--m", "40", "--n", "6", "--p", "3", "--kind", "sc", "--seed", "11", "-o",
                out,
            ],
            dir.path(),
        );
        assert_eq!(s.status.code(), Some(0));
    };
    run("a.json");
    run("b.json");
    let a = fs::read(dir.path().join("a.json")).unwrap();
    let b = fs::read(dir.path().join("b.json")).unwrap();
    assert_eq!(a, b, "same seed must be byte-identical");
    // the sidecar witness is strictly feasible for the emitted problem
    let xfeas: Vec<f64> =
        serde_json::from_slice(&fs::read(dir.path().join("a.xfeas.json")).unwrap()).unwrap();
    assert_eq!(xfeas.len(), 6);
    let solve_out = isqp(&["solve", "a.json", "--x0", "a.xfeas.json"], dir.path());
    assert_eq!(solve_out.status.code(), Some(0));
}

#[test]
fn gen_infeasible_rejects_single_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = isqp(
        &[
            "gen",
            "--m",
            "1",
            "--n",
            "2",
            "--kind",
            "lp",
            "--seed",
            "1",
            "--infeasible",
            "-o",
            "x.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_rejects_zero_reps_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let bad = isqp(
        &[
            "bench", "--m", "50", "--n", "3", "--kind", "sc", "--reps", "0", "--seed", "1",
        ],
        dir.path(),
    );
    assert_eq!(bad.status.code(), Some(1));

    let args = [
        "bench", "--m", "200", "--n", "4,6", "--p", "half", "--kind", "sc", "--reps", "3",
        "--seed", "9",
    ];
    let first = isqp(&args, dir.path());
    let second = isqp(&args, dir.path());
    assert_eq!(first.status.code(), Some(0));
    let strip_times = |raw: &[u8]| -> Vec<String> {
        String::from_utf8_lossy(raw)
            .lines()
            .map(|line| {
                // drop the wall-clock column, everything else must match
                line.split(',')
                    .enumerate()
                    .filter(|(i, _)| *i != 6)
                    .map(|(_, f)| f.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect()
    };
    assert_eq!(strip_times(&first.stdout), strip_times(&second.stdout));
    let text = String::from_utf8_lossy(&first.stdout).to_string();
    assert!(text.starts_with(
        "kind,m,n,p,reps,mean_iters,mean_time_ms,failures,mean_phi_increases,false_positive_count"
    ));
    // feasible sweep: no failures, no false positives
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[7], "0");
        assert_eq!(fields[9], "0");
    }
}

#[test]
fn svm_separable_toy() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sep.csv"), "1,1\n-1,-1\n").unwrap();
    let out = isqp(&["svm", "sep.csv", "--tau", "1"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["formulation"], "hard");
    assert!(v["nu"].is_null());
    assert!((v["w"][0].as_f64().unwrap() - 1.0).abs() <= 1e-6);
    assert!(v["beta"].as_f64().unwrap().abs() <= 1e-6);
    assert!((v["margin"].as_f64().unwrap() - 2.0).abs() <= 1e-6);
    assert_eq!(v["training_accuracy"], 1.0);
}

#[test]
fn svm_nonseparable_toy_falls_back_to_relaxed() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("non.csv"), "1,1\n1,-1\n").unwrap();
    let out = isqp(&["svm", "non.csv", "--tau", "1"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["formulation"], "relaxed");
    assert!(v["certificate_gain"].as_f64().unwrap() > 0.0);
    let nu = v["nu"].as_f64().unwrap();
    assert!(nu >= 0.0);
    assert!((v["objective"].as_f64().unwrap() - 1.0).abs() <= 1e-6);

    // hard-only mode surfaces the infeasibility instead
    let strict = isqp(&["svm", "non.csv", "--tau", "1", "--hard-only"], dir.path());
    assert_eq!(strict.status.code(), Some(2));

    // tau must be positive
    let bad = isqp(&["svm", "non.csv", "--tau", "0"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
}
