use std::fs;
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use bpb_cli::emit::{parse_records, PREDICTED_FILE, RECORDS_FILE, SUMMARY_FILE, TIME_VS_P_FILE};

fn bpb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bpb")).args(args).output().unwrap()
}

fn text(path: &Path) -> String {
    fs::read_to_string(path).unwrap()
}

#[test]
fn single_run_writes_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let o = bpb(&["--n", "10", "--m", "6", "--seed", "1", "--out-dir", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let records = parse_records(&text(&dir.path().join(RECORDS_FILE))).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].best_value, Some(0.0));
    assert_eq!(records[0].k, 100);
    assert_eq!(records[0].r, 9);
    let summary = text(&dir.path().join(SUMMARY_FILE));
    assert_eq!(summary.lines().count(), 2);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), summary);
    assert!(dir.path().join(TIME_VS_P_FILE).exists());
    assert!(dir.path().join(PREDICTED_FILE).exists());
}

#[test]
fn invalid_delta_is_rejected_before_running() {
    let o = bpb(&["--n", "10", "--m", "6", "--delta", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
}

#[test]
fn normalized_sweeps_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = dir.path().display().to_string();
        let o = bpb(&[
            "run",
            "--n",
            "12",
            "--m",
            "4",
            "--function",
            "rastrigin",
            "--sweep-K",
            "30,60",
            "--sweep-R",
            "4,8",
            "--sweep-p",
            "0,2",
            "--reps",
            "2",
            "--normalize-timings",
            "--out-dir",
            &out,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in [RECORDS_FILE, SUMMARY_FILE, TIME_VS_P_FILE, PREDICTED_FILE] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let records = parse_records(&text(&a.path().join(RECORDS_FILE))).unwrap();
    assert_eq!(records.len(), 16);
    assert_eq!(text(&a.path().join(TIME_VS_P_FILE)).lines().count(), 5);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("plan.toml");
    fs::write(&cfg, "n = 10\nm = 6\nfunction = \"ridge\"\nK = 40\nR = 5\nseed = 4\n").unwrap();
    let out = dir.path().join("out");
    let o = bpb(&["--config", cfg.to_str().unwrap(), "--K", "80", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rec = &parse_records(&text(&out.join(RECORDS_FILE))).unwrap()[0];
    assert_eq!((rec.function.as_str(), rec.k, rec.r, rec.seed), ("ridge", 80, 5, 4));
}

#[test]
fn external_objective_matches_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("dejong.py");
    fs::write(
        &script,
        "import sys\nfor line in sys.stdin:\n    print(sum((int(t) - 3) ** 2 for t in line.split()), flush=True)\n",
    )
    .unwrap();
    let cmd = format!("python3 {}", script.display());
    let ext_dir = dir.path().join("ext");
    let o = bpb(&[
        "--n",
        "10",
        "--m",
        "6",
        "--function",
        "external",
        "--external-cmd",
        &cmd,
        "--out-dir",
        ext_dir.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let builtin_dir = dir.path().join("builtin");
    assert!(bpb(&["--n", "10", "--m", "6", "--out-dir", builtin_dir.to_str().unwrap()]).status.success());
    let ext = &parse_records(&text(&ext_dir.join(RECORDS_FILE))).unwrap()[0];
    let builtin = &parse_records(&text(&builtin_dir.join(RECORDS_FILE))).unwrap()[0];
    assert_eq!(ext.best_value, builtin.best_value);
    assert_eq!(ext.best_point, builtin.best_point);
    assert_eq!(ext.points, builtin.points);
}

#[test]
fn failed_cells_set_the_exit_code_only_in_strict_mode() {
    let args = ["--n", "10", "--m", "6", "--function", "external", "--external-cmd", "/nonexistent/eval"];
    let lenient = bpb(&args);
    assert!(lenient.status.success());
    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(bpb(&strict).status.code(), Some(1));
}

#[test]
fn worker_processes_serve_a_listening_coordinator() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let addr = format!("127.0.0.1:{port}");
    let dir = tempfile::tempdir().unwrap();
    let coordinator = Command::new(env!("CARGO_BIN_EXE_bpb"))
        .args(["--n", "10", "--m", "6", "--workers", "2", "--listen", &addr, "--sweep-K", "50,100"])
        .args(["--out-dir", dir.path().to_str().unwrap()])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut workers = Vec::new();
    for _ in 0..2 {
        let child = Command::new(env!("CARGO_BIN_EXE_bpb"))
            .args(["worker", "--connect", &addr, "--persist"])
            .stderr(Stdio::null())
            .spawn()
            .unwrap();
        workers.push(child);
    }
    let out = coordinator.wait_with_output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for mut w in workers {
        assert!(w.wait().unwrap().success());
    }
    let records = parse_records(&text(&dir.path().join(RECORDS_FILE))).unwrap();
    assert_eq!(records.len(), 2);
    assert!(records.iter().all(|r| r.ok() && r.best_value == Some(0.0) && r.transport == "remote"));
}

#[test]
fn predict_prints_the_model_curve() {
    let o = bpb(&["predict", "--S1", "4.29", "--A1", "0.94", "--C1", "1.0", "--p-max", "4"]);
    assert!(o.status.success());
    let stdout = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[3].starts_with("3\t1.55"), "{}", lines[3]);
    assert!(lines[1].ends_with("false"));
}
