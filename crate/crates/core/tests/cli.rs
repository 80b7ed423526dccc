use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bagbound(args: &str, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bagbound"))
        .args(args.split_whitespace())
        .args(extra)
        .env_remove("BAGBOUND_THREADS")
        .output()
        .expect("binary runs")
}

fn code(args: &str) -> i32 {
    bagbound(args, &[]).status.code().expect("exit code")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(
        code("bound --problem nope --method batching --k 5 --n 50"),
        2
    );
    assert_eq!(
        code("bound --problem cvar --method batching --k 40 --n 50"),
        2
    );
    assert_eq!(
        code("bound --problem cvar --method bagging-u --k 50 --n 50"),
        2
    );
    assert_eq!(
        code("bound --problem cvar --alpha 1.5 --method single --n 50"),
        2
    );
    assert_eq!(code("experiment --bogus"), 2);
    assert_eq!(code("--help"), 0);
}

#[test]
fn missing_data_file_is_a_runtime_error() {
    assert_eq!(
        code("bound --problem cvar --method single --data /nonexistent/data.csv"),
        1
    );
}

#[test]
fn bound_from_a_data_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("xi.csv");
    let values: Vec<String> = (0..40)
        .map(|i| format!("{}", (i as f64 * 0.71).sin()))
        .collect();
    fs::write(&path, values.join("\n")).unwrap();
    let out = bagbound(
        "bound --problem cvar --method bagging-u --k 8 --B 2000 --seed 3 --json --data",
        &[path.to_str().unwrap()],
    );
    assert_success(&out);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let text = v.to_string();
    assert!(text.contains("\"B\":2000"), "{text}");
}

fn run_experiment_file(dir: &Path, threads: &str) -> Vec<u8> {
    let path = dir.join(format!("rows-{threads}.csv"));
    let out = bagbound(
        "experiment --problem cvar --method bagging-u,bagging-v,batching,single \
         --n 30 --k 5,10 --B 300 --replications 24 --seed 11",
        &["--threads", threads, "--output", path.to_str().unwrap()],
    );
    assert_success(&out);
    fs::read(path).unwrap()
}

#[test]
fn output_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let one = run_experiment_file(dir.path(), "1");
    let eight = run_experiment_file(dir.path(), "8");
    assert!(!one.is_empty());
    assert_eq!(one, eight);
    let text = String::from_utf8(one).unwrap();
    assert!(text.starts_with("problem,method,n,k,coverage,mean,std,reps,truth,truth_tag,seed\n"));
    assert_eq!(text.lines().count(), 1 + 2 * 3 + 1);
}

#[test]
fn gap_command_reports_both_approaches() {
    for approach in ["bc", "crn"] {
        let out = bagbound(
            "gap --problem ip --method bagging-v --k 18 --n1 64 --n2 36 --seed 2 --json --approach",
            &[approach],
        );
        assert_success(&out);
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(v.to_string().contains("bound"));
    }
}

#[test]
fn thread_count_from_environment_must_be_valid() {
    let out = Command::new(env!("CARGO_BIN_EXE_bagbound"))
        .args("bound --problem cvar --method single --n 20".split_whitespace())
        .env("BAGBOUND_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
