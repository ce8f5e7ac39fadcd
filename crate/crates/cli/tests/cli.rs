//! End-to-end checks of the command-line contract.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_interlace2d"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn scratch(name: &str, content: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("interlace2d-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, content).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_rejected() {
    let cfg = scratch("bad.cfg", "seed = 3\nwibble = 1\n");
    let o = run(&["capacity", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("wibble"));
}

#[test]
fn default_seed_is_recorded_in_the_header() {
    let set = scratch("pair.txt", "0 0\n1 0\n");
    let o = run(&["capacity", "--set", set.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.lines().any(|l| l == "# seed=0"), "{out}");
    assert!(out.lines().any(|l| l.starts_with("capacity,0.5")), "{out}");
}

#[test]
fn flags_override_config_file_values() {
    let set = scratch("single.txt", "1 0\n");
    let cfg = scratch("soup.cfg", "u = 2\nreplicas = 5\n");
    let o = run(&[
        "soup-sample",
        "--config",
        cfg.to_str().unwrap(),
        "--A",
        set.to_str().unwrap(),
        "--Kp",
        "ball:4",
        "--u",
        "3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.lines().any(|l| l == "# u=3"), "{out}");
    assert_eq!(out.lines().filter(|l| !l.starts_with('#')).count(), 6);
}

#[test]
fn output_does_not_depend_on_thread_count() {
    let set = scratch("soup-set.txt", "0 0\n1 0\n2 1\n");
    let body = |threads: &str| {
        let o = run(&[
            "soup-sample",
            "--A",
            set.to_str().unwrap(),
            "--K",
            "0,0",
            "--Kp",
            "ball:8",
            "--replicas",
            "400",
            "--seed",
            "17",
            "--threads",
            threads,
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o)
    };
    let one = body("1");
    assert_eq!(one, body("4"));
    assert!(one.lines().count() > 400);
}

#[test]
fn json_output_is_one_object() {
    let set = scratch("json-set.txt", "0 0\n1 0\n");
    let o = run(&["massive-scan", "--set", set.to_str().unwrap(), "--N", "16,32", "--format", "json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 2);
    assert_eq!(v["seed"], 0);
}

#[test]
fn malformed_set_file_names_the_line() {
    let set = scratch("odd.txt", "0 0\n1 0 7\n");
    let o = run(&["capacity", "--set", set.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert!(err["message"].as_str().unwrap().contains("line 2"), "{err}");
}

#[test]
fn small_guard_with_truncation_is_an_accuracy_error() {
    let set = scratch("tilted.txt", "0 0\n1 0\n");
    let o = run(&[
        "tilted-sample",
        "--A",
        set.to_str().unwrap(),
        "--guard",
        "4",
        "--strategy",
        "truncate",
        "--replicas",
        "10",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let err: serde_json::Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    let achieved = err["error"]["detail"]["achieved"].as_f64().unwrap();
    assert!(achieved > 1e-4, "{err}");
}

#[test]
fn verify_capacity_convergence_passes() {
    let o = run(&["verify", "capacity-convergence"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("verdict"));
}

#[test]
fn verify_unknown_parameter_is_rejected() {
    let o = run(&["verify", "vacancy", "-p", "nonsense=1"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}
