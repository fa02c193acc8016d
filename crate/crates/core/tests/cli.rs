mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::fixture;

fn subalign(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subalign"))
        .arg("--config")
        .arg(fixture("pipeline.toml"))
        .arg("--output-dir")
        .arg(out)
        .args(args)
        .env_remove("SUBALIGN_GAMMA")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn full_run_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["annotate", "solve", "retokenize", "diagnose"] {
        let o = subalign(dir.path(), &[cmd]);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let stdout = String::from_utf8(subalign(dir.path(), &["diagnose"]).stdout).unwrap();
    assert!(stdout.contains("conditional"));
    assert!(dir.path().join("kl_report.json").is_file());
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    // config: bad gamma, unknown key, missing vocab
    assert_eq!(code(&subalign(dir.path(), &["--gamma", "-1", "annotate"])), 2);
    assert_eq!(code(&subalign(dir.path(), &["--set", "nope=1", "annotate"])), 2);
    assert_eq!(code(&subalign(dir.path(), &["--vocab", "/nonexistent/vocab.txt", "solve"])), 2);
    // data: malformed source corpus
    let bad = dir.path().join("bad.conll");
    std::fs::write(&bad, "Madrid B-LOC extra\n").unwrap();
    assert_eq!(code(&subalign(dir.path(), &["annotate"])), 0);
    let o = subalign(dir.path(), &["--source", bad.to_str().unwrap(), "solve"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    // numerical: strict solve that cannot converge
    let o = subalign(dir.path(), &["--max-iters", "1", "--strict", "solve"]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    // lenient solve warns and succeeds
    let o = subalign(dir.path(), &["--max-iters", "1", "solve"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
}

#[test]
fn environment_overrides_file_and_flags_override_environment() {
    let dir = tempfile::tempdir().unwrap();
    let run = |env: &[(&str, &str)], args: &[&str]| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_subalign"));
        c.arg("--config").arg(fixture("pipeline.toml")).arg("--output-dir").arg(dir.path());
        for (k, v) in env {
            c.env(k, v);
        }
        c.args(args).output().unwrap()
    };
    assert_eq!(code(&run(&[], &["annotate"])), 0);
    assert_eq!(code(&run(&[("SUBALIGN_GAMMA", "0")], &["solve"])), 2);
    assert_eq!(code(&run(&[("SUBALIGN_GAMMA", "0")], &["--gamma", "0.2", "solve"])), 0);
    let stats = std::fs::read_to_string(dir.path().join("instance_stats.json")).unwrap();
    assert!(stats.contains("\"gamma\": 0.2"));
}

#[test]
fn bench_prints_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = subalign(dir.path(), &["bench", "--rows", "50", "--cols", "20", "--density", "0.2"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("rows,cols,"));
    assert!(lines[1].starts_with("50,20,"));
    assert_eq!(code(&subalign(dir.path(), &["bench", "--rows", "0", "--cols", "20"])), 3);
}

#[test]
fn corrupt_policy_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("policy.jsonl"),
        "{\"word\":\"Madrid\",\"label\":\"LOC\",\"segs\":[{\"pieces\":[\"Madrid\"],\"p\":0.5}]}\n",
    )
    .unwrap();
    let o = subalign(dir.path(), &["retokenize"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}
