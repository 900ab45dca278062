use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(rel)
}

fn tira(args: &[&std::ffi::OsStr]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tira"))
        .args(args)
        .output()
        .unwrap()
}

macro_rules! run {
    ($($arg:expr),* $(,)?) => {
        tira(&[$(std::ffi::OsStr::new(&$arg)),*])
    };
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn validate_exit_codes() {
    assert_eq!(
        run!("validate", fixture("weight_retention.yaml"))
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        run!("validate", fixture("invalid_retention.yaml"))
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        run!("validate", fixture("does-not-exist.yaml"))
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run!("validate").status.code(), Some(2));
}

#[test]
fn validate_json_lists_diagnostics() {
    let out = run!(
        "validate",
        fixture("invalid_retention.yaml"),
        "--format",
        "json"
    );
    let diags = stdout_json(&out);
    let errors: Vec<&Value> = diags
        .as_array()
        .unwrap()
        .iter()
        .filter(|d| d["severity"] == "error")
        .collect();
    assert!(!errors.is_empty(), "{diags}");
    assert!(errors
        .iter()
        .all(|d| d["site"].as_str().is_some_and(|s| s.starts_with("root"))));
}

#[test]
fn profile_shows_inherited_retention() {
    let out = run!("profile", fixture("weight_retention.yaml"));
    assert!(out.status.success());
    let v = stdout_json(&out);
    assert_eq!(v[0]["indicator"]["name"], "Weight");
    assert!(v[0]["by_kind"]["retention_time"].is_array());
}

#[test]
fn diff_of_a_file_with_itself_is_empty() {
    let f = fixture("weight.yaml");
    let out = run!("diff", f, f);
    assert!(out.status.success());
    let v = stdout_json(&out);
    for key in [
        "indicators_added",
        "indicators_removed",
        "properties_changed",
    ] {
        assert_eq!(v[key], Value::Array(vec![]), "{key}");
    }
}

#[test]
fn report_on_an_empty_directory() {
    let dir = tempfile::tempdir().unwrap();
    let out = run!("report", "--dir", dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = stdout_json(&out);
    assert_eq!(v["services"], Value::Array(vec![]));
    assert_eq!(v["service_level"]["retention"], "unspecified");
}

#[test]
fn report_rejects_broken_specs_and_missing_dirs() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("broken.yaml"), "openapi: [3.0\n  nope: {").unwrap();
    let out = run!("report", "--dir", dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken.yaml"));

    assert_eq!(
        run!("report", "--dir", dir.path().join("missing"))
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn report_dot_lists_the_chain() {
    let out = run!(
        "report",
        "--dir",
        fixture("fitness"),
        "--links",
        fixture("fitness.links.json"),
        "--dot"
    );
    assert!(out.status.success());
    let dot = String::from_utf8(out.stdout).unwrap();
    assert!(dot.starts_with("digraph"));
    assert!(dot.contains("\"device-api\" -> \"broker\""));
}

#[test]
fn serve_answers_report_requests() {
    let data = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_tira"))
        .args(["serve", "--port", "0", "--data-dir"])
        .arg(data.path())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on http://")
        .unwrap_or_else(|| {
            let _ = child.kill();
            panic!("unexpected banner `{line}`")
        });

    let mut stream = TcpStream::connect(addr).unwrap();
    write!(
        stream,
        "GET /api/report HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n"
    )
    .unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    let _ = child.kill();
    let _ = child.wait();

    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    let body = response.split("\r\n\r\n").nth(1).unwrap();
    let v: Value = serde_json::from_str(body).unwrap();
    assert_eq!(v["system"]["controller_contact"], "unspecified");
}
