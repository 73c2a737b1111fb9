use std::path::Path;
use std::process::{Command, Output};

use restmask_testbed::{llm_fixture_path, load_mock, MockServer};

fn restmask(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_restmask")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn infer_then_validate_then_report() {
    let server = MockServer::start(load_mock("words").unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("apis.json");
    std::fs::write(
        &config,
        serde_json::json!([{ "api_name": "Words", "server_url": server.base_url(), "rate_limit_ms": 0 }]).to_string(),
    )
    .unwrap();
    let out = dir.path().join("out");
    let fixture = llm_fixture_path("words");

    let o = restmask(&["infer", "--config", s(&config), "--llm-fixture", s(&fixture), "--out", s(&out), "--seed", "7"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("Words: "), "{}", stdout(&o));

    let doc = out.join("words").join("words.openapi.yaml");
    let o = restmask(&["validate", "--spec", s(&doc)]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).ends_with(": ok\n"));

    let o = restmask(&["report", "--log", s(&out.join("words").join("requests.jsonl"))]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("5xx"));
    assert!(text.contains("server errors:"), "{text}");
    assert!(text.contains("sp=") && text.contains("v="), "{text}");
}

#[test]
fn validate_reports_structural_problems() {
    let dir = tempfile::tempdir().unwrap();
    let doc = dir.path().join("bad.json");
    std::fs::write(&doc, r#"{"openapi":"3.0.3","paths":{"nope":{}}}"#).unwrap();
    let o = restmask(&["validate", "--spec", s(&doc)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!stdout(&o).is_empty());
}

#[test]
fn missing_config_is_an_error() {
    let o = restmask(&["infer", "--config", "/nonexistent/apis.json"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_api_without_server_url_fails_its_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("apis.json");
    std::fs::write(&config, r#"{"api_name":"Nowhere"}"#).unwrap();
    let fixture = dir.path().join("empty.json");
    std::fs::write(&fixture, r#"{"completions":{}}"#).unwrap();
    let out = dir.path().join("out");
    let o = restmask(&["infer", "--config", s(&config), "--llm-fixture", s(&fixture), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Nowhere"));
}
