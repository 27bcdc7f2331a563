use std::path::PathBuf;
use std::process::{Command, Output};

use splitwise::profile::fixtures::TOY3_JSON;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_splitwise"))
}

fn toy3_file(dir: &tempfile::TempDir) -> PathBuf {
    let path = dir.path().join("toy3.json");
    std::fs::write(&path, TOY3_JSON).unwrap();
    path
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn bottlenecks_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .arg("bottlenecks")
        .arg(toy3_file(&dir))
        .arg("--json")
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["compressive"], serde_json::json!([2, 3]));
    assert_eq!(v["natural"], serde_json::json!([2, 3]));
}

#[test]
fn surface_csv_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["surface"])
        .arg(toy3_file(&dir))
        .args(["--batches", "1", "--rates", "2kbps,5kbps,10kbps"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "batch,rate_bps,strategy,split_layer,head_ms,transmit_ms,tail_ms,total_ms,payload_bytes"
    );
    assert_eq!(lines[1], "1,2000.0,no_offload,,30.0,0.0,0.0,30.0,0");
    assert_eq!(lines[2], "1,5000.0,split,2,20.0,4.0,5.0,29.0,20");
    assert!(
        lines[3].starts_with("1,10000.0,full_offload,,0.0,10.0,15.0,25.0,100"),
        "{}",
        lines[3]
    );
}

#[test]
fn scenario_gain() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.json");
    std::fs::write(
        &scenario,
        r#"[{"batch":1,"rate_bps":5000},{"batch":1,"rate_bps":10000}]"#,
    )
    .unwrap();
    let out = bin()
        .arg("scenario")
        .arg(toy3_file(&dir))
        .arg(&scenario)
        .args(["--baseline", "static:2"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((v["gain"].as_f64().unwrap() - 1.0 / 27.0).abs() < 1e-12);
}

#[test]
fn invalid_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"name":"x","input_bytes_per_sample":1,"layers":[]}"#).unwrap();
    let out = bin().arg("bottlenecks").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("layers nonempty"));

    let out = bin()
        .arg("surface")
        .arg(toy3_file(&dir))
        .args(["--batches", "3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not measured"));

    let out = bin()
        .arg("bottlenecks")
        .arg(dir.path().join("missing.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unreachable_server_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.json");
    std::fs::write(&scenario, r#"[{"batch":1,"rate_bps":5000}]"#).unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap();
    let out = bin()
        .arg("device")
        .arg(toy3_file(&dir))
        .arg(&scenario)
        .args(["--connect", &port.to_string()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn device_writes_csv_report() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.json");
    std::fs::write(
        &scenario,
        r#"[{"batch":1,"rate_bps":5000},{"batch":1,"rate_bps":10000}]"#,
    )
    .unwrap();
    let server = splitwise::net::Server::bind("127.0.0.1:0", splitwise::profile::fixtures::toy3())
        .unwrap()
        .spawn()
        .unwrap();
    let report = dir.path().join("run.csv");
    let out = bin()
        .arg("device")
        .arg(toy3_file(&dir))
        .arg(&scenario)
        .args(["--connect", &server.addr.to_string(), "--report"])
        .arg(&report)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&report).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "req_id,strategy,split_layer,batch,rate_bps,predicted_ms,measured_ms,status"
    );
    assert!(lines[1].starts_with("0,split,2,1,5000.0,29.0,"), "{}", lines[1]);
    assert!(lines[2].starts_with("1,full_offload,,1,10000.0,25.0,"), "{}", lines[2]);
    assert!(lines[2].ends_with(",ok"));
}
