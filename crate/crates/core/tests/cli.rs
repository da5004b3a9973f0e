use std::path::Path;
use std::process::{Command, Output};

fn mmspace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmspace")).args(args).output().unwrap()
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../experiments")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(mmspace(&["bogus"]).status.code(), Some(64));
    assert_eq!(mmspace(&["ot", "wq", "--q"]).status.code(), Some(64));
}

#[test]
fn malformed_config_exits_65() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"sequence\": 3}").unwrap();
    let out = mmspace(&["mosco", "run", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(65));
    let missing = dir.path().join("missing.json");
    let out = mmspace(&["mosco", "run", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(65));
}

#[test]
fn reports_do_not_depend_on_the_pool_size() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("segment_identity_cd.json");
    let mut bodies = Vec::new();
    for jobs in ["1", "3"] {
        let out = dir.path().join(jobs);
        let o = mmspace(&["--jobs", jobs, "mosco", "run", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        bodies.push(std::fs::read(out.join("report.json")).unwrap());
    }
    assert_eq!(bodies[0], bodies[1]);
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_mmspace"))
        .args(["mosco", "run", "--config", &config("segment_identity_mcp.json")])
        .env("OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("report.json").exists());
    let csv = mmspace(&[
        "mosco",
        "report",
        "--format",
        "csv",
        "--report",
        dir.path().join("report.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(csv.status.code(), Some(0), "{}", String::from_utf8_lossy(&csv.stderr));
    assert!(dir.path().join("report.csv").exists());
}

#[test]
fn transport_on_generated_spaces() {
    let dir = tempfile::tempdir().unwrap();
    let space = mmspace(&["space", "gen", "--template", "segment", "--n", "3"]);
    assert_eq!(space.status.code(), Some(0));
    let space_path = dir.path().join("space.json");
    std::fs::write(&space_path, &space.stdout).unwrap();
    for (name, masses) in [("a.json", "[1.0, 0.0, 0.0]"), ("b.json", "[0.0, 0.0, 1.0]")] {
        let body = format!("{{\"space_ref\": \"space.json\", \"masses\": {masses}}}");
        std::fs::write(dir.path().join(name), body).unwrap();
    }
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let out = mmspace(&["ot", "winf", "--mu0", a.to_str().unwrap(), "--mu1", b.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["value"], 1.0);
}
