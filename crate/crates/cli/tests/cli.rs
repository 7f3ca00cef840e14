use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn evlink(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evlink"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Random-ish stream with events spread over four 90 ms bins.
fn write_stream(path: &Path) {
    let mut s = String::from("EVT1 16 16\n");
    for i in 0..2000u64 {
        let t = i * 180;
        let sign = if i % 3 == 0 { -1 } else { 1 };
        s += &format!("{t} {} {} {sign}\n", (i * 7) % 16, (i * 11) % 16);
    }
    fs::write(path, s).unwrap();
}

#[test]
fn help_exits_zero_for_every_subcommand() {
    assert_eq!(code(&evlink(&["--help"])), 0);
    for sub in ["gen-dataset", "simulate", "encode", "train", "index", "query", "evaluate"] {
        let o = evlink(&[sub, "--help"]);
        assert_eq!(code(&o), 0, "{sub}");
        assert!(String::from_utf8_lossy(&o.stdout).contains("Usage"));
    }
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&evlink(&[])), 1);
    assert_eq!(code(&evlink(&["encode", "--bogus"])), 1);
    assert_eq!(code(&evlink(&["frobnicate"])), 1);
    let o = evlink(&["encode", "--in", "x.evt", "--out", "y", "--method", "XX"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn config_missing_field_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"alpha": 1.0, "beta": 0.01}"#).unwrap();
    let o = evlink(&["train", "--config", p(&bad)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("gamma"), "{}", stderr(&o));

    let unknown = dir.path().join("unknown.json");
    fs::write(&unknown, r#"{"method": "EF", "tau_e": 30000.0, "saturation_cap": 8, "output_size": 8, "tau": 1}"#).unwrap();
    let o = evlink(&["encode", "--in", "x.evt", "--out", "y", "--config", p(&unknown)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("tau"), "{}", stderr(&o));
}

#[test]
fn encode_writes_blob_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let evt = dir.path().join("s.evt");
    write_stream(&evt);
    let out = dir.path().join("s.eimg");
    let o = evlink(&["encode", "--in", p(&evt), "--method", "EF", "--size", "16", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read(&out).unwrap().len(), 3 * 16 * 16 * 4);
    let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("s.eimg.json")).unwrap()).unwrap();
    assert_eq!(side["method"], "EF");
    assert_eq!(side["c"], 3);

    let o = evlink(&["encode", "--in", p(&evt), "--out", p(&out), "--bin", "99"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn malformed_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let evt = dir.path().join("bad.evt");
    fs::write(&evt, "EVT1 4 4\n10 1 1 1\n5 9 1 1\n").unwrap();
    let o = evlink(&["encode", "--in", p(&evt), "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = evlink(&["encode", "--in", p(&dir.path().join("missing.evt")), "--out", "o"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn full_pipeline_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let manifest = data.join("manifest.json");
    let ck = dir.path().join("model");
    let idx = dir.path().join("index");
    let report = dir.path().join("report.json");

    let o = evlink(&["gen-dataset", "--out", p(&data), "--instances", "4", "--images", "2", "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = evlink(&["train", "--in", p(&manifest), "--out", p(&ck), "--epochs", "2", "--ablation", "nal"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let metrics = fs::read_to_string(dir.path().join("model.metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 2);
    let line: serde_json::Value = serde_json::from_str(metrics.lines().next().unwrap()).unwrap();
    for key in ["epoch", "L_dis", "L_id", "L_ct", "L", "wall_time_s"] {
        assert!(line.get(key).is_some(), "{key}");
    }

    let o = evlink(&["index", "--in", p(&manifest), "--checkpoint", p(&ck), "--out", p(&idx)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = evlink(&["evaluate", "--in", p(&manifest), "--checkpoint", p(&ck), "--index", p(&idx), "--out", p(&report)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    for key in ["mAP", "acc@1", "acc@3"] {
        let v = r[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{key} = {v}");
    }

    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    let stream = m["instances"][0]["events"].as_str().unwrap();
    let o = evlink(&["query", "--in", p(&data.join(stream)), "--checkpoint", p(&ck), "--index", p(&idx), "--k", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let hits: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(hits["hits"].as_array().unwrap().len(), 3);
}
