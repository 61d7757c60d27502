use std::path::Path;
use std::process::Command;

use lifespan::likelihood::fit_exponential_closed_form;
use lifespan::{Dataset, SamplingFrame};
use serde_json::Value;

fn lifespan(out: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_lifespan"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = lifespan(out, &["simulate", "--preset", "istat", "--seed", "3"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let da = std::fs::read_to_string(a.join("data.csv")).unwrap();
    assert_eq!(da, std::fs::read_to_string(b.join("data.csv")).unwrap());
    assert_eq!(da.lines().count(), 416);
    let m = json(&a.join("manifest.json"));
    assert_eq!(m["status"], "ok");
    assert_eq!(m["seed"], 3);
}

#[test]
fn fit_reports_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert!(lifespan(&sim, &["simulate", "--preset", "istat", "--seed", "2"]).status.success());
    let data = sim.join("data.csv");
    let frame = sim.join("frame.json");
    let out = dir.path().join("fit");
    let o = lifespan(
        &out,
        &["fit", "--family", "exponential", "--data", data.to_str().unwrap(), "--frame", frame.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fit = json(&out.join("fit.json"));
    let ds = Dataset::load_csv(&data, SamplingFrame::load(&frame).unwrap(), "x").unwrap();
    let cf = fit_exponential_closed_form(&ds.sample()).unwrap();
    let sigma = fit["parameters"][0]["estimate"].as_f64().unwrap();
    let se = fit["parameters"][0]["se"].as_f64().unwrap();
    assert!((sigma - cf.model.sigma()).abs() < 1e-12);
    assert!((se - cf.std_errors.unwrap()[0]).abs() < 1e-12);
    let ci = &fit["sigma_ci"];
    assert!(ci["lower"].as_f64().unwrap() < sigma && sigma < ci["upper"].as_f64().unwrap());
}

#[test]
fn sweep_writes_one_row_per_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let o = lifespan(dir.path(), &["sweep", "--preset", "istat", "--thresholds", "108:111"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    assert!(dir.path().join("stability.csv").exists());
    let m = json(&dir.path().join("manifest.json"));
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(outputs, ["table.csv", "stability.csv", "sweep.json"]);
}

#[test]
fn pool_combines_published_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let o = lifespan(dir.path(), &["pool", "--ci", "1.45:1.29:1.61,1.42:1.28:1.56"]);
    assert!(o.status.success());
    let p = json(&dir.path().join("pool.json"));
    let est = p["pooled"]["estimate"].as_f64().unwrap();
    assert!((est - 1.43).abs() < 0.01);
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(lifespan(out, &["fit"]).status.code(), Some(2));
    assert_eq!(lifespan(out, &["fit", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(lifespan(out, &["pool", "--estimates", "1.4:0.1"]).status.code(), Some(2));
    let frame = out.join("frame.json");
    std::fs::write(&frame, r#"{"begin":"2009-01-01","end":"2016-01-01","scheme":"ltrc","u":105.0}"#).unwrap();
    let missing = out.join("missing.csv");
    let o = lifespan(out, &["fit", "--data", missing.to_str().unwrap(), "--frame", frame.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let bad = out.join("bad.csv");
    std::fs::write(&bad, "id,entry_date,death_date\na,2001-13-01,\n").unwrap();
    let o = lifespan(out, &["fit", "--data", bad.to_str().unwrap(), "--frame", frame.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 1"));
    let m = json(&out.join("manifest.json"));
    assert!(m["status"].as_str().unwrap().starts_with("error"));
}
