use std::path::Path;
use std::process::{Command, Output};

fn laglasso(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_laglasso"))
        .args(args)
        .env_remove("LAGLASSO_OUTPUT_ROOT")
        .output()
        .expect("spawn laglasso")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn signals_run_writes_trace_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("signals");
    let o = laglasso(&["run", "signals_table2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o.stderr));

    let csv = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    let mut header = csv.lines();
    assert_eq!(header.next(), Some("timestamp,location,unit,value"));
    let mut pairs: Vec<(String, String)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].to_string(), f[2].to_string())
        })
        .collect();
    pairs.sort();
    pairs.dedup();
    assert_eq!(pairs.len(), 15, "5 locations x 3 units");

    let report = read_json(&out.join("report.json"));
    assert_eq!(report["payload"]["kind"], "signal_study");
    let hash = report["config_hash"].as_str().unwrap();
    assert!(text(&o.stdout).contains(hash));
    assert!(out.join("plot_signals.json").is_file());

    let p = laglasso(&["plot", out.join("report.json").to_str().unwrap(), "--kind", "signals"]);
    assert!(p.status.success(), "{}", text(&p.stderr));
    let plot: serde_json::Value = serde_json::from_slice(&p.stdout).unwrap();
    assert_eq!(plot["series"].as_array().unwrap().len(), 15);

    // same config, same hash
    let again = dir.path().join("again");
    let o2 = laglasso(&["run", "signals_table2", "--out", again.to_str().unwrap()]);
    assert!(o2.status.success());
    assert_eq!(read_json(&again.join("report.json"))["config_hash"], hash);
}

#[test]
fn unknown_plot_kind_lists_supported_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let o = laglasso(&["plot", dir.path().join("x.json").to_str().unwrap(), "--kind", "pie"]);
    assert!(!o.status.success());
    let err = text(&o.stderr);
    for k in ["boxplot", "signals", "weights", "path", "histogram"] {
        assert!(err.contains(k), "{err}");
    }
}

#[test]
fn missing_data_file_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("study.toml");
    std::fs::write(
        &cfg,
        "study = \"signals\"\n[data]\ncsv = \"prices.csv\"\ntarget = \"close\"\n",
    )
    .unwrap();
    let o = laglasso(&["run", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(!o.status.success());
    let err = text(&o.stderr);
    assert!(err.contains("prices.csv") && err.contains("data.csv"), "{err}");
}

#[test]
fn unknown_config_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "study = \"signals\"\nwindow_size = 3\n").unwrap();
    let o = laglasso(&["run", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(text(&o.stderr).contains("window_size"), "{}", text(&o.stderr));
}

#[test]
fn forecast_run_honors_output_root() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("forecast.toml");
    std::fs::write(
        &cfg,
        r#"
study = "forecast"
output_dir = "fc"
seed = 3

[data.synth]
length = 500
decoys = 3

[forecast]
window = 100
horizons = [0, 5]
retrain_every = 10
initial_epochs = 5
retrain_epochs = 2
batch_size = 32
max_test_steps = 20

[[roster]]
kind = "mlp_target"
name = "NN TgtOnly"
hidden = 4
steps = 6

[[roster]]
kind = "last_value"
name = "Last value"
"#,
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_laglasso"))
        .args(["run", cfg.to_str().unwrap()])
        .env("LAGLASSO_OUTPUT_ROOT", dir.path().join("root"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", text(&o.stderr));
    let out = dir.path().join("root").join("fc");
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["seed"], 3);
    let series = report["payload"]["series"].as_array().unwrap();
    assert_eq!(series.len(), 4);
    assert!(series.iter().all(|s| s["errors"].as_array().unwrap().len() == 20));
    assert!(out.join("forecast_errors.csv").is_file());
    assert!(out.join("comparison.json").is_file());
    assert!(out.join("plot_boxplot.json").is_file());

    let bad = laglasso(&["plot", out.join("report.json").to_str().unwrap(), "--kind", "histogram"]);
    assert!(!bad.status.success());
}

#[test]
fn synth_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("synth.csv");
    let o = laglasso(&["synth", "--out", p.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let csv = std::fs::read_to_string(&p).unwrap();
    assert!(csv.starts_with("date,target,driver,decoy_1"));
    assert_eq!(csv.lines().count(), 2001);
}

#[test]
fn self_check_passes() {
    let o = laglasso(&["check"]);
    assert!(o.status.success(), "{}", text(&o.stdout));
    assert_eq!(text(&o.stdout).lines().filter(|l| l.starts_with("PASS")).count(), 4);
}
