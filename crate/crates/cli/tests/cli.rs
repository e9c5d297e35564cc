use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use emech_cli::output::read_series;
use emech_cli::spec::FitModel;
use emech_cli::synth::Truth;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn emech(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emech")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Vec<u8> {
    let out = emech(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn cfg(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn truth(name: &str) -> String {
    configs().join("truth").join(name).to_string_lossy().into_owned()
}

/// Rows of a CSV artifact, skipping metadata and the header.
fn rows(bytes: &[u8]) -> Vec<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(bytes);
    rdr.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect()
}

fn error_record(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("error record on stderr");
    serde_json::from_str(line).expect("error record is JSON")
}

#[test]
fn commands_are_byte_identical_across_runs() {
    for args in [
        vec!["spectrum", "--config", &cfg("emit.json")],
        vec!["map", "--config", &cfg("anticrossing.json"), "--grid=-100:100:21", "--grid=-300:100:41"],
        vec!["cool", "--config", &cfg("cooling.json"), "--grid", "0:1000:11"],
        vec!["entangle", "--config", &cfg("entangle.json"), "--format", "json"],
    ] {
        assert_eq!(ok(&args), ok(&args), "{args:?}");
    }
}

#[test]
fn synth_is_seeded() {
    let base = ["synth", "ringdown", "--truth", &truth("ringdown.json"), "--grid", "0:2:50", "--sigma", "0.01"];
    let a = ok(&[&base[..], &["--seed", "4"]].concat());
    assert_eq!(a, ok(&[&base[..], &["--seed", "4"]].concat()));
    assert_ne!(a, ok(&[&base[..], &["--seed", "5"]].concat()));
}

#[test]
fn zero_sigma_synth_is_the_exact_model() {
    let dir = tempfile::tempdir().unwrap();
    for (model, file, grid) in [
        (FitModel::Emit, "emit.json", "5.3427e9:5.3433e9:301"),
        (FitModel::Lorentzian, "lorentzian.json", "763700:764300:61"),
        (FitModel::Caltemp, "caltemp.json", "0.01:0.4:9"),
    ] {
        let out = dir.path().join(format!("{}.csv", model.name()));
        ok(&["synth", model.name(), "--truth", &truth(file), "--grid", grid, "--out", out.to_str().unwrap()]);
        let t = Truth::parse(model, &std::fs::read(configs().join("truth").join(file)).unwrap()).unwrap();
        let series = read_series(&out).unwrap();
        assert!(series.y_sigma.is_none());
        for (x, y) in series.x.iter().zip(&series.y) {
            assert_eq!(*y, t.eval(*x).unwrap());
        }
    }
}

#[test]
fn synth_then_fit_emit_recovers_truth() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("emit.csv");
    let data = data.to_str().unwrap();
    ok(&[
        "synth", "emit", "--truth", &truth("emit.json"), "--grid", "5.3427e9:5.3433e9:801", "--sigma", "0.003",
        "--seed", "11", "--out", data,
    ]);
    let fit = ok(&["fit", "emit", "--data", data, "--window-center-hz", "5.3430015e9"]);
    let expected = [("kappa", 200e3), ("xi", 0.15), ("nu_c", 5.343e9), ("g1", 20e3)];
    let table = rows(&fit);
    for (name, value) in expected {
        let row = table.iter().find(|r| r[0] == name).unwrap();
        let (v, s): (f64, f64) = (row[1].parse().unwrap(), row[2].parse().unwrap());
        assert!((v - value).abs() <= 3.0 * s, "{name}: {v} +- {s} vs {value}");
    }
}

#[test]
fn spectrum_reparses_losslessly_with_a_single_dip() {
    // the bare cavity: no tones, so no transparency window inside the dip
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bare.json");
    let mut doc: serde_json::Value = serde_json::from_slice(&std::fs::read(configs().join("cooling.json")).unwrap()).unwrap();
    doc["tones"] = serde_json::json!([]);
    std::fs::write(&path, serde_json::to_vec(&doc).unwrap()).unwrap();
    let spec: emech_cli::ScenarioSpec = clap::Parser::parse_from(["emech", "spectrum"]);
    let loaded = emech_cli::config::load_config(&path).unwrap();
    let table = emech_cli::execute(&spec, Some(&loaded)).unwrap().table;
    let bytes = ok(&["spectrum", "--config", path.to_str().unwrap()]);
    let parsed: Vec<f64> = rows(&bytes).iter().map(|r| r[3].parse().unwrap()).collect();
    assert_eq!(parsed, table.column("reflectance").unwrap());
    let minima = (1..parsed.len() - 1).filter(|&i| parsed[i] < parsed[i - 1] && parsed[i] <= parsed[i + 1]).count();
    assert_eq!(minima, 1);
}

#[test]
fn map_shows_an_avoided_crossing() {
    let bytes = ok(&["map", "--config", &cfg("anticrossing.json"), "--grid=-150:150:7", "--grid=-300:100:801"]);
    let table = rows(&bytes);
    let peaks = |offset: f64| {
        let row: Vec<(f64, f64)> = table
            .iter()
            .filter(|r| r[0].parse::<f64>().unwrap() == offset)
            .map(|r| (r[1].parse().unwrap(), r[2].parse().unwrap()))
            .collect();
        let mut p: Vec<(f64, f64)> =
            (1..row.len() - 1).filter(|&i| row[i].1 > row[i - 1].1 && row[i].1 >= row[i + 1].1).map(|i| row[i]).collect();
        p.sort_by(|a, b| b.1.total_cmp(&a.1));
        (p[0].0 - p[1].0).abs()
    };
    let center = peaks(0.0);
    assert!((center - 74.0).abs() < 0.1 * 74.0, "center separation {center}");
    assert!(peaks(-150.0) > center && peaks(150.0) > center);
}

#[test]
fn errors_carry_exit_codes_and_json_records() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"schema_version": 1, "cavity": {}}"#).unwrap();
    let out = emech(&["validate", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_record(&out)["error"]["kind"], "config");

    let out = emech(&["map", "--config", &cfg("cooling.json")]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_record(&out)["error"]["kind"], "solver");

    let data = dir.path().join("c.csv");
    ok(&["synth", "caltemp", "--truth", &truth("caltemp.json"), "--grid", "0.01:0.4:20", "--out", data.to_str().unwrap()]);
    let out = emech(&["fit", "caltemp", "--data", data.to_str().unwrap(), "--anchor", "0.2:0.3", "--nu-m-hz", "764e3"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_record(&out)["error"]["exit_code"], 3);

    let out = emech(&["synth", "ringdown", "--truth", &truth("ringdown.json")]);
    assert_eq!(out.status.code(), Some(1));
    let out = emech(&["spectrum", "--config", &cfg("emit.json"), "--grid", "0:1:1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn json_output_parses() {
    let bytes = ok(&["metrics", "--table-s1", "--format", "json"]);
    let doc: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(doc["rows"].as_array().unwrap().len(), 6);
    assert_eq!(doc["seed"], 0);
}

#[test]
fn selftest_passes() {
    let out = emech(&["selftest"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stderr).lines().filter(|l| l.starts_with("[PASS]")).count(), 11);
}
