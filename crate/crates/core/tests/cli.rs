use std::path::PathBuf;
use std::process::{Command, Output};

fn tamevol(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tamevol")).args(args).output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tamevol-cli-tests-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stdout);
    let start = text.find('{').expect("json in output");
    serde_json::from_str(&text[start..]).unwrap()
}

const SPIRAL_AS_DEFINABLE: &str = r#"{
  "name": "mislabeled-spiral", "ambient": 2, "disjoint": true,
  "cells": [ { "kind": "chart", "params": ["t"], "domain": [[0, "+inf"]], "radial": [true],
               "coords": ["t*cos(t)", "t*sin(t)"] } ]
}"#;

#[test]
fn dim_command() {
    let o = tamevol(&["dim", "--catalog", "circle"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&o.stdout), "1\n");
    assert_eq!(String::from_utf8_lossy(&tamevol(&["dim", "--catalog", "sphere2"]).stdout), "2\n");
}

#[test]
fn malformed_input_exits_with_two() {
    let bad = scratch("bad.json");
    std::fs::write(&bad, "{ \"name\": \"x\", ").unwrap();
    let o = tamevol(&["dim", "--file", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("syntax error"));
    assert_eq!(tamevol(&["volume", "--catalog", "no-such-set"]).status.code(), Some(2));
    assert_eq!(tamevol(&["growth", "--catalog", "line", "--r-min", "5", "--r-max", "1"]).status.code(), Some(2));
}

#[test]
fn overlapping_cells_are_rejected() {
    let f = scratch("overlap.json");
    std::fs::write(
        &f,
        r#"{"name":"twice","ambient":2,"cells":[
            {"kind":"graph","base":{"kind":"band","lower":"0","upper":"1","base":"point0"},"f":["x1"]},
            {"kind":"graph","base":{"kind":"band","lower":"0.5","upper":"2","base":"point0"},"f":["x1"]}]}"#,
    )
    .unwrap();
    let o = tamevol(&["dim", "--file", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("overlap"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn numerical_failure_exits_with_three() {
    // A tiny neighborhood radius needs more centers than the cover allows.
    let o = tamevol(&["cover", "--d", "2", "--n", "5", "--tau", "0.01"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn volume_of_the_sphere() {
    let o = tamevol(&["volume", "--catalog", "sphere2", "--r", "10"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o)["value"].as_f64().unwrap();
    assert!((v - 4.0 * std::f64::consts::PI).abs() <= 0.01 * 4.0 * std::f64::consts::PI);
}

#[test]
fn growth_writes_csv_and_verdict() {
    let csv = scratch("plane.csv");
    let js = scratch("plane.json");
    let o = tamevol(&[
        "growth",
        "--catalog",
        "plane(2,3)",
        "--out-csv",
        csv.to_str().unwrap(),
        "--out-json",
        js.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let table = std::fs::read_to_string(&csv).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("r,volume,error_bound,ratio_to_r_d"));
    assert_eq!(lines.count(), 16);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&js).unwrap()).unwrap();
    for key in ["alpha", "halfwidth", "C_hat", "bounded", "classification"] {
        assert!(v.get(key).is_some(), "missing {}", key);
    }
    assert!((v["alpha"].as_f64().unwrap() - 2.0).abs() < 0.05);
    assert_eq!(v["bounded"], true);

    // The curve can be refit from the CSV alone.
    let o = tamevol(&["fit", "--csv", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!((json(&o)["alpha"].as_f64().unwrap() - v["alpha"].as_f64().unwrap()).abs() < 1e-9);
}

#[test]
fn circle_plateaus() {
    let o = tamevol(&["growth", "--catalog", "circle"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    let last = text.lines().nth(16).unwrap();
    let v: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    assert!((v - 2.0 * std::f64::consts::PI).abs() < 1e-3);
    assert_eq!(json(&o)["classification"], "consistent-with-O(r^d)");
}

#[test]
fn violations_only_fail_for_definable_sets() {
    let o = tamevol(&["growth", "--catalog", "archimedean-spiral"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&o)["classification"], "violates-O(r^d)");

    let f = scratch("spiral.json");
    std::fs::write(&f, SPIRAL_AS_DEFINABLE).unwrap();
    let o = tamevol(&["growth", "--file", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn stoll_command() {
    let o = tamevol(&["stoll", "--catalog", "complex-parabola"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["verdict"], "algebraic-consistent");
    assert!((v["C_hat"].as_f64().unwrap() / (2.0 * std::f64::consts::PI) - 1.0).abs() < 0.1);
    let o = tamevol(&["stoll", "--catalog", "complex-exp"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&o)["verdict"], "transcendental");
    assert_eq!(tamevol(&["stoll", "--catalog", "circle"]).status.code(), Some(2));
}

#[test]
fn lemma_and_cover_commands() {
    let o = tamevol(&["lemma-check", "--catalog", "lemma-flat"]);
    assert_eq!(o.status.code(), Some(0));
    let rep = json(&o);
    for row in rep["rows"].as_array().unwrap() {
        assert!((row["ratio"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    }
    // A parabola arc is too steep near its ends for the tilt certificate.
    assert_eq!(tamevol(&["lemma-check", "--catalog", "parabola-arc"]).status.code(), Some(2));

    let o = tamevol(&["cover", "--d", "1", "--n", "2", "--tau", "1.7320508"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&o)["centers"].as_array().unwrap().len(), 2);
}

#[test]
fn same_seed_same_bytes() {
    let args = ["--seed", "5", "growth", "--catalog", "paraboloid", "--samples", "8192"];
    let a = tamevol(&args);
    let b = tamevol(&args);
    assert_eq!(a.stdout, b.stdout);
    let mut other = args.to_vec();
    other[1] = "6";
    assert_ne!(tamevol(&other).stdout, a.stdout);
}

#[test]
fn examples_lists_the_catalog() {
    let o = tamevol(&["examples"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for e in tamevol::catalog::ENTRIES {
        assert!(text.contains(e.name));
    }
}
