use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_polybary"))
}

fn write(dir: &Path, name: &str, content: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, content).unwrap();
    path
}

fn square_doc() -> &'static str {
    r#"{"name":"square","vertices":[[0,0],[1,0],[1,1],[0,1]],
        "facets":[{"normal":[-1,0],"offset":0},{"normal":[1,0],"offset":1},
                  {"normal":[0,-1],"offset":0},{"normal":[0,1],"offset":1}]}"#
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn weights_roundtrip() {
    let dir = TempDir::new().unwrap();
    let poly = write(dir.path(), "square.json", square_doc());
    let pts = write(dir.path(), "pts.csv", "0.25,0.5\n0.5,0.5\n");
    let out = dir.path().join("sol.json");
    let res = bin()
        .args(["weights", "--polytope"])
        .arg(&poly)
        .arg("--points")
        .arg(&pts)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_code(&res, 0);
    let doc = read_json(&out);
    let results = doc["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    // Centroid row: uniform weights, zero multiplier.
    let p: Vec<f64> = results[1]["p"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    for w in p {
        assert!((w - 0.25).abs() < 1e-12);
    }
    assert_eq!(results[1]["iterations"].as_u64(), Some(0));
}

#[test]
fn weights_outside_point_exits_1_with_error_entry() {
    let dir = TempDir::new().unwrap();
    let poly = write(dir.path(), "square.json", square_doc());
    let pts = write(dir.path(), "pts.csv", "0.25,0.5\n2.0,0.5\n");
    let out = dir.path().join("sol.json");
    let res = bin()
        .args(["weights", "--polytope"])
        .arg(&poly)
        .arg("--points")
        .arg(&pts)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_code(&res, 1);
    let doc = read_json(&out);
    assert_eq!(doc["failures"].as_u64(), Some(1));
    assert!(doc["results"][1]["error"]["message"].is_string());
}

#[test]
fn malformed_polytope_exits_2() {
    let dir = TempDir::new().unwrap();
    let poly = write(dir.path(), "bad.json", "{\"vertices\": [[0,0],");
    let res = bin()
        .args(["verify", "--polytope"])
        .arg(&poly)
        .output()
        .unwrap();
    assert_code(&res, 2);
}

#[test]
fn verify_is_deterministic_modulo_timestamp() {
    let dir = TempDir::new().unwrap();
    let poly = write(dir.path(), "square.json", square_doc());
    let mut docs = Vec::new();
    for name in ["a.json", "b.json"] {
        let out = dir.path().join(name);
        let res = bin()
            .args(["verify", "--samples", "10", "--seed", "99", "--polytope"])
            .arg(&poly)
            .arg("--report")
            .arg(&out)
            .output()
            .unwrap();
        assert_code(&res, 0);
        let mut doc = read_json(&out);
        doc.as_object_mut().unwrap().remove("generated_unix_ms");
        docs.push(serde_json::to_string(&doc).unwrap());
    }
    assert_eq!(docs[0], docs[1]);
}

#[test]
fn stencil_centroid_output() {
    let dir = TempDir::new().unwrap();
    let point = write(dir.path(), "u.json", "[[0.5,0.0],[0.0,0.5]]");
    let out = dir.path().join("st.json");
    let res = bin()
        .args(["stencil", "--model", "dd2", "--h", "0.5", "--point"])
        .arg(&point)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_code(&res, 0);
    let doc = read_json(&out);
    let entries = doc["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 8);
    let h2 = 0.25;
    for e in entries {
        let offset: Vec<i64> = e["offset"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_i64().unwrap())
            .collect();
        let expect = if offset.iter().filter(|v| **v != 0).count() == 1 {
            0.25 / h2
        } else {
            0.125 / h2
        };
        assert!((e["coeff"].as_f64().unwrap() - expect).abs() < 1e-9);
    }
    assert!((doc["center"].as_f64().unwrap() + 2.0 * 0.75 / h2).abs() < 1e-9);
}

#[test]
fn factorize_field_csv() {
    let dir = TempDir::new().unwrap();
    let mut rows = String::new();
    for i in 0..=50 {
        let t = i as f64 / 50.0 * 0.8;
        rows.push_str(&format!("{t},0.5,{},0.5\n", 0.4 * t));
    }
    let field = write(dir.path(), "field.csv", &rows);
    let out = dir.path().join("fact.json");
    let res = bin()
        .args(["factorize", "--model", "dd2", "--field"])
        .arg(&field)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_code(&res, 0);
    let doc = read_json(&out);
    assert_eq!(doc["directions"].as_array().unwrap().len(), 4);
    assert_eq!(doc["samples"].as_array().unwrap().len(), 51);
    assert!(doc["worst_reconstruction_error"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn lipschitz_on_interval_sine_squared() {
    let dir = TempDir::new().unwrap();
    let poly = write(
        dir.path(),
        "interval.json",
        r#"{"name":"interval","vertices":[[0],[1]],
            "facets":[{"normal":[-1],"offset":0},{"normal":[1],"offset":1}]}"#,
    );
    let mut rows = String::new();
    let n = 2000;
    for i in 0..=n {
        let y = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
        rows.push_str(&format!("{y},{}\n", y.sin().powi(2)));
    }
    let field = write(dir.path(), "field.csv", &rows);
    let out = dir.path().join("lip.json");
    let res = bin()
        .args(["lipschitz", "--polytope"])
        .arg(&poly)
        .arg("--field")
        .arg(&field)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_code(&res, 0);
    let doc = read_json(&out);
    for v in doc["estimate"]["per_vertex"].as_array().unwrap() {
        let slope = v.as_f64().unwrap();
        assert!((0.99..=1.01).contains(&slope), "slope {slope}");
    }
}
