use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;
use tempfile::TempDir;

const TINY: &str = "\
epochs = 3
batch_cubes = 64
learning_rate = 1e-4
encoder_resolution = 8
encoder_hidden = 16
latent_dim = 8
head_hidden = 16
target_hidden = 8, 8
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cubefield"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, kind: &str, n: usize, count: usize, seed: u64) {
    ok(&[
        "gen-data",
        "--kind",
        kind,
        "--n",
        &n.to_string(),
        "--count",
        &count.to_string(),
        "--seed",
        &seed.to_string(),
        "--out-dir",
        s(dir),
    ]);
}

fn train(data: &Path, dir: &Path, seed: u64) -> PathBuf {
    let cfg = dir.join("tiny.cfg");
    fs::write(&cfg, TINY).unwrap();
    let out = dir.join("model.json");
    ok(&[
        "train",
        "--data-dir",
        s(data),
        "--config",
        s(&cfg),
        "--seed",
        &seed.to_string(),
        "--out",
        s(&out),
    ]);
    out
}

/// One dataset and checkpoint shared by the read-only tests.
struct Fixture {
    _root: TempDir,
    data: PathBuf,
    model: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let root = TempDir::new().unwrap();
        let data = root.path().join("data");
        gen(&data, "mixed", 8, 3, 4);
        let model = train(&data, root.path(), 9);
        Fixture { _root: root, data, model }
    })
}

#[test]
fn gen_data_writes_grids_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("d");
    gen(&dir, "desk", 16, 3, 1);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["resolution"], 16);
    assert_eq!(manifest["kind"], "desk");
    let shapes = manifest["shapes"].as_array().unwrap();
    assert_eq!(shapes.len(), 3);
    for (i, shape) in shapes.iter().enumerate() {
        let file = format!("shape_{i:04}.binvox");
        assert_eq!(shape["file"], file.as_str());
        let bytes = fs::read(dir.join(&file)).unwrap();
        assert!(bytes.starts_with(b"#binvox 1\n"));
    }
    assert!(dir.join("gen-data.config").exists());
}

#[test]
fn gen_data_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    gen(&a, "mixed", 8, 5, 3);
    gen(&b, "mixed", 8, 5, 3);
    gen(&c, "mixed", 8, 5, 4);
    let read = |d: &Path, f: &str| fs::read(d.join(f)).unwrap();
    assert_eq!(read(&a, "manifest.json"), read(&b, "manifest.json"));
    assert_ne!(read(&a, "manifest.json"), read(&c, "manifest.json"));
    for i in 0..5 {
        let f = format!("shape_{i:04}.binvox");
        assert_eq!(read(&a, &f), read(&b, &f));
    }
}

#[test]
fn gen_data_with_zero_count_writes_only_manifest() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("empty");
    gen(&dir, "sphere", 8, 0, 0);
    let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert!(manifest["shapes"].as_array().unwrap().is_empty());
    assert!(!dir.join("shape_0000.binvox").exists());
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let d = s(tmp.path());
    for args in [
        vec!["frobnicate"],
        vec!["gen-data", "--kind", "blob", "--out-dir", d],
        vec!["gen-data", "--kind", "sphere", "--n", "0", "--out-dir", d],
        vec!["interpolate", "--checkpoint", "x", "--a", "a", "--b", "b", "--space", "slerp", "--out-dir", d],
        vec!["eval", "--data-dir", d, "--out", "r.json"],
        vec!["--threads", "0", "gen-data", "--kind", "sphere", "--out-dir", d],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn interpolate_rejects_one_step() {
    let f = fixture();
    let tmp = TempDir::new().unwrap();
    let a = f.data.join("shape_0000.binvox");
    let out = run(&[
        "interpolate",
        "--checkpoint",
        s(&f.model),
        "--a",
        s(&a),
        "--b",
        s(&a),
        "--steps",
        "1",
        "--out-dir",
        s(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_is_a_usage_error() {
    let f = fixture();
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "learning_rate = -1\n").unwrap();
    let out = run(&[
        "train",
        "--data-dir",
        s(&f.data),
        "--config",
        s(&cfg),
        "--out",
        s(&tmp.path().join("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_dataset_fails() {
    let tmp = TempDir::new().unwrap();
    let out = run(&[
        "train",
        "--data-dir",
        s(&tmp.path().join("nowhere")),
        "--out",
        s(&tmp.path().join("m.json")),
    ]);
    assert!(!out.status.success());
    assert_ne!(out.status.code(), Some(2));
}

#[test]
fn train_writes_telemetry_per_epoch() {
    let f = fixture();
    let dir = f.model.parent().unwrap();
    let telemetry = fs::read_to_string(dir.join("telemetry.jsonl")).unwrap();
    let records: Vec<Value> = telemetry.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 3);
    for (i, r) in records.iter().enumerate() {
        assert_eq!(r["epoch"], i);
        assert!(r["loss"].as_f64().unwrap().is_finite());
        assert!(r["wall_ms"].is_number());
        assert!(r["mem_bytes"].as_u64().unwrap() > 0);
    }
    let resolved = fs::read_to_string(dir.join("model.json.config")).unwrap();
    assert!(resolved.contains("seed = 9"));
    assert!(resolved.contains("epochs = 3"));
}

#[test]
fn train_is_deterministic() {
    let f = fixture();
    let tmp = TempDir::new().unwrap();
    let again = train(&f.data, tmp.path(), 9);
    assert_eq!(fs::read(&f.model).unwrap(), fs::read(&again).unwrap());
    let strip = |p: &Path| -> Vec<Value> {
        fs::read_to_string(p.with_file_name("telemetry.jsonl"))
            .unwrap()
            .lines()
            .map(|l| {
                let mut v: Value = serde_json::from_str(l).unwrap();
                v.as_object_mut().unwrap().remove("wall_ms");
                v
            })
            .collect()
    };
    assert_eq!(strip(&f.model), strip(&again));
}

fn reconstruct(model: &Path, input: &Path, res: usize, out: &Path) -> Output {
    run(&[
        "reconstruct",
        "--checkpoint",
        s(model),
        "--input",
        s(input),
        "--res",
        &res.to_string(),
        "--out",
        s(out),
    ])
}

#[test]
fn reconstruct_at_two_resolutions() {
    let f = fixture();
    let tmp = TempDir::new().unwrap();
    let input = f.data.join("shape_0000.binvox");
    for res in [32, 64] {
        let out = tmp.path().join(format!("r{res}.obj"));
        let status = reconstruct(&f.model, &input, res, &out);
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        let text = fs::read_to_string(&out).unwrap();
        assert!(text.starts_with("# cubefield triangle mesh"));
        let lo = 0.5 / res as f64 - 1e-9;
        for line in text.lines().filter(|l| l.starts_with("v ")) {
            for c in line.split_whitespace().skip(1) {
                let c: f64 = c.parse().unwrap();
                assert!((lo..=1.0 - lo).contains(&c));
            }
        }
        assert!(tmp.path().join(format!("r{res}.obj.config")).exists());
    }
}

#[test]
fn reconstruct_rejects_bad_binvox() {
    let f = fixture();
    let tmp = TempDir::new().unwrap();
    let bad = tmp.path().join("bad.binvox");
    fs::write(&bad, b"#voxbin 1\ndim 8 8 8\ndata\n").unwrap();
    let out = reconstruct(&f.model, &bad, 32, &tmp.path().join("o.obj"));
    assert!(!out.status.success());
    assert!(!tmp.path().join("o.obj").exists());
}

/// Checks the subset of JSON Schema used by the published report schema.
fn conforms(value: &Value, schema: &Value, path: &str) -> Result<(), String> {
    if let Some(options) = schema.get("enum").and_then(Value::as_array) {
        if !options.contains(value) {
            return Err(format!("{path}: {value} not in {options:?}"));
        }
    }
    if let Some(ty) = schema.get("type") {
        let types: Vec<&str> = match ty {
            Value::String(t) => vec![t.as_str()],
            Value::Array(ts) => ts.iter().filter_map(Value::as_str).collect(),
            _ => vec![],
        };
        let matches = |t: &str| match t {
            "object" => value.is_object(),
            "array" => value.is_array(),
            "string" => value.is_string(),
            "boolean" => value.is_boolean(),
            "null" => value.is_null(),
            "number" => value.is_number(),
            "integer" => value.is_u64() || value.is_i64(),
            _ => false,
        };
        if !types.iter().any(|t| matches(t)) {
            return Err(format!("{path}: {value} is not {types:?}"));
        }
    }
    if let Some(x) = value.as_f64() {
        if schema.get("minimum").and_then(Value::as_f64).is_some_and(|m| x < m) {
            return Err(format!("{path}: {x} below minimum"));
        }
        if schema.get("maximum").and_then(Value::as_f64).is_some_and(|m| x > m) {
            return Err(format!("{path}: {x} above maximum"));
        }
    }
    if let Some(obj) = value.as_object() {
        let props = schema.get("properties").and_then(Value::as_object);
        for key in schema.get("required").and_then(Value::as_array).into_iter().flatten() {
            let key = key.as_str().unwrap();
            if !obj.contains_key(key) {
                return Err(format!("{path}: missing {key}"));
            }
        }
        for (k, v) in obj {
            match props.and_then(|p| p.get(k)) {
                Some(sub) => conforms(v, sub, &format!("{path}.{k}"))?,
                None if schema.get("additionalProperties") == Some(&Value::Bool(false)) => {
                    return Err(format!("{path}: unexpected {k}"));
                }
                None => {}
            }
        }
    }
    if let (Some(items), Some(arr)) = (schema.get("items"), value.as_array()) {
        for (i, v) in arr.iter().enumerate() {
            conforms(v, items, &format!("{path}[{i}]"))?;
        }
    }
    Ok(())
}

fn schema() -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/schema/eval_report.schema.json");
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn oracle_eval_is_perfect_and_conforms() {
    let f = fixture();
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("report.json");
    let stdout = ok(&[
        "eval",
        "--oracle-gt",
        "--data-dir",
        s(&f.data),
        "--res",
        "16",
        "--samples",
        "256",
        "--out",
        s(&out),
    ])
    .stdout;
    let report: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    conforms(&report, &schema(), "$").unwrap();
    assert_eq!(report["variant"], "oracle-gt");
    for shape in report["shapes"].as_array().unwrap() {
        assert_eq!(shape["mse"].as_f64().unwrap(), 0.0);
        assert_eq!(shape["iou"].as_f64().unwrap(), 1.0);
        assert!(shape.get("component_sizes").is_none());
    }
    assert_eq!(report["mean"]["iou"].as_f64().unwrap(), 1.0);
    assert!(!stdout.is_empty());
    assert!(tmp.path().join("report.json.config").exists());
}

#[test]
fn model_eval_conforms_and_reports_components() {
    let f = fixture();
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("report.json");
    ok(&[
        "eval",
        "--checkpoint",
        s(&f.model),
        "--data-dir",
        s(&f.data),
        "--res",
        "16",
        "--mode",
        "interval",
        "--samples",
        "128",
        "--components",
        "--out",
        s(&out),
    ]);
    let report: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    conforms(&report, &schema(), "$").unwrap();
    assert_eq!(report["mode"], "interval-midpoint");
    for shape in report["shapes"].as_array().unwrap() {
        let sizes = shape["component_sizes"].as_array().unwrap();
        assert_eq!(sizes.len() as u64, shape["component_count"].as_u64().unwrap());
    }
}

#[test]
fn schema_rejects_tampered_reports() {
    let good = serde_json::json!({
        "variant": "x", "resolution": 16, "samples": 8, "mode": "point-at-center", "seed": 0,
        "shapes": [], "mean": {"mse": 0.0, "iou": 1.0, "cd": null, "cd_missing": 0, "component_count": 0.0}
    });
    let schema = schema();
    conforms(&good, &schema, "$").unwrap();
    let mut bad = good.clone();
    bad["mode"] = "sideways".into();
    assert!(conforms(&bad, &schema, "$").is_err());
    let mut bad = good.clone();
    bad["mean"]["iou"] = 1.5.into();
    assert!(conforms(&bad, &schema, "$").is_err());
    let mut bad = good;
    bad.as_object_mut().unwrap().remove("seed");
    assert!(conforms(&bad, &schema, "$").is_err());
}

#[test]
fn interpolation_endpoints_match_reconstruction() {
    let f = fixture();
    let tmp = TempDir::new().unwrap();
    let a = f.data.join("shape_0000.binvox");
    let b = f.data.join("shape_0002.binvox");
    for space in ["latent", "theta"] {
        let dir = tmp.path().join(space);
        ok(&[
            "interpolate",
            "--checkpoint",
            s(&f.model),
            "--a",
            s(&a),
            "--b",
            s(&b),
            "--steps",
            "5",
            "--space",
            space,
            "--res",
            "24",
            "--out-dir",
            s(&dir),
        ]);
        let index: Value = serde_json::from_str(&fs::read_to_string(dir.join("index.json")).unwrap()).unwrap();
        assert_eq!(index["space"], space);
        let steps = index["steps"].as_array().unwrap();
        assert_eq!(steps.len(), 5);
        for (i, step) in steps.iter().enumerate() {
            assert_eq!(step["t"].as_f64().unwrap(), i as f64 / 4.0);
            assert!(dir.join(format!("step_{i:03}.obj")).exists());
        }
        for (input, step) in [(&a, "step_000.obj"), (&b, "step_004.obj")] {
            let out = tmp.path().join(format!("{space}-{step}"));
            assert!(reconstruct(&f.model, input, 24, &out).status.success());
            assert_eq!(fs::read(&out).unwrap(), fs::read(dir.join(step)).unwrap());
        }
    }
}

#[test]
fn reconstruct_rejects_bad_checkpoint_magic() {
    let f = fixture();
    let tmp = TempDir::new().unwrap();
    let mut bytes = fs::read(&f.model).unwrap();
    bytes[0] ^= 0xff;
    let bad = tmp.path().join("bad.ckpt");
    fs::write(&bad, bytes).unwrap();
    let out = reconstruct(&bad, &f.data.join("shape_0000.binvox"), 32, &tmp.path().join("o.obj"));
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("magic"));
}
