use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn pann(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pann"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn model_path() -> String {
    repo_root().join("data/digits_mlp.json").display().to_string()
}

fn data_dir() -> String {
    repo_root().join("data/digits").display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn first_lines(path: &Path, n: usize) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().take(n).map(str::to_string).collect()
}

#[test]
fn simulate_writes_versioned_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim.csv");
    let o = pann(&["simulate", "--bw", "4", "--bx", "4", "--B", "32", "--signed", "--n", "4000", "--seed", "1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        first_lines(&out, 2),
        vec![
            "# pann simulate format_version=1".to_string(),
            "component,measured_avg,predicted,relative_error".to_string()
        ]
    );
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 2 + 9);
    let acc_input: f64 = text
        .lines()
        .find(|l| l.starts_with("acc_input,"))
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!((acc_input - 16.0).abs() < 16.0 * 0.07, "{acc_input}");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sim.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["format_version"], 1);
}

#[test]
fn unsigned_flag_accepts_explicit_false() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("u.csv");
    let o = pann(&["simulate", "--signed=false", "--bw", "6", "--bx", "6", "--n", "3000", "--seed", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let row = text.lines().find(|l| l.starts_with("acc_input,")).unwrap();
    let predicted: f64 = row.split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(predicted, 6.0);
}

#[test]
fn single_sample_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let o = pann(&["simulate", "--n", "1", "--seed", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("n_samples ≥ 2"), "{}", stderr(&o));
}

#[test]
fn seed_is_mandatory_for_stochastic_commands() {
    let o = pann(&["simulate", "--out", "/dev/null"]);
    assert_eq!(o.status.code(), Some(2));
    let o = pann(&["mse", "--dist", "gaussian", "--out", "/dev/null"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--seed"));
}

#[test]
fn validate_models_schema_and_gate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.csv");
    let o = pann(&["validate-models", "--bits", "4..8", "--n", "8000", "--seed", "3", "--out", out.to_str().unwrap()]);
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# pann validate-models format_version=1"));
    assert_eq!(
        lines.next(),
        Some("grid,b_w,b_x,signed,component,measured_avg,predicted,relative_error,tolerance,pass")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let square = rows.iter().filter(|r| r[0] == "square").count();
    assert_eq!(square, 5 * 2 * 9, "one row per width, component and signedness");
    let mixed = rows
        .iter()
        .find(|r| r[0] == "mixed" && r[1] == "4" && r[3] == "true")
        .unwrap();
    assert_eq!(mixed[6], "38.0");
    let measured: f64 = mixed[5].parse().unwrap();
    assert!((measured - 38.0).abs() < 3.8, "{measured}");
    let failed = rows.iter().any(|r| r.last() == Some(&"false"));
    // The exit status mirrors the pass column.
    if failed {
        assert_eq!(o.status.code(), Some(1));
        assert!(stderr(&o).contains("FAIL"));
    } else {
        assert!(o.status.success(), "{}", stderr(&o));
    }
}

#[test]
fn quantize_missing_model_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let o = pann(&[
        "quantize",
        "--model",
        missing.to_str().unwrap(),
        "--mode",
        "unsigned-split",
        "--out",
        dir.path().join("q.json").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(missing.to_str().unwrap()), "{}", stderr(&o));
}

#[test]
fn quantize_pann_records_budget_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("q.json");
    let o = pann(&[
        "quantize",
        "--model",
        &model_path(),
        "--mode",
        "pann",
        "--budget",
        "10",
        "--data",
        &data_dir(),
        "--seed",
        "4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("q.json.manifest.json")).unwrap()).unwrap();
    let b_x = m["results"]["b_x"].as_f64().unwrap();
    let r = m["results"]["r"].as_f64().unwrap();
    assert!(((r + 0.5) * b_x - 10.0).abs() < 1e-9);
    let storage: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("q.json.storage.json")).unwrap()).unwrap();
    assert!(storage["storage"]["b_r"].as_u64().unwrap() >= 1);
}

#[test]
fn quantize_split_passes_equivalence_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("split.json");
    let o = pann(&["quantize", "--model", &model_path(), "--mode", "unsigned-split", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["layers"].as_array().unwrap().len(), 2);
}

#[test]
fn quantize_mode_requirements() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("q.json");
    let o = pann(&["quantize", "--model", &model_path(), "--mode", "ruq", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--bits"));
}

#[test]
fn mse_uniform_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.csv");
    let o = pann(&["mse", "--curve", "ratio", "--dist", "uniform", "--bits", "2..8", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# pann mse format_version=1"));
    assert_eq!(lines.next(), Some("b,P,b_x_opt,mse_ruq,mse_pann,ratio"));
    let ratios: Vec<(u32, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[5].parse().unwrap())
        })
        .collect();
    assert_eq!(ratios.len(), 7);
    assert!(ratios[0].1 > 1.0);
    assert!(ratios[6].1 < 1.0);
}

#[test]
fn budget_search_infeasible_and_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.json");
    let base = ["budget-search", "--model", &model_path(), "--data", &data_dir(), "--split", "val", "--seed", "1"];
    let mut args: Vec<&str> = base.to_vec();
    args.extend(["--budget", "0.5", "--out", out.to_str().unwrap()]);
    let o = pann(&args);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).to_lowercase().contains("budget"));

    let mut args: Vec<&str> = base.to_vec();
    args.extend(["--budget", "10", "--brange", "5..8", "--calib-samples", "64", "--out", out.to_str().unwrap()]);
    let o = pann(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["format_version"], 1);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    let best = v["best"]["accuracy"].as_f64().unwrap();
    assert!(rows.iter().all(|r| r["accuracy"].as_f64().unwrap() <= best));
}

#[test]
fn tradeoff_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let o = pann(&[
        "tradeoff",
        "--model",
        &model_path(),
        "--data",
        &data_dir(),
        "--split",
        "val",
        "--budget",
        "10",
        "--baseline-bits",
        "2",
        "--brange",
        "6..8",
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines = first_lines(&out, 10);
    assert_eq!(lines[0], "# pann tradeoff format_version=1");
    assert_eq!(lines[1], "b_x,latency,b_r,act_mem,weight_mem,accuracy");
    assert_eq!(lines.len(), 5);
    assert!(lines[2].starts_with("6,1.16666"));
    assert!(lines[2].contains(",3.0,") || lines[2].contains(",3,"));
}

#[test]
fn replay_reproduces_outputs_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim.csv");
    let o = pann(&["simulate", "--dist", "gaussian", "--n", "2000", "--seed", "9", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = dir.path().join("sim.csv.manifest.json");
    let before = (fs::read(&out).unwrap(), fs::read(&manifest).unwrap());
    fs::remove_file(&out).unwrap();
    let o = pann(&["replay", manifest.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(before, (fs::read(&out).unwrap(), fs::read(&manifest).unwrap()));
}

#[test]
fn replay_rejects_garbage() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{}").unwrap();
    let o = pann(&["replay", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
