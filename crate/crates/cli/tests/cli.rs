use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn heatsrc(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_heatsrc"));
    cmd.args(args).env_remove("HEATSRC_OUT").env_remove("RUST_LOG");
    if let Some(dir) = env_out {
        cmd.env("HEATSRC_OUT", dir);
    }
    cmd.output().expect("binary runs")
}

fn status(out: &Output) -> i32 {
    out.status.code().expect("exited")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn ok(out: Output) -> Output {
    assert_eq!(status(&out), 0, "stderr: {}", stderr(&out));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn experiment_is_bitwise_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        ok(heatsrc(&["experiment", "e1", "--delta", "0.03", "--seed", "7", "--out", s(dir)], None));
    }
    let names = files(&a);
    assert_eq!(names, files(&b));
    assert!(names.contains(&"reconstruction_delta_0.03.json".to_string()));
    for name in names.iter().filter(|n| *n != "manifest.json") {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name} differs");
    }
    // the manifests differ only in where they were written
    let (mut ma, mut mb) = (manifest(&a), manifest(&b));
    ma["config"]["output"] = Value::Null;
    mb["config"]["output"] = Value::Null;
    assert_eq!(ma, mb);
}

#[test]
fn env_var_picks_the_output_root() {
    let tmp = tempfile::tempdir().unwrap();
    ok(heatsrc(&["synth", "--preset", "e1", "--delta", "0.01"], Some(tmp.path())));
    let dir = tmp.path().join("e1");
    assert_eq!(files(&dir), ["dataset_delta_0.01.csv", "dataset_delta_0.01.json", "manifest.json"]);
    let m = manifest(&dir);
    assert_eq!(m["command"], "synth");
    assert_eq!(m["manifest_version"], 1);
    assert_eq!(m["seed"], 0);
}

#[test]
fn synth_then_invert_matches_experiment() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let common = ["--delta", "0.05", "--seed", "3"];
    let exp = root.join("exp");
    let mut args = vec!["experiment", "e1", "--out", s(&exp)];
    args.extend(common);
    ok(heatsrc(&args, None));

    let synth = root.join("synth");
    let mut args = vec!["synth", "--preset", "e1", "--out", s(&synth)];
    args.extend(common);
    ok(heatsrc(&args, None));
    let data = synth.join("dataset_delta_0.05.csv");
    assert_eq!(fs::read(&data).unwrap(), fs::read(exp.join("dataset_delta_0.05.csv")).unwrap());

    let inv = root.join("inv");
    let mut args = vec!["invert", "--data", s(&data), "--preset", "e1", "--out", s(&inv)];
    args.extend(common);
    ok(heatsrc(&args, None));
    for name in ["reconstruction_delta_0.05.json", "q_delta_0.05.csv", "p_polar_delta_0.05.csv", "error_table.csv"] {
        assert_eq!(fs::read(inv.join(name)).unwrap(), fs::read(exp.join(name)).unwrap(), "{name} differs");
    }
    assert_eq!(manifest(&inv)["command"], "invert");
}

#[test]
fn rerun_repeats_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let (first, again) = (tmp.path().join("first"), tmp.path().join("again"));
    ok(heatsrc(&["experiment", "e1", "--delta", "0.01", "--seed", "2", "--out", s(&first)], None));
    ok(heatsrc(&["rerun", s(&first.join("manifest.json")), "--out", s(&again)], None));
    for name in files(&first).iter().filter(|n| *n != "manifest.json") {
        assert_eq!(fs::read(first.join(name)).unwrap(), fs::read(again.join(name)).unwrap(), "{name} differs");
    }
    let (m1, m2) = (manifest(&first), manifest(&again));
    assert_eq!(m1["run"], m2["run"]);
    assert_eq!(m1["seed"], m2["seed"]);
}

#[test]
fn truncated_dataset_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let synth = tmp.path().join("synth");
    ok(heatsrc(&["synth", "--preset", "e1", "--delta", "0.01", "--out", s(&synth)], None));
    let csv = synth.join("dataset_delta_0.01.csv");
    let text = fs::read_to_string(&csv).unwrap();
    let cut: String = text
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n")
        .collect();
    fs::write(&csv, cut).unwrap();
    let out = heatsrc(&["invert", "--data", s(&csv), "--out", s(&tmp.path().join("inv"))], None);
    assert_eq!(status(&out), 3, "stderr: {}", stderr(&out));
    assert!(stderr(&out).contains("g_2"), "stderr: {}", stderr(&out));
}

#[test]
fn missing_dataset_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = heatsrc(
        &["invert", "--data", s(&tmp.path().join("nope.csv")), "--out", s(&tmp.path().join("o"))],
        None,
    );
    assert_eq!(status(&out), 3, "stderr: {}", stderr(&out));
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn bad_configs_exit_with_status_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("o");
    let cases = [
        (r#"{"preset": "custom", "dt": -0.01}"#, "dt"),
        (r#"{"preset": "custom", "detla": 0.01}"#, "detla"),
        (r#"{"preset": "custom", "angles": "zero"}"#, "angles"),
        ("{\"preset\": \"custom\",\n \"seed\": }", "2:"),
    ];
    for (text, needle) in cases {
        let cfg = write_config(tmp.path(), text);
        let out = heatsrc(&["synth", "--config", s(&cfg), "--out", s(&out_dir)], None);
        assert_eq!(status(&out), 2, "{text}: {}", stderr(&out));
        assert!(stderr(&out).contains(needle), "{text}: {}", stderr(&out));
    }
}

#[test]
fn locked_output_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join(".heatsrc.lock"), "1\n").unwrap();
    let out = heatsrc(&["synth", "--preset", "e1", "--out", s(tmp.path())], None);
    assert_eq!(status(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("locked"));
}

#[test]
fn noiseless_custom_run_recovers_the_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{
            "preset": "custom",
            "delta": 0,
            "n_modes": 3,
            "beta_p": 1e-8,
            "beta_q": 1e-8,
            "truth": { "p": [1.0], "q": [[0, 1], [0.3, 2], [0.7, 1.5]] }
        }"#,
    );
    let dir = tmp.path().join("run");
    ok(heatsrc(&["experiment", "custom", "--config", s(&cfg), "--out", s(&dir)], None));
    let rec: Value = serde_json::from_str(&fs::read_to_string(dir.join("reconstruction_delta_0.json")).unwrap()).unwrap();
    let (ep, eq) = (rec["errors"]["e_p"].as_f64().unwrap(), rec["errors"]["e_q"].as_f64().unwrap());
    assert!(ep < 1e-2 && eq < 1e-2, "e_p {ep}, e_q {eq}");
}

#[test]
fn gaps_with_prime_denominators() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("gaps.csv");
    let out = ok(heatsrc(&["gaps", "29", "--rule", "primes", "--out", s(&csv)], None));
    assert!(stderr(&out).contains("nearest below 1/4: 4/17"), "{}", stderr(&out));

    let text = fs::read_to_string(&csv).unwrap();
    let mut rows = text.lines();
    assert!(rows.next().unwrap().starts_with("fraction,position_pi"));
    let below = rows
        .map(|l| {
            let mut f = l.split(',');
            (f.next().unwrap().to_string(), f.next().unwrap().parse::<f64>().unwrap())
        })
        .filter(|(_, x)| *x < 0.25)
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    assert_eq!(below.0, "4/17");
    assert!((0.25 - below.1 - 1.0 / 68.0).abs() < 1e-15);
}

#[test]
fn shape_preset_writes_boundary_and_scores() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("e3");
    ok(heatsrc(&["experiment", "e3", "--out", s(&dir)], None));
    let names = files(&dir);
    for name in ["boundary_delta_0.01.csv", "radius_delta_0.01.csv", "shape_fit_delta_0.01.json", "plot.gp"] {
        assert!(names.contains(&name.to_string()), "{name} missing from {names:?}");
    }
    let fit: Value = serde_json::from_str(&fs::read_to_string(dir.join("shape_fit_delta_0.01.json")).unwrap()).unwrap();
    let err = fit["errors"]["radius_rel_l2"].as_f64().unwrap();
    assert!(err.is_finite() && err < 1.0, "{err}");
}
