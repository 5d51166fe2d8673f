use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn recipes() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../recipes")
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("saddlelab-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn run(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_saddlelab"));
    cmd.args(args).env_remove("SADDLELAB_JOBS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn saddlelab(command: &str, recipe: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![command, "--recipe", recipe.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args, &[])
}

fn json(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

fn write_recipe(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("recipe.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn linear_pipeline_exits_zero() {
    let out = scratch("lin");
    let o = saddlelab("pipeline", &recipes().join("cat.toml"), &out, &["--pairs", "4", "--horizon", "60"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rep = json(out.join("pipeline.json"));
    assert_eq!(rep["result"]["verdict"], "PASS");
    assert_eq!(rep["config"]["pairs"], 4);
    assert_eq!(rep["recipe"]["sha256"].as_str().unwrap().len(), 64);
    assert!(out.join("mixing_hits.csv").exists());
}

#[test]
fn broken_cones_exit_two_with_witnesses() {
    let out = scratch("broken");
    let o = saddlelab("pipeline", &recipes().join("broken-cones.toml"), &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    let w = json(out.join("sh_witnesses.json"));
    let failures = w["result"].as_array().unwrap();
    assert!(!failures.is_empty());
    assert!(failures[0]["uu"]["error"].as_str().unwrap().contains("avoid"));
    let rep = json(out.join("pipeline.json"));
    assert_eq!(rep["result"]["steps"][0]["status"], "fail");
    assert_eq!(rep["result"]["steps"][3]["status"], "skipped");
}

#[test]
fn configuration_errors_exit_one() {
    let out = scratch("cfg");
    let o = saddlelab("pipeline", &out.join("missing.toml"), &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    let bad = write_recipe(&out, "[map]\ndomain = { kind = \"torus\", matrix = [[2,1],[1,1]], weak_band = [0.01, 100.0] }\n\nwat = 1\n");
    let o = saddlelab("make-map", &bad, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 4"));
    let o = run(&["mix", "--recipe", recipes().join("cat.toml").to_str().unwrap(), "--out", out.to_str().unwrap()], &[("SADDLELAB_JOBS", "many")]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn overlapping_surgeries_are_named() {
    let out = scratch("overlap");
    let r = write_recipe(
        &out,
        r#"[map]
domain = { kind = "torus", matrix = [[2,1],[1,1]], weak_band = [0.01, 100.0] }

[[map.surgeries]]
label = "left"
point = [0.0, 0.0]
matrix = [[2.0, 1.0], [1.0, 1.0]]
radius = 0.05

[[map.surgeries]]
label = "right"
point = [0.0, 0.0]
matrix = [[2.0, 1.0], [1.0, 1.0]]
radius = 0.05
"#,
    );
    let o = saddlelab("make-map", &r, &out, &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("left") && err.contains("right"), "{err}");
}

#[test]
fn map_summaries() {
    let out = scratch("summary");
    let o = saddlelab("make-map", &recipes().join("t4-pre-surgery.toml"), &out, &["--grid", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let s = json(out.join("map.json"));
    let local = s["result"]["local_derivatives"].as_array().unwrap();
    assert_eq!(local[0]["label"], "p0");
    assert!(local[0]["center_identity_defect"].as_f64().unwrap() < 1e-12);
    assert_eq!(s["result"]["note"], serde_json::Value::Null);
    let o = saddlelab("make-map", &recipes().join("cat.toml"), &out, &[]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(out.join("map.json"))["result"]["note"], "map ≡ linear part");
}

#[test]
fn fixed_points_of_the_squared_cat_map() {
    let out = scratch("fp");
    let o = saddlelab("fixed-points", &recipes().join("cat.toml"), &out, &["--period", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let r = json(out.join("fixed_points.json"));
    assert_eq!(r["result"]["count"], "5");
    assert_eq!(r["result"]["points"].as_array().unwrap().len(), 5);
}

#[test]
fn linear_semiconjugacy_is_zero() {
    let out = scratch("semi");
    let o = saddlelab("semiconj", &recipes().join("cat.toml"), &out, &["--grid", "32"]);
    assert_eq!(o.status.code(), Some(0));
    let r = json(out.join("semiconj.json"));
    assert_eq!(r["result"]["field"]["residual"].as_f64(), Some(0.0));
    assert_eq!(r["result"]["sup_v"].as_f64(), Some(0.0));
    let bytes = std::fs::read(out.join("conjugacy.bin")).unwrap();
    assert_eq!(&bytes[..4], b"SLCF");
}

#[test]
fn four_torus_sh_certificate_and_indices() {
    let out = scratch("t4");
    let recipe = recipes().join("t4-three-surgeries.toml");
    let o = saddlelab("certify-sh", &recipe, &out, &["--grid", "2", "--horizon", "40"]);
    assert_eq!(o.status.code(), Some(0));
    let r = json(out.join("certify_sh.json"));
    assert_eq!(r["result"]["pass"], true);
    assert_eq!(r["result"]["points"], 16);
    let o = saddlelab("surgery", &recipe, &out, &[]);
    assert_eq!(o.status.code(), Some(0));
    let r = json(out.join("surgery.json"));
    let idx: Vec<_> = r["result"]["indices"].as_array().unwrap().iter().map(|row| row["index"].clone()).collect();
    assert_eq!(idx[0]["index"], 3);
    assert_eq!(idx[1]["index"], 1);
    assert_eq!(idx[2]["complex_center"], true);
    assert_eq!(idx[3]["index"], 2);
}

#[test]
fn reports_do_not_depend_on_the_worker_count() {
    let recipe = recipes().join("cat.toml");
    let mut seen = Vec::new();
    for jobs in ["1", "3"] {
        let out = scratch(&format!("jobs{jobs}"));
        let o = saddlelab("mix", &recipe, &out, &["--jobs", jobs, "--pairs", "6"]);
        assert_eq!(o.status.code(), Some(0));
        seen.push((std::fs::read(out.join("mixing.json")).unwrap(), std::fs::read(out.join("mixing_hits.csv")).unwrap()));
    }
    let out = scratch("jobsenv");
    let o = run(&["mix", "--recipe", recipe.to_str().unwrap(), "--out", out.to_str().unwrap(), "--pairs", "6"], &[("SADDLELAB_JOBS", "2")]);
    assert_eq!(o.status.code(), Some(0));
    seen.push((std::fs::read(out.join("mixing.json")).unwrap(), std::fs::read(out.join("mixing_hits.csv")).unwrap()));
    assert!(seen.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn sweep_without_perturbation_passes_everything() {
    let out = scratch("sweep");
    let o = saddlelab("sweep", &recipes().join("cat.toml"), &out, &["--count", "2", "--c1", "0", "--pairs", "2"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(out.join("sweep.json"))["result"]["fraction"].as_f64(), Some(1.0));
}
