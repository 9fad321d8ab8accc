use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::{json, Value};

fn specuq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_specuq")).args(args).output().expect("spawn specuq")
}

fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--output", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    specuq(&args)
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Generates a well-separated n = 8 problem into `dir/data`.
fn generate_small(dir: &Path) -> PathBuf {
    let cfg = write_config(
        dir,
        "gen.json",
        &json!({"experiment": "regimes", "regime": "well_separated", "n": 8, "n_problems": 400, "split": [300, 100], "seed": 3}),
    );
    let data = dir.join("data");
    let o = run("generate", &cfg, &data, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    data
}

fn train_small(dir: &Path, data: &Path) -> Output {
    let cfg = write_config(dir, "train.json", &json!({"data_dir": data, "training": {"epochs": 40, "mc_samples": 10}}));
    run("train", &cfg, data, &[])
}

#[test]
fn generate_writes_four_files_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_small(dir.path());
    for f in ["model.json", "train.json", "test.json", "metadata.json"] {
        assert!(data.join(f).is_file(), "{f}");
    }
    let meta = read_json(&data.join("metadata.json"));
    assert!(meta["achieved_min_gap"].as_f64().unwrap() > 0.0);
    let first = fs::read(data.join("train.json")).unwrap();
    let again = dir.path().join("again");
    let o = run("generate", &dir.path().join("gen.json"), &again, &[]);
    assert_eq!(code(&o), 0);
    assert_eq!(first, fs::read(again.join("train.json")).unwrap());
    assert_eq!(fs::read(data.join("model.json")).unwrap(), fs::read(again.join("model.json")).unwrap());
}

#[test]
fn generate_scaling_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "gen.json", &json!({"experiment": "scaling", "n": 5, "complexity": 6, "samples": 40}));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&run("generate", &cfg, &a, &[])), 0);
    assert_eq!(code(&run("generate", &cfg, &b, &["--seed", "9"])), 0);
    assert_eq!(read_json(&a.join("metadata.json"))["gap_target"], json!(1e-6));
    assert_ne!(fs::read(a.join("train.json")).unwrap(), fs::read(b.join("train.json")).unwrap());
}

#[test]
fn generate_rejects_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", &json!({"experiment": "regimes", "regime": "flat", "n": 8}));
    let o = run("generate", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("invalid config"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), "typo.json", &json!({"experiment": "regimes", "regim": "critical_gap"}));
    assert_eq!(code(&run("generate", &cfg, &dir.path().join("out"), &[])), 2);

    let ok = write_config(dir.path(), "ok.json", &json!({"experiment": "regimes", "n": 4, "n_problems": 20, "split": [10, 10]}));
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    assert_eq!(code(&run("generate", &ok, &blocker.join("sub"), &[])), 2);

    assert_eq!(code(&specuq(&["generate"])), 2);
    assert_eq!(code(&specuq(&["generate", "--config", "/nonexistent/config.json"])), 2);
}

#[test]
fn train_evaluate_predict_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_small(dir.path());
    let start = Instant::now();
    let o = train_small(dir.path(), &data);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(start.elapsed().as_secs() < 60);

    let post = read_json(&data.join("posterior.json"));
    for key in ["mean", "lowrank", "log_diag", "log_alpha_reg"] {
        assert!(post.get(key).is_some(), "{key}");
    }
    let summary = read_json(&data.join("training.json"));
    let epochs = summary["epochs_run"].as_u64().unwrap() as usize;
    let trace = fs::read_to_string(data.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count() - 1, epochs);

    let eval_cfg = write_config(dir.path(), "eval.json", &json!({"data_dir": data}));
    let plain = dir.path().join("eval");
    let full = dir.path().join("eval_full");
    assert_eq!(code(&run("evaluate", &eval_cfg, &plain, &[])), 0);
    assert_eq!(code(&run("evaluate", &eval_cfg, &full, &["--full"])), 0);
    let metrics = fs::read_to_string(plain.join("metrics.csv")).unwrap();
    assert_eq!(metrics, fs::read_to_string(full.join("metrics.csv")).unwrap());
    let header: Vec<&str> = metrics.lines().next().unwrap().split(',').collect();
    for col in ["ece", "cov95", "rmse"] {
        assert!(header.contains(&col), "{col}");
    }
    assert_eq!(metrics.lines().count(), 2);
    let small = fs::metadata(plain.join("results.json")).unwrap().len();
    let big = fs::metadata(full.join("results.json")).unwrap().len();
    assert!(big > small);
    let results = read_json(&plain.join("results.json"));
    assert!(results["report"]["ece"].as_f64().unwrap() <= 0.1);

    let pred_cfg = write_config(dir.path(), "pred.json", &json!({"data_dir": data, "inputs": [[0.0, 0.0], [0.1, -0.05]]}));
    let pred_out = dir.path().join("pred");
    assert_eq!(code(&run("predict", &pred_cfg, &pred_out, &[])), 0);
    let preds = read_json(&pred_out.join("predictions.json"));
    assert_eq!(preds.as_array().unwrap().len(), 2);
    assert_eq!(preds[0]["mean"].as_array().unwrap().len(), 8);
}

#[test]
fn train_and_evaluate_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "train.json", &json!({"data_dir": dir.path().join("missing")}));
    assert_eq!(code(&run("train", &cfg, &dir.path().join("out"), &[])), 2);

    let data = generate_small(dir.path());
    assert_eq!(code(&train_small(dir.path(), &data)), 0);
    let mut test = read_json(&data.join("test.json"));
    test["samples"][0]["y"].as_array_mut().unwrap().pop();
    let broken = dir.path().join("broken");
    fs::create_dir_all(&broken).unwrap();
    for f in ["model.json", "posterior.json", "metadata.json"] {
        fs::copy(data.join(f), broken.join(f)).unwrap();
    }
    fs::write(broken.join("test.json"), test.to_string()).unwrap();
    let eval_cfg = write_config(dir.path(), "eval.json", &json!({"data_dir": broken}));
    assert_eq!(code(&run("evaluate", &eval_cfg, &dir.path().join("eval"), &[])), 2);
}

#[test]
fn training_abort_exits_three_and_keeps_trace() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_small(dir.path());
    let mut train = read_json(&data.join("train.json"));
    train["samples"][0]["y"][0] = json!(1e300);
    fs::write(data.join("train.json"), train.to_string()).unwrap();
    let cfg = write_config(dir.path(), "train.json", &json!({"data_dir": data, "training": {"epochs": 5, "mc_samples": 4}}));
    let out = dir.path().join("out");
    let o = run("train", &cfg, &out, &[]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(out.join("trace.csv").is_file());
    assert!(!out.join("posterior.json").exists());
}

fn toy_model(gap: f64) -> Value {
    json!({
        "base": {"n": 2, "rows": [[0.0, 0.0], [0.0, gap]]},
        "couplings": [],
        "corrections": [{"n": 2, "rows": [[1.0, 0.0], [0.0, 0.0]]}]
    })
}

#[test]
fn propagate_regimes_and_warning() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "p.json", &json!({"model": toy_model(1.0), "covariance": [[1e-4]]}));
    let out = dir.path().join("p");
    let o = run("propagate", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let u = read_json(&out.join("uncertainty.json"));
    assert!(u["regime"].as_array().unwrap().iter().all(|r| r == "well_separated"));
    assert!(!String::from_utf8_lossy(&o.stdout).contains("unreliable"));

    let cfg = write_config(dir.path(), "w.json", &json!({"model": toy_model(0.1), "covariance": [[1.0]]}));
    let o = run("propagate", &cfg, &dir.path().join("w"), &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let u = read_json(&dir.path().join("w").join("uncertainty.json"));
    assert!(u["reliability"].as_f64().unwrap() < 0.5);
    assert!(String::from_utf8_lossy(&o.stdout).contains("Uncertainty estimates may be unreliable"));

    for bad in [json!([[1.0, 0.0]]), json!([[-1.0]]), json!("identity")] {
        let cfg = write_config(dir.path(), "bad.json", &json!({"model": toy_model(1.0), "covariance": bad}));
        assert_eq!(code(&run("propagate", &cfg, &dir.path().join("bad"), &[])), 2);
    }
}

#[test]
fn score_examples() {
    let dir = tempfile::tempdir().unwrap();
    let base = json!({"n_data": 10000, "n": 50, "delta_min": 0.1, "eps_target": 1e-4, "kappa": 1e4, "p_norm": 1.0, "sigma": 0.01});
    let cfg = write_config(dir.path(), "s.json", &base);
    let out = dir.path().join("s");
    let o = run("score", &cfg, &out, &[]);
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("recommendation: recommended"), "{stdout}");
    let s = read_json(&out.join("score.json"));
    assert!((s["score"].as_f64().unwrap() - 111.0).abs() < 0.5);
    assert_eq!(s["recommendation"], "recommended");
    for key in ["scale", "data", "spectral", "numerical", "signal", "overall"] {
        assert!(s["feasibility"][key].is_boolean(), "{key}");
    }

    let mut small = base.clone();
    small["n"] = json!(5);
    let cfg = write_config(dir.path(), "small.json", &small);
    let o = run("score", &cfg, &dir.path().join("small"), &[]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("scale=false"));

    let mut flat = base;
    flat["kappa"] = json!(1.0);
    let cfg = write_config(dir.path(), "flat.json", &flat);
    assert_eq!(code(&run("score", &cfg, &dir.path().join("flat"), &[])), 2);
}

#[test]
fn bench_runs_grid_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bench.json",
        &json!({"experiment": "regimes", "regimes": ["critical_gap"], "n": [4], "split": [30, 10], "seeds": [1, 2],
                "training": {"epochs": 3, "mc_samples": 4}}),
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&run("bench", &cfg, &a, &[])), 0);
    assert_eq!(code(&run("bench", &cfg, &b, &[])), 0);
    for f in ["results.json", "metrics.csv", "trace.csv"] {
        assert!(a.join(f).is_file(), "{f}");
    }
    assert_eq!(fs::read(a.join("metrics.csv")).unwrap(), fs::read(b.join("metrics.csv")).unwrap());
    assert_eq!(fs::read_to_string(a.join("metrics.csv")).unwrap().lines().count(), 3);

    let c = dir.path().join("c");
    assert_eq!(code(&run("bench", &cfg, &c, &["--seed", "7"])), 0);
    assert_eq!(fs::read_to_string(c.join("metrics.csv")).unwrap().lines().count(), 2);

    let bad = write_config(dir.path(), "bad.json", &json!({"experiment": "scaling", "n": [7], "complexity": [1]}));
    assert_eq!(code(&run("bench", &bad, &dir.path().join("bad"), &[])), 2);
}
