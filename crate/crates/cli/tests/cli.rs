use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kshape_cli::config::RunConfig;
use kshape_cli::fit::run_fit;
use kshape_cli::model::ModelFile;
use kshape_core::DifferentialOperator;
use serde_json::Value;
use tempfile::TempDir;

fn kshape(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kshape")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = kshape(args);
    assert!(out.status.success(), "kshape {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    kshape(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synthetic(dir: &Path, name: &str, kind: &str, n: usize, noise: f64, seed: u64) -> PathBuf {
    let path = dir.join(name);
    ok(&[
        "gen-synthetic",
        "--kind",
        kind,
        "--n",
        &n.to_string(),
        "--noise",
        &noise.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        s(&path),
    ]);
    path
}

/// Monotone ridge fit on the noisy parabola with the bandwidth and penalty used in its reference study.
fn parabola_config(data: &Path, per_axis: usize, mode: &str) -> String {
    format!(
        r#"{{
  "data": "{}",
  "target": "y",
  "features": ["x"],
  "standardize": false,
  "objective": {{"loss": "squared", "regularization": {{"kind": "ridge", "lambda_f": 1e-4}}}},
  "kernel": {{"family": "gaussian", "bandwidth": 0.5}},
  "constraints": {{"bias_set": {{"kind": "zero"}},
                  "shapes": [{{"shape": {{"name": "n_monotone", "n": 1}}, "domain": {{"lower": [0], "upper": [2]}}}}]}},
  "covering": {{"mode": "uniform", "per_axis": {per_axis}}},
  "mode": "{mode}"
}}"#,
        data.display()
    )
}

fn quantile_config(data: &Path) -> String {
    format!(
        r#"{{
  "data": "{}",
  "target": "y",
  "features": ["x"],
  "objective": {{"loss": "pinball", "levels": [0.1, 0.3, 0.5, 0.7, 0.9],
                "regularization": {{"kind": "norm_ball", "radius_f": 10}}}},
  "kernel": {{"family": "gaussian", "bandwidth": 0.5}},
  "constraints": {{"non_crossing": true}},
  "covering": {{"mode": "recycled", "max_added": 10}}
}}"#,
        data.display()
    )
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn fit_file(dir: &Path, config: &str, name: &str) -> PathBuf {
    let cfg = write(dir, &format!("{name}.config.json"), config);
    let model = dir.join(format!("{name}.model.json"));
    ok(&["fit", "--config", s(&cfg), "--out", s(&model)]);
    model
}

fn json(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

#[test]
fn synthetic_data_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let a = std::fs::read(synthetic(dir.path(), "a.csv", "parabola", 30, 1.0, 4)).unwrap();
    let b = std::fs::read(synthetic(dir.path(), "b.csv", "parabola", 30, 1.0, 4)).unwrap();
    let c = std::fs::read(synthetic(dir.path(), "c.csv", "parabola", 30, 1.0, 5)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 31);
    let h = ok(&["gen-synthetic", "--kind", "heteroscedastic", "--n", "10"]);
    assert!(h.starts_with("x,y\n"));
}

#[test]
fn monotone_fit_is_certified_and_deterministic() {
    let dir = TempDir::new().unwrap();
    let data = synthetic(dir.path(), "train.csv", "parabola", 30, 1.0, 0);
    let cfg = write(dir.path(), "c.json", &parabola_config(&data, 20, "tightened"));
    let m1 = dir.path().join("m1.json");
    let m2 = dir.path().join("m2.json");
    let summary = ok(&["fit", "--config", s(&cfg), "--out", s(&m1)]);
    ok(&["fit", "--config", s(&cfg), "--out", s(&m2), "--summary", s(&dir.path().join("summary.txt"))]);
    assert!(summary.contains("0 of 1 constraints violated"), "{summary}");
    assert!(summary.contains("M = 20"), "{summary}");
    assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m2).unwrap());
    assert_eq!(std::fs::read_to_string(dir.path().join("summary.txt")).unwrap(), summary);

    let report = json(&ok(&["verify", "--model", s(&m1)]));
    assert!(report["worst_gap"].as_f64().unwrap() >= -1e-6, "{report}");
    assert_eq!(report["grid_intervals"], 9999);
    assert_eq!(report["constraints"][0]["proportion_violated"].as_f64().unwrap(), 0.0);
}

#[test]
fn model_files_predict_like_the_in_memory_model() {
    let dir = TempDir::new().unwrap();
    let data = synthetic(dir.path(), "train.csv", "heteroscedastic", 60, 0.0, 2);
    let config = RunConfig::parse(&quantile_config(&data)).unwrap();
    let fitted = run_fit(&config).unwrap();
    let loaded = ModelFile::from_json(&fitted.to_json(), "memory").unwrap();
    assert_eq!(loaded, fitted);
    let points: Vec<Vec<f64>> = (0..57).map(|k| vec![-0.1 + 1.2 * k as f64 / 56.0]).collect();
    for op in [DifferentialOperator::identity(1), DifferentialOperator::partial(1, 0, 1).unwrap()] {
        let a = fitted.predict(&op, &points, true).unwrap();
        let b = loaded.predict(&op, &points, true).unwrap();
        assert!(a.iter().flatten().zip(b.iter().flatten()).all(|(u, v)| u.to_bits() == v.to_bits()));
    }

    let model = dir.path().join("m.json");
    std::fs::write(&model, fitted.to_json()).unwrap();
    let pts = write(dir.path(), "pts.csv", "x\n0.25\n0.5\n0.75\n");
    let csv = ok(&["predict", "--model", s(&model), "--points", s(&pts)]);
    let expected =
        fitted.predict(&DifferentialOperator::identity(1), &[vec![0.25], vec![0.5], vec![0.75]], true).unwrap();
    for (k, line) in csv.lines().skip(1).enumerate() {
        let values: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        for q in 0..5 {
            assert_eq!(values[1 + q].to_bits(), expected[q][k].to_bits());
        }
    }
}

#[test]
fn quantile_fit_emits_non_crossing_curves() {
    let dir = TempDir::new().unwrap();
    let data = synthetic(dir.path(), "train.csv", "heteroscedastic", 120, 0.0, 7);
    let model = fit_file(dir.path(), &quantile_config(&data), "jqr");
    let grid = ok(&["predict", "--model", s(&model), "--grid", "0:1:200"]);
    let lines: Vec<&str> = grid.lines().collect();
    assert_eq!(lines[0], "x,f0,f1,f2,f3,f4");
    assert_eq!(lines.len(), 201);
    for line in &lines[1..] {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(v.len(), 6);
        assert!(v[1..].windows(2).all(|w| w[1] >= w[0] - 1e-6), "{line}");
    }
    let with_slopes = ok(&["predict", "--model", s(&model), "--grid", "0:1:200", "--derivative", "1"]);
    let header = with_slopes.lines().next().unwrap();
    assert_eq!(header.split(',').count(), 11);
    assert!(header.ends_with("f4_d1"));
    let empty = ok(&["predict", "--model", s(&model), "--grid", "0:1:0"]);
    assert_eq!(empty, "x,f0,f1,f2,f3,f4\n");

    let report = json(&ok(&["verify", "--model", s(&model), "--grid", "999"]));
    assert_eq!(report["constraints"].as_array().unwrap().len(), 4);
    assert!(report["worst_gap"].as_f64().unwrap() >= -1e-6);
    let margins = dir.path().join("margins");
    ok(&["verify", "--model", s(&model), "--grid", "10", "--margins", s(&margins)]);
    let m0 = std::fs::read_to_string(margins.join("margins_0.csv")).unwrap();
    assert_eq!(m0.lines().next().unwrap(), "x,margin");
    assert_eq!(m0.lines().count(), 12);
}

#[test]
fn discretized_fits_under_noise_usually_violate() {
    let dir = TempDir::new().unwrap();
    let mut violated = 0;
    for seed in 0..10 {
        let data = synthetic(dir.path(), &format!("d{seed}.csv"), "parabola", 30, 1.0, seed);
        let model = fit_file(dir.path(), &parabola_config(&data, 5, "discretized"), &format!("m{seed}"));
        let report = json(&ok(&["verify", "--model", s(&model), "--grid", "2000"]));
        if report["worst_gap"].as_f64().unwrap() < 0.0 {
            violated += 1;
        }
    }
    assert!(violated > 5, "only {violated} of 10 discretized fits violate monotonicity");
}

#[test]
fn unconstrained_models_give_empty_reports() {
    let dir = TempDir::new().unwrap();
    let data = synthetic(dir.path(), "train.csv", "parabola", 20, 0.5, 1);
    let config = parabola_config(&data, 5, "tightened").replace(
        r#""shapes": [{"shape": {"name": "n_monotone", "n": 1}, "domain": {"lower": [0], "upper": [2]}}]"#,
        r#""shapes": []"#,
    );
    let model = fit_file(dir.path(), &config, "free");
    let report = json(&ok(&["verify", "--model", s(&model)]));
    assert_eq!(report["constraints"].as_array().unwrap().len(), 0);
    assert!(report["worst_gap"].is_null());

    // The same model checked against a config that declares monotonicity.
    let strict = write(dir.path(), "strict.json", &parabola_config(&data, 5, "tightened"));
    let report = json(&ok(&["verify", "--model", s(&model), "--config", s(&strict), "--grid", "500"]));
    assert_eq!(report["constraints"].as_array().unwrap().len(), 1);
    assert!(report["worst_gap"].as_f64().unwrap() < 0.0);
}

#[test]
fn bounds_shrink_along_a_refinement_ladder() {
    let dir = TempDir::new().unwrap();
    let data = synthetic(dir.path(), "train.csv", "parabola", 30, 1.0, 0);
    let mut radii = Vec::new();
    for m in [5, 10, 20, 40] {
        let t = fit_file(dir.path(), &parabola_config(&data, m, "tightened"), &format!("t{m}"));
        let d = fit_file(dir.path(), &parabola_config(&data, m, "discretized"), &format!("d{m}"));
        let report = json(&ok(&["bounds", "--tightened", s(&t), "--discretized", s(&d)]));
        assert!((report["mu"].as_f64().unwrap() - 2e-4).abs() < 1e-18);
        radii.push(report["radius"].as_f64().unwrap());
        if m == 5 {
            let same = json(&ok(&["bounds", "--tightened", s(&t), "--discretized", s(&t)]));
            assert_eq!(same["radius"].as_f64().unwrap(), 0.0);
            assert_eq!(code(&["bounds", "--tightened", s(&t), "--discretized", s(&d), "--mu", "0"]), 1);
            assert_eq!(code(&["bounds", "--tightened", s(&t), "--discretized", s(&d), "--mu", "-1"]), 1);
        }
    }
    assert!(radii.windows(2).all(|w| w[1] < w[0]), "{radii:?}");

    let other = synthetic(dir.path(), "other.csv", "parabola", 30, 1.0, 1);
    let foreign = fit_file(dir.path(), &parabola_config(&other, 5, "discretized"), "foreign");
    let t5 = dir.path().join("t5.model.json");
    let out = kshape(&["bounds", "--tightened", s(&t5), "--discretized", s(&foreign)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("data"));
}

#[test]
fn cross_validation_picks_the_best_scored_candidate() {
    let dir = TempDir::new().unwrap();
    let data = synthetic(dir.path(), "train.csv", "heteroscedastic", 50, 0.0, 3);
    let config = quantile_config(&data).replace(r#""bandwidth": 0.5"#, r#""bandwidth": "decile-grid""#).replace(
        r#""max_added": 10}"#,
        r#""max_added": 5}, "cv": {"folds": 3, "lambda_grid": {"start": -1, "end": 2, "count": 2}}"#,
    );
    let model = ModelFile::load(&fit_file(dir.path(), &config, "cv")).unwrap();
    let sel = model.selection.as_ref().expect("selection recorded");
    assert_eq!(sel.folds, 3);
    assert_eq!(sel.table.len() % 2, 0);
    let best = sel.table.iter().filter_map(|e| e.score).fold(f64::INFINITY, f64::min);
    let first_best = sel.table.iter().find(|e| e.score == Some(best)).unwrap();
    assert_eq!(&sel.chosen, first_best);
    let bandwidths: Vec<f64> = sel.table.iter().filter_map(|e| e.bandwidth).collect();
    assert!(bandwidths.windows(2).all(|w| w[0] >= w[1]));
    match model.model.spec.family {
        kshape_core::KernelFamily::Gaussian { bandwidth } => assert_eq!(Some(bandwidth), sel.chosen.bandwidth),
        other => panic!("unexpected kernel {other:?}"),
    }
}

#[test]
fn exit_codes_classify_failures() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&["fit"]), 1);
    assert_eq!(code(&["no-such-command"]), 1);
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["fit", "--config", s(&dir.path().join("missing.json")), "--out", "x"]), 2);

    let bad = write(dir.path(), "bad.csv", "x,y\n0.1,1\n0.2,abc\n");
    let cfg = write(dir.path(), "c.json", &parabola_config(&bad, 5, "tightened"));
    let out = kshape(&["fit", "--config", s(&cfg), "--out", s(&dir.path().join("m.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let broken = write(dir.path(), "broken.json", "{\n  \"data\": \"x.csv\",\n  \"target\": 3\n}");
    let out = kshape(&["fit", "--config", s(&broken), "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    // |f|_k <= 1 forces |f| <= 1 everywhere, so f >= 100 on the box is infeasible.
    let data = synthetic(dir.path(), "train.csv", "parabola", 20, 0.5, 1);
    let infeasible = format!(
        r#"{{"data": "{}", "target": "y", "features": ["x"], "standardize": false,
            "objective": {{"loss": "pinball", "levels": [0.5], "regularization": {{"kind": "norm_ball", "radius_f": 1, "radius_b": 1}}}},
            "kernel": {{"family": "gaussian", "bandwidth": 0.5}},
            "constraints": {{"bias_set": {{"kind": "zero"}},
                            "custom": [{{"operator": [{{"gamma": 1, "multi_index": [0]}}], "b0": 100}}]}},
            "covering": {{"mode": "uniform", "per_axis": 4}}}}"#,
        data.display()
    );
    let cfg = write(dir.path(), "inf.json", &infeasible);
    assert_eq!(code(&["fit", "--config", s(&cfg), "--out", s(&dir.path().join("inf.model.json"))]), 3);

    let model = fit_file(dir.path(), &parabola_config(&data, 5, "tightened"), "ok");
    assert_eq!(code(&["predict", "--model", s(&model), "--grid", "0:1:5", "--grid", "0:1:5"]), 1);
    let wrong = write(dir.path(), "pts.csv", "z\n1\n");
    assert_eq!(code(&["predict", "--model", s(&model), "--points", s(&wrong)]), 2);
}

#[test]
fn closed_stdout_is_not_an_error() {
    use std::io::Read;
    use std::process::Stdio;

    let dir = TempDir::new().unwrap();
    let data = synthetic(dir.path(), "train.csv", "parabola", 30, 1.0, 0);
    let model = fit_file(dir.path(), &parabola_config(&data, 5, "tightened"), "m");
    let mut child = Command::new(env!("CARGO_BIN_EXE_kshape"))
        .args(["predict", "--model", s(&model), "--grid", "-2:2:200000"])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut head = [0u8; 16];
    child.stdout.take().unwrap().read_exact(&mut head).unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stderr.is_empty());
}
