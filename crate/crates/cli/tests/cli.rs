//! End-to-end tests of the `strata` binary: artifact layout, exit codes,
//! flag/config merging, and byte-level reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use strata::inference::{ParamLayout, PosteriorDraws};
use strata::model::{ModelConfig, ViewParams};
use strata::pipeline::ViewManifest;

fn strata_bin() -> &'static str {
    env!("CARGO_BIN_EXE_strata")
}

fn run(args: &[&str]) -> Output {
    Command::new(strata_bin())
        .args(args)
        .output()
        .expect("binary should spawn")
}

fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Small two-view model shared by most tests: one continuous marker view and
/// one binary questionnaire, three response levels.
const RUN_JSON: &str = r#"{
  "seed": 11,
  "model": {
    "n_subjects": 40,
    "marker_views": [{"name": "assay", "kind": "continuous", "n_features": 4, "latent_dim": 2}],
    "background_views": [{"name": "quest", "kind": "binary", "n_features": 3}],
    "shared_dim": 2,
    "response_ordinal_levels": 3
  },
  "chains": 2,
  "warmup": 120,
  "samples": 80,
  "map_iters": 200,
  "smote_neighbors": 2,
  "max_predict_draws": 20,
  "predict_adapt_iters": 16
}"#;

struct World {
    _keep: tempfile::TempDir,
    run_json: PathBuf,
    sim: PathBuf,
    fit: PathBuf,
}

/// Simulate once and fit once; later tests reuse both directories read-only.
fn world() -> &'static World {
    static WORLD: OnceLock<World> = OnceLock::new();
    WORLD.get_or_init(|| {
        let keep = tempfile::tempdir().expect("tempdir");
        let run_json = keep.path().join("run.json");
        fs::write(&run_json, RUN_JSON).expect("write run config");
        let sim = keep.path().join("sim");
        let fit = keep.path().join("fit");
        run_ok(&[
            "simulate",
            "--config",
            run_json.to_str().unwrap(),
            "--out",
            sim.to_str().unwrap(),
        ]);
        run_ok(&[
            "fit",
            "--config",
            run_json.to_str().unwrap(),
            "--data",
            sim.to_str().unwrap(),
            "--out",
            fit.to_str().unwrap(),
        ]);
        World { _keep: keep, run_json, sim, fit }
    })
}

fn read_json(path: &Path) -> serde_json::Value {
    let text = fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("read {}: {e}", path.display()));
    serde_json::from_str(&text).unwrap_or_else(|e| panic!("parse {}: {e}", path.display()))
}

/// The model stored in a resolved-config snapshot.
fn snapshot_model(dir: &Path) -> ModelConfig {
    let snapshot = read_json(&dir.join("resolved_config.json"));
    ModelConfig::parse_json(&snapshot["model"].to_string(), "snapshot").expect("stored model")
}

fn line_count(path: &Path) -> usize {
    fs::read_to_string(path).expect("readable").lines().count()
}

#[test]
fn simulate_without_config_emits_the_default_benchmark_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    run_ok(&["simulate", "--out", out.to_str().unwrap()]);

    let manifest = ViewManifest::read(&out.join("manifest.json")).expect("manifest");
    let widths: Vec<(String, usize)> = manifest
        .views
        .iter()
        .map(|v| (v.name.clone(), v.n_features))
        .collect();
    assert_eq!(
        widths,
        vec![
            ("marker_a".to_string(), 10),
            ("marker_b".to_string(), 5),
            ("questionnaire".to_string(), 20),
            ("covariates".to_string(), 6),
        ]
    );
    for view in &manifest.views {
        let path = out.join(&view.path);
        assert_eq!(line_count(&path), 501, "{} should hold 500 subjects", view.path);
        let header = fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
        assert_eq!(header.split(',').count(), view.n_features + 1);
    }
    assert_eq!(line_count(&out.join(&manifest.responses.path)), 501);
    assert!(out.join("truth.json").is_file());
    let model = snapshot_model(&out);
    assert_eq!(model.n_subjects, 500);
    assert_eq!(model.shared_dim, 3);
}

#[test]
fn simulate_is_byte_identical_per_seed_and_moves_with_it() {
    let w = world();
    let dir = tempfile::tempdir().unwrap();
    let again = dir.path().join("again");
    run_ok(&[
        "simulate",
        "--config",
        w.run_json.to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    for name in ["manifest.json", "assay.csv", "quest.csv", "responses.csv", "truth.json"] {
        assert_eq!(
            fs::read(w.sim.join(name)).unwrap(),
            fs::read(again.join(name)).unwrap(),
            "{name} should be byte-identical under the same seed"
        );
    }

    let moved = dir.path().join("moved");
    run_ok(&[
        "simulate",
        "--config",
        w.run_json.to_str().unwrap(),
        "--seed",
        "12",
        "--out",
        moved.to_str().unwrap(),
    ]);
    assert_ne!(
        fs::read(w.sim.join("responses.csv")).unwrap(),
        fs::read(moved.join("responses.csv")).unwrap(),
        "--seed should override the config seed"
    );
}

#[test]
fn missing_config_file_exits_one_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "simulate",
        "--config",
        "/nonexistent/run.json",
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr_of(&out).contains("/nonexistent/run.json"),
        "stderr should name the path: {}",
        stderr_of(&out)
    );
}

#[test]
fn dataset_without_manifest_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "fit",
        "--data",
        dir.path().to_str().unwrap(),
        "--out",
        dir.path().join("fit").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("manifest.json"), "{}", stderr_of(&out));
}

#[test]
fn unwritable_output_directory_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("blocked");
    fs::write(&blocker, "occupied").unwrap();
    let out = run(&["simulate", "--out", blocker.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fit_writes_draws_diagnostics_and_a_replayable_snapshot() {
    let w = world();
    assert!(w.fit.join("draws.csv").is_file());

    // One diagnostics entry per sampled scalar, plus the divergence count.
    let diag = read_json(&w.fit.join("diagnostics.json"));
    let header = fs::read_to_string(w.fit.join("draws.csv"))
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    let mut reader = csv::ReaderBuilder::new().from_reader(header.as_bytes());
    let n_columns = reader.headers().unwrap().len();
    assert_eq!(
        diag["params"].as_array().unwrap().len(),
        n_columns - 6,
        "diagnostics should cover every parameter column"
    );
    assert!(diag["n_divergent"].is_u64());
    assert!(diag["map_logp"].is_f64());

    // Replaying the stored snapshot reproduces the draws byte for byte.
    let dir = tempfile::tempdir().unwrap();
    let replay = dir.path().join("replay");
    run_ok(&[
        "fit",
        "--config",
        w.fit.join("resolved_config.json").to_str().unwrap(),
        "--data",
        w.sim.to_str().unwrap(),
        "--out",
        replay.to_str().unwrap(),
    ]);
    assert_eq!(
        fs::read(w.fit.join("draws.csv")).unwrap(),
        fs::read(replay.join("draws.csv")).unwrap()
    );
    assert_eq!(
        fs::read(w.fit.join("diagnostics.json")).unwrap(),
        fs::read(replay.join("diagnostics.json")).unwrap()
    );
}

#[test]
fn strict_underadapted_fit_exits_three_but_keeps_its_outputs() {
    let w = world();
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("strict");
    let out = run(&[
        "fit",
        "--config",
        w.run_json.to_str().unwrap(),
        "--data",
        w.sim.to_str().unwrap(),
        "--chains",
        "2",
        "--warmup",
        "20",
        "--samples",
        "40",
        "--strict",
        "--threads",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr_of(&out));
    assert!(stderr_of(&out).contains("R-hat"), "{}", stderr_of(&out));
    assert!(out_dir.join("draws.csv").is_file(), "failed fits stay inspectable");
    assert!(out_dir.join("diagnostics.json").is_file());
}

#[test]
fn cv_writes_fold_reports_whose_mean_is_the_aggregate() {
    let w = world();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cv");
    run_ok(&[
        "cv",
        "--config",
        w.run_json.to_str().unwrap(),
        "--data",
        w.sim.to_str().unwrap(),
        "--k",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    let agg = read_json(&out.join("metrics.json"));
    let folds: Vec<serde_json::Value> =
        (0..2).map(|i| read_json(&out.join(format!("fold_{i}.json")))).collect();
    assert!(!out.join("fold_2.json").exists(), "exactly k fold files");
    let mean_acc = folds.iter().map(|f| f["accuracy"].as_f64().unwrap()).sum::<f64>() / 2.0;
    assert!(
        (agg["accuracy"].as_f64().unwrap() - mean_acc).abs() <= 1e-12,
        "aggregate accuracy must equal the fold mean"
    );
    let test_rows: usize = (0..2)
        .map(|i| line_count(&out.join(format!("fold_{i}_predictions.csv"))) - 1)
        .sum();
    assert_eq!(test_rows, 40, "every subject is tested exactly once");
}

#[test]
fn cv_with_infeasible_fold_count_exits_one_naming_the_class() {
    let w = world();
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "cv",
        "--config",
        w.run_json.to_str().unwrap(),
        "--data",
        w.sim.to_str().unwrap(),
        "--k",
        "30",
        "--out",
        dir.path().join("cv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("class"), "{}", stderr_of(&out));
}

#[test]
fn predict_emits_a_probability_simplex_per_subject() {
    let w = world();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pred");
    run_ok(&[
        "predict",
        "--config",
        w.run_json.to_str().unwrap(),
        "--fit",
        w.fit.to_str().unwrap(),
        "--data",
        w.sim.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(out.join("predictions.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "subject_id,prob_0,prob_1,prob_2,predicted_class,r_mean,r_lo,r_hi"
    );
    let mut rows = 0;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        let probs: Vec<f64> = fields[1..4].iter().map(|f| f.parse().unwrap()).collect();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{line}");
        let argmax = (0..3).max_by(|&a, &b| probs[a].total_cmp(&probs[b])).unwrap();
        assert_eq!(fields[4].parse::<usize>().unwrap(), argmax, "{line}");
        let lo: f64 = fields[6].parse().unwrap();
        let mean: f64 = fields[5].parse().unwrap();
        let hi: f64 = fields[7].parse().unwrap();
        assert!(lo <= mean && mean <= hi, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 40);
}

#[test]
fn draws_csv_missing_a_parameter_column_exits_one_naming_it() {
    let w = world();
    let dir = tempfile::tempdir().unwrap();
    let broken = dir.path().join("broken_fit");
    fs::create_dir(&broken).unwrap();
    fs::copy(
        w.fit.join("resolved_config.json"),
        broken.join("resolved_config.json"),
    )
    .unwrap();

    // Rewrite draws.csv without its final parameter column.
    let mut reader = csv::Reader::from_path(w.fit.join("draws.csv")).unwrap();
    let header = reader.headers().unwrap().clone();
    let keep = header.len() - 1;
    let dropped = header.get(keep).unwrap().to_string();
    let mut writer = csv::Writer::from_path(broken.join("draws.csv")).unwrap();
    writer.write_record(header.iter().take(keep)).unwrap();
    for record in reader.records() {
        let record = record.unwrap();
        writer.write_record(record.iter().take(keep)).unwrap();
    }
    writer.flush().unwrap();

    let out = run(&[
        "predict",
        "--fit",
        broken.to_str().unwrap(),
        "--data",
        w.sim.to_str().unwrap(),
        "--out",
        dir.path().join("pred").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.contains("missing column") && err.contains(&dropped), "{err}");
}

#[test]
fn predict_rejects_data_that_does_not_match_the_fitted_model() {
    let w = world();
    let dir = tempfile::tempdir().unwrap();
    let other_json = dir.path().join("other.json");
    fs::write(
        &other_json,
        RUN_JSON.replace("\"n_features\": 4", "\"n_features\": 5"),
    )
    .unwrap();
    let other_sim = dir.path().join("other_sim");
    run_ok(&[
        "simulate",
        "--config",
        other_json.to_str().unwrap(),
        "--out",
        other_sim.to_str().unwrap(),
    ]);
    let out = run(&[
        "predict",
        "--fit",
        w.fit.to_str().unwrap(),
        "--data",
        other_sim.to_str().unwrap(),
        "--out",
        dir.path().join("pred").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("assay"), "{}", stderr_of(&out));
}

#[test]
fn report_of_a_single_draw_is_that_draw_sign_aligned() {
    let w = world();
    let dir = tempfile::tempdir().unwrap();
    let fit1 = dir.path().join("fit1");
    run_ok(&[
        "fit",
        "--config",
        w.run_json.to_str().unwrap(),
        "--data",
        w.sim.to_str().unwrap(),
        "--chains",
        "1",
        "--warmup",
        "30",
        "--samples",
        "1",
        "--out",
        fit1.to_str().unwrap(),
    ]);
    let rep = dir.path().join("rep");
    run_ok(&[
        "report",
        "--fit",
        fit1.to_str().unwrap(),
        "--out",
        rep.to_str().unwrap(),
    ]);

    // Independent expectation: read the single draw back and sign-align its
    // effective loadings so each factor's largest-magnitude entry is positive.
    let model = snapshot_model(&fit1);
    let layout = ParamLayout::new(&model).unwrap();
    let draws = PosteriorDraws::read_csv(&fit1.join("draws.csv"), &layout).unwrap();
    assert_eq!(draws.n_chains * draws.n_samples, 1);
    let row: Vec<f64> = draws.constrained[0].row(0).to_vec();
    let state = layout.state_from_constrained(&row).unwrap();
    let ViewParams::Continuous { loadings, .. } = &state.marker_params[0] else {
        panic!("assay is continuous");
    };
    let mut expected = loadings.effective();
    for mut factor in expected.rows_mut() {
        let lead = factor
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(_, &v)| v)
            .unwrap();
        if lead < 0.0 {
            factor.mapv_inplace(|v| -v);
        }
    }

    let text = fs::read_to_string(rep.join("loadings.csv")).unwrap();
    let mut seen = 0;
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[0], "assay");
        let factor: usize = fields[1].parse().unwrap();
        let feature: usize = fields[2].trim_start_matches('f').parse().unwrap();
        let weight: f64 = fields[3].parse().unwrap();
        assert!(
            (weight - expected[(factor, feature)]).abs() < 1e-12,
            "loadings.csv {line} vs {}",
            expected[(factor, feature)]
        );
        seen += 1;
    }
    assert_eq!(seen, 2 * 4, "two factors by four features");
    assert!(rep.join("top_factors.csv").is_file());
}

#[test]
fn cv_sweep_reports_the_grid_and_keeps_the_first_of_tied_points() {
    let w = world();
    let dir = tempfile::tempdir().unwrap();
    let sweep_json = dir.path().join("sweep.json");
    let config = RUN_JSON.replace(
        "\"seed\": 11,",
        r#""seed": 11,
  "k": 2,
  "latent_grid": [
    {"shared_dim": 1, "latent_dims": {"assay": 1}},
    {"shared_dim": 1, "latent_dims": {"assay": 1}}
  ],"#,
    );
    let config = config
        .replace("\"chains\": 2", "\"chains\": 1")
        .replace("\"warmup\": 120", "\"warmup\": 80")
        .replace("\"samples\": 80", "\"samples\": 50")
        .replace("\"max_predict_draws\": 20", "\"max_predict_draws\": 10");
    fs::write(&sweep_json, config).unwrap();
    let out = dir.path().join("sweep_out");
    run_ok(&[
        "cv",
        "--config",
        sweep_json.to_str().unwrap(),
        "--data",
        w.sim.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let sweep = read_json(&out.join("sweep.json"));
    let entries = sweep["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 2);
    assert_eq!(
        entries[0]["accuracy"].as_f64().unwrap(),
        entries[1]["accuracy"].as_f64().unwrap(),
        "identical grid points must reproduce identical metrics"
    );
    assert_eq!(sweep["best_index"].as_u64(), Some(0), "ties keep the first entry");
    for g in 0..2 {
        assert!(out.join(format!("grid_{g}/metrics.json")).is_file());
        assert!(out.join(format!("grid_{g}/fold_1.json")).is_file());
    }
    assert_eq!(
        read_json(&out.join("metrics.json")),
        read_json(&out.join("grid_0/metrics.json")),
        "top-level metrics mirror the winning grid point"
    );
}
