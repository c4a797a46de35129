//! The five subcommands. Each resolves its run configuration, does the work
//! through the library, stages every artifact, writes the resolved-config
//! snapshot, and commits the stage in one pass.

use std::path::Path;

use serde::Serialize;

use strata::inference::{DiagnosticsReport, ParamLayout, PosteriorDraws};
use strata::fit::fit_model;
use strata::model::ModelConfig;
use strata::pipeline::{cross_validate, CvOutcome};
use strata::predict::{
    export_loadings, predict_subjects, thin_draws, write_loadings_csv,
    write_predictions_csv, write_top10_csv,
};
use strata::simulate::{simulate_dataset, write_dataset};
use strata::{Error, Result};

use crate::run::{ensure_dataset_dir, load_data_dir, model_for_dir, GridPoint, RunConfig};
use crate::stage::Stage;

/// Generate a synthetic cohort: view CSVs, responses, manifest, ground truth.
pub fn simulate(mut run: RunConfig, out: &Path) -> Result<()> {
    let model = run.model.clone().unwrap_or_else(strata::simulate::default_recovery_config);
    model.validate()?;
    let labels = match &run.class_labels {
        Some(labels) => {
            if labels.len() != model.response_ordinal_levels {
                return Err(Error::InvalidConfig(format!(
                    "{} class labels supplied for {} response levels",
                    labels.len(),
                    model.response_ordinal_levels
                )));
            }
            labels.clone()
        }
        None => (0..model.response_ordinal_levels).map(|c| format!("level_{c}")).collect(),
    };
    let overrides = run.truth_overrides.clone().unwrap_or_default();
    let (data, truth) = simulate_dataset(&model, run.seed, &overrides)?;

    let stage = Stage::new(out)?;
    write_dataset(stage.dir(), &model, &data, &labels)?;
    truth.write_json(&stage.path("truth.json"))?;
    run.model = Some(model);
    stage.write_text("resolved_config.json", &run.snapshot_json()?)?;
    stage.commit()?;
    println!(
        "simulated {} subjects across {} views into {}",
        data.n_subjects(),
        data.marker_data.len() + data.background_data.len(),
        out.display()
    );
    Ok(())
}

/// Extra fit-level facts stored alongside the per-coordinate diagnostics.
#[derive(Serialize)]
struct FitReportJson<'a> {
    map_logp: f64,
    #[serde(flatten)]
    diagnostics: &'a DiagnosticsReport,
}

/// Sample the posterior for a dataset; write draws and diagnostics.
pub fn fit(mut run: RunConfig, data_dir: &Path, out: &Path) -> Result<()> {
    ensure_dataset_dir(data_dir)?;
    let mut model = model_for_dir(&run, data_dir)?;
    let (_, data) = load_data_dir(data_dir, &mut model)?;
    let result = fit_model(&model, &data, &run.fit_settings())?;

    let stage = Stage::new(out)?;
    result.draws.write_csv(&stage.path("draws.csv"))?;
    let report = FitReportJson { map_logp: result.map_logp, diagnostics: &result.diagnostics };
    stage.write_text("diagnostics.json", &(pretty_json(&report, "diagnostics.json")? + "\n"))?;
    run.model = Some(model);
    stage.write_text("resolved_config.json", &run.snapshot_json()?)?;
    stage.commit()?;

    let diag = &result.diagnostics;
    println!(
        "fit {} subjects: {} chains x {} draws, max R-hat {:.4}, min ESS {:.0}, {} divergences",
        data.n_subjects(),
        result.draws.n_chains,
        result.draws.n_samples,
        diag.max_rhat,
        diag.min_ess,
        diag.n_divergent,
    );
    if run.strict {
        if !diag.constant_params.is_empty() {
            return Err(Error::Sampler(format!(
                "strict mode: {} coordinate(s) carried no variation (first: {})",
                diag.constant_params.len(),
                diag.constant_params[0]
            )));
        }
        if diag.max_rhat > run.rhat_threshold {
            return Err(Error::Sampler(format!(
                "strict mode: max split R-hat {:.4} exceeds the {} threshold",
                diag.max_rhat, run.rhat_threshold
            )));
        }
    }
    Ok(())
}

/// One sweep row of the cross-validation grid report.
#[derive(Serialize)]
struct SweepRow {
    index: usize,
    shared_dim: usize,
    latent_dims: std::collections::BTreeMap<String, usize>,
    total_latent_dim: usize,
    accuracy: f64,
    precision_macro: f64,
    recall_macro: f64,
    rmse_mean: f64,
}

#[derive(Serialize)]
struct SweepReport {
    entries: Vec<SweepRow>,
    best_index: usize,
}

/// Stratified k-fold cross-validation; optionally sweeps latent widths.
pub fn cv(mut run: RunConfig, data_dir: &Path, out: &Path) -> Result<()> {
    ensure_dataset_dir(data_dir)?;
    let mut model = model_for_dir(&run, data_dir)?;
    let (_, data) = load_data_dir(data_dir, &mut model)?;
    let settings = run.cv_settings();
    let stage = Stage::new(out)?;

    let grid = run.latent_grid.clone();
    match grid.as_deref() {
        None => {
            let outcome = cross_validate(&model, &data, &settings)?;
            write_cv_outputs(&stage, "", &data.subject_ids, &outcome)?;
            println!(
                "cross-validated {} folds: accuracy {:.4}, macro precision {:.4}, rmse {:.4}",
                settings.k, outcome.report.accuracy, outcome.report.precision_macro,
                outcome.report.rmse_mean,
            );
        }
        Some([]) => {
            return Err(Error::InvalidConfig("latent_grid must not be empty".into()));
        }
        Some(points) => {
            let mut rows: Vec<SweepRow> = Vec::with_capacity(points.len());
            let mut best_metrics: Option<String> = None;
            let mut best: Option<usize> = None;
            for (g, point) in points.iter().enumerate() {
                let patched = apply_grid_point(&model, point)?;
                let outcome = cross_validate(&patched, &data, &settings)?;
                let subdir = format!("grid_{g}");
                stage.make_dir(&subdir)?;
                write_cv_outputs(&stage, &subdir, &data.subject_ids, &outcome)?;
                let dims = patched.dims();
                let row = SweepRow {
                    index: g,
                    shared_dim: patched.shared_dim,
                    latent_dims: patched
                        .all_views()
                        .map(|(_, v)| (v.name.clone(), v.latent_dim))
                        .collect(),
                    total_latent_dim: dims.d_u + dims.d_x + dims.d_b,
                    accuracy: outcome.report.accuracy,
                    precision_macro: outcome.report.precision_macro,
                    recall_macro: outcome.report.recall_macro,
                    rmse_mean: outcome.report.rmse_mean,
                };
                let better = match best {
                    None => true,
                    Some(b) => crate::run::sweep_improves(
                        (row.accuracy, row.total_latent_dim),
                        (rows[b].accuracy, rows[b].total_latent_dim),
                    ),
                };
                if better {
                    best = Some(g);
                    best_metrics = Some(outcome.report.to_json());
                }
                rows.push(row);
            }
            let best_index = best.expect("grid is non-empty");
            let sweep = SweepReport { entries: rows, best_index };
            stage.write_text("sweep.json", &(pretty_json(&sweep, "sweep.json")? + "\n"))?;
            stage.write_text("metrics.json", &best_metrics.expect("chosen with best"))?;
            println!(
                "swept {} grid points; best index {} (accuracy {:.4}, total latent dim {})",
                sweep.entries.len(),
                best_index,
                sweep.entries[best_index].accuracy,
                sweep.entries[best_index].total_latent_dim,
            );
        }
    }
    run.model = Some(model);
    stage.write_text("resolved_config.json", &run.snapshot_json()?)?;
    stage.commit()
}

/// Replace the shared width and any listed per-view widths.
fn apply_grid_point(model: &ModelConfig, point: &GridPoint) -> Result<ModelConfig> {
    let mut patched = model.clone();
    patched.shared_dim = point.shared_dim;
    for (name, &width) in &point.latent_dims {
        let view = patched
            .marker_views
            .iter_mut()
            .chain(patched.background_views.iter_mut())
            .find(|v| v.name == *name)
            .ok_or_else(|| {
                Error::InvalidConfig(format!("latent_grid names unknown view '{name}'"))
            })?;
        view.latent_dim = width;
    }
    patched.validate()?;
    Ok(patched)
}

/// Per-fold metrics JSONs, per-fold prediction CSVs, and the aggregate.
fn write_cv_outputs(
    stage: &Stage,
    subdir: &str,
    subject_ids: &[String],
    outcome: &CvOutcome,
) -> Result<()> {
    let join = |name: &str| {
        if subdir.is_empty() {
            name.to_string()
        } else {
            format!("{subdir}/{name}")
        }
    };
    for (i, fold) in outcome.report.per_fold.iter().enumerate() {
        let name = join(&format!("fold_{i}.json"));
        stage.write_text(&name, &(pretty_json(fold, &name)? + "\n"))?;
        let ids: Vec<String> = outcome.plan.folds[i]
            .test
            .iter()
            .map(|&row| subject_ids[row].clone())
            .collect();
        write_predictions_csv(
            &stage.path(&join(&format!("fold_{i}_predictions.csv"))),
            &ids,
            &outcome.fold_predictions[i],
        )?;
    }
    stage.write_text(&join("metrics.json"), &outcome.report.to_json())?;
    Ok(())
}

/// Predict held-out subjects' responses from a stored fit.
pub fn predict(mut run: RunConfig, fit_dir: &Path, data_dir: &Path, out: &Path) -> Result<()> {
    ensure_dataset_dir(data_dir)?;
    let fit_model = model_for_dir(&run, fit_dir)?;
    let mut holdout_model = fit_model.clone();
    let (_, holdout) = load_data_dir(data_dir, &mut holdout_model)?;
    let layout = ParamLayout::new(&fit_model)?;
    let draws = PosteriorDraws::read_csv(&fit_dir.join("draws.csv"), &layout)?;
    let retained = thin_draws(&draws, &fit_model, run.max_predict_draws)?;
    let predictions =
        predict_subjects(&fit_model, &retained, &holdout, &run.predict_settings())?;

    let stage = Stage::new(out)?;
    write_predictions_csv(&stage.path("predictions.csv"), &holdout.subject_ids, &predictions)?;
    run.model = Some(fit_model);
    stage.write_text("resolved_config.json", &run.snapshot_json()?)?;
    stage.commit()?;
    println!(
        "predicted {} subjects from {} retained draws into {}",
        holdout.n_subjects(),
        retained.states.len(),
        out.display()
    );
    Ok(())
}

/// Export factor-loading summaries from a stored fit.
pub fn report(mut run: RunConfig, fit_dir: &Path, out: &Path) -> Result<()> {
    let model = model_for_dir(&run, fit_dir)?;
    let layout = ParamLayout::new(&model)?;
    let draws = PosteriorDraws::read_csv(&fit_dir.join("draws.csv"), &layout)?;
    let export = export_loadings(&draws, &model, None)?;

    let stage = Stage::new(out)?;
    write_loadings_csv(&export, &stage.path("loadings.csv"))?;
    write_top10_csv(&export, &stage.path("top_factors.csv"))?;
    run.model = Some(model);
    stage.write_text("resolved_config.json", &run.snapshot_json()?)?;
    stage.commit()?;
    println!(
        "exported loading summaries for {} continuous views into {}",
        export.views.len(),
        out.display()
    );
    Ok(())
}

fn pretty_json<T: Serialize>(value: &T, origin: &str) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::json(origin, e))
}
