//! Stratified cross-validation of the full prediction pipeline.
//!
//! Per fold: z-normalize continuous views on training statistics, oversample
//! the training classes to balance, fit the model on the augmented training
//! set, infer held-out subject latents against the posterior, and score the
//! predictions. Preprocessing never sees the test rows.

use ndarray::Array2;

use super::folds::{kfold_split, FoldPlan};
use super::metrics::{compute_metrics, FoldMetrics, MetricsReport};
use super::normalize::znormalize;
use super::smote::{smote, ColumnRole};
use crate::fit::{fit_model, FitSettings};
use crate::model::{Dataset, ModelConfig, ViewData, ViewKind, ViewRole};
use crate::predict::{mix_seed, predict_subjects, thin_draws, PredictSettings, SubjectPrediction};
use crate::{Error, Result};

/// Settings for one cross-validation run.
#[derive(Debug, Clone)]
pub struct CvSettings {
    pub k: usize,
    pub seed: u64,
    /// Neighbors considered when interpolating synthetic minority rows.
    pub smote_neighbors: usize,
    pub fit: FitSettings,
    pub predict: PredictSettings,
}

impl Default for CvSettings {
    fn default() -> Self {
        CvSettings {
            k: 10,
            seed: 0,
            smote_neighbors: 5,
            fit: FitSettings::default(),
            predict: PredictSettings::default(),
        }
    }
}

/// Cross-validation result: aggregate metrics plus the fold plan and the
/// per-fold test predictions (aligned with each fold's test index list).
pub struct CvOutcome {
    pub report: MetricsReport,
    pub plan: FoldPlan,
    pub fold_predictions: Vec<Vec<SubjectPrediction>>,
}

/// How the views and response map onto one flat oversampling matrix.
struct FeatureSpans {
    roles: Vec<ColumnRole>,
    spans: Vec<(ViewRole, usize, usize, usize)>, // view role, view idx, col offset, width
    r_col: usize,
}

fn feature_spans(config: &ModelConfig) -> FeatureSpans {
    let mut roles = Vec::new();
    let mut spans = Vec::new();
    for (role, views) in [
        (ViewRole::Marker, &config.marker_views),
        (ViewRole::Background, &config.background_views),
    ] {
        for (idx, spec) in views.iter().enumerate() {
            let col_role = match spec.kind {
                ViewKind::Continuous => ColumnRole::Distance,
                ViewKind::Binary | ViewKind::Ordinal => ColumnRole::Copy,
            };
            spans.push((role, idx, roles.len(), spec.n_features));
            roles.extend(std::iter::repeat_n(col_role, spec.n_features));
        }
    }
    let r_col = roles.len();
    roles.push(ColumnRole::Interpolate);
    FeatureSpans { roles, spans, r_col }
}

fn pack_features(config: &ModelConfig, data: &Dataset, spans: &FeatureSpans) -> Array2<f64> {
    let n = data.n_subjects();
    let mut out = Array2::zeros((n, spans.roles.len()));
    for &(role, idx, offset, width) in &spans.spans {
        match data.view_data(role, idx) {
            ViewData::Continuous(m) => {
                out.slice_mut(ndarray::s![.., offset..offset + width]).assign(m);
            }
            ViewData::Discrete(m) => {
                let f = m.mapv(f64::from);
                out.slice_mut(ndarray::s![.., offset..offset + width]).assign(&f);
            }
        }
    }
    for i in 0..n {
        out[(i, spans.r_col)] = data.response_r[i];
    }
    let _ = config;
    out
}

fn unpack_features(
    config: &ModelConfig,
    spans: &FeatureSpans,
    features: &Array2<f64>,
    labels: &[u8],
    original: &Dataset,
) -> Dataset {
    let n = features.nrows();
    let mut marker_data = Vec::new();
    let mut background_data = Vec::new();
    for &(role, idx, offset, width) in &spans.spans {
        let block = features.slice(ndarray::s![.., offset..offset + width]);
        let vd = match config.views_of(role)[idx].kind {
            ViewKind::Continuous => ViewData::Continuous(block.to_owned()),
            // Copied columns carry exact integer codes from real rows.
            ViewKind::Binary | ViewKind::Ordinal => {
                ViewData::Discrete(block.mapv(|v| v.round() as u8))
            }
        };
        match role {
            ViewRole::Marker => marker_data.push(vd),
            ViewRole::Background => background_data.push(vd),
        }
    }
    let mut subject_ids = original.subject_ids.clone();
    for t in 0..n - original.n_subjects() {
        subject_ids.push(format!("synthetic_{t:04}"));
    }
    Dataset {
        subject_ids,
        marker_data,
        background_data,
        response_r: features.column(spans.r_col).to_owned(),
        response_c: labels.to_vec(),
    }
}

/// Z-normalize every continuous view of (train, test) using train statistics.
fn normalize_views(
    config: &ModelConfig,
    train: &mut Dataset,
    test: &mut Dataset,
) -> Result<()> {
    for (role, views) in [
        (ViewRole::Marker, &config.marker_views),
        (ViewRole::Background, &config.background_views),
    ] {
        for (idx, spec) in views.iter().enumerate() {
            if spec.kind != ViewKind::Continuous {
                continue;
            }
            let train_m = train
                .view_data(role, idx)
                .as_continuous()
                .expect("continuous view")
                .clone();
            let test_m = test
                .view_data(role, idx)
                .as_continuous()
                .expect("continuous view")
                .clone();
            let (tn, an, _) = znormalize(&train_m, &test_m, &format!("view '{}'", spec.name))?;
            let train_slot = match role {
                ViewRole::Marker => &mut train.marker_data[idx],
                ViewRole::Background => &mut train.background_data[idx],
            };
            *train_slot = ViewData::Continuous(tn);
            let test_slot = match role {
                ViewRole::Marker => &mut test.marker_data[idx],
                ViewRole::Background => &mut test.background_data[idx],
            };
            *test_slot = ViewData::Continuous(an);
        }
    }
    Ok(())
}

/// Run stratified k-fold cross-validation of fit-and-predict.
pub fn cross_validate(
    config: &ModelConfig,
    data: &Dataset,
    settings: &CvSettings,
) -> Result<CvOutcome> {
    let mut full_config = config.clone();
    full_config.n_subjects = data.n_subjects();
    full_config.validate()?;
    data.validate(&full_config)?;
    if settings.k < 2 {
        return Err(Error::InvalidConfig(format!(
            "cross-validation needs k >= 2, got {}",
            settings.k
        )));
    }
    let plan = kfold_split(&data.response_c, settings.k, settings.seed)?;
    let spans = feature_spans(config);
    let mut per_fold: Vec<FoldMetrics> = Vec::new();
    let mut fold_predictions = Vec::new();
    for (fold_idx, fold) in plan.folds.iter().enumerate() {
        let mut train = data.subset(&fold.train);
        let mut test = data.subset(&fold.test);
        normalize_views(config, &mut train, &mut test)?;

        let features = pack_features(config, &train, &spans);
        let (aug_features, aug_labels) = smote(
            &features,
            &train.response_c,
            &spans.roles,
            settings.smote_neighbors,
            mix_seed(settings.seed, 1, fold_idx as u64),
        )?;
        let augmented = unpack_features(config, &spans, &aug_features, &aug_labels, &train);

        let mut fit_config = config.clone();
        fit_config.n_subjects = augmented.n_subjects();
        let mut fit_settings = settings.fit.clone();
        fit_settings.seed = mix_seed(settings.seed, 2, fold_idx as u64);
        let fitted = fit_model(&fit_config, &augmented, &fit_settings)?;

        let retained = thin_draws(&fitted.draws, &fit_config, settings.predict.max_draws)?;
        let mut predict_settings = settings.predict.clone();
        predict_settings.seed = mix_seed(settings.seed, 3, fold_idx as u64);
        let predictions = predict_subjects(&fit_config, &retained, &test, &predict_settings)?;

        let pred_c: Vec<u8> = predictions.iter().map(|p| p.predicted_class).collect();
        let pred_r: Vec<f64> = predictions.iter().map(|p| p.r_mean).collect();
        let true_r: Vec<f64> = test.response_r.to_vec();
        per_fold.push(compute_metrics(
            &test.response_c,
            &pred_c,
            &true_r,
            &pred_r,
            config.response_ordinal_levels,
        )?);
        fold_predictions.push(predictions);
    }
    let report = MetricsReport::aggregate(per_fold)?;
    Ok(CvOutcome { report, plan, fold_predictions })
}
