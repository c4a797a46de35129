//! Ancestral sampling from the generative process: draw ground-truth
//! parameters, then latents top-down, then observed views and responses.
//!
//! Ground-truth parameters come from bounded, well-separated distributions
//! rather than the model priors, so that recovery runs have signal worth
//! recovering: loadings are sparse with nonzeros bounded away from zero,
//! precisions sit in a moderate band, and response cutpoints are placed at
//! fixed quantiles of the implied latent-status distribution.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::math::probit;
use crate::model::likelihood::{graded_response_probs, irt_prob};
use crate::model::{
    Dataset, Level1, LoadingBlock, ModelConfig, ParameterState, PriorConfig, ViewData,
    ViewKind, ViewParams, ViewRole, ViewSpec,
};
use crate::pipeline::ViewManifest;
use crate::{Error, Result};

/// The generating parameter state together with its seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub state: ParameterState,
}

impl GroundTruth {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let shown = path.display().to_string();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(&shown, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(&shown, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(&shown, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(&shown, e))
    }
}

/// Partial replacement of generated ground-truth parameters. Any field left
/// unset keeps its generated default. Matrices are row-major nested lists.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TruthOverrides {
    /// Fraction of per-view loading entries forced to exactly zero.
    pub loading_sparsity: Option<f64>,
    /// Per continuous view (by name): latent_dim x n_features loadings.
    pub loadings: BTreeMap<String, Vec<Vec<f64>>>,
    /// Per continuous view: observation noise precision.
    pub noise_precision: BTreeMap<String, f64>,
    /// Per binary/ordinal view: per-item discriminations.
    pub discrimination: BTreeMap<String, Vec<f64>>,
    /// Per binary view: per-item difficulties.
    pub difficulty: BTreeMap<String, Vec<f64>>,
    /// Per ordinal view: n_features x (levels-1) thresholds.
    pub thresholds: BTreeMap<String, Vec<Vec<f64>>>,
    /// d_x x shared_dim map from the shared subspace to marker abstractions.
    pub shared_loadings: Option<Vec<Vec<f64>>>,
    /// shared_dim x d_b background regression.
    pub background_regression: Option<Vec<Vec<f64>>>,
    pub response_g_weights: Option<Vec<f64>>,
    pub response_w_r: Option<f64>,
    pub response_w_c: Option<f64>,
    pub r_noise_precision: Option<f64>,
    pub response_cutpoints: Option<Vec<f64>>,
}

impl TruthOverrides {
    pub fn parse_json(text: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::json(origin, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(&shown, e))?;
        Self::parse_json(&text, &shown)
    }
}

/// Desk-sized configuration for parameter-recovery runs: two continuous
/// marker views (10 and 5 features; latent widths 3 and 2), one binary and
/// one continuous background view, three shared factors, 500 subjects,
/// three response levels.
pub fn default_recovery_config() -> ModelConfig {
    ModelConfig {
        n_subjects: 500,
        marker_views: vec![
            ViewSpec::continuous("marker_a", 10, 3),
            ViewSpec::continuous("marker_b", 5, 2),
        ],
        background_views: vec![
            ViewSpec::binary("questionnaire", 20),
            ViewSpec::continuous("covariates", 6, 2),
        ],
        shared_dim: 3,
        response_ordinal_levels: 3,
        prior_hyperparams: PriorConfig::default(),
        explicit_cstar: false,
        background_horseshoe: true,
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn signed_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let magnitude = uniform(rng, lo, hi);
    if rng.random::<bool>() {
        magnitude
    } else {
        -magnitude
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Sparse loading matrix: `sparsity` of entries exactly zero, the rest signed
/// with magnitude in [0.7, 1.5]; every row keeps at least one nonzero so no
/// factor is silent.
fn sparse_loadings(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    sparsity: f64,
) -> Array2<f64> {
    let mut m = Array2::zeros((rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            if rng.random::<f64>() >= sparsity {
                m[(r, c)] = signed_uniform(rng, 0.7, 1.5);
            }
        }
        if m.row(r).iter().all(|&v| v == 0.0) {
            let c = rng.random_range(0..cols);
            m[(r, c)] = signed_uniform(rng, 0.7, 1.5);
        }
    }
    m
}

fn matrix_from_nested(
    nested: &[Vec<f64>],
    want: (usize, usize),
    what: &str,
) -> Result<Array2<f64>> {
    if nested.len() != want.0 || nested.iter().any(|row| row.len() != want.1) {
        return Err(Error::ShapeMismatch(format!(
            "{} override must be {} x {}",
            what, want.0, want.1
        )));
    }
    Ok(Array2::from_shape_fn(want, |(r, c)| nested[r][c]))
}

fn draw_view_params(
    rng: &mut ChaCha8Rng,
    spec: &ViewSpec,
    sparsity: f64,
) -> ViewParams {
    match spec.kind {
        ViewKind::Continuous => ViewParams::Continuous {
            loadings: LoadingBlock {
                raw: sparse_loadings(rng, spec.latent_dim, spec.n_features, sparsity),
                local_scales: Array2::ones((spec.latent_dim, spec.n_features)),
                global_scale: 1.0,
            },
            noise_precision: uniform(rng, 2.0, 6.0),
        },
        ViewKind::Binary => ViewParams::Binary {
            discrimination: Array1::from_shape_fn(spec.n_features, |_| uniform(rng, 0.8, 2.0)),
            difficulty: Array1::from_shape_fn(spec.n_features, |_| uniform(rng, -1.5, 1.5)),
        },
        ViewKind::Ordinal => {
            let levels = spec.levels_per_feature.expect("validated ordinal view");
            let k = levels - 1;
            let mut thresholds = Array2::zeros((spec.n_features, k));
            for item in 0..spec.n_features {
                let mut t = -(k as f64 - 1.0) / 2.0 + uniform(rng, -0.3, 0.3);
                for c in 0..k {
                    thresholds[(item, c)] = t;
                    t += uniform(rng, 0.7, 1.3);
                }
            }
            ViewParams::Ordinal {
                discrimination: Array1::from_shape_fn(spec.n_features, |_| {
                    uniform(rng, 0.8, 2.0)
                }),
                thresholds,
            }
        }
    }
}

fn apply_view_overrides(
    params: &mut ViewParams,
    spec: &ViewSpec,
    overrides: &TruthOverrides,
) -> Result<()> {
    match params {
        ViewParams::Continuous { loadings, noise_precision } => {
            if let Some(nested) = overrides.loadings.get(&spec.name) {
                loadings.raw = matrix_from_nested(
                    nested,
                    (spec.latent_dim, spec.n_features),
                    &format!("loadings[{}]", spec.name),
                )?;
            }
            if let Some(&p) = overrides.noise_precision.get(&spec.name) {
                if !(p > 0.0) {
                    return Err(Error::InvalidConfig(format!(
                        "noise_precision override for `{}` must be positive",
                        spec.name
                    )));
                }
                *noise_precision = p;
            }
        }
        ViewParams::Binary { discrimination, difficulty } => {
            if let Some(a) = overrides.discrimination.get(&spec.name) {
                if a.len() != spec.n_features {
                    return Err(Error::ShapeMismatch(format!(
                        "discrimination override for `{}` needs {} entries",
                        spec.name, spec.n_features
                    )));
                }
                *discrimination = Array1::from_vec(a.clone());
            }
            if let Some(d) = overrides.difficulty.get(&spec.name) {
                if d.len() != spec.n_features {
                    return Err(Error::ShapeMismatch(format!(
                        "difficulty override for `{}` needs {} entries",
                        spec.name, spec.n_features
                    )));
                }
                *difficulty = Array1::from_vec(d.clone());
            }
        }
        ViewParams::Ordinal { discrimination, thresholds } => {
            if let Some(a) = overrides.discrimination.get(&spec.name) {
                if a.len() != spec.n_features {
                    return Err(Error::ShapeMismatch(format!(
                        "discrimination override for `{}` needs {} entries",
                        spec.name, spec.n_features
                    )));
                }
                *discrimination = Array1::from_vec(a.clone());
            }
            if let Some(nested) = overrides.thresholds.get(&spec.name) {
                let k = spec.levels_per_feature.expect("ordinal") - 1;
                *thresholds = matrix_from_nested(
                    nested,
                    (spec.n_features, k),
                    &format!("thresholds[{}]", spec.name),
                )?;
            }
        }
    }
    Ok(())
}

/// Alternating-sign response weights, strongest on the first shared factor.
fn default_g_weights(d_u: usize) -> Array1<f64> {
    Array1::from_shape_fn(d_u, |k| {
        let magnitude = (2.0 * 0.8_f64.powi(k as i32)).max(0.6);
        if k % 2 == 0 {
            magnitude
        } else {
            -magnitude
        }
    })
}

/// Shared-subspace loadings with a block design: each marker-view factor row
/// draws most of its weight from one shared factor (round-robin within each
/// view) plus light cross-talk, giving identifiable factor groupings.
fn default_shared_loadings(rng: &mut ChaCha8Rng, config: &ModelConfig) -> Array2<f64> {
    let dims = config.dims();
    let mut w = Array2::zeros((dims.d_x, dims.d_u));
    for (v, spec) in config.marker_views.iter().enumerate() {
        let offset = dims.offset_of(ViewRole::Marker, v);
        for r in 0..spec.latent_dim {
            let primary = r % dims.d_u;
            for c in 0..dims.d_u {
                w[(offset + r, c)] = if c == primary {
                    signed_uniform(rng, 0.9, 1.3)
                } else {
                    uniform(rng, -0.15, 0.15)
                };
            }
        }
    }
    w
}

/// Cumulative class masses targeted by the default cutpoints.
fn default_cut_masses(levels: usize) -> Vec<f64> {
    if levels == 3 {
        // 25 / 50 / 25 split: a wide middle class flanked by clear extremes.
        vec![0.25, 0.75]
    } else {
        (1..levels).map(|k| k as f64 / levels as f64).collect()
    }
}

/// Standard deviation of the latent continuous status implied by the truth:
/// Var(C*) = w_C^2 * (w_G' Cov(U) w_G + 1) + 1 with
/// Cov(U) = A A' + sigma_U^2 I.
fn cstar_sd(state: &ParameterState, u_residual_sd: f64) -> f64 {
    let a = &state.background_regression;
    let w_g = &state.response_g_weights;
    let aw = a.t().dot(w_g);
    let var_g =
        aw.iter().map(|x| x * x).sum::<f64>() + u_residual_sd * u_residual_sd * w_g.dot(w_g) + 1.0;
    (state.response_w_c * state.response_w_c * var_g + 1.0).sqrt()
}

/// Draw a complete ground-truth parameter assignment.
fn draw_truth(
    rng: &mut ChaCha8Rng,
    config: &ModelConfig,
    overrides: &TruthOverrides,
) -> Result<ParameterState> {
    let dims = config.dims();
    let sparsity = overrides.loading_sparsity.unwrap_or(0.6);
    if !(0.0..1.0).contains(&sparsity) {
        return Err(Error::InvalidConfig(format!(
            "loading_sparsity must lie in [0, 1), got {sparsity}"
        )));
    }
    let mut state = ParameterState::neutral(config);

    for (role, views) in
        [(ViewRole::Marker, &config.marker_views), (ViewRole::Background, &config.background_views)]
    {
        for (idx, spec) in views.iter().enumerate() {
            let mut params = draw_view_params(rng, spec, sparsity);
            apply_view_overrides(&mut params, spec, overrides)?;
            match role {
                ViewRole::Marker => state.marker_params[idx] = params,
                ViewRole::Background => state.background_params[idx] = params,
            }
        }
    }

    state.shared_loadings = match &overrides.shared_loadings {
        Some(nested) => matrix_from_nested(nested, (dims.d_x, dims.d_u), "shared_loadings")?,
        None => default_shared_loadings(rng, config),
    };
    // Group precisions are prior-level quantities; keep them neutral in truth.
    state.ard_precisions.fill(1.0);

    state.background_regression = match &overrides.background_regression {
        Some(nested) => {
            matrix_from_nested(nested, (dims.d_u, dims.d_b), "background_regression")?
        }
        None => Array2::from_shape_fn((dims.d_u, dims.d_b), |_| signed_uniform(rng, 0.4, 0.9)),
    };

    state.response_g_weights = match &overrides.response_g_weights {
        Some(w) => {
            if w.len() != dims.d_u {
                return Err(Error::ShapeMismatch(format!(
                    "response_g_weights override needs {} entries",
                    dims.d_u
                )));
            }
            Array1::from_vec(w.clone())
        }
        None => default_g_weights(dims.d_u),
    };
    state.response_w_r = overrides.response_w_r.unwrap_or(1.0);
    state.response_w_c = overrides.response_w_c.unwrap_or(2.5);
    state.r_noise_precision = overrides.r_noise_precision.unwrap_or(0.4);
    if !(state.r_noise_precision > 0.0) {
        return Err(Error::InvalidConfig("r_noise_precision override must be positive".into()));
    }

    state.response_cutpoints = match &overrides.response_cutpoints {
        Some(cuts) => {
            if cuts.len() != config.response_ordinal_levels - 1 {
                return Err(Error::ShapeMismatch(format!(
                    "response_cutpoints override needs {} entries",
                    config.response_ordinal_levels - 1
                )));
            }
            Array1::from_vec(cuts.clone())
        }
        None => {
            let sd = cstar_sd(&state, config.prior_hyperparams.u_residual_sd);
            Array1::from_vec(
                default_cut_masses(config.response_ordinal_levels)
                    .into_iter()
                    .map(|mass| sd * probit(mass))
                    .collect(),
            )
        }
    };
    Ok(state)
}

/// Draw every latent and observation, in ancestral order, into `state` and a
/// fresh dataset.
fn draw_data(
    rng: &mut ChaCha8Rng,
    config: &ModelConfig,
    state: &mut ParameterState,
) -> Result<Dataset> {
    let n = config.n_subjects;
    let dims = config.dims();

    // Background abstractions are exogenous standard normals.
    for (idx, spec) in config.background_views.iter().enumerate() {
        state.level1_background[idx] = match spec.kind {
            ViewKind::Continuous => Level1::Factor(Array2::from_shape_fn(
                (n, spec.latent_dim),
                |_| normal(rng),
            )),
            ViewKind::Binary | ViewKind::Ordinal => {
                Level1::Trait(Array1::from_shape_fn(n, |_| normal(rng)))
            }
        };
    }

    // Shared subspace: regression on the concatenated background
    // abstractions plus isotropic residual.
    let l_b = state.concat_background_level1(config);
    let sigma_u = config.prior_hyperparams.u_residual_sd;
    let mut shared_u = if dims.d_b > 0 {
        l_b.dot(&state.background_regression.t())
    } else {
        Array2::zeros((n, dims.d_u))
    };
    for v in shared_u.iter_mut() {
        *v += sigma_u * normal(rng);
    }
    state.shared_u = shared_u;

    // Marker abstractions regress on the shared subspace with unit residual.
    for (idx, spec) in config.marker_views.iter().enumerate() {
        let offset = dims.offset_of(ViewRole::Marker, idx);
        let block = state
            .shared_loadings
            .slice(ndarray::s![offset..offset + spec.latent_dim, ..]);
        let mean = state.shared_u.dot(&block.t());
        state.level1_marker[idx] = match spec.kind {
            ViewKind::Continuous => {
                let mut f = mean;
                for v in f.iter_mut() {
                    *v += normal(rng);
                }
                Level1::Factor(f)
            }
            ViewKind::Binary | ViewKind::Ordinal => {
                let mut t = mean.column(0).to_owned();
                for v in t.iter_mut() {
                    *v += normal(rng);
                }
                Level1::Trait(t)
            }
        };
    }

    // Observed views.
    let mut marker_data = Vec::with_capacity(config.marker_views.len());
    let mut background_data = Vec::with_capacity(config.background_views.len());
    for (role, out) in
        [(ViewRole::Marker, &mut marker_data), (ViewRole::Background, &mut background_data)]
    {
        for (idx, spec) in config.views_of(role).iter().enumerate() {
            let level1 = state.level1(role, idx);
            let params = state.view_params(role, idx);
            out.push(draw_view_data(rng, n, spec, level1, params)?);
        }
    }

    // Response block: summary, continuous score, latent status, category.
    let mut g = state.shared_u.dot(&state.response_g_weights);
    for v in g.iter_mut() {
        *v += normal(rng);
    }
    let r_sd = 1.0 / state.r_noise_precision.sqrt();
    let response_r = Array1::from_shape_fn(n, |i| state.response_w_r * g[i] + r_sd * normal(rng));
    let cstar = Array1::from_shape_fn(n, |i| state.response_w_c * g[i] + normal(rng));
    let response_c: Vec<u8> = cstar
        .iter()
        .map(|&cs| state.response_cutpoints.iter().filter(|&&t| cs > t).count() as u8)
        .collect();
    state.response_g = g;
    state.response_cstar = Some(cstar);

    Ok(Dataset {
        subject_ids: subject_ids(n),
        marker_data,
        background_data,
        response_r,
        response_c,
    })
}

fn subject_ids(n: usize) -> Vec<String> {
    let width = (n.max(2) - 1).to_string().len();
    (0..n).map(|i| format!("s{i:0width$}")).collect()
}

fn draw_view_data(
    rng: &mut ChaCha8Rng,
    n: usize,
    spec: &ViewSpec,
    level1: &Level1,
    params: &ViewParams,
) -> Result<ViewData> {
    match (params, level1) {
        (ViewParams::Continuous { loadings, noise_precision }, Level1::Factor(f)) => {
            let sd = 1.0 / noise_precision.sqrt();
            let mut x = f.dot(&loadings.effective());
            for v in x.iter_mut() {
                *v += sd * normal(rng);
            }
            Ok(ViewData::Continuous(x))
        }
        (ViewParams::Binary { discrimination, difficulty }, Level1::Trait(theta)) => {
            let mut y = Array2::zeros((n, spec.n_features));
            for i in 0..n {
                for j in 0..spec.n_features {
                    let p = irt_prob(theta[i], discrimination[j], difficulty[j])?;
                    y[(i, j)] = u8::from(rng.random::<f64>() < p);
                }
            }
            Ok(ViewData::Discrete(y))
        }
        (ViewParams::Ordinal { discrimination, thresholds }, Level1::Trait(theta)) => {
            let mut y = Array2::zeros((n, spec.n_features));
            for i in 0..n {
                for j in 0..spec.n_features {
                    let probs = graded_response_probs(
                        theta[i],
                        discrimination[j],
                        thresholds.row(j).as_slice().expect("row-major thresholds"),
                    )?;
                    y[(i, j)] = sample_categorical(rng, &probs);
                }
            }
            Ok(ViewData::Discrete(y))
        }
        _ => Err(Error::ShapeMismatch(format!(
            "view `{}`: level-1 storage does not match parameter kind",
            spec.name
        ))),
    }
}

fn sample_categorical(rng: &mut ChaCha8Rng, probs: &[f64]) -> u8 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k as u8;
        }
    }
    (probs.len() - 1) as u8
}

/// Generate a dataset and its generating truth. Deterministic in
/// `(config, seed, overrides)`.
pub fn simulate_dataset(
    config: &ModelConfig,
    seed: u64,
    overrides: &TruthOverrides,
) -> Result<(Dataset, GroundTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = draw_truth(&mut rng, config, overrides)?;
    let data = draw_data(&mut rng, config, &mut state)?;
    state.validate(config)?;
    data.validate(config)?;
    Ok((data, GroundTruth { seed, state }))
}

/// Write `data` to `dir` in the manifest layout the loader reads: one CSV per
/// view, a response CSV, and `manifest.json`.
pub fn write_dataset(
    dir: &Path,
    config: &ModelConfig,
    data: &Dataset,
    class_labels: &[String],
) -> Result<ViewManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let manifest = ViewManifest::for_config(config, class_labels);
    for (entry, (role, _)) in manifest.views.iter().zip(config.all_views()) {
        let view_idx = manifest
            .views_of(role)
            .position(|v| v.name == entry.name)
            .expect("entry comes from the same config");
        write_view_csv(
            &dir.join(&entry.path),
            &manifest.subject_id_column,
            &data.subject_ids,
            data.view_data(role, view_idx),
        )?;
    }
    write_response_csv(
        &dir.join(&manifest.responses.path),
        &manifest,
        &data.subject_ids,
        data,
    )?;
    manifest.write(&dir.join("manifest.json"))?;
    Ok(manifest)
}

fn write_view_csv(
    path: &Path,
    id_column: &str,
    ids: &[String],
    view: &ViewData,
) -> Result<()> {
    let shown = path.display().to_string();
    let wrap = |e: csv::Error| Error::parse(&shown, e.to_string());
    let mut writer = csv::Writer::from_path(path).map_err(wrap)?;
    let n_cols = view.n_cols();
    let mut header = Vec::with_capacity(n_cols + 1);
    header.push(id_column.to_string());
    header.extend((0..n_cols).map(|j| format!("f{j}")));
    writer.write_record(&header).map_err(wrap)?;
    let mut record: Vec<String> = Vec::with_capacity(n_cols + 1);
    for (i, id) in ids.iter().enumerate() {
        record.clear();
        record.push(id.clone());
        match view {
            ViewData::Continuous(m) => record.extend(m.row(i).iter().map(|v| v.to_string())),
            ViewData::Discrete(m) => record.extend(m.row(i).iter().map(|v| v.to_string())),
        }
        writer.write_record(&record).map_err(wrap)?;
    }
    writer.flush().map_err(|e| Error::io(&shown, e))
}

fn write_response_csv(
    path: &Path,
    manifest: &ViewManifest,
    ids: &[String],
    data: &Dataset,
) -> Result<()> {
    let shown = path.display().to_string();
    let wrap = |e: csv::Error| Error::parse(&shown, e.to_string());
    let mut writer = csv::Writer::from_path(path).map_err(wrap)?;
    writer
        .write_record([
            manifest.subject_id_column.as_str(),
            manifest.responses.r_column.as_str(),
            manifest.responses.c_column.as_str(),
        ])
        .map_err(wrap)?;
    for (i, id) in ids.iter().enumerate() {
        writer
            .write_record([
                id.as_str(),
                &data.response_r[i].to_string(),
                &data.response_c[i].to_string(),
            ])
            .map_err(wrap)?;
    }
    writer.flush().map_err(|e| Error::io(&shown, e))
}
