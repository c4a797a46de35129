//! Posterior-predictive inference for held-out subjects.
//!
//! A held-out subject's views are conditioned on each retained posterior
//! draw's global parameters; the subject-level latents (view abstractions,
//! shared row, response summary) are sampled from that conditional with a
//! short adaptive MCMC run. Response predictions then mix the per-draw
//! predictive distributions. Factor-loading report artifacts live here too.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::inference::{
    nuts_sample, LogDensityGrad, NutsSettings, ParamLayout, Posterior, PosteriorDraws,
};
use crate::math::normal_cdf;
use crate::model::likelihood::ordinal_response_probs;
use crate::model::{Dataset, ModelConfig, ParameterState, ViewParams, ViewRole};
use crate::{Error, Result};

/// Controls for held-out subject inference.
#[derive(Debug, Clone)]
pub struct PredictSettings {
    pub seed: u64,
    /// Posterior draws are thinned to at most this many before prediction.
    pub max_draws: usize,
    /// Adaptation iterations of each per-draw conditional run (one draw is
    /// kept after these).
    pub adapt_iters: usize,
    /// Debug mode: also condition on the subject's observed responses.
    pub condition_on_responses: bool,
}

impl Default for PredictSettings {
    fn default() -> Self {
        PredictSettings {
            seed: 0,
            max_draws: 200,
            adapt_iters: 64,
            condition_on_responses: false,
        }
    }
}

/// A thinned set of posterior draws in structured form.
pub struct RetainedDraws {
    pub states: Vec<ParameterState>,
}

/// Thin chains to at most `max_draws` states (evenly strided over the
/// chain-major draw sequence) and parse them into structured parameters.
pub fn thin_draws(
    draws: &PosteriorDraws,
    config: &ModelConfig,
    max_draws: usize,
) -> Result<RetainedDraws> {
    if max_draws == 0 {
        return Err(Error::InvalidConfig("max_draws must be positive".into()));
    }
    let layout = ParamLayout::new(config)?;
    let total = draws.n_chains * draws.n_samples;
    if total == 0 {
        return Err(Error::InvalidData("no posterior draws to thin".into()));
    }
    let stride = total.div_ceil(max_draws);
    let mut states = Vec::new();
    for t in (0..total).step_by(stride) {
        let chain = t / draws.n_samples;
        let iter = t % draws.n_samples;
        let row = draws.constrained[chain].row(iter);
        let row_vec: Vec<f64> = row.iter().copied().collect();
        states.push(layout.state_from_constrained(&row_vec)?);
    }
    Ok(RetainedDraws { states })
}

/// Per-retained-draw samples of one subject's latents.
#[derive(Debug, Clone)]
pub struct SubjectLatents {
    /// Shared-subspace row per retained draw (draws x d_u).
    pub u: Array2<f64>,
    /// Response summary per retained draw.
    pub g: Vec<f64>,
}

/// Predictive summary for one subject.
#[derive(Debug, Clone)]
pub struct SubjectPrediction {
    pub class_probs: Vec<f64>,
    pub predicted_class: u8,
    pub r_mean: f64,
    pub r_interval: (f64, f64),
}

/// A log density restricted to the subject-local coordinates, with global
/// coordinates frozen at one posterior draw's values.
struct SubjectConditional<'p, 'a> {
    posterior: &'p Posterior<'a>,
    base: Array1<f64>,
    free: &'p [usize],
}

impl LogDensityGrad for SubjectConditional<'_, '_> {
    fn dim(&self) -> usize {
        self.free.len()
    }

    fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> Option<f64> {
        let mut full = self.base.clone();
        for (k, &pos) in self.free.iter().enumerate() {
            full[pos] = x[k];
        }
        let mut full_grad = vec![0.0; full.len()];
        let lp = self
            .posterior
            .logp_grad(full.as_slice().expect("standard layout"), &mut full_grad)?;
        for (k, &pos) in self.free.iter().enumerate() {
            grad[k] = full_grad[pos];
        }
        Some(lp)
    }
}

fn flatten_ranges(ranges: &[Range<usize>]) -> Vec<usize> {
    ranges.iter().flat_map(|r| r.clone()).collect()
}

/// Deterministic per-(subject, draw) seed derivation (splitmix64 finalizer).
pub(crate) fn mix_seed(seed: u64, subject: u64, draw: u64) -> u64 {
    let mut z = seed
        ^ subject.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ draw.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Single-subject copy of a model configuration.
fn single_subject_config(config: &ModelConfig) -> ModelConfig {
    let mut c = config.clone();
    c.n_subjects = 1;
    c
}

/// Template state for the one-subject model: globals from `globals`, locals
/// neutral. In conditioning mode with an explicit latent status, the status
/// starts inside the observed category's interval.
fn subject_template(
    config1: &ModelConfig,
    globals: &ParameterState,
    observed_category: Option<u8>,
) -> ParameterState {
    let mut t = ParameterState::neutral(config1);
    t.marker_params = globals.marker_params.clone();
    t.background_params = globals.background_params.clone();
    t.shared_loadings = globals.shared_loadings.clone();
    t.ard_precisions = globals.ard_precisions.clone();
    t.background_regression = globals.background_regression.clone();
    t.response_g_weights = globals.response_g_weights.clone();
    t.response_w_r = globals.response_w_r;
    t.response_w_c = globals.response_w_c;
    t.response_cutpoints = globals.response_cutpoints.clone();
    t.r_noise_precision = globals.r_noise_precision;
    if let (Some(cstar), Some(cat)) = (t.response_cstar.as_mut(), observed_category) {
        let cuts = &t.response_cutpoints;
        let n_cut = cuts.len();
        let cat = cat as usize;
        cstar[0] = if cat == 0 {
            cuts[0] - 0.5
        } else if cat == n_cut {
            cuts[n_cut - 1] + 0.5
        } else {
            0.5 * (cuts[cat - 1] + cuts[cat])
        };
    }
    t
}

/// Sample one subject's latents conditionally on each retained draw.
///
/// `row` indexes into `holdout`; results are deterministic given
/// (`settings.seed`, `row`). The subject's observed responses are ignored
/// unless `settings.condition_on_responses` is set.
pub fn infer_subject_latents(
    config: &ModelConfig,
    retained: &RetainedDraws,
    holdout: &Dataset,
    row: usize,
    settings: &PredictSettings,
) -> Result<SubjectLatents> {
    if retained.states.is_empty() {
        return Err(Error::InvalidData("no retained draws".into()));
    }
    if row >= holdout.n_subjects() {
        return Err(Error::InvalidData(format!(
            "subject row {row} outside 0..{}",
            holdout.n_subjects()
        )));
    }
    let config1 = single_subject_config(config);
    let data1 = holdout.subset(&[row]);
    let posterior = if settings.condition_on_responses {
        Posterior::new(&config1, &data1)?
    } else {
        Posterior::without_response_likelihood(&config1, &data1)?
    };
    let layout1 = posterior.layout();
    let free = flatten_ranges(&layout1.subject_local_ranges());
    let observed_category =
        settings.condition_on_responses.then(|| data1.response_c[0]);

    let d_u = config.shared_dim;
    let n_ret = retained.states.len();
    let mut u = Array2::zeros((n_ret, d_u));
    let mut g = vec![0.0; n_ret];
    for (t, globals) in retained.states.iter().enumerate() {
        let template = subject_template(&config1, globals, observed_category);
        let base = layout1.to_unconstrained(&template)?;
        let init: Vec<f64> = free.iter().map(|&pos| base[pos]).collect();
        let target = SubjectConditional { posterior: &posterior, base, free: &free };
        let nuts = NutsSettings {
            n_chains: 1,
            n_warmup: settings.adapt_iters,
            n_samples: 1,
            seed: mix_seed(settings.seed, row as u64, t as u64),
            init_jitter_sd: 0.0,
            adapt_mass: false,
            ..NutsSettings::default()
        };
        let out = nuts_sample(&target, &init, &nuts)?;
        let kept = out.draws[0].row(0);
        let mut full = target.base.clone();
        for (k, &pos) in free.iter().enumerate() {
            full[pos] = kept[k];
        }
        let state1 = layout1.from_unconstrained(full.as_slice().expect("standard layout"))?;
        for s in 0..d_u {
            u[(t, s)] = state1.shared_u[(0, s)];
        }
        g[t] = state1.response_g[0];
    }
    Ok(SubjectLatents { u, g })
}

/// Mix the per-draw predictive distributions into one subject prediction.
///
/// Class probabilities average the ordinal kernel over draws; the continuous
/// response gets the mixture mean and central 90% interval of the per-draw
/// Gaussian predictives.
pub fn predict_responses(
    latents: &SubjectLatents,
    retained: &RetainedDraws,
) -> Result<SubjectPrediction> {
    let n_ret = retained.states.len();
    if n_ret == 0 {
        return Err(Error::InvalidData("no retained draws".into()));
    }
    if latents.g.len() != n_ret {
        return Err(Error::ShapeMismatch(format!(
            "{} latent samples but {} retained draws",
            latents.g.len(),
            n_ret
        )));
    }
    let levels = retained.states[0].response_cutpoints.len() + 1;
    let mut class_probs = vec![0.0; levels];
    let mut mus = Vec::with_capacity(n_ret);
    let mut sds = Vec::with_capacity(n_ret);
    for (t, state) in retained.states.iter().enumerate() {
        let g = latents.g[t];
        let probs = ordinal_response_probs(
            g,
            state.response_w_c,
            state.response_cutpoints.as_slice().expect("standard layout"),
            1.0,
        )?;
        for (acc, p) in class_probs.iter_mut().zip(&probs) {
            *acc += p / n_ret as f64;
        }
        mus.push(state.response_w_r * g);
        sds.push(1.0 / state.r_noise_precision.sqrt());
    }
    let r_mean = mus.iter().sum::<f64>() / n_ret as f64;
    let mixture_cdf = |x: f64| {
        mus.iter()
            .zip(&sds)
            .map(|(&m, &s)| normal_cdf((x - m) / s))
            .sum::<f64>()
            / n_ret as f64
    };
    let lo_bracket = mus
        .iter()
        .zip(&sds)
        .map(|(m, s)| m - 12.0 * s)
        .fold(f64::INFINITY, f64::min);
    let hi_bracket = mus
        .iter()
        .zip(&sds)
        .map(|(m, s)| m + 12.0 * s)
        .fold(f64::NEG_INFINITY, f64::max);
    let quantile = |q: f64| {
        let mut lo = lo_bracket;
        let mut hi = hi_bracket;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mixture_cdf(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let r_lo = quantile(0.05);
    let r_hi = quantile(0.95);
    let predicted_class = class_probs
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(k, _)| k as u8)
        .expect("non-empty class probabilities");
    Ok(SubjectPrediction {
        class_probs,
        predicted_class,
        r_mean,
        r_interval: (r_lo, r_hi),
    })
}

/// Infer latents and predict responses for every subject of a held-out set.
/// Subjects run in parallel; each owns a deterministic RNG stream.
pub fn predict_subjects(
    config: &ModelConfig,
    retained: &RetainedDraws,
    holdout: &Dataset,
    settings: &PredictSettings,
) -> Result<Vec<SubjectPrediction>> {
    let mut holdout_config = config.clone();
    holdout_config.n_subjects = holdout.n_subjects();
    holdout.validate(&holdout_config)?;
    (0..holdout.n_subjects())
        .into_par_iter()
        .map(|row| {
            let latents = infer_subject_latents(config, retained, holdout, row, settings)?;
            predict_responses(&latents, retained)
        })
        .collect()
}

/// Write per-subject predictions next to their ids.
pub fn write_predictions_csv(
    path: &Path,
    subject_ids: &[String],
    predictions: &[SubjectPrediction],
) -> Result<()> {
    if subject_ids.len() != predictions.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} subject ids but {} predictions",
            subject_ids.len(),
            predictions.len()
        )));
    }
    let levels = predictions.first().map_or(0, |p| p.class_probs.len());
    let mut out = String::from("subject_id");
    for k in 0..levels {
        out.push_str(&format!(",prob_{k}"));
    }
    out.push_str(",predicted_class,r_mean,r_lo,r_hi\n");
    for (id, p) in subject_ids.iter().zip(predictions) {
        out.push_str(id);
        for v in &p.class_probs {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push_str(&format!(
            ",{},{},{},{}\n",
            p.predicted_class,
            p.r_mean,
            p.r_interval.0,
            p.r_interval.1
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Posterior-mean factor loadings of one continuous view, sign-aligned.
#[derive(Debug, Clone)]
pub struct ViewLoadings {
    pub view: String,
    pub feature_names: Vec<String>,
    /// latent_dim x n_features posterior mean.
    pub mean: Array2<f64>,
    /// Per factor: up to 10 (feature index, weight) pairs, |weight| descending.
    pub top: Vec<Vec<(usize, f64)>>,
}

/// Loading report over every continuous view.
#[derive(Debug, Clone)]
pub struct LoadingsExport {
    pub views: Vec<ViewLoadings>,
}

/// Posterior-mean effective loadings per continuous view, with each factor's
/// sign fixed per draw so its largest-magnitude entry is positive, plus the
/// top-10 features per factor.
pub fn export_loadings(
    draws: &PosteriorDraws,
    config: &ModelConfig,
    feature_names: Option<&BTreeMap<String, Vec<String>>>,
) -> Result<LoadingsExport> {
    let layout = ParamLayout::new(config)?;
    let total = draws.n_chains * draws.n_samples;
    if total == 0 {
        return Err(Error::InvalidData("no draws to export".into()));
    }
    let mut continuous: Vec<(ViewRole, usize, &crate::model::ViewSpec)> = Vec::new();
    for (role, views) in [
        (ViewRole::Marker, &config.marker_views),
        (ViewRole::Background, &config.background_views),
    ] {
        for (idx, spec) in views.iter().enumerate() {
            if matches!(spec.kind, crate::model::ViewKind::Continuous) {
                continuous.push((role, idx, spec));
            }
        }
    }
    let mut sums: Vec<Array2<f64>> = continuous
        .iter()
        .map(|(_, _, v)| Array2::zeros((v.latent_dim, v.n_features)))
        .collect();
    for chain in 0..draws.n_chains {
        for iter in 0..draws.n_samples {
            let row: Vec<f64> = draws.constrained[chain].row(iter).iter().copied().collect();
            let state = layout.state_from_constrained(&row)?;
            for ((role, idx, _), sum) in continuous.iter().zip(&mut sums) {
                let eff = match state.view_params(*role, *idx) {
                    ViewParams::Continuous { loadings, .. } => loadings.effective(),
                    _ => unreachable!("continuous view"),
                };
                for (f, mut sum_row) in sum.rows_mut().into_iter().enumerate() {
                    let eff_row = eff.row(f);
                    let lead = eff_row
                        .iter()
                        .enumerate()
                        .max_by(|a, b| {
                            a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0))
                        })
                        .map(|(_, &v)| v)
                        .unwrap_or(0.0);
                    let sign = if lead < 0.0 { -1.0 } else { 1.0 };
                    for (s, &e) in sum_row.iter_mut().zip(eff_row.iter()) {
                        *s += sign * e;
                    }
                }
            }
        }
    }
    let mut views = Vec::new();
    for ((_, _, spec), sum) in continuous.iter().zip(sums) {
        let mean = sum / total as f64;
        let names: Vec<String> = match feature_names.and_then(|m| m.get(&spec.name)) {
            Some(given) => {
                if given.len() != spec.n_features {
                    return Err(Error::InvalidConfig(format!(
                        "view '{}' has {} features but {} names were supplied",
                        spec.name,
                        spec.n_features,
                        given.len()
                    )));
                }
                given.clone()
            }
            None => (0..spec.n_features).map(|m| format!("f{m}")).collect(),
        };
        let top = mean
            .rows()
            .into_iter()
            .map(|factor_row| {
                let mut order: Vec<(usize, f64)> =
                    factor_row.iter().enumerate().map(|(m, &w)| (m, w)).collect();
                order.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
                order.truncate(10);
                order
            })
            .collect();
        views.push(ViewLoadings {
            view: spec.name.clone(),
            feature_names: names,
            mean,
            top,
        });
    }
    Ok(LoadingsExport { views })
}

/// Every (view, factor, feature, weight) triple of the posterior means.
pub fn write_loadings_csv(export: &LoadingsExport, path: &Path) -> Result<()> {
    let mut out = String::from("view,factor,feature,weight\n");
    for v in &export.views {
        for (f, row) in v.mean.rows().into_iter().enumerate() {
            for (m, &w) in row.iter().enumerate() {
                out.push_str(&format!("{},{},{},{}\n", v.view, f, v.feature_names[m], w));
            }
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// The ranked top features per factor.
pub fn write_top10_csv(export: &LoadingsExport, path: &Path) -> Result<()> {
    let mut out = String::from("view,factor,rank,feature,weight\n");
    for v in &export.views {
        for (f, tops) in v.top.iter().enumerate() {
            for (rank, (m, w)) in tops.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    v.view,
                    f,
                    rank + 1,
                    v.feature_names[*m],
                    w
                ));
            }
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ViewSpec};
    use crate::simulate::{simulate_dataset, TruthOverrides};
    use approx::assert_relative_eq;
    use ndarray::array;

    fn response_only_config() -> ModelConfig {
        ModelConfig {
            n_subjects: 1,
            marker_views: vec![ViewSpec::continuous("assay", 2, 1)],
            background_views: vec![],
            shared_dim: 1,
            response_ordinal_levels: 3,
            prior_hyperparams: Default::default(),
            explicit_cstar: false,
            background_horseshoe: false,
        }
    }

    fn state_with_response(
        config: &ModelConfig,
        w_c: f64,
        w_r: f64,
        phi_r: f64,
        cuts: &[f64],
    ) -> ParameterState {
        let mut s = ParameterState::neutral(config);
        s.response_w_c = w_c;
        s.response_w_r = w_r;
        s.r_noise_precision = phi_r;
        s.response_cutpoints = Array1::from_vec(cuts.to_vec());
        s
    }

    #[test]
    fn single_draw_matches_the_ordinal_kernel_exactly() {
        let config = response_only_config();
        let state = state_with_response(&config, 2.0, 1.5, 4.0, &[-0.8, 0.9]);
        let retained = RetainedDraws { states: vec![state.clone()] };
        let g = 0.7;
        let latents = SubjectLatents { u: Array2::zeros((1, 1)), g: vec![g] };
        let pred = predict_responses(&latents, &retained).unwrap();
        let expected = ordinal_response_probs(g, 2.0, &[-0.8, 0.9], 1.0).unwrap();
        for (p, e) in pred.class_probs.iter().zip(&expected) {
            assert_relative_eq!(p, e, max_relative = 1e-14);
        }
        let total: f64 = pred.class_probs.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert_relative_eq!(pred.r_mean, 1.5 * g, max_relative = 1e-14);
        // Single Gaussian: the central 90% interval is mu -/+ z_{0.95} sd.
        let sd = 1.0 / 4.0f64.sqrt();
        let z = crate::math::probit(0.95);
        assert!((pred.r_interval.0 - (1.5 * g - z * sd)).abs() < 1e-8);
        assert!((pred.r_interval.1 - (1.5 * g + z * sd)).abs() < 1e-8);
        assert!(pred.r_interval.0 <= pred.r_mean && pred.r_mean <= pred.r_interval.1);
    }

    #[test]
    fn symmetric_two_draw_mixture_averages_the_kernels() {
        let config = response_only_config();
        let state = state_with_response(&config, 2.0, 1.0, 1.0, &[-0.5, 0.5]);
        let retained = RetainedDraws { states: vec![state.clone(), state.clone()] };
        let g = 0.9;
        let latents = SubjectLatents { u: Array2::zeros((2, 1)), g: vec![g, -g] };
        let pred = predict_responses(&latents, &retained).unwrap();
        let a = ordinal_response_probs(g, 2.0, &[-0.5, 0.5], 1.0).unwrap();
        let b = ordinal_response_probs(-g, 2.0, &[-0.5, 0.5], 1.0).unwrap();
        for k in 0..3 {
            assert_relative_eq!(pred.class_probs[k], 0.5 * (a[k] + b[k]), max_relative = 1e-13);
        }
        assert!(pred.r_mean.abs() < 1e-12);
        // Symmetric mixture: interval is symmetric about zero.
        assert!((pred.r_interval.0 + pred.r_interval.1).abs() < 1e-8);
    }

    #[test]
    fn permuting_draws_leaves_the_prediction_unchanged() {
        let config = response_only_config();
        let states: Vec<ParameterState> = (0..5)
            .map(|t| {
                state_with_response(
                    &config,
                    1.0 + 0.2 * t as f64,
                    0.5 + 0.1 * t as f64,
                    1.0 + t as f64,
                    &[-1.0, 0.6],
                )
            })
            .collect();
        let gs: Vec<f64> = vec![0.3, -0.8, 1.2, 0.0, -0.4];
        let forward = predict_responses(
            &SubjectLatents { u: Array2::zeros((5, 1)), g: gs.clone() },
            &RetainedDraws { states: states.clone() },
        )
        .unwrap();
        let perm = [3usize, 0, 4, 1, 2];
        let backward = predict_responses(
            &SubjectLatents {
                u: Array2::zeros((5, 1)),
                g: perm.iter().map(|&i| gs[i]).collect(),
            },
            &RetainedDraws {
                states: perm.iter().map(|&i| states[i].clone()).collect(),
            },
        )
        .unwrap();
        for k in 0..3 {
            assert_relative_eq!(
                forward.class_probs[k],
                backward.class_probs[k],
                max_relative = 1e-12
            );
        }
        assert_relative_eq!(forward.r_mean, backward.r_mean, max_relative = 1e-12);
        assert!((forward.r_interval.0 - backward.r_interval.0).abs() < 1e-8);
        assert_eq!(forward.predicted_class, backward.predicted_class);
    }

    fn snr_config(n: usize) -> ModelConfig {
        ModelConfig {
            n_subjects: n,
            marker_views: vec![ViewSpec::continuous("assay", 6, 2)],
            background_views: vec![ViewSpec::continuous("covars", 2, 1)],
            shared_dim: 2,
            response_ordinal_levels: 3,
            prior_hyperparams: Default::default(),
            explicit_cstar: false,
            background_horseshoe: false,
        }
    }

    fn sharp_noise_overrides() -> TruthOverrides {
        let text = r#"{"noise_precision": {"assay": 25.0, "covars": 25.0}}"#;
        TruthOverrides::parse_json(text, "test").unwrap()
    }

    #[test]
    fn repeated_inference_is_bit_deterministic() {
        let config = snr_config(6);
        let (data, truth) = simulate_dataset(&config, 31, &sharp_noise_overrides()).unwrap();
        let retained = RetainedDraws { states: vec![truth.state.clone(); 8] };
        let settings = PredictSettings { seed: 9, ..PredictSettings::default() };
        let a = infer_subject_latents(&config, &retained, &data, 2, &settings).unwrap();
        let b = infer_subject_latents(&config, &retained, &data, 2, &settings).unwrap();
        assert_eq!(a.u, b.u);
        assert_eq!(a.g, b.g);
        // A different seed moves the samples.
        let other = PredictSettings { seed: 10, ..PredictSettings::default() };
        let c = infer_subject_latents(&config, &retained, &data, 2, &other).unwrap();
        assert_ne!(a.g, c.g);
    }

    #[test]
    fn no_information_draws_sample_the_latent_priors() {
        // Zero loadings everywhere: the subject's data says nothing, so its
        // latents follow their priors; G keeps mean 0 and unit spread.
        let config = snr_config(4);
        let (data, truth) = simulate_dataset(&config, 41, &TruthOverrides::default()).unwrap();
        let mut blank = truth.state.clone();
        blank.shared_loadings.fill(0.0);
        blank.background_regression.fill(0.0);
        blank.response_g_weights.fill(0.0);
        for params in blank.marker_params.iter_mut().chain(blank.background_params.iter_mut()) {
            if let ViewParams::Continuous { loadings, .. } = params {
                loadings.raw.fill(0.0);
            }
        }
        let n_ret = 150;
        let retained = RetainedDraws { states: vec![blank; n_ret] };
        let settings = PredictSettings { seed: 5, ..PredictSettings::default() };
        let lat = infer_subject_latents(&config, &retained, &data, 0, &settings).unwrap();
        let mean_g: f64 = lat.g.iter().sum::<f64>() / n_ret as f64;
        // sd(G) = 1 when the response weights vanish; 3 standard errors.
        assert!(mean_g.abs() < 3.0 / (n_ret as f64).sqrt() + 0.05, "mean G {mean_g}");
        let var_g: f64 =
            lat.g.iter().map(|g| (g - mean_g) * (g - mean_g)).sum::<f64>() / (n_ret - 1) as f64;
        assert!((0.5..2.0).contains(&var_g), "var G {var_g}");
        for s in 0..2 {
            let col: Vec<f64> = (0..n_ret).map(|t| lat.u[(t, s)]).collect();
            let mu: f64 = col.iter().sum::<f64>() / n_ret as f64;
            assert!(mu.abs() < 0.3, "mean U[{s}] = {mu}");
        }
    }

    #[test]
    fn high_snr_subject_latents_cover_the_generating_u() {
        let config = snr_config(12);
        let (data, truth) = simulate_dataset(&config, 51, &sharp_noise_overrides()).unwrap();
        let n_ret = 60;
        let retained = RetainedDraws { states: vec![truth.state.clone(); n_ret] };
        let settings = PredictSettings { seed: 1, ..PredictSettings::default() };
        for row in [0usize, 5, 11] {
            let lat = infer_subject_latents(&config, &retained, &data, row, &settings).unwrap();
            for s in 0..2 {
                let col: Vec<f64> = (0..n_ret).map(|t| lat.u[(t, s)]).collect();
                let mu: f64 = col.iter().sum::<f64>() / n_ret as f64;
                let var: f64 =
                    col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n_ret - 1) as f64;
                let sd = var.sqrt();
                let target = truth.state.shared_u[(row, s)];
                assert!(
                    (mu - target).abs() <= 3.0 * sd + 0.05,
                    "subject {row} coord {s}: mean {mu} vs truth {target} (sd {sd})"
                );
            }
        }
    }

    #[test]
    fn conditioning_on_responses_lifts_the_true_class_probability() {
        let config = snr_config(10);
        let (data, truth) = simulate_dataset(&config, 61, &TruthOverrides::default()).unwrap();
        let retained = RetainedDraws { states: vec![truth.state.clone(); 40] };
        let plain = PredictSettings { seed: 3, ..PredictSettings::default() };
        let informed = PredictSettings {
            seed: 3,
            condition_on_responses: true,
            ..PredictSettings::default()
        };
        let mut lift = 0.0;
        for row in 0..10 {
            let true_class = data.response_c[row] as usize;
            let lat_p = infer_subject_latents(&config, &retained, &data, row, &plain).unwrap();
            let p = predict_responses(&lat_p, &retained).unwrap().class_probs[true_class];
            let lat_i = infer_subject_latents(&config, &retained, &data, row, &informed).unwrap();
            let q = predict_responses(&lat_i, &retained).unwrap().class_probs[true_class];
            lift += q - p;
        }
        lift /= 10.0;
        assert!(lift > -0.01, "average true-class lift {lift}");
    }

    #[test]
    fn thinning_caps_and_strides_the_draw_sequence() {
        let config = response_only_config();
        let layout = ParamLayout::new(&config).unwrap();
        // Fabricate 2 chains x 9 draws whose w_r encodes the global index.
        let n_samples = 9;
        let mut chains = Vec::new();
        for chain in 0..2 {
            let mut rows = Vec::new();
            for iter in 0..n_samples {
                let mut s = state_with_response(&config, 1.0, 0.0, 1.0, &[-0.5, 0.5]);
                s.response_w_r = (chain * n_samples + iter) as f64;
                rows.push(layout.constrained_vec(&s).to_vec());
            }
            let flat: Vec<f64> = rows.concat();
            chains.push(Array2::from_shape_vec((n_samples, layout.dim()), flat).unwrap());
        }
        let draws = PosteriorDraws {
            param_names: layout.constrained_names(),
            unconstrained_names: layout.unconstrained_names(),
            n_chains: 2,
            n_samples,
            constrained: chains.clone(),
            unconstrained: chains,
            logp: vec![vec![0.0; n_samples], vec![0.0; n_samples]],
            divergent: vec![vec![false; n_samples]; 2],
            tree_depth: vec![vec![1; n_samples]; 2],
            step_size: vec![0.5, 0.5],
            inv_mass: vec![vec![1.0; layout.dim()]; 2],
        };
        // 18 total, cap 5 -> stride 4 -> indices 0,4,8,12,16.
        let retained = thin_draws(&draws, &config, 5).unwrap();
        let picked: Vec<f64> = retained.states.iter().map(|s| s.response_w_r).collect();
        assert_eq!(picked, vec![0.0, 4.0, 8.0, 12.0, 16.0]);
        // Cap larger than the total keeps everything.
        let all = thin_draws(&draws, &config, 100).unwrap();
        assert_eq!(all.states.len(), 18);
    }

    #[test]
    fn view_dimension_mismatch_is_rejected() {
        let config = snr_config(5);
        let (data, truth) = simulate_dataset(&config, 71, &TruthOverrides::default()).unwrap();
        let retained = RetainedDraws { states: vec![truth.state.clone()] };
        let mut wrong = config.clone();
        wrong.marker_views[0] = ViewSpec::continuous("assay", 7, 2);
        let err = predict_subjects(&wrong, &retained, &data, &PredictSettings::default());
        assert!(err.is_err());
    }

    fn loadings_config() -> ModelConfig {
        ModelConfig {
            n_subjects: 2,
            marker_views: vec![ViewSpec::continuous("assay", 4, 2)],
            background_views: vec![],
            shared_dim: 1,
            response_ordinal_levels: 3,
            prior_hyperparams: Default::default(),
            explicit_cstar: false,
            background_horseshoe: false,
        }
    }

    fn draws_from_states(config: &ModelConfig, states: &[ParameterState]) -> PosteriorDraws {
        let layout = ParamLayout::new(config).unwrap();
        let rows: Vec<Vec<f64>> =
            states.iter().map(|s| layout.constrained_vec(s).to_vec()).collect();
        let flat: Vec<f64> = rows.concat();
        let mat = Array2::from_shape_vec((states.len(), layout.dim()), flat).unwrap();
        PosteriorDraws {
            param_names: layout.constrained_names(),
            unconstrained_names: layout.unconstrained_names(),
            n_chains: 1,
            n_samples: states.len(),
            constrained: vec![mat.clone()],
            unconstrained: vec![mat],
            logp: vec![vec![0.0; states.len()]],
            divergent: vec![vec![false; states.len()]],
            tree_depth: vec![vec![1; states.len()]],
            step_size: vec![0.5],
            inv_mass: vec![vec![1.0; layout.dim()]],
        }
    }

    fn set_assay_loadings(state: &mut ParameterState, values: Array2<f64>) {
        match &mut state.marker_params[0] {
            ViewParams::Continuous { loadings, .. } => {
                loadings.raw = values;
                loadings.local_scales.fill(1.0);
                loadings.global_scale = 1.0;
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn single_draw_export_is_that_draw_sign_aligned() {
        let config = loadings_config();
        let mut state = ParameterState::neutral(&config);
        // Factor 0 leads with -3 at feature 1 (flip); factor 1 leads +2 (keep).
        set_assay_loadings(
            &mut state,
            array![[1.0, -3.0, 0.5, 0.0], [0.2, -0.1, 2.0, 1.0]],
        );
        let draws = draws_from_states(&config, &[state]);
        let export = export_loadings(&draws, &config, None).unwrap();
        assert_eq!(export.views.len(), 1);
        let v = &export.views[0];
        assert_eq!(v.view, "assay");
        let expected = array![[-1.0, 3.0, -0.5, -0.0], [0.2, -0.1, 2.0, 1.0]];
        for f in 0..2 {
            for m in 0..4 {
                assert_relative_eq!(v.mean[(f, m)], expected[(f, m)], max_relative = 1e-14);
            }
        }
        // Top lists: |weight| descending, capped at the feature count here.
        let top0: Vec<usize> = v.top[0].iter().map(|&(m, _)| m).collect();
        assert_eq!(top0, vec![1, 0, 2, 3]);
        assert_eq!(v.top[0][0].1, 3.0);
        assert_eq!(v.feature_names, vec!["f0", "f1", "f2", "f3"]);
    }

    #[test]
    fn sign_flipped_draw_pairs_export_identically() {
        let config = loadings_config();
        let base = array![[1.0, -3.0, 0.5, 0.0], [0.2, -0.1, 2.0, 1.0]];
        let mut s1 = ParameterState::neutral(&config);
        set_assay_loadings(&mut s1, base.clone());
        let mut s2 = ParameterState::neutral(&config);
        set_assay_loadings(&mut s2, base.mapv(|v| -v));
        let one = export_loadings(&draws_from_states(&config, &[s1.clone()]), &config, None)
            .unwrap();
        let both = export_loadings(&draws_from_states(&config, &[s1, s2]), &config, None)
            .unwrap();
        for f in 0..2 {
            for m in 0..4 {
                assert_relative_eq!(
                    one.views[0].mean[(f, m)],
                    both.views[0].mean[(f, m)],
                    max_relative = 1e-13
                );
            }
        }
    }

    #[test]
    fn feature_name_count_mismatch_is_an_error() {
        let config = loadings_config();
        let state = ParameterState::neutral(&config);
        let draws = draws_from_states(&config, &[state]);
        let mut names = BTreeMap::new();
        names.insert("assay".to_string(), vec!["left".to_string(), "right".to_string()]);
        let err = export_loadings(&draws, &config, Some(&names)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("assay") && msg.contains("4 features"), "{msg}");
    }

    #[test]
    fn csv_artifacts_have_the_agreed_columns() {
        let config = loadings_config();
        let mut state = ParameterState::neutral(&config);
        set_assay_loadings(
            &mut state,
            array![[1.0, -3.0, 0.5, 0.0], [0.2, -0.1, 2.0, 1.0]],
        );
        let draws = draws_from_states(&config, &[state]);
        let export = export_loadings(&draws, &config, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let lpath = dir.path().join("loadings.csv");
        let tpath = dir.path().join("top10.csv");
        write_loadings_csv(&export, &lpath).unwrap();
        write_top10_csv(&export, &tpath).unwrap();
        let loadings = std::fs::read_to_string(&lpath).unwrap();
        assert!(loadings.starts_with("view,factor,feature,weight\n"));
        assert!(loadings.contains("assay,0,f1,3\n"), "{loadings}");
        let top = std::fs::read_to_string(&tpath).unwrap();
        assert!(top.starts_with("view,factor,rank,feature,weight\n"));
        assert!(top.contains("assay,0,1,f1,3\n"), "{top}");

        let preds = vec![SubjectPrediction {
            class_probs: vec![0.2, 0.5, 0.3],
            predicted_class: 1,
            r_mean: 1.25,
            r_interval: (0.5, 2.0),
        }];
        let ppath = dir.path().join("predictions.csv");
        write_predictions_csv(&ppath, &["s00".to_string()], &preds).unwrap();
        let text = std::fs::read_to_string(&ppath).unwrap();
        assert_eq!(
            text,
            "subject_id,prob_0,prob_1,prob_2,predicted_class,r_mean,r_lo,r_hi\ns00,0.2,0.5,0.3,1,1.25,0.5,2\n"
        );
    }
}
