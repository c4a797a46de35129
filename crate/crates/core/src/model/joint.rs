//! Joint log-density of the full hierarchical model with exact gradients.
//!
//! The density decomposes into named terms (per-view likelihoods, latent
//! priors, shrinkage priors, response terms). Every term can be evaluated on
//! its own, and the sum of the parts equals the total. Gradients are
//! accumulated analytically into a `ParameterState`-shaped container in
//! constrained space; the inference layer chains them through its transforms.

use ndarray::{Array1, Array2, Axis};

use super::config::{ModelConfig, ModelDims, ViewKind, ViewRole, ViewSpec};
use super::data::{Dataset, ViewData};
use super::prior::{ard_logprior, horseshoe_logprior};
use super::state::{Level1, LoadingBlock, ParameterState, ViewParams};
use crate::math::{
    gamma_logpdf, log1mexp, log_normal_cdf_diff, log_sigmoid, logistic, normal_logpdf, softplus,
    LN_2PI,
};
use crate::{Error, Result};

/// One named piece of the joint log-density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermId {
    /// Observation likelihood of a view.
    ViewLik(ViewRole, usize),
    /// Marker abstraction given the shared subspace.
    SharedToMarker(usize),
    /// Standard-normal prior on a background abstraction.
    BackgroundLevel1(usize),
    /// Horseshoe prior on a continuous view's loadings.
    Horseshoe(ViewRole, usize),
    /// Plain normal prior on background loadings (horseshoe disabled).
    PlainLoadingPrior(usize),
    /// Gamma prior on a continuous view's noise precision.
    NoisePrecisionPrior(ViewRole, usize),
    /// Priors on discrimination / location parameters of an item view.
    ItemPrior(ViewRole, usize),
    /// Shared subspace given the background regression.
    SharedUPrior,
    /// Group-ARD prior on the shared loadings.
    ArdPrior,
    /// Normal prior on the background regression map.
    BackgroundRegressionPrior,
    /// Response summary given the shared subspace.
    ResponseGLink,
    /// Continuous response likelihood.
    ResponseRLik,
    /// Marginalized ordinal response likelihood.
    ResponseCLik,
    /// Latent continuous status given the summary (explicit variant).
    CstarLink,
    /// Interval indicator tying the latent status to the observed category.
    CstarInterval,
    /// Normal priors on response weights.
    ResponseWeightsPrior,
    /// Normal prior on the ordinal cutpoints.
    CutpointPrior,
    /// Gamma prior on the continuous response noise precision.
    RNoisePrecisionPrior,
}

/// Joint density evaluator bound to one (config, data) pair.
pub struct JointDensity<'a> {
    config: &'a ModelConfig,
    data: &'a Dataset,
    dims: ModelDims,
    terms: Vec<TermId>,
}

impl<'a> JointDensity<'a> {
    pub fn new(config: &'a ModelConfig, data: &'a Dataset) -> Result<Self> {
        Self::build(config, data, true)
    }

    /// Density without the observed-response terms. Used when conditioning a
    /// held-out subject on its views alone: `R` and `C` in `data` are ignored,
    /// while the latent summary (and latent status, in the explicit variant)
    /// keep their priors.
    pub fn without_response_likelihood(
        config: &'a ModelConfig,
        data: &'a Dataset,
    ) -> Result<Self> {
        Self::build(config, data, false)
    }

    fn build(config: &'a ModelConfig, data: &'a Dataset, include_response: bool) -> Result<Self> {
        config.validate()?;
        data.validate(config)?;
        let dims = config.dims();
        let mut terms = Vec::new();
        for (j, v) in config.marker_views.iter().enumerate() {
            terms.push(TermId::ViewLik(ViewRole::Marker, j));
            terms.push(TermId::SharedToMarker(j));
            match v.kind {
                ViewKind::Continuous => {
                    terms.push(TermId::Horseshoe(ViewRole::Marker, j));
                    terms.push(TermId::NoisePrecisionPrior(ViewRole::Marker, j));
                }
                ViewKind::Binary | ViewKind::Ordinal => {
                    terms.push(TermId::ItemPrior(ViewRole::Marker, j));
                }
            }
        }
        for (k, v) in config.background_views.iter().enumerate() {
            terms.push(TermId::ViewLik(ViewRole::Background, k));
            terms.push(TermId::BackgroundLevel1(k));
            match v.kind {
                ViewKind::Continuous => {
                    if config.background_horseshoe {
                        terms.push(TermId::Horseshoe(ViewRole::Background, k));
                    } else {
                        terms.push(TermId::PlainLoadingPrior(k));
                    }
                    terms.push(TermId::NoisePrecisionPrior(ViewRole::Background, k));
                }
                ViewKind::Binary | ViewKind::Ordinal => {
                    terms.push(TermId::ItemPrior(ViewRole::Background, k));
                }
            }
        }
        terms.push(TermId::SharedUPrior);
        terms.push(TermId::ArdPrior);
        terms.push(TermId::BackgroundRegressionPrior);
        terms.push(TermId::ResponseGLink);
        if include_response {
            terms.push(TermId::ResponseRLik);
        }
        if config.explicit_cstar {
            terms.push(TermId::CstarLink);
            if include_response {
                terms.push(TermId::CstarInterval);
            }
        } else if include_response {
            terms.push(TermId::ResponseCLik);
        }
        terms.push(TermId::ResponseWeightsPrior);
        terms.push(TermId::CutpointPrior);
        terms.push(TermId::RNoisePrecisionPrior);
        Ok(JointDensity { config, data, dims, terms })
    }

    pub fn config(&self) -> &ModelConfig {
        self.config
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    /// The full ordered term inventory.
    pub fn terms(&self) -> &[TermId] {
        &self.terms
    }

    /// Human-readable name of a term (view names substituted in).
    pub fn term_name(&self, id: TermId) -> String {
        let view = |role: ViewRole, idx: usize| self.config.views_of(role)[idx].name.clone();
        match id {
            TermId::ViewLik(r, i) => format!("view_lik[{}]", view(r, i)),
            TermId::SharedToMarker(i) => format!("shared_to_marker[{}]", view(ViewRole::Marker, i)),
            TermId::BackgroundLevel1(i) => {
                format!("level1_prior[{}]", view(ViewRole::Background, i))
            }
            TermId::Horseshoe(r, i) => format!("horseshoe[{}]", view(r, i)),
            TermId::PlainLoadingPrior(i) => {
                format!("loading_prior[{}]", view(ViewRole::Background, i))
            }
            TermId::NoisePrecisionPrior(r, i) => {
                format!("noise_precision_prior[{}]", view(r, i))
            }
            TermId::ItemPrior(r, i) => format!("item_prior[{}]", view(r, i)),
            TermId::SharedUPrior => "shared_u_prior".into(),
            TermId::ArdPrior => "ard_prior".into(),
            TermId::BackgroundRegressionPrior => "background_regression_prior".into(),
            TermId::ResponseGLink => "response_g_link".into(),
            TermId::ResponseRLik => "response_r_lik".into(),
            TermId::ResponseCLik => "response_c_lik".into(),
            TermId::CstarLink => "cstar_link".into(),
            TermId::CstarInterval => "cstar_interval".into(),
            TermId::ResponseWeightsPrior => "response_weights_prior".into(),
            TermId::CutpointPrior => "cutpoint_prior".into(),
            TermId::RNoisePrecisionPrior => "r_noise_precision_prior".into(),
        }
    }

    /// Value of the complete joint log-density.
    pub fn log_density(&self, state: &ParameterState) -> Result<f64> {
        state.validate(self.config)?;
        let mut total = 0.0;
        for &t in &self.terms {
            total += self.eval_term_unchecked(t, state, None)?;
        }
        Ok(total)
    }

    /// Value plus analytic gradient with respect to every parameter, in
    /// constrained space.
    pub fn log_density_grad(&self, state: &ParameterState) -> Result<(f64, ParameterState)> {
        state.validate(self.config)?;
        let mut grad = ParameterState::zeros(self.config);
        if state.response_cstar.is_some() && grad.response_cstar.is_none() {
            grad.response_cstar = Some(Array1::zeros(self.dims.n));
        }
        let mut total = 0.0;
        for &t in &self.terms {
            total += self.eval_term_unchecked(t, state, Some(&mut grad))?;
        }
        Ok((total, grad))
    }

    /// Every term evaluated independently, in order.
    pub fn term_values(&self, state: &ParameterState) -> Result<Vec<(String, f64)>> {
        state.validate(self.config)?;
        self.terms
            .iter()
            .map(|&t| Ok((self.term_name(t), self.eval_term_unchecked(t, state, None)?)))
            .collect()
    }

    /// Evaluate a single term (validating the state first).
    pub fn eval_term(&self, id: TermId, state: &ParameterState) -> Result<f64> {
        state.validate(self.config)?;
        self.eval_term_unchecked(id, state, None)
    }

    fn eval_term_unchecked(
        &self,
        id: TermId,
        state: &ParameterState,
        grad: Option<&mut ParameterState>,
    ) -> Result<f64> {
        let value = match id {
            TermId::ViewLik(role, idx) => self.term_view_lik(role, idx, state, grad)?,
            TermId::SharedToMarker(idx) => self.term_shared_to_marker(idx, state, grad),
            TermId::BackgroundLevel1(idx) => self.term_background_level1(idx, state, grad),
            TermId::Horseshoe(role, idx) => self.term_horseshoe(role, idx, state, grad)?,
            TermId::PlainLoadingPrior(idx) => self.term_plain_loading_prior(idx, state, grad),
            TermId::NoisePrecisionPrior(role, idx) => {
                self.term_noise_precision_prior(role, idx, state, grad)
            }
            TermId::ItemPrior(role, idx) => self.term_item_prior(role, idx, state, grad),
            TermId::SharedUPrior => self.term_shared_u_prior(state, grad),
            TermId::ArdPrior => self.term_ard_prior(state, grad)?,
            TermId::BackgroundRegressionPrior => {
                self.term_background_regression_prior(state, grad)
            }
            TermId::ResponseGLink => self.term_response_g_link(state, grad),
            TermId::ResponseRLik => self.term_response_r_lik(state, grad),
            TermId::ResponseCLik => self.term_response_c_lik(state, grad),
            TermId::CstarLink => self.term_cstar_link(state, grad)?,
            TermId::CstarInterval => self.term_cstar_interval(state)?,
            TermId::ResponseWeightsPrior => self.term_response_weights_prior(state, grad),
            TermId::CutpointPrior => self.term_cutpoint_prior(state, grad),
            TermId::RNoisePrecisionPrior => self.term_r_noise_precision_prior(state, grad),
        };
        if !value.is_finite() {
            return Err(Error::non_finite(self.term_name(id)));
        }
        Ok(value)
    }

    fn view_spec(&self, role: ViewRole, idx: usize) -> &ViewSpec {
        &self.config.views_of(role)[idx]
    }

    fn term_view_lik(
        &self,
        role: ViewRole,
        idx: usize,
        state: &ParameterState,
        mut grad: Option<&mut ParameterState>,
    ) -> Result<f64> {
        let spec = self.view_spec(role, idx);
        let level1 = state.level1(role, idx);
        let params = state.view_params(role, idx);
        let data = self.data.view_data(role, idx);
        match (spec.kind, params, level1, data) {
            (
                ViewKind::Continuous,
                ViewParams::Continuous { loadings, noise_precision },
                Level1::Factor(factors),
                ViewData::Continuous(x),
            ) => {
                let eff = loadings.effective();
                let mean = factors.dot(&eff);
                let resid = x - &mean;
                let ss: f64 = resid.iter().map(|r| r * r).sum();
                let (n, m) = x.dim();
                let phi = *noise_precision;
                let value = -0.5 * phi * ss
                    + 0.5 * (n * m) as f64 * (phi.ln() - LN_2PI);
                if let Some(g) = grad.as_deref_mut() {
                    let d_factors = resid.dot(&eff.t()) * phi;
                    let d_eff = factors.t().dot(&resid) * phi;
                    apply_loading_grad(g, role, idx, loadings, &d_eff);
                    match g.level1_mut(role, idx) {
                        Level1::Factor(gf) => *gf += &d_factors,
                        Level1::Trait(_) => unreachable!("continuous view carries factors"),
                    }
                    *g.noise_precision_mut(role, idx) +=
                        -0.5 * ss + 0.5 * (n * m) as f64 / phi;
                }
                Ok(value)
            }
            (
                ViewKind::Binary,
                ViewParams::Binary { discrimination, difficulty },
                Level1::Trait(theta),
                ViewData::Discrete(y),
            ) => {
                let mut value = 0.0;
                let n = theta.len();
                let mut d_theta = vec![0.0; if grad.is_some() { n } else { 0 }];
                for q in 0..discrimination.len() {
                    let a = discrimination[q];
                    let d = difficulty[q];
                    let mut da = 0.0;
                    let mut dd = 0.0;
                    for i in 0..n {
                        let z = a * (theta[i] - d);
                        let obs = f64::from(y[(i, q)]);
                        value += obs * z - softplus(z);
                        if grad.is_some() {
                            let e = obs - logistic(z);
                            d_theta[i] += e * a;
                            da += e * (theta[i] - d);
                            dd -= e * a;
                        }
                    }
                    if let Some(g) = grad.as_deref_mut() {
                        match g.view_params_mut(role, idx) {
                            ViewParams::Binary { discrimination: ga, difficulty: gd } => {
                                ga[q] += da;
                                gd[q] += dd;
                            }
                            _ => unreachable!(),
                        }
                    }
                }
                if let Some(g) = grad.as_deref_mut() {
                    match g.level1_mut(role, idx) {
                        Level1::Trait(gt) => {
                            for (t, d) in gt.iter_mut().zip(&d_theta) {
                                *t += d;
                            }
                        }
                        Level1::Factor(_) => unreachable!(),
                    }
                }
                Ok(value)
            }
            (
                ViewKind::Ordinal,
                ViewParams::Ordinal { discrimination, thresholds },
                Level1::Trait(theta),
                ViewData::Discrete(y),
            ) => {
                let mut value = 0.0;
                let n = theta.len();
                let n_cut = thresholds.ncols();
                let mut d_theta = vec![0.0; if grad.is_some() { n } else { 0 }];
                let mut d_thresh = vec![0.0; n_cut];
                for q in 0..discrimination.len() {
                    let a = discrimination[q];
                    let t_row = thresholds.row(q);
                    let t: Vec<f64> = t_row.to_vec();
                    let mut da = 0.0;
                    d_thresh.iter_mut().for_each(|v| *v = 0.0);
                    for i in 0..n {
                        let cat = y[(i, q)] as usize;
                        let (lp, dz_lo, dz_hi) = graded_lp_dz(theta[i], a, &t, cat);
                        value += lp;
                        if grad.is_some() {
                            // z_k = a*(theta - t_k); lower boundary is t_{cat-1},
                            // upper is t_cat
                            if cat > 0 {
                                d_theta[i] += dz_lo * a;
                                da += dz_lo * (theta[i] - t[cat - 1]);
                                d_thresh[cat - 1] -= dz_lo * a;
                            }
                            if cat < n_cut {
                                d_theta[i] += dz_hi * a;
                                da += dz_hi * (theta[i] - t[cat]);
                                d_thresh[cat] -= dz_hi * a;
                            }
                        }
                    }
                    if let Some(g) = grad.as_deref_mut() {
                        match g.view_params_mut(role, idx) {
                            ViewParams::Ordinal { discrimination: ga, thresholds: gt } => {
                                ga[q] += da;
                                for (c, d) in d_thresh.iter().enumerate() {
                                    gt[(q, c)] += d;
                                }
                            }
                            _ => unreachable!(),
                        }
                    }
                }
                if let Some(g) = grad.as_deref_mut() {
                    match g.level1_mut(role, idx) {
                        Level1::Trait(gt) => {
                            for (t, d) in gt.iter_mut().zip(&d_theta) {
                                *t += d;
                            }
                        }
                        Level1::Factor(_) => unreachable!(),
                    }
                }
                Ok(value)
            }
            _ => Err(Error::ShapeMismatch(format!(
                "view `{}`: state/data storage does not match declared kind",
                spec.name
            ))),
        }
    }

    fn term_shared_to_marker(
        &self,
        idx: usize,
        state: &ParameterState,
        mut grad: Option<&mut ParameterState>,
    ) -> f64 {
        let off = self.dims.marker_offsets[idx];
        let width = self.config.marker_views[idx].latent_dim;
        let w_block = state.shared_loadings.slice(ndarray::s![off..off + width, ..]);
        let mean = state.shared_u.dot(&w_block.t()); // N x width
        let level1 = &state.level1_marker[idx];
        let resid = match level1 {
            Level1::Factor(f) => f - &mean,
            Level1::Trait(t) => {
                let col = t.view().insert_axis(Axis(1));
                &col - &mean
            }
        };
        let ss: f64 = resid.iter().map(|r| r * r).sum();
        let count = resid.len() as f64;
        let value = -0.5 * ss - 0.5 * count * LN_2PI;
        if let Some(g) = grad.as_deref_mut() {
            let d_u = resid.dot(&w_block);
            g.shared_u += &d_u;
            let d_w = resid.t().dot(&state.shared_u);
            g.shared_loadings
                .slice_mut(ndarray::s![off..off + width, ..])
                .zip_mut_with(&d_w, |a, b| *a += b);
            match g.level1_mut(ViewRole::Marker, idx) {
                Level1::Factor(gf) => *gf -= &resid,
                Level1::Trait(gt) => {
                    let col = resid.column(0);
                    for (t, r) in gt.iter_mut().zip(col.iter()) {
                        *t -= r;
                    }
                }
            }
        }
        value
    }

    fn term_background_level1(
        &self,
        idx: usize,
        state: &ParameterState,
        mut grad: Option<&mut ParameterState>,
    ) -> f64 {
        let (ss, count) = match &state.level1_background[idx] {
            Level1::Factor(f) => (f.iter().map(|v| v * v).sum::<f64>(), f.len()),
            Level1::Trait(t) => (t.iter().map(|v| v * v).sum::<f64>(), t.len()),
        };
        if let Some(g) = grad.as_deref_mut() {
            match (g.level1_mut(ViewRole::Background, idx), &state.level1_background[idx]) {
                (Level1::Factor(gf), Level1::Factor(f)) => *gf -= f,
                (Level1::Trait(gt), Level1::Trait(t)) => *gt -= t,
                _ => unreachable!(),
            }
        }
        -0.5 * ss - 0.5 * count as f64 * LN_2PI
    }

    fn term_horseshoe(
        &self,
        role: ViewRole,
        idx: usize,
        state: &ParameterState,
        mut grad: Option<&mut ParameterState>,
    ) -> Result<f64> {
        let block = match state.view_params(role, idx) {
            ViewParams::Continuous { loadings, .. } => loadings,
            _ => unreachable!("horseshoe term only scheduled for continuous views"),
        };
        let s_global = self.config.prior_hyperparams.horseshoe_global_scale;
        let value = horseshoe_logprior(
            block.raw.view(),
            block.local_scales.view(),
            block.global_scale,
            s_global,
        )?;
        if let Some(g) = grad.as_deref_mut() {
            match g.view_params_mut(role, idx) {
                ViewParams::Continuous { loadings: gl, .. } => {
                    gl.raw.zip_mut_with(&block.raw, |a, b| *a -= b);
                    gl.local_scales.zip_mut_with(&block.local_scales, |a, &s| {
                        *a += -2.0 * s / (1.0 + s * s)
                    });
                    let tau = block.global_scale;
                    gl.global_scale += -2.0 * tau / (s_global * s_global + tau * tau);
                }
                _ => unreachable!(),
            }
        }
        Ok(value)
    }

    fn term_plain_loading_prior(
        &self,
        idx: usize,
        state: &ParameterState,
        mut grad: Option<&mut ParameterState>,
    ) -> f64 {
        let sd = self.config.prior_hyperparams.regression_sd;
        let block = match &state.background_params[idx] {
            ViewParams::Continuous { loadings, .. } => loadings,
            _ => unreachable!(),
        };
        let mut value = 0.0;
        for &w in block.raw.iter() {
            value += normal_logpdf(w, 0.0, sd);
        }
        if let Some(g) = grad.as_deref_mut() {
            match g.view_params_mut(ViewRole::Background, idx) {
                ViewParams::Continuous { loadings: gl, .. } => {
                    gl.raw.zip_mut_with(&block.raw, |a, b| *a -= b / (sd * sd));
                }
                _ => unreachable!(),
            }
        }
        value
    }

    fn term_noise_precision_prior(
        &self,
        role: ViewRole,
        idx: usize,
        state: &ParameterState,
        mut grad: Option<&mut ParameterState>,
    ) -> f64 {
        let p = self.config.prior_hyperparams.precision_shape;
        let r = self.config.prior_hyperparams.precision_rate;
        let phi = match state.view_params(role, idx) {
            ViewParams::Continuous { noise_precision, .. } => *noise_precision,
            _ => unreachable!(),
        };
        if let Some(g) = grad.as_deref_mut() {
            *g.noise_precision_mut(role, idx) += (p - 1.0) / phi - r;
        }
        gamma_logpdf(phi, p, r)
    }

    fn term_item_prior(
        &self,
        role: ViewRole,
        idx: usize,
        state: &ParameterState,
        mut grad: Option<&mut ParameterState>,
    ) -> f64 {
        let hp = &self.config.prior_hyperparams;
        let s_alpha = hp.irt_alpha_log_sd;
        let sd = hp.regression_sd;
        let mut value = 0.0;
        match state.view_params(role, idx) {
            ViewParams::Binary { discrimination, difficulty } => {
                for &a in discrimination {
                    value += crate::math::lognormal_logpdf(a, 0.0, s_alpha);
                }
                for &d in difficulty {
                    value += normal_logpdf(d, 0.0, sd);
                }
                if let Some(g) = grad.as_deref_mut() {
                    match g.view_params_mut(role, idx) {
                        ViewParams::Binary { discrimination: ga, difficulty: gd } => {
                            for (gaq, &a) in ga.iter_mut().zip(discrimination) {
                                *gaq += -1.0 / a - a.ln() / (a * s_alpha * s_alpha);
                            }
                            for (gdq, &d) in gd.iter_mut().zip(difficulty) {
                                *gdq -= d / (sd * sd);
                            }
                        }
                        _ => unreachable!(),
                    }
                }
            }
            ViewParams::Ordinal { discrimination, thresholds } => {
                for &a in discrimination {
                    value += crate::math::lognormal_logpdf(a, 0.0, s_alpha);
                }
                for &t in thresholds.iter() {
                    value += normal_logpdf(t, 0.0, sd);
                }
                if let Some(g) = grad.as_deref_mut() {
                    match g.view_params_mut(role, idx) {
                        ViewParams::Ordinal { discrimination: ga, thresholds: gt } => {
                            for (gaq, &a) in ga.iter_mut().zip(discrimination) {
                                *gaq += -1.0 / a - a.ln() / (a * s_alpha * s_alpha);
                            }
                            gt.zip_mut_with(thresholds, |a, b| *a -= b / (sd * sd));
                        }
                        _ => unreachable!(),
                    }
                }
            }
            ViewParams::Continuous { .. } => unreachable!("item prior only for item views"),
        }
        value
    }

    fn term_shared_u_prior(
        &self,
        state: &ParameterState,
        mut grad: Option<&mut ParameterState>,
    ) -> f64 {
        let sigma = self.config.prior_hyperparams.u_residual_sd;
        let l_b = state.concat_background_level1(self.config);
        let mean = l_b.dot(&state.background_regression.t()); // N x d_u
        let resid = &state.shared_u - &mean;
        let ss: f64 = resid.iter().map(|r| r * r).sum();
        let count = resid.len() as f64;
        let inv_var = 1.0 / (sigma * sigma);
        let value = -0.5 * inv_var * ss - 0.5 * count * (LN_2PI + 2.0 * sigma.ln());
        if let Some(g) = grad.as_deref_mut() {
            g.shared_u.zip_mut_with(&resid, |a, b| *a -= b * inv_var);
            let d_a = resid.t().dot(&l_b) * inv_var;
            g.background_regression += &d_a;
            let d_lb = resid.dot(&state.background_regression) * inv_var; // N x d_b
            for (k, &off) in self.dims.background_offsets.iter().enumerate() {
                let width = self.config.background_views[k].latent_dim;
                let slice = d_lb.slice(ndarray::s![.., off..off + width]);
                match g.level1_mut(ViewRole::Background, k) {
                    Level1::Factor(gf) => *gf += &slice,
                    Level1::Trait(gt) => {
                        for (t, v) in gt.iter_mut().zip(slice.column(0).iter()) {
                            *t += v;
                        }
                    }
                }
            }
        }
        value
    }

    fn term_ard_prior(
        &self,
        state: &ParameterState,
        mut grad: Option<&mut ParameterState>,
    ) -> Result<f64> {
        let shape = self.config.prior_hyperparams.ard_shape;
        let rate = self.config.prior_hyperparams.ard_rate;
        let mut value = 0.0;
        for (v, spec) in self.config.marker_views.iter().enumerate() {
            let off = self.dims.marker_offsets[v];
            let l_v = spec.latent_dim;
            for s in 0..self.dims.d_u {
                let gamma = state.ard_precisions[(v, s)];
                let block = state
                    .shared_loadings
                    .slice(ndarray::s![off..off + l_v, s..s + 1]);
                value += ard_logprior(block, gamma, shape, rate)?;
                if let Some(g) = grad.as_deref_mut() {
                    let mut block_ss = 0.0;
                    for (r, &w) in block.iter().enumerate() {
                        g.shared_loadings[(off + r, s)] -= gamma * w;
                        block_ss += w * w;
                    }
                    g.ard_precisions[(v, s)] += -0.5 * block_ss + 0.5 * l_v as f64 / gamma
                        + (shape - 1.0) / gamma
                        - rate;
                }
            }
        }
        Ok(value)
    }

    fn term_background_regression_prior(
        &self,
        state: &ParameterState,
        mut grad: Option<&mut ParameterState>,
    ) -> f64 {
        let sd = self.config.prior_hyperparams.regression_sd;
        let mut value = 0.0;
        for &a in state.background_regression.iter() {
            value += normal_logpdf(a, 0.0, sd);
        }
        if let Some(g) = grad.as_deref_mut() {
            g.background_regression
                .zip_mut_with(&state.background_regression, |x, b| *x -= b / (sd * sd));
        }
        value
    }

    fn term_response_g_link(
        &self,
        state: &ParameterState,
        mut grad: Option<&mut ParameterState>,
    ) -> f64 {
        let mean = state.shared_u.dot(&state.response_g_weights);
        let resid = &state.response_g - &mean;
        let ss: f64 = resid.iter().map(|r| r * r).sum();
        let value = -0.5 * ss - 0.5 * self.dims.n as f64 * LN_2PI;
        if let Some(g) = grad.as_deref_mut() {
            g.response_g.zip_mut_with(&resid, |a, b| *a -= b);
            for (mut gu_row, &r) in g.shared_u.rows_mut().into_iter().zip(resid.iter()) {
                gu_row.zip_mut_with(&state.response_g_weights, |a, &w| *a += r * w);
            }
            let d_w = state.shared_u.t().dot(&resid);
            g.response_g_weights += &d_w;
        }
        value
    }

    fn term_response_r_lik(
        &self,
        state: &ParameterState,
        mut grad: Option<&mut ParameterState>,
    ) -> f64 {
        let phi = state.r_noise_precision;
        let w_r = state.response_w_r;
        let resid = &self.data.response_r - &(&state.response_g * w_r);
        let ss: f64 = resid.iter().map(|r| r * r).sum();
        let n = self.dims.n as f64;
        let value = -0.5 * phi * ss + 0.5 * n * (phi.ln() - LN_2PI);
        if let Some(g) = grad.as_deref_mut() {
            g.response_g.zip_mut_with(&resid, |a, &r| *a += phi * w_r * r);
            g.response_w_r += phi * resid.dot(&state.response_g);
            g.r_noise_precision += -0.5 * ss + 0.5 * n / phi;
        }
        value
    }

    fn term_response_c_lik(
        &self,
        state: &ParameterState,
        mut grad: Option<&mut ParameterState>,
    ) -> f64 {
        let cuts = &state.response_cutpoints;
        let n_cut = cuts.len();
        let w_c = state.response_w_c;
        let mut value = 0.0;
        for i in 0..self.dims.n {
            let cat = self.data.response_c[i] as usize;
            let m = w_c * state.response_g[i];
            let lo = if cat == 0 { f64::NEG_INFINITY } else { cuts[cat - 1] - m };
            let hi = if cat == n_cut { f64::INFINITY } else { cuts[cat] - m };
            let lp = log_normal_cdf_diff(lo, hi);
            value += lp;
            if grad.is_some() {
                let ratio_lo = if lo == f64::NEG_INFINITY {
                    0.0
                } else {
                    (-0.5 * lo * lo - 0.5 * LN_2PI - lp).exp()
                };
                let ratio_hi = if hi == f64::INFINITY {
                    0.0
                } else {
                    (-0.5 * hi * hi - 0.5 * LN_2PI - lp).exp()
                };
                let g = grad.as_deref_mut().unwrap();
                let d_mean = ratio_lo - ratio_hi;
                g.response_g[i] += w_c * d_mean;
                g.response_w_c += state.response_g[i] * d_mean;
                if cat > 0 {
                    g.response_cutpoints[cat - 1] -= ratio_lo;
                }
                if cat < n_cut {
                    g.response_cutpoints[cat] += ratio_hi;
                }
            }
        }
        value
    }

    fn term_cstar_link(
        &self,
        state: &ParameterState,
        mut grad: Option<&mut ParameterState>,
    ) -> Result<f64> {
        let cstar = state
            .response_cstar
            .as_ref()
            .ok_or_else(|| Error::ShapeMismatch("explicit variant requires response_cstar".into()))?;
        let w_c = state.response_w_c;
        let resid = cstar - &(&state.response_g * w_c);
        let ss: f64 = resid.iter().map(|r| r * r).sum();
        let value = -0.5 * ss - 0.5 * self.dims.n as f64 * LN_2PI;
        if let Some(g) = grad.as_deref_mut() {
            if let Some(gc) = g.response_cstar.as_mut() {
                gc.zip_mut_with(&resid, |a, b| *a -= b);
            }
            g.response_g.zip_mut_with(&resid, |a, &r| *a += w_c * r);
            g.response_w_c += resid.dot(&state.response_g);
        }
        Ok(value)
    }

    fn term_cstar_interval(&self, state: &ParameterState) -> Result<f64> {
        let cstar = state
            .response_cstar
            .as_ref()
            .ok_or_else(|| Error::ShapeMismatch("explicit variant requires response_cstar".into()))?;
        let cuts = &state.response_cutpoints;
        let n_cut = cuts.len();
        for i in 0..self.dims.n {
            let cat = self.data.response_c[i] as usize;
            let lo = if cat == 0 { f64::NEG_INFINITY } else { cuts[cat - 1] };
            let hi = if cat == n_cut { f64::INFINITY } else { cuts[cat] };
            let c = cstar[i];
            if !(c > lo && c <= hi) {
                return Err(Error::non_finite_at(
                    "cstar_interval",
                    format!("subject {i}: c* = {c} outside ({lo}, {hi}]"),
                ));
            }
        }
        Ok(0.0)
    }

    fn term_response_weights_prior(
        &self,
        state: &ParameterState,
        mut grad: Option<&mut ParameterState>,
    ) -> f64 {
        let sd = self.config.prior_hyperparams.regression_sd;
        let inv_var = 1.0 / (sd * sd);
        let mut value = 0.0;
        for &w in state.response_g_weights.iter() {
            value += normal_logpdf(w, 0.0, sd);
        }
        value += normal_logpdf(state.response_w_r, 0.0, sd);
        value += normal_logpdf(state.response_w_c, 0.0, sd);
        if let Some(g) = grad.as_deref_mut() {
            g.response_g_weights
                .zip_mut_with(&state.response_g_weights, |a, b| *a -= b * inv_var);
            g.response_w_r -= state.response_w_r * inv_var;
            g.response_w_c -= state.response_w_c * inv_var;
        }
        value
    }

    fn term_cutpoint_prior(
        &self,
        state: &ParameterState,
        mut grad: Option<&mut ParameterState>,
    ) -> f64 {
        let sd = self.config.prior_hyperparams.regression_sd;
        let mut value = 0.0;
        for &b in state.response_cutpoints.iter() {
            value += normal_logpdf(b, 0.0, sd);
        }
        if let Some(g) = grad.as_deref_mut() {
            g.response_cutpoints
                .zip_mut_with(&state.response_cutpoints, |a, b| *a -= b / (sd * sd));
        }
        value
    }

    fn term_r_noise_precision_prior(
        &self,
        state: &ParameterState,
        mut grad: Option<&mut ParameterState>,
    ) -> f64 {
        let p = self.config.prior_hyperparams.precision_shape;
        let r = self.config.prior_hyperparams.precision_rate;
        let phi = state.r_noise_precision;
        if let Some(g) = grad.as_deref_mut() {
            g.r_noise_precision += (p - 1.0) / phi - r;
        }
        gamma_logpdf(phi, p, r)
    }
}

/// Chain a gradient with respect to effective loadings back onto
/// (raw, local, global).
fn apply_loading_grad(
    grad: &mut ParameterState,
    role: ViewRole,
    idx: usize,
    block: &LoadingBlock,
    d_eff: &Array2<f64>,
) {
    match grad.view_params_mut(role, idx) {
        ViewParams::Continuous { loadings: gl, .. } => {
            let tau = block.global_scale;
            ndarray::Zip::from(&mut gl.raw)
                .and(d_eff)
                .and(&block.local_scales)
                .for_each(|g, &de, &lam| *g += de * lam * tau);
            ndarray::Zip::from(&mut gl.local_scales)
                .and(d_eff)
                .and(&block.raw)
                .for_each(|g, &de, &raw| *g += de * raw * tau);
            let mut d_tau = 0.0;
            ndarray::Zip::from(d_eff)
                .and(&block.raw)
                .and(&block.local_scales)
                .for_each(|&de, &raw, &lam| d_tau += de * raw * lam);
            gl.global_scale += d_tau;
        }
        _ => unreachable!(),
    }
}

/// Log-probability of one graded-response category together with the partial
/// derivatives with respect to the bounding cumulative logits
/// (z = alpha*(theta - t)). Returns (logprob, d/dz_lower, d/dz_upper), where
/// "lower" is the boundary entered at `category - 1` and "upper" at
/// `category`; out-of-range boundaries contribute zero.
fn graded_lp_dz(theta: f64, alpha: f64, thresholds: &[f64], category: usize) -> (f64, f64, f64) {
    let levels = thresholds.len() + 1;
    if category == 0 {
        let z = alpha * (theta - thresholds[0]);
        (-softplus(z), 0.0, -logistic(z))
    } else if category == levels - 1 {
        let z = alpha * (theta - thresholds[category - 1]);
        (log_sigmoid(z), logistic(-z), 0.0)
    } else {
        let z_lo = alpha * (theta - thresholds[category - 1]);
        let z_hi = alpha * (theta - thresholds[category]);
        let d = z_lo - z_hi;
        let lp = log_sigmoid(z_lo) + log_sigmoid(-z_hi) + log1mexp(d);
        let bridge = 1.0 / d.exp_m1();
        (lp, logistic(-z_lo) + bridge, -logistic(z_hi) - bridge)
    }
}

/// Joint log-density with gradient, as a free function.
pub fn joint_logdensity(
    state: &ParameterState,
    data: &Dataset,
    config: &ModelConfig,
) -> Result<(f64, ParameterState)> {
    JointDensity::new(config, data)?.log_density_grad(state)
}

// Mutable access helpers for gradient accumulation.
impl ParameterState {
    /// Visit every scalar coordinate in a fixed order. Used by tests and by
    /// the unconstrained-layout packing to stay in sync with gradients.
    pub fn for_each_coord_mut(&mut self, f: &mut impl FnMut(&mut f64)) {
        fn level1(l: &mut Level1, f: &mut impl FnMut(&mut f64)) {
            match l {
                Level1::Factor(a) => a.iter_mut().for_each(|v| f(v)),
                Level1::Trait(a) => a.iter_mut().for_each(|v| f(v)),
            }
        }
        fn params(p: &mut ViewParams, f: &mut impl FnMut(&mut f64)) {
            match p {
                ViewParams::Continuous { loadings, noise_precision } => {
                    loadings.raw.iter_mut().for_each(|v| f(v));
                    loadings.local_scales.iter_mut().for_each(|v| f(v));
                    f(&mut loadings.global_scale);
                    f(noise_precision);
                }
                ViewParams::Binary { discrimination, difficulty } => {
                    discrimination.iter_mut().for_each(|v| f(v));
                    difficulty.iter_mut().for_each(|v| f(v));
                }
                ViewParams::Ordinal { discrimination, thresholds } => {
                    discrimination.iter_mut().for_each(|v| f(v));
                    thresholds.iter_mut().for_each(|v| f(v));
                }
            }
        }
        for l in &mut self.level1_marker {
            level1(l, f);
        }
        for l in &mut self.level1_background {
            level1(l, f);
        }
        for p in &mut self.marker_params {
            params(p, f);
        }
        for p in &mut self.background_params {
            params(p, f);
        }
        self.shared_u.iter_mut().for_each(|v| f(v));
        self.shared_loadings.iter_mut().for_each(|v| f(v));
        self.ard_precisions.iter_mut().for_each(|v| f(v));
        self.background_regression.iter_mut().for_each(|v| f(v));
        self.response_g.iter_mut().for_each(|v| f(v));
        self.response_g_weights.iter_mut().for_each(|v| f(v));
        f(&mut self.response_w_r);
        f(&mut self.response_w_c);
        self.response_cutpoints.iter_mut().for_each(|v| f(v));
        f(&mut self.r_noise_precision);
        if let Some(c) = self.response_cstar.as_mut() {
            c.iter_mut().for_each(|v| f(v));
        }
    }
    pub(crate) fn level1_mut(&mut self, role: ViewRole, idx: usize) -> &mut Level1 {
        match role {
            ViewRole::Marker => &mut self.level1_marker[idx],
            ViewRole::Background => &mut self.level1_background[idx],
        }
    }

    pub(crate) fn view_params_mut(&mut self, role: ViewRole, idx: usize) -> &mut ViewParams {
        match role {
            ViewRole::Marker => &mut self.marker_params[idx],
            ViewRole::Background => &mut self.background_params[idx],
        }
    }

    pub(crate) fn noise_precision_mut(&mut self, role: ViewRole, idx: usize) -> &mut f64 {
        match self.view_params_mut(role, idx) {
            ViewParams::Continuous { noise_precision, .. } => noise_precision,
            _ => unreachable!("noise precision only on continuous views"),
        }
    }
}
