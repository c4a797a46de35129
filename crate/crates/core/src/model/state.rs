//! One full assignment of all latent variables and weights.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, ViewKind, ViewRole, ViewSpec};
use crate::{Error, Result};

/// Subject-level abstraction of one view: factor coordinates for continuous
/// views, a scalar trait for binary/ordinal views.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Level1 {
    /// N x latent_dim factor matrix.
    Factor(Array2<f64>),
    /// N-vector of traits.
    Trait(Array1<f64>),
}

impl Level1 {
    pub fn n_rows(&self) -> usize {
        match self {
            Level1::Factor(m) => m.nrows(),
            Level1::Trait(v) => v.len(),
        }
    }

    pub fn width(&self) -> usize {
        match self {
            Level1::Factor(m) => m.ncols(),
            Level1::Trait(_) => 1,
        }
    }

    /// Copy this abstraction into columns `offset..offset+width` of `out`.
    pub fn write_into(&self, out: &mut Array2<f64>, offset: usize) {
        match self {
            Level1::Factor(m) => out
                .slice_mut(ndarray::s![.., offset..offset + m.ncols()])
                .assign(m),
            Level1::Trait(v) => out.column_mut(offset).assign(v),
        }
    }
}

/// Loadings of one continuous view with horseshoe shrinkage scales.
/// The effective weight matrix is `raw * local_scales * global_scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadingBlock {
    /// latent_dim x n_features, unshrunk coordinates.
    pub raw: Array2<f64>,
    /// Per-entry local shrinkage scales (positive, same shape as raw).
    pub local_scales: Array2<f64>,
    /// Per-view global shrinkage scale (positive).
    pub global_scale: f64,
}

impl LoadingBlock {
    pub fn effective(&self) -> Array2<f64> {
        let mut eff = &self.raw * &self.local_scales;
        eff *= self.global_scale;
        eff
    }

    pub fn shape(&self) -> (usize, usize) {
        self.raw.dim()
    }
}

/// Per-view weight parameters, keyed by the view's kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ViewParams {
    Continuous {
        loadings: LoadingBlock,
        noise_precision: f64,
    },
    Binary {
        /// Per-item discrimination (positive).
        discrimination: Array1<f64>,
        /// Per-item difficulty.
        difficulty: Array1<f64>,
    },
    Ordinal {
        discrimination: Array1<f64>,
        /// n_features x (levels-1), strictly increasing along each row.
        thresholds: Array2<f64>,
    },
}

/// One complete assignment of every latent variable and weight in the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterState {
    /// Per marker view, aligned with `ModelConfig::marker_views`.
    pub level1_marker: Vec<Level1>,
    pub level1_background: Vec<Level1>,
    pub marker_params: Vec<ViewParams>,
    pub background_params: Vec<ViewParams>,
    /// N x shared_dim shared subspace.
    pub shared_u: Array2<f64>,
    /// d_x x shared_dim map from the shared subspace to the concatenated
    /// marker abstractions.
    pub shared_loadings: Array2<f64>,
    /// Group precisions of `shared_loadings`, one per (marker view, shared
    /// factor) pair: n_marker_views x shared_dim, positive.
    pub ard_precisions: Array2<f64>,
    /// shared_dim x d_b map from concatenated background abstractions to the
    /// mean of the shared subspace.
    pub background_regression: Array2<f64>,
    /// N-vector latent response summary.
    pub response_g: Array1<f64>,
    /// shared_dim weights regressing the summary on the shared subspace.
    pub response_g_weights: Array1<f64>,
    /// Weight of the summary in the continuous response mean.
    pub response_w_r: f64,
    /// Weight of the summary in the latent continuous status mean.
    pub response_w_c: f64,
    /// Interior cutpoints of the ordinal response (strictly increasing).
    pub response_cutpoints: Array1<f64>,
    /// Precision of the continuous response noise (positive).
    pub r_noise_precision: f64,
    /// Latent continuous status, present only in the explicit (non-marginal)
    /// ordinal variant; simulators may also record it as ground truth.
    pub response_cstar: Option<Array1<f64>>,
}

fn level1_zero(n: usize, spec: &ViewSpec) -> Level1 {
    match spec.kind {
        ViewKind::Continuous => Level1::Factor(Array2::zeros((n, spec.latent_dim))),
        ViewKind::Binary | ViewKind::Ordinal => Level1::Trait(Array1::zeros(n)),
    }
}

fn view_params_filled(spec: &ViewSpec, positive: f64, spread: f64) -> ViewParams {
    match spec.kind {
        ViewKind::Continuous => ViewParams::Continuous {
            loadings: LoadingBlock {
                raw: Array2::zeros((spec.latent_dim, spec.n_features)),
                local_scales: Array2::from_elem((spec.latent_dim, spec.n_features), positive),
                global_scale: positive,
            },
            noise_precision: positive,
        },
        ViewKind::Binary => ViewParams::Binary {
            discrimination: Array1::from_elem(spec.n_features, positive),
            difficulty: Array1::zeros(spec.n_features),
        },
        ViewKind::Ordinal => {
            let k = spec.levels_per_feature.unwrap_or(2) - 1;
            ViewParams::Ordinal {
                discrimination: Array1::from_elem(spec.n_features, positive),
                thresholds: Array2::from_shape_fn((spec.n_features, k), |(_, c)| {
                    spread * (c as f64 - (k as f64 - 1.0) / 2.0)
                }),
            }
        }
    }
}

impl ParameterState {
    /// A structurally complete state with all values zero — including slots
    /// that must be positive in a *valid* state. Used as a gradient
    /// accumulator, which shares the state's shape but not its invariants.
    pub fn zeros(config: &ModelConfig) -> Self {
        Self::filled(config, 0.0, 0.0)
    }

    /// A valid neutral state: zeros everywhere, positive slots at 1, ordered
    /// blocks evenly spread. A safe optimizer / sampler starting point.
    pub fn neutral(config: &ModelConfig) -> Self {
        Self::filled(config, 1.0, 1.0)
    }

    fn filled(config: &ModelConfig, positive: f64, spread: f64) -> Self {
        let n = config.n_subjects;
        let dims = config.dims();
        let k = config.response_ordinal_levels - 1;
        ParameterState {
            level1_marker: config.marker_views.iter().map(|v| level1_zero(n, v)).collect(),
            level1_background: config.background_views.iter().map(|v| level1_zero(n, v)).collect(),
            marker_params: config
                .marker_views
                .iter()
                .map(|v| view_params_filled(v, positive, spread))
                .collect(),
            background_params: config
                .background_views
                .iter()
                .map(|v| view_params_filled(v, positive, spread))
                .collect(),
            shared_u: Array2::zeros((n, dims.d_u)),
            shared_loadings: Array2::zeros((dims.d_x, dims.d_u)),
            ard_precisions: Array2::from_elem((config.marker_views.len(), dims.d_u), positive),
            background_regression: Array2::zeros((dims.d_u, dims.d_b)),
            response_g: Array1::zeros(n),
            response_g_weights: Array1::zeros(dims.d_u),
            response_w_r: 0.0,
            response_w_c: 0.0,
            response_cutpoints: Array1::from_shape_fn(k, |c| {
                spread * (c as f64 - (k as f64 - 1.0) / 2.0)
            }),
            r_noise_precision: positive,
            response_cstar: if config.explicit_cstar { Some(Array1::zeros(n)) } else { None },
        }
    }

    pub fn level1(&self, role: ViewRole, idx: usize) -> &Level1 {
        match role {
            ViewRole::Marker => &self.level1_marker[idx],
            ViewRole::Background => &self.level1_background[idx],
        }
    }

    pub fn view_params(&self, role: ViewRole, idx: usize) -> &ViewParams {
        match role {
            ViewRole::Marker => &self.marker_params[idx],
            ViewRole::Background => &self.background_params[idx],
        }
    }

    /// Concatenated marker abstractions, N x d_x.
    pub fn concat_marker_level1(&self, config: &ModelConfig) -> Array2<f64> {
        let dims = config.dims();
        concat_level1(&self.level1_marker, config.n_subjects, &dims.marker_offsets, dims.d_x)
    }

    /// Concatenated background abstractions, N x d_b.
    pub fn concat_background_level1(&self, config: &ModelConfig) -> Array2<f64> {
        let dims = config.dims();
        concat_level1(&self.level1_background, config.n_subjects, &dims.background_offsets, dims.d_b)
    }

    /// Check every state invariant against a configuration.
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let n = config.n_subjects;
        let dims = config.dims();
        let fail = |msg: String| Err(Error::ShapeMismatch(msg));

        for (role, views, level1, params) in [
            (ViewRole::Marker, &config.marker_views, &self.level1_marker, &self.marker_params),
            (
                ViewRole::Background,
                &config.background_views,
                &self.level1_background,
                &self.background_params,
            ),
        ] {
            let _ = role;
            if level1.len() != views.len() || params.len() != views.len() {
                return fail(format!(
                    "state carries {} level-1 blocks / {} param blocks for {} views",
                    level1.len(),
                    params.len(),
                    views.len()
                ));
            }
            for ((spec, l1), vp) in views.iter().zip(level1).zip(params) {
                validate_view_state(spec, l1, vp, n)?;
            }
        }

        if self.shared_u.dim() != (n, dims.d_u) {
            return fail(format!(
                "shared_u is {:?}, expected {:?}",
                self.shared_u.dim(),
                (n, dims.d_u)
            ));
        }
        if self.shared_loadings.dim() != (dims.d_x, dims.d_u) {
            return fail(format!(
                "shared_loadings is {:?}, expected {:?}",
                self.shared_loadings.dim(),
                (dims.d_x, dims.d_u)
            ));
        }
        if self.ard_precisions.dim() != (config.marker_views.len(), dims.d_u) {
            return fail("ard_precisions shape mismatch".into());
        }
        if self.ard_precisions.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidData("ard_precisions must be strictly positive".into()));
        }
        if self.background_regression.dim() != (dims.d_u, dims.d_b) {
            return fail("background_regression shape mismatch".into());
        }
        if self.response_g.len() != n {
            return fail("response_g length mismatch".into());
        }
        if self.response_g_weights.len() != dims.d_u {
            return fail("response_g_weights length mismatch".into());
        }
        if self.response_cutpoints.len() != config.response_ordinal_levels - 1 {
            return fail("response_cutpoints length mismatch".into());
        }
        if !strictly_increasing(self.response_cutpoints.iter().copied()) {
            return Err(Error::InvalidData("response_cutpoints must be strictly increasing".into()));
        }
        if !(self.r_noise_precision > 0.0) {
            return Err(Error::InvalidData("r_noise_precision must be strictly positive".into()));
        }
        match (&self.response_cstar, config.explicit_cstar) {
            (Some(c), _) if c.len() != n => return fail("response_cstar length mismatch".into()),
            (None, true) => {
                return fail("explicit_cstar configured but response_cstar missing".into())
            }
            _ => {}
        }
        Ok(())
    }
}

fn validate_view_state(spec: &ViewSpec, l1: &Level1, vp: &ViewParams, n: usize) -> Result<()> {
    let fail = |msg: String| Err(Error::ShapeMismatch(format!("view `{}`: {}", spec.name, msg)));
    if l1.n_rows() != n {
        return fail(format!("level-1 has {} rows, expected {}", l1.n_rows(), n));
    }
    match (spec.kind, l1) {
        (ViewKind::Continuous, Level1::Factor(m)) => {
            if m.ncols() != spec.latent_dim {
                return fail(format!("factor width {} != latent_dim {}", m.ncols(), spec.latent_dim));
            }
        }
        (ViewKind::Binary | ViewKind::Ordinal, Level1::Trait(_)) => {}
        _ => return fail("level-1 storage does not match view kind".into()),
    }
    match (spec.kind, vp) {
        (ViewKind::Continuous, ViewParams::Continuous { loadings, noise_precision }) => {
            let want = (spec.latent_dim, spec.n_features);
            if loadings.raw.dim() != want || loadings.local_scales.dim() != want {
                return fail(format!("loading block shape != {want:?}"));
            }
            if loadings.local_scales.iter().any(|&s| !(s > 0.0)) || !(loadings.global_scale > 0.0) {
                return Err(Error::InvalidData(format!(
                    "view `{}`: shrinkage scales must be strictly positive",
                    spec.name
                )));
            }
            if !(*noise_precision > 0.0) {
                return Err(Error::InvalidData(format!(
                    "view `{}`: noise_precision must be strictly positive",
                    spec.name
                )));
            }
        }
        (ViewKind::Binary, ViewParams::Binary { discrimination, difficulty }) => {
            if discrimination.len() != spec.n_features || difficulty.len() != spec.n_features {
                return fail("item parameter length mismatch".into());
            }
            if discrimination.iter().any(|&a| !(a > 0.0)) {
                return Err(Error::InvalidData(format!(
                    "view `{}`: discriminations must be strictly positive",
                    spec.name
                )));
            }
        }
        (ViewKind::Ordinal, ViewParams::Ordinal { discrimination, thresholds }) => {
            let k = spec.levels_per_feature.unwrap_or(0).saturating_sub(1);
            if discrimination.len() != spec.n_features || thresholds.dim() != (spec.n_features, k) {
                return fail("item parameter shape mismatch".into());
            }
            if discrimination.iter().any(|&a| !(a > 0.0)) {
                return Err(Error::InvalidData(format!(
                    "view `{}`: discriminations must be strictly positive",
                    spec.name
                )));
            }
            for (q, row) in thresholds.rows().into_iter().enumerate() {
                if !strictly_increasing(row.iter().copied()) {
                    return Err(Error::InvalidData(format!(
                        "view `{}`: thresholds of item {} must be strictly increasing",
                        spec.name, q
                    )));
                }
            }
        }
        _ => return fail("parameter storage does not match view kind".into()),
    }
    Ok(())
}

fn concat_level1(blocks: &[Level1], n: usize, offsets: &[usize], width: usize) -> Array2<f64> {
    let mut out = Array2::zeros((n, width));
    for (block, &off) in blocks.iter().zip(offsets) {
        block.write_into(&mut out, off);
    }
    out
}

fn strictly_increasing(values: impl Iterator<Item = f64>) -> bool {
    let mut prev = f64::NEG_INFINITY;
    for v in values {
        if !(v > prev) || !v.is_finite() {
            return false;
        }
        prev = v;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::PriorConfig;

    fn config() -> ModelConfig {
        ModelConfig {
            n_subjects: 4,
            marker_views: vec![
                ViewSpec::continuous("assay", 5, 2),
                ViewSpec::ordinal("scores", 3, 4),
            ],
            background_views: vec![ViewSpec::binary("items", 6)],
            shared_dim: 2,
            response_ordinal_levels: 3,
            prior_hyperparams: PriorConfig::default(),
            explicit_cstar: false,
            background_horseshoe: true,
        }
    }

    #[test]
    fn neutral_state_is_valid() {
        let c = config();
        ParameterState::neutral(&c).validate(&c).unwrap();
    }

    #[test]
    fn neutral_thresholds_are_spread_and_ordered() {
        let c = config();
        let s = ParameterState::neutral(&c);
        match &s.marker_params[1] {
            ViewParams::Ordinal { thresholds, .. } => {
                assert_eq!(thresholds.dim(), (3, 3));
                assert_eq!(thresholds[[0, 0]], -1.0);
                assert_eq!(thresholds[[0, 2]], 1.0);
            }
            _ => panic!("expected ordinal params"),
        }
        assert_eq!(s.response_cutpoints.to_vec(), vec![-0.5, 0.5]);
    }

    #[test]
    fn effective_loadings_multiply_scales() {
        let block = LoadingBlock {
            raw: ndarray::array![[2.0, -1.0]],
            local_scales: ndarray::array![[0.5, 3.0]],
            global_scale: 2.0,
        };
        let eff = block.effective();
        assert_eq!(eff, ndarray::array![[2.0, -6.0]]);
    }

    #[test]
    fn validate_rejects_unordered_cutpoints() {
        let c = config();
        let mut s = ParameterState::neutral(&c);
        s.response_cutpoints = ndarray::array![0.5, -0.5];
        assert!(s.validate(&c).is_err());
    }

    #[test]
    fn validate_rejects_extra_subject_row() {
        let c = config();
        let mut s = ParameterState::neutral(&c);
        s.shared_u = Array2::zeros((5, 2));
        assert!(s.validate(&c).is_err());
    }

    #[test]
    fn validate_rejects_nonpositive_discrimination() {
        let c = config();
        let mut s = ParameterState::neutral(&c);
        if let ViewParams::Binary { discrimination, .. } = &mut s.background_params[0] {
            discrimination[2] = 0.0;
        }
        assert!(s.validate(&c).is_err());
    }

    #[test]
    fn concatenation_places_views_at_offsets() {
        let c = config();
        let mut s = ParameterState::neutral(&c);
        if let Level1::Factor(f) = &mut s.level1_marker[0] {
            f[[1, 1]] = 7.0;
        }
        if let Level1::Trait(t) = &mut s.level1_marker[1] {
            t[3] = -2.0;
        }
        let cat = s.concat_marker_level1(&c);
        assert_eq!(cat.dim(), (4, 3));
        assert_eq!(cat[[1, 1]], 7.0);
        assert_eq!(cat[[3, 2]], -2.0);
    }

    #[test]
    fn missing_cstar_rejected_when_configured() {
        let mut c = config();
        c.explicit_cstar = true;
        let mut s = ParameterState::neutral(&c);
        assert!(s.validate(&c).is_ok());
        s.response_cstar = None;
        assert!(s.validate(&c).is_err());
    }
}
