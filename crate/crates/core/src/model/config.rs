//! Model configuration: view inventory, dimensions, prior hyperparameters.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Distributional family of a view's features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewKind {
    /// Real-valued features, factorized as latents times loadings plus noise.
    Continuous,
    /// 0/1 items driven by a scalar subject trait (two-parameter logistic).
    Binary,
    /// Ordered categorical items driven by a scalar trait (graded response).
    Ordinal,
}

/// Whether a view sits upstream (background) or downstream (marker) of the
/// shared subject subspace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ViewRole {
    Marker,
    Background,
}

/// One feature block observed for every subject.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewSpec {
    pub name: String,
    pub kind: ViewKind,
    pub n_features: usize,
    /// Width of the subject-level abstraction for this view. Binary/ordinal
    /// views always use a single scalar trait.
    #[serde(default = "default_latent_dim")]
    pub latent_dim: usize,
    /// Category count per item; required for ordinal views.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels_per_feature: Option<usize>,
}

fn default_latent_dim() -> usize {
    1
}

impl ViewSpec {
    pub fn continuous(name: &str, n_features: usize, latent_dim: usize) -> Self {
        ViewSpec { name: name.into(), kind: ViewKind::Continuous, n_features, latent_dim, levels_per_feature: None }
    }

    pub fn binary(name: &str, n_features: usize) -> Self {
        ViewSpec { name: name.into(), kind: ViewKind::Binary, n_features, latent_dim: 1, levels_per_feature: None }
    }

    pub fn ordinal(name: &str, n_features: usize, levels: usize) -> Self {
        ViewSpec {
            name: name.into(),
            kind: ViewKind::Ordinal,
            n_features,
            latent_dim: 1,
            levels_per_feature: Some(levels),
        }
    }

    fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(format!("view `{}`: {}", self.name, msg)));
        if self.name.is_empty() {
            return Err(Error::InvalidConfig("view with empty name".into()));
        }
        if self.n_features == 0 {
            return fail("n_features must be positive".into());
        }
        match self.kind {
            ViewKind::Continuous => {
                if self.latent_dim == 0 || self.latent_dim > self.n_features {
                    return fail(format!(
                        "latent_dim {} must lie in 1..={}",
                        self.latent_dim, self.n_features
                    ));
                }
                if self.levels_per_feature.is_some() {
                    return fail("levels_per_feature only applies to ordinal views".into());
                }
            }
            ViewKind::Binary => {
                if self.latent_dim != 1 {
                    return fail("binary views use a single scalar trait (latent_dim = 1)".into());
                }
                if self.levels_per_feature.is_some() {
                    return fail("levels_per_feature only applies to ordinal views".into());
                }
            }
            ViewKind::Ordinal => {
                if self.latent_dim != 1 {
                    return fail("ordinal views use a single scalar trait (latent_dim = 1)".into());
                }
                match self.levels_per_feature {
                    Some(l) if l >= 2 => {}
                    _ => return fail("ordinal views need levels_per_feature >= 2".into()),
                }
            }
        }
        Ok(())
    }
}

/// Hyperparameters of the priors. All entries strictly positive.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    /// Scale of the half-Cauchy prior on each loading block's global shrinkage scale.
    pub horseshoe_global_scale: f64,
    /// Gamma shape/rate on the per-(view, shared-factor) group precisions of
    /// the shared-subspace loadings.
    pub ard_shape: f64,
    pub ard_rate: f64,
    /// Gamma shape/rate on view and response noise precisions.
    pub precision_shape: f64,
    pub precision_rate: f64,
    /// Standard deviation of the normal prior on regression-style coefficients
    /// (background regression, response weights, cutpoints, item locations).
    pub regression_sd: f64,
    /// Residual standard deviation of the shared subspace around its
    /// background-regressed mean (fixed, not sampled).
    pub u_residual_sd: f64,
    /// Log-scale sd of the log-normal prior on item discriminations.
    pub irt_alpha_log_sd: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            horseshoe_global_scale: 1.0,
            ard_shape: 2.0,
            ard_rate: 0.5,
            precision_shape: 2.0,
            precision_rate: 0.5,
            regression_sd: 2.5,
            u_residual_sd: 1.0,
            irt_alpha_log_sd: 0.75,
        }
    }
}

impl PriorConfig {
    fn validate(&self) -> Result<()> {
        let entries = [
            ("horseshoe_global_scale", self.horseshoe_global_scale),
            ("ard_shape", self.ard_shape),
            ("ard_rate", self.ard_rate),
            ("precision_shape", self.precision_shape),
            ("precision_rate", self.precision_rate),
            ("regression_sd", self.regression_sd),
            ("u_residual_sd", self.u_residual_sd),
            ("irt_alpha_log_sd", self.irt_alpha_log_sd),
        ];
        for (name, v) in entries {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "prior_hyperparams.{name} must be a positive finite number, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Full model configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_subjects: usize,
    pub marker_views: Vec<ViewSpec>,
    pub background_views: Vec<ViewSpec>,
    /// Dimension of the shared subject subspace.
    pub shared_dim: usize,
    /// Category count of the ordinal response.
    #[serde(default = "default_levels")]
    pub response_ordinal_levels: usize,
    #[serde(default)]
    pub prior_hyperparams: PriorConfig,
    /// Keep the latent continuous status as an explicit sampled vector instead
    /// of marginalizing it out of the ordinal-response likelihood. Intended
    /// for fidelity checks, not production fits.
    #[serde(default)]
    pub explicit_cstar: bool,
    /// Apply horseshoe shrinkage to background continuous-view loadings too
    /// (when false they get a plain normal prior).
    #[serde(default = "default_true")]
    pub background_horseshoe: bool,
}

fn default_levels() -> usize {
    3
}

fn default_true() -> bool {
    true
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 {
            return Err(Error::InvalidConfig("n_subjects must be positive".into()));
        }
        if self.marker_views.is_empty() {
            return Err(Error::InvalidConfig("at least one marker view required".into()));
        }
        if self.shared_dim == 0 {
            return Err(Error::InvalidConfig("shared_dim must be positive".into()));
        }
        if self.response_ordinal_levels < 2 {
            return Err(Error::InvalidConfig("response_ordinal_levels must be >= 2".into()));
        }
        let mut names = std::collections::HashSet::new();
        for v in self.marker_views.iter().chain(&self.background_views) {
            v.validate()?;
            if !names.insert(v.name.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate view name `{}`", v.name)));
            }
        }
        let marker_latent_total: usize = self.marker_views.iter().map(|v| v.latent_dim).sum();
        if self.shared_dim > marker_latent_total {
            return Err(Error::InvalidConfig(format!(
                "shared_dim {} exceeds total marker latent dimension {}",
                self.shared_dim, marker_latent_total
            )));
        }
        self.prior_hyperparams.validate()?;
        Ok(())
    }

    /// Derived dimension bookkeeping.
    pub fn dims(&self) -> ModelDims {
        let marker_offsets = prefix_offsets(&self.marker_views);
        let background_offsets = prefix_offsets(&self.background_views);
        ModelDims {
            n: self.n_subjects,
            d_u: self.shared_dim,
            d_x: self.marker_views.iter().map(|v| v.latent_dim).sum(),
            d_b: self.background_views.iter().map(|v| v.latent_dim).sum(),
            marker_offsets,
            background_offsets,
            n_levels: self.response_ordinal_levels,
        }
    }

    /// All views with their role, markers first.
    pub fn all_views(&self) -> impl Iterator<Item = (ViewRole, &ViewSpec)> {
        self.marker_views
            .iter()
            .map(|v| (ViewRole::Marker, v))
            .chain(self.background_views.iter().map(|v| (ViewRole::Background, v)))
    }

    pub fn views_of(&self, role: ViewRole) -> &[ViewSpec] {
        match role {
            ViewRole::Marker => &self.marker_views,
            ViewRole::Background => &self.background_views,
        }
    }

    /// Whether a view's loadings carry horseshoe shrinkage scales.
    pub fn view_uses_horseshoe(&self, role: ViewRole) -> bool {
        match role {
            ViewRole::Marker => true,
            ViewRole::Background => self.background_horseshoe,
        }
    }

    pub fn parse_json(text: &str, origin: &str) -> Result<Self> {
        let config: ModelConfig =
            serde_json::from_str(text).map_err(|e| Error::json(origin, e))?;
        config.validate()?;
        Ok(config)
    }
}

fn prefix_offsets(views: &[ViewSpec]) -> Vec<usize> {
    let mut offsets = Vec::with_capacity(views.len());
    let mut acc = 0;
    for v in views {
        offsets.push(acc);
        acc += v.latent_dim;
    }
    offsets
}

/// Dimension bookkeeping derived from a `ModelConfig`.
#[derive(Debug, Clone)]
pub struct ModelDims {
    /// Subject count.
    pub n: usize,
    /// Shared-subspace dimension.
    pub d_u: usize,
    /// Total width of the concatenated marker abstractions.
    pub d_x: usize,
    /// Total width of the concatenated background abstractions.
    pub d_b: usize,
    /// Column offset of each marker view inside the concatenation.
    pub marker_offsets: Vec<usize>,
    /// Column offset of each background view inside the concatenation.
    pub background_offsets: Vec<usize>,
    /// Ordinal response category count.
    pub n_levels: usize,
}

impl ModelDims {
    pub fn offset_of(&self, role: ViewRole, view_idx: usize) -> usize {
        match role {
            ViewRole::Marker => self.marker_offsets[view_idx],
            ViewRole::Background => self.background_offsets[view_idx],
        }
    }
}
