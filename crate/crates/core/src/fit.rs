//! End-to-end posterior fitting: a short mode search to find a good starting
//! point, then gradient-based MCMC with adaptation, then convergence
//! diagnostics.

use crate::inference::{
    map_estimate, nuts_sample, DiagnosticsReport, NutsSettings, Posterior, PosteriorDraws,
};
use crate::model::{Dataset, ModelConfig};
use crate::Result;

/// Settings for a full fit. Defaults suit the bundled study sizes.
#[derive(Debug, Clone)]
pub struct FitSettings {
    pub n_chains: usize,
    pub n_warmup: usize,
    pub n_samples: usize,
    pub seed: u64,
    /// Adam iterations for the mode search that initializes the chains.
    pub map_iters: usize,
    pub map_learning_rate: f64,
    /// Spread of the per-chain jitter around the mode.
    pub init_jitter_sd: f64,
    pub target_accept: f64,
    pub max_tree_depth: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            n_chains: 4,
            n_warmup: 1000,
            n_samples: 1000,
            seed: 0,
            map_iters: 1200,
            map_learning_rate: 0.02,
            init_jitter_sd: 0.05,
            target_accept: 0.8,
            max_tree_depth: 10,
        }
    }
}

/// Everything a fit produces: draws, diagnostics, and the mode value the
/// chains started from.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub draws: PosteriorDraws,
    pub diagnostics: DiagnosticsReport,
    pub map_logp: f64,
}

/// Fit the model to a dataset: mode search, sampling, diagnostics.
pub fn fit_model(config: &ModelConfig, data: &Dataset, settings: &FitSettings) -> Result<FitResult> {
    config.validate()?;
    data.validate(config)?;
    let posterior = Posterior::new(config, data)?;
    let layout = posterior.layout();

    let neutral = crate::model::ParameterState::neutral(config);
    let init = layout.to_unconstrained(&neutral)?;
    let mode = map_estimate(
        &posterior,
        init.as_slice().unwrap(),
        settings.map_iters,
        settings.map_learning_rate,
    )?;

    let nuts = NutsSettings {
        n_chains: settings.n_chains,
        n_warmup: settings.n_warmup,
        n_samples: settings.n_samples,
        seed: settings.seed,
        max_tree_depth: settings.max_tree_depth,
        target_accept: settings.target_accept,
        init_jitter_sd: settings.init_jitter_sd,
        ..NutsSettings::default()
    };
    let output = nuts_sample(&posterior, &mode.x, &nuts)?;
    let draws = PosteriorDraws::from_sampler(output, layout)?;
    let diagnostics = DiagnosticsReport::from_draws(&draws);
    Ok(FitResult {
        draws,
        diagnostics,
        map_logp: mode.logp,
    })
}
