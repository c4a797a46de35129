//! Run configuration: one JSON document covering the model and every
//! sampler/pipeline knob, merged with command-line overrides and written back
//! to each output directory as `resolved_config.json` so any run can be
//! replayed exactly from its snapshot.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use strata::fit::FitSettings;
use strata::model::{Dataset, ModelConfig};
use strata::pipeline::{load_dataset, CvSettings, ViewManifest};
use strata::predict::PredictSettings;
use strata::simulate::TruthOverrides;
use strata::{Error, Result};

/// One cross-validation sweep point: a shared-subspace width plus per-view
/// latent widths. Views not listed keep their configured width.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    pub shared_dim: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub latent_dims: BTreeMap<String, usize>,
}

/// Everything a run needs beyond filesystem paths.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Generative model; when absent, commands that need one fall back to the
    /// dataset's stored snapshot or (for simulation) the built-in benchmark.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    pub seed: u64,
    pub chains: usize,
    pub warmup: usize,
    pub samples: usize,
    /// Adam iterations for the mode search that initializes the chains.
    pub map_iters: usize,
    pub map_learning_rate: f64,
    pub init_jitter_sd: f64,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    /// Cross-validation fold count.
    pub k: usize,
    /// Neighbors considered when oversampling minority classes.
    pub smote_neighbors: usize,
    /// Posterior draws are thinned to at most this many before prediction.
    pub max_predict_draws: usize,
    /// Adaptation iterations of each per-subject conditional sampler.
    pub predict_adapt_iters: usize,
    /// Debug mode: condition held-out inference on observed responses too.
    pub condition_on_responses: bool,
    /// Split R-hat threshold enforced by strict fits.
    pub rhat_threshold: f64,
    /// Fail with a sampler error when diagnostics exceed `rhat_threshold`.
    pub strict: bool,
    /// Response level names written into simulated cohorts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_labels: Option<Vec<String>>,
    /// Ground-truth overrides applied when simulating.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth_overrides: Option<TruthOverrides>,
    /// Latent-width sweep for cross-validation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latent_grid: Option<Vec<GridPoint>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let fit = FitSettings::default();
        let predict = PredictSettings::default();
        let cv = CvSettings::default();
        RunConfig {
            model: None,
            seed: 0,
            chains: fit.n_chains,
            warmup: fit.n_warmup,
            samples: fit.n_samples,
            map_iters: fit.map_iters,
            map_learning_rate: fit.map_learning_rate,
            init_jitter_sd: fit.init_jitter_sd,
            target_accept: fit.target_accept,
            max_tree_depth: fit.max_tree_depth,
            k: cv.k,
            smote_neighbors: cv.smote_neighbors,
            max_predict_draws: predict.max_draws,
            predict_adapt_iters: predict.adapt_iters,
            condition_on_responses: predict.condition_on_responses,
            rhat_threshold: 1.1,
            strict: false,
            class_labels: None,
            truth_overrides: None,
            latent_grid: None,
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub chains: Option<usize>,
    pub warmup: Option<usize>,
    pub samples: Option<usize>,
    pub k: Option<usize>,
    pub strict: bool,
}

impl RunConfig {
    /// Read a run config, or start from defaults when no file is given. An
    /// unreadable path is a configuration error, not an I/O failure: the file
    /// is user-supplied input.
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot read config file {shown}: {e}"))
        })?;
        let run: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::json(&shown, e))?;
        run.validate()?;
        Ok(run)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(model) = &self.model {
            model.validate()?;
        }
        let positive = [
            ("chains", self.chains),
            ("samples", self.samples),
            ("max_predict_draws", self.max_predict_draws),
            ("smote_neighbors", self.smote_neighbors),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.k < 2 {
            return Err(Error::InvalidConfig(format!(
                "k must be at least 2, got {}",
                self.k
            )));
        }
        if !(self.rhat_threshold.is_finite() && self.rhat_threshold > 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rhat_threshold must exceed 1, got {}",
                self.rhat_threshold
            )));
        }
        Ok(())
    }

    /// Apply command-line flags on top of the file values.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.chains {
            self.chains = v;
        }
        if let Some(v) = o.warmup {
            self.warmup = v;
        }
        if let Some(v) = o.samples {
            self.samples = v;
        }
        if let Some(v) = o.k {
            self.k = v;
        }
        if o.strict {
            self.strict = true;
        }
    }

    pub fn fit_settings(&self) -> FitSettings {
        FitSettings {
            n_chains: self.chains,
            n_warmup: self.warmup,
            n_samples: self.samples,
            seed: self.seed,
            map_iters: self.map_iters,
            map_learning_rate: self.map_learning_rate,
            init_jitter_sd: self.init_jitter_sd,
            target_accept: self.target_accept,
            max_tree_depth: self.max_tree_depth,
        }
    }

    pub fn predict_settings(&self) -> PredictSettings {
        PredictSettings {
            seed: self.seed,
            max_draws: self.max_predict_draws,
            adapt_iters: self.predict_adapt_iters,
            condition_on_responses: self.condition_on_responses,
        }
    }

    pub fn cv_settings(&self) -> CvSettings {
        CvSettings {
            k: self.k,
            seed: self.seed,
            smote_neighbors: self.smote_neighbors,
            fit: self.fit_settings(),
            predict: PredictSettings {
                // cross_validate derives per-fold seeds from its own seed
                seed: 0,
                ..self.predict_settings()
            },
        }
    }

    /// The snapshot written to every output directory. Contains no paths, so
    /// reruns into different directories stay byte-identical.
    pub fn snapshot_json(&self) -> Result<String> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::json("resolved_config.json", e))?;
        Ok(text + "\n")
    }
}

/// Whether a sweep candidate `(mean accuracy, total latent dimension)` beats
/// the incumbent: higher accuracy wins, exact ties go to the smaller total
/// dimension, remaining ties to the earlier grid entry (the incumbent).
pub fn sweep_improves(candidate: (f64, usize), incumbent: (f64, usize)) -> bool {
    candidate.0 > incumbent.0 || (candidate.0 == incumbent.0 && candidate.1 < incumbent.1)
}

/// Model search order for dataset-consuming commands: the run config itself,
/// then the snapshot stored next to the data.
pub fn model_for_dir(run: &RunConfig, dir: &Path) -> Result<ModelConfig> {
    if let Some(model) = &run.model {
        return Ok(model.clone());
    }
    let snapshot = dir.join("resolved_config.json");
    if snapshot.is_file() {
        if let Some(model) = RunConfig::load(Some(&snapshot))?.model {
            return Ok(model);
        }
    }
    Err(Error::InvalidConfig(format!(
        "no model configuration: pass --config or keep a resolved_config.json with a \"model\" entry in {}",
        dir.display()
    )))
}

/// Error unless `dir` looks like a dataset directory.
pub fn ensure_dataset_dir(dir: &Path) -> Result<()> {
    if dir.join("manifest.json").is_file() {
        Ok(())
    } else {
        Err(Error::InvalidData(format!("no manifest.json in {}", dir.display())))
    }
}

/// Load a dataset directory, sizing `model` to the rows actually present.
pub fn load_data_dir(dir: &Path, model: &mut ModelConfig) -> Result<(ViewManifest, Dataset)> {
    ensure_dataset_dir(dir)?;
    let manifest = ViewManifest::read(&dir.join("manifest.json"))?;
    manifest.check_files_exist(dir)?;
    model.n_subjects = count_rows(&dir.join(&manifest.responses.path))?;
    let data = load_dataset(&manifest, dir, model)?;
    Ok((manifest, data))
}

fn count_rows(path: &Path) -> Result<usize> {
    let shown = path.display().to_string();
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::parse(&shown, e.to_string()))?;
    let mut n = 0;
    for record in reader.records() {
        record.map_err(|e| Error::parse(&shown, e.to_string()))?;
        n += 1;
    }
    Ok(n)
}
