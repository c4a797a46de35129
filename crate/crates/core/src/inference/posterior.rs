//! Log-density-with-gradient interface consumed by the samplers and the MAP
//! optimizer, and its implementation for the model posterior.

use super::layout::ParamLayout;
use crate::model::{Dataset, JointDensity, ModelConfig, ParameterState};
use crate::Result;

/// A differentiable unnormalized log density over a fixed-dimensional
/// unconstrained space.
pub trait LogDensityGrad: Sync {
    fn dim(&self) -> usize;

    /// Log density and gradient at `x`. `None` marks an invalid point
    /// (outside the support, or numerically non-finite); samplers treat such
    /// points as divergent proposals, optimizers back off.
    fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> Option<f64>;

    /// Value-only evaluation; default goes through `logp_grad`.
    fn logp(&self, x: &[f64]) -> Option<f64> {
        let mut scratch = vec![0.0; self.dim()];
        self.logp_grad(x, &mut scratch)
    }
}

/// The model posterior on the unconstrained scale: joint log-density plus the
/// log-Jacobian of the constraining transforms.
pub struct Posterior<'a> {
    joint: JointDensity<'a>,
    layout: ParamLayout,
}

impl<'a> Posterior<'a> {
    pub fn new(config: &'a ModelConfig, data: &'a Dataset) -> Result<Self> {
        Ok(Posterior {
            joint: JointDensity::new(config, data)?,
            layout: ParamLayout::new(config)?,
        })
    }

    /// Posterior that ignores the observed responses (`R`, `C`). The response
    /// columns of `data` are carried but contribute no likelihood.
    pub fn without_response_likelihood(
        config: &'a ModelConfig,
        data: &'a Dataset,
    ) -> Result<Self> {
        Ok(Posterior {
            joint: JointDensity::without_response_likelihood(config, data)?,
            layout: ParamLayout::new(config)?,
        })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn joint(&self) -> &JointDensity<'a> {
        &self.joint
    }

    /// Constrained state at an unconstrained point.
    pub fn state_at(&self, x: &[f64]) -> Result<ParameterState> {
        self.layout.from_unconstrained(x)
    }
}

impl LogDensityGrad for Posterior<'_> {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> Option<f64> {
        let state = self.layout.from_unconstrained(x).ok()?;
        let (value, grad_state) = self.joint.log_density_grad(&state).ok()?;
        let grad_u = self.layout.chain_gradient(x, &grad_state);
        grad.copy_from_slice(grad_u.as_slice().expect("standard layout"));
        let total = value + self.layout.log_jacobian(x);
        if total.is_finite() && grad.iter().all(|g| g.is_finite()) {
            Some(total)
        } else {
            None
        }
    }

    fn logp(&self, x: &[f64]) -> Option<f64> {
        let state = self.layout.from_unconstrained(x).ok()?;
        let value = self.joint.log_density(&state).ok()?;
        let total = value + self.layout.log_jacobian(x);
        total.is_finite().then_some(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PriorConfig, ViewData, ViewSpec};
    use ndarray::{Array1, Array2};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn tiny() -> (ModelConfig, Dataset) {
        let config = ModelConfig {
            n_subjects: 4,
            marker_views: vec![ViewSpec::continuous("assay", 3, 1)],
            background_views: vec![],
            shared_dim: 1,
            response_ordinal_levels: 3,
            background_horseshoe: true,
            explicit_cstar: false,
            prior_hyperparams: PriorConfig::default(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = Dataset {
            subject_ids: (0..4).map(|i| format!("s{i}")).collect(),
            marker_data: vec![ViewData::Continuous(Array2::from_shape_fn((4, 3), |_| {
                StandardNormal.sample(&mut rng)
            }))],
            background_data: vec![],
            response_r: Array1::from_shape_fn(4, |_| StandardNormal.sample(&mut rng)),
            response_c: (0..4).map(|_| rng.random_range(0..3u8)).collect(),
        };
        (config, data)
    }

    #[test]
    fn value_only_and_gradient_paths_agree() {
        let (config, data) = tiny();
        let posterior = Posterior::new(&config, &data).unwrap();
        let x = vec![0.1; posterior.dim()];
        let mut grad = vec![0.0; posterior.dim()];
        let v1 = posterior.logp_grad(&x, &mut grad).unwrap();
        let v2 = posterior.logp(&x).unwrap();
        assert_eq!(v1, v2);
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn wildly_overflowing_point_is_invalid_not_a_panic() {
        let (config, data) = tiny();
        let posterior = Posterior::new(&config, &data).unwrap();
        let x = vec![1e4; posterior.dim()];
        let mut grad = vec![0.0; posterior.dim()];
        assert!(posterior.logp_grad(&x, &mut grad).is_none());
        assert!(posterior.logp(&x).is_none());
    }
}
