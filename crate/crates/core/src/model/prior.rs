//! Sparsity priors: non-centered horseshoe on view loadings and group ARD on
//! the shared-subspace loadings.

use ndarray::ArrayView2;

use crate::math::{gamma_logpdf, half_cauchy_logpdf, LN_2PI};
use crate::{Error, Result};

/// Non-centered horseshoe log-prior contribution of one loading block:
/// standard-normal mass on the raw weights, half-Cauchy(0,1) on each local
/// scale, and half-Cauchy(0, global_prior_scale) on the global scale. The
/// effective weight is `raw * local * global`, materialized elsewhere by a
/// deterministic transform.
pub fn horseshoe_logprior(
    weights_raw: ArrayView2<f64>,
    local_scales: ArrayView2<f64>,
    global_scale: f64,
    global_prior_scale: f64,
) -> Result<f64> {
    if weights_raw.dim() != local_scales.dim() {
        return Err(Error::ShapeMismatch(format!(
            "horseshoe_logprior: raw {:?} vs local scales {:?}",
            weights_raw.dim(),
            local_scales.dim()
        )));
    }
    if !(global_scale.is_finite() && global_scale > 0.0) {
        return Err(Error::Domain {
            context: "horseshoe_logprior",
            message: format!("global_scale = {global_scale} must be positive"),
        });
    }
    if !(global_prior_scale.is_finite() && global_prior_scale > 0.0) {
        return Err(Error::Domain {
            context: "horseshoe_logprior",
            message: format!("global_prior_scale = {global_prior_scale} must be positive"),
        });
    }
    let mut logp = 0.0;
    let mut ss = 0.0;
    for &w in weights_raw.iter() {
        if !w.is_finite() {
            return Err(Error::Domain {
                context: "horseshoe_logprior",
                message: format!("raw weight {w} is not finite"),
            });
        }
        ss += w * w;
    }
    let count = weights_raw.len() as f64;
    logp += -0.5 * ss - 0.5 * count * LN_2PI;
    for &s in local_scales.iter() {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::Domain {
                context: "horseshoe_logprior",
                message: format!("local scale {s} must be positive"),
            });
        }
        logp += half_cauchy_logpdf(s, 1.0);
    }
    logp += half_cauchy_logpdf(global_scale, global_prior_scale);
    Ok(logp)
}

/// Group-ARD log-prior of one shared-loading block: Gaussian mass at the
/// group precision plus a gamma hyperprior on that precision.
pub fn ard_logprior(
    shared_loadings_group: ArrayView2<f64>,
    group_precision: f64,
    gamma_shape: f64,
    gamma_rate: f64,
) -> Result<f64> {
    for (name, v) in
        [("group_precision", group_precision), ("gamma_shape", gamma_shape), ("gamma_rate", gamma_rate)]
    {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Domain {
                context: "ard_logprior",
                message: format!("{name} = {v} must be positive"),
            });
        }
    }
    let mut ss = 0.0;
    for &w in shared_loadings_group.iter() {
        if !w.is_finite() {
            return Err(Error::Domain {
                context: "ard_logprior",
                message: format!("loading {w} is not finite"),
            });
        }
        ss += w * w;
    }
    let count = shared_loadings_group.len() as f64;
    let gaussian = -0.5 * group_precision * ss + 0.5 * count * (group_precision.ln() - LN_2PI);
    Ok(gaussian + gamma_logpdf(group_precision, gamma_shape, gamma_rate))
}
