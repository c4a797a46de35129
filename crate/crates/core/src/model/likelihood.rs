//! Per-view likelihood kernels: logistic item response, graded response,
//! Gaussian factor views, and the marginalized ordinal response.

use ndarray::{ArrayView1, ArrayView2};

use crate::math::{
    log1mexp, log_normal_cdf_diff, log_sigmoid, logistic, normal_cdf, softplus, LN_2PI,
};
use crate::{Error, Result};

fn check_finite(context: &'static str, name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain { context, message: format!("{name} = {v} is not finite") })
    }
}

fn check_positive(context: &'static str, name: &str, v: f64) -> Result<()> {
    check_finite(context, name, v)?;
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain { context, message: format!("{name} = {v} must be positive") })
    }
}

fn check_ordered(context: &'static str, values: &[f64]) -> Result<()> {
    for w in values.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::Domain {
                context,
                message: format!("thresholds not strictly increasing: {} then {}", w[0], w[1]),
            });
        }
    }
    for &v in values {
        check_finite(context, "threshold", v)?;
    }
    Ok(())
}

/// Probability of a positive response under the two-parameter logistic item
/// model: sigma(alpha * (theta - delta)).
pub fn irt_prob(theta: f64, alpha: f64, delta: f64) -> Result<f64> {
    check_finite("irt_prob", "theta", theta)?;
    check_finite("irt_prob", "delta", delta)?;
    check_positive("irt_prob", "alpha", alpha)?;
    Ok(logistic(alpha * (theta - delta)))
}

/// Graded-response category probabilities (cumulative-logit, homogeneous
/// discrimination): P(k) = sigma(alpha(theta - t_k)) - sigma(alpha(theta - t_{k+1})),
/// with the boundary cumulative probabilities pinned at 1 and 0.
///
/// Computed by differencing the cumulative sigmoids directly, so the
/// components telescope and sum to exactly 1.
pub fn graded_response_probs(theta: f64, alpha: f64, thresholds: &[f64]) -> Result<Vec<f64>> {
    check_finite("graded_response_probs", "theta", theta)?;
    check_positive("graded_response_probs", "alpha", alpha)?;
    if thresholds.is_empty() {
        return Err(Error::Domain {
            context: "graded_response_probs",
            message: "at least one threshold required".into(),
        });
    }
    check_ordered("graded_response_probs", thresholds)?;
    let k = thresholds.len() + 1;
    let mut probs = Vec::with_capacity(k);
    let mut upper = 1.0;
    for &t in thresholds {
        let cum = logistic(alpha * (theta - t));
        probs.push((upper - cum).max(0.0));
        upper = cum;
    }
    probs.push(upper);
    Ok(probs)
}

/// Log of one graded-response category probability, evaluated in log space so
/// tail categories never underflow to -inf spuriously.
pub fn graded_response_logprob(
    theta: f64,
    alpha: f64,
    thresholds: &[f64],
    category: usize,
) -> Result<f64> {
    check_finite("graded_response_logprob", "theta", theta)?;
    check_positive("graded_response_logprob", "alpha", alpha)?;
    check_ordered("graded_response_logprob", thresholds)?;
    let levels = thresholds.len() + 1;
    if category >= levels {
        return Err(Error::Domain {
            context: "graded_response_logprob",
            message: format!("category {category} outside 0..{levels}"),
        });
    }
    // z_k = alpha*(theta - t_k) is decreasing in k; category c spans (z_{c+1}, z_c).
    Ok(if category == 0 {
        // 1 - sigma(z_1)
        -softplus(alpha * (theta - thresholds[0]))
    } else if category == levels - 1 {
        log_sigmoid(alpha * (theta - thresholds[category - 1]))
    } else {
        let z_lo = alpha * (theta - thresholds[category - 1]);
        let z_hi = alpha * (theta - thresholds[category]);
        // sigma(z_lo) - sigma(z_hi) = sigma(z_lo) * sigma(-z_hi) * (1 - e^{z_hi - z_lo})
        log_sigmoid(z_lo) + log_sigmoid(-z_hi) + log1mexp(z_lo - z_hi)
    })
}

/// Gaussian log-density of one subject's view row given their factor
/// coordinates, the view loadings (latent_dim x n_features) and an isotropic
/// noise precision.
pub fn continuous_view_loglik(
    x_row: ArrayView1<f64>,
    l_row: ArrayView1<f64>,
    loadings: ArrayView2<f64>,
    noise_precision: f64,
) -> Result<f64> {
    check_positive("continuous_view_loglik", "noise_precision", noise_precision)?;
    let (l, m) = loadings.dim();
    if l_row.len() != l || x_row.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "continuous_view_loglik: x has {} features, latents {}, loadings {:?}",
            x_row.len(),
            l_row.len(),
            loadings.dim()
        )));
    }
    let mean = l_row.dot(&loadings);
    let mut ss = 0.0;
    for (x, mu) in x_row.iter().zip(mean.iter()) {
        if !x.is_finite() {
            return Err(Error::Domain {
                context: "continuous_view_loglik",
                message: format!("non-finite observation {x}"),
            });
        }
        let r = x - mu;
        ss += r * r;
    }
    Ok(-0.5 * noise_precision * ss + 0.5 * m as f64 * (noise_precision.ln() - LN_2PI))
}

/// Log-probability of one ordinal response category with the latent
/// continuous status marginalized out: log of
/// Phi((b_{c+1} - w_c*g)/sd) - Phi((b_c - w_c*g)/sd), open at both ends.
pub fn ordinal_response_logprob(
    g: f64,
    w_c: f64,
    cutpoints: &[f64],
    category: usize,
    cstar_sd: f64,
) -> Result<f64> {
    check_finite("ordinal_response_logprob", "g", g)?;
    check_finite("ordinal_response_logprob", "w_c", w_c)?;
    check_positive("ordinal_response_logprob", "cstar_sd", cstar_sd)?;
    check_ordered("ordinal_response_logprob", cutpoints)?;
    let levels = cutpoints.len() + 1;
    if category >= levels {
        return Err(Error::Domain {
            context: "ordinal_response_logprob",
            message: format!("category {category} outside 0..{levels}"),
        });
    }
    let mean = w_c * g;
    let lo = if category == 0 {
        f64::NEG_INFINITY
    } else {
        (cutpoints[category - 1] - mean) / cstar_sd
    };
    let hi = if category == levels - 1 {
        f64::INFINITY
    } else {
        (cutpoints[category] - mean) / cstar_sd
    };
    Ok(log_normal_cdf_diff(lo, hi))
}

/// All ordinal response category probabilities; differences of normal CDF
/// values, telescoping to an exact unit sum.
pub fn ordinal_response_probs(
    g: f64,
    w_c: f64,
    cutpoints: &[f64],
    cstar_sd: f64,
) -> Result<Vec<f64>> {
    check_finite("ordinal_response_probs", "g", g)?;
    check_finite("ordinal_response_probs", "w_c", w_c)?;
    check_positive("ordinal_response_probs", "cstar_sd", cstar_sd)?;
    check_ordered("ordinal_response_probs", cutpoints)?;
    let mean = w_c * g;
    let mut probs = Vec::with_capacity(cutpoints.len() + 1);
    let mut lower_mass = 0.0;
    for &b in cutpoints {
        let cum = normal_cdf((b - mean) / cstar_sd);
        probs.push((cum - lower_mass).max(0.0));
        lower_mass = cum;
    }
    probs.push(1.0 - lower_mass);
    Ok(probs)
}
