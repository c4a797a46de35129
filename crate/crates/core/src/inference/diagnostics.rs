//! Convergence diagnostics: split potential-scale-reduction and effective
//! sample size via the initial-monotone-positive-sequence autocorrelation
//! estimator, both computed on split chains.
//!
//! Diagnostics run on the sampler's unconstrained coordinates so that
//! positivity- and ordering-constrained parameters are assessed on the scale
//! the sampler actually explores.

use ndarray::ArrayView1;
use serde::Serialize;

use super::draws::PosteriorDraws;

/// Diagnostics for one scalar coordinate.
#[derive(Debug, Clone, Serialize)]
pub struct ParamDiagnostics {
    pub name: String,
    pub rhat: f64,
    pub ess: f64,
    pub mean: f64,
    pub sd: f64,
}

/// Summary across all coordinates of a posterior run.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub params: Vec<ParamDiagnostics>,
    /// Largest finite split R-hat.
    pub max_rhat: f64,
    /// Smallest finite effective sample size.
    pub min_ess: f64,
    pub n_divergent: usize,
    /// Coordinates whose chains carry no variation; their rhat/ess are NaN.
    pub constant_params: Vec<String>,
}

impl DiagnosticsReport {
    /// Diagnose every unconstrained coordinate of `draws`.
    pub fn from_draws(draws: &PosteriorDraws) -> Self {
        let dim = draws.unconstrained_names.len();
        let mut params = Vec::with_capacity(dim);
        let mut constant_params = Vec::new();
        let mut max_rhat = f64::NEG_INFINITY;
        let mut min_ess = f64::INFINITY;
        for j in 0..dim {
            let series: Vec<ArrayView1<f64>> =
                draws.unconstrained.iter().map(|c| c.column(j)).collect();
            let (mean, sd) = pooled_moments(&series);
            let rhat = split_rhat(&series);
            let ess = split_ess(&series);
            if rhat.is_nan() || ess.is_nan() {
                constant_params.push(draws.unconstrained_names[j].clone());
            } else {
                max_rhat = max_rhat.max(rhat);
                min_ess = min_ess.min(ess);
            }
            params.push(ParamDiagnostics {
                name: draws.unconstrained_names[j].clone(),
                rhat,
                ess,
                mean,
                sd,
            });
        }
        DiagnosticsReport {
            params,
            max_rhat: if max_rhat.is_finite() { max_rhat } else { f64::NAN },
            min_ess: if min_ess.is_finite() { min_ess } else { f64::NAN },
            n_divergent: draws.total_divergences(),
            constant_params,
        }
    }

    pub fn converged(&self, rhat_threshold: f64) -> bool {
        self.constant_params.is_empty() && self.max_rhat < rhat_threshold
    }
}

fn pooled_moments(series: &[ArrayView1<f64>]) -> (f64, f64) {
    let n: usize = series.iter().map(|s| s.len()).sum();
    let mean = series.iter().map(|s| s.sum()).sum::<f64>() / n as f64;
    let ss: f64 = series
        .iter()
        .map(|s| s.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>())
        .sum();
    let sd = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { f64::NAN };
    (mean, sd)
}

/// Split each chain into halves, dropping the middle draw of odd-length
/// chains.
fn split(series: &[ArrayView1<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(series.len() * 2);
    for s in series {
        let n = s.len();
        let half = n / 2;
        out.push(s.iter().take(half).copied().collect());
        out.push(s.iter().skip(n - half).copied().collect());
    }
    out
}

fn chain_mean(chain: &[f64]) -> f64 {
    chain.iter().sum::<f64>() / chain.len() as f64
}

fn chain_sample_var(chain: &[f64]) -> f64 {
    let m = chain_mean(chain);
    chain.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / (chain.len() - 1) as f64
}

fn usable(chains: &[Vec<f64>]) -> bool {
    chains.iter().all(|c| {
        c.len() >= 4
            && c.iter().all(|x| x.is_finite())
            && chain_sample_var(c) > 0.0
    })
}

/// Split potential-scale-reduction factor for one coordinate across chains.
pub fn split_rhat(series: &[ArrayView1<f64>]) -> f64 {
    let chains = split(series);
    if !usable(&chains) {
        return f64::NAN;
    }
    let m = chains.len() as f64;
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| chain_mean(c)).collect();
    let w = chains.iter().map(|c| chain_sample_var(c)).sum::<f64>() / m;
    let grand = means.iter().sum::<f64>() / m;
    let b_over_n =
        means.iter().map(|&x| (x - grand) * (x - grand)).sum::<f64>() / (m - 1.0);
    let var_plus = (n - 1.0) / n * w + b_over_n;
    (var_plus / w).sqrt()
}

/// Biased (divide-by-n) autocovariance of one chain at lag `t`.
fn autocov(chain: &[f64], mean: f64, t: usize) -> f64 {
    let n = chain.len();
    let mut s = 0.0;
    for i in 0..n - t {
        s += (chain[i] - mean) * (chain[i + t] - mean);
    }
    s / n as f64
}

/// Effective sample size for one coordinate across chains, after splitting.
///
/// Autocorrelations are summed over the initial positive sequence of paired
/// lags, the pair sums made monotone non-increasing, and the total capped at
/// `N log10 N`.
pub fn split_ess(series: &[ArrayView1<f64>]) -> f64 {
    let chains = split(series);
    if !usable(&chains) {
        return f64::NAN;
    }
    let m = chains.len();
    let n = chains[0].len();
    let means: Vec<f64> = chains.iter().map(|c| chain_mean(c)).collect();
    let chain_vars: Vec<f64> = chains.iter().map(|c| chain_sample_var(c)).collect();
    let mean_var = chain_vars.iter().sum::<f64>() / m as f64;
    let mut var_plus = mean_var * (n as f64 - 1.0) / n as f64;
    if m > 1 {
        let grand = means.iter().sum::<f64>() / m as f64;
        var_plus += means.iter().map(|&x| (x - grand) * (x - grand)).sum::<f64>()
            / (m as f64 - 1.0);
    }
    let mean_acov = |t: usize| -> f64 {
        chains
            .iter()
            .zip(&means)
            .map(|(c, &mu)| autocov(c, mu, t))
            .sum::<f64>()
            / m as f64
    };
    let rho = |t: usize| -> f64 { 1.0 - (mean_var - mean_acov(t)) / var_plus };

    let mut rho_hat = vec![0.0; n];
    let mut rho_even = 1.0;
    rho_hat[0] = rho_even;
    let mut rho_odd = rho(1);
    rho_hat[1] = rho_odd;
    let mut t = 1usize;
    while t < n - 4 && rho_even + rho_odd > 0.0 {
        rho_even = rho(t + 1);
        rho_odd = rho(t + 2);
        if rho_even + rho_odd >= 0.0 {
            rho_hat[t + 1] = rho_even;
            rho_hat[t + 2] = rho_odd;
        }
        t += 2;
    }
    let max_t = t;
    // Improved estimate: carry a trailing positive even term.
    if rho_even > 0.0 {
        rho_hat[max_t + 1] = rho_even;
    }
    // Enforce monotone non-increasing pair sums.
    let mut t = 1usize;
    while t + 3 <= max_t {
        if rho_hat[t + 1] + rho_hat[t + 2] > rho_hat[t - 1] + rho_hat[t] {
            let avg = (rho_hat[t - 1] + rho_hat[t]) / 2.0;
            rho_hat[t + 1] = avg;
            rho_hat[t + 2] = avg;
        }
        t += 2;
    }
    let total = (m * n) as f64;
    let tau = -1.0 + 2.0 * rho_hat[..max_t].iter().sum::<f64>() + rho_hat[max_t + 1];
    (total / tau).min(total * total.log10())
}
