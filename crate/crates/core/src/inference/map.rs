//! Posterior-mode search with Adam, used to warm-start the sampler.

use super::posterior::LogDensityGrad;
use crate::{Error, Result};

/// Maximum-a-posteriori point on the unconstrained scale.
#[derive(Debug, Clone)]
pub struct MapResult {
    pub x: Vec<f64>,
    pub logp: f64,
    pub iterations: usize,
}

/// Maximize `target` with Adam starting from `init`.
///
/// Steps landing on invalid points are geometrically shrunk toward the
/// previous iterate; the best point seen is returned, so a noisy tail cannot
/// undo earlier progress.
pub fn map_estimate<T: LogDensityGrad>(
    target: &T,
    init: &[f64],
    iters: usize,
    learning_rate: f64,
) -> Result<MapResult> {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;
    let dim = target.dim();
    if init.len() != dim {
        return Err(Error::ShapeMismatch(format!(
            "init has {} coordinates, target has {}",
            init.len(),
            dim
        )));
    }
    let mut x = init.to_vec();
    let mut grad = vec![0.0; dim];
    let mut logp = target.logp_grad(&x, &mut grad).ok_or_else(|| {
        Error::Sampler("mode search started from an invalid point".into())
    })?;
    let mut best_x = x.clone();
    let mut best_logp = logp;
    let mut m = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    let mut step = vec![0.0; dim];
    let mut trial = vec![0.0; dim];
    let mut trial_grad = vec![0.0; dim];
    for t in 1..=iters {
        let bc1 = 1.0 - B1.powi(t as i32);
        let bc2 = 1.0 - B2.powi(t as i32);
        for i in 0..dim {
            m[i] = B1 * m[i] + (1.0 - B1) * grad[i];
            v[i] = B2 * v[i] + (1.0 - B2) * grad[i] * grad[i];
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            step[i] = learning_rate * mhat / (vhat.sqrt() + EPS);
        }
        let mut scale = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            for i in 0..dim {
                trial[i] = x[i] + scale * step[i];
            }
            if let Some(lp) = target.logp_grad(&trial, &mut trial_grad) {
                x.copy_from_slice(&trial);
                grad.copy_from_slice(&trial_grad);
                logp = lp;
                moved = true;
                break;
            }
            scale *= 0.5;
        }
        if !moved {
            // Boxed in; return the best point found so far.
            return Ok(MapResult { x: best_x, logp: best_logp, iterations: t });
        }
        if logp > best_logp {
            best_logp = logp;
            best_x.copy_from_slice(&x);
        }
    }
    Ok(MapResult { x: best_x, logp: best_logp, iterations: iters })
}
