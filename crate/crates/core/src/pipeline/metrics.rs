//! Prediction quality metrics: classification accuracy with macro-averaged
//! precision/recall, and RMSE for the continuous response.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Metrics for a single evaluation fold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub accuracy: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub rmse: f64,
    /// True when some class had no predictions (precision 0/0, counted as 0)
    /// or no true members (recall 0/0, counted as 0).
    pub zero_division_flagged: bool,
}

/// Aggregated metrics over all folds of a cross-validation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub rmse_mean: f64,
    pub rmse_sd: f64,
    pub zero_division_flagged: bool,
    pub per_fold: Vec<FoldMetrics>,
}

/// Score one fold's predictions against the held-out truth.
///
/// Macro averages run over all `n_classes` classes; a class with no
/// predictions contributes precision 0, one with no true members contributes
/// recall 0, and either case sets `zero_division_flagged`.
pub fn compute_metrics(
    true_c: &[u8],
    pred_c: &[u8],
    true_r: &[f64],
    pred_r: &[f64],
    n_classes: usize,
) -> Result<FoldMetrics> {
    let n = true_c.len();
    if pred_c.len() != n || true_r.len() != n || pred_r.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "metric inputs disagree: {} true classes, {} predicted classes, {} true responses, {} predicted responses",
            true_c.len(),
            pred_c.len(),
            true_r.len(),
            pred_r.len()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidData("cannot score an empty fold".into()));
    }
    for (what, vals) in [("true", true_c), ("predicted", pred_c)] {
        if let Some(&bad) = vals.iter().find(|&&c| c as usize >= n_classes) {
            return Err(Error::InvalidData(format!(
                "{what} class {bad} outside 0..{n_classes}"
            )));
        }
    }

    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&t, &p) in true_c.iter().zip(pred_c) {
        confusion[t as usize][p as usize] += 1;
    }
    let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
    let accuracy = correct as f64 / n as f64;

    let mut flagged = false;
    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    for c in 0..n_classes {
        let tp = confusion[c][c];
        let predicted: usize = (0..n_classes).map(|t| confusion[t][c]).sum();
        let actual: usize = confusion[c].iter().sum();
        if predicted == 0 {
            flagged = true;
        } else {
            precision_sum += tp as f64 / predicted as f64;
        }
        if actual == 0 {
            flagged = true;
        } else {
            recall_sum += tp as f64 / actual as f64;
        }
    }
    let precision_macro = precision_sum / n_classes as f64;
    let recall_macro = recall_sum / n_classes as f64;

    let sq_err: f64 = true_r
        .iter()
        .zip(pred_r)
        .map(|(t, p)| (t - p) * (t - p))
        .sum();
    let rmse = (sq_err / n as f64).sqrt();

    Ok(FoldMetrics {
        accuracy,
        precision_macro,
        recall_macro,
        rmse,
        zero_division_flagged: flagged,
    })
}

impl MetricsReport {
    /// Average fold metrics; RMSE additionally reports the sample standard
    /// deviation across folds (0 when there is a single fold).
    pub fn aggregate(per_fold: Vec<FoldMetrics>) -> Result<Self> {
        if per_fold.is_empty() {
            return Err(Error::InvalidData("no folds to aggregate".into()));
        }
        let k = per_fold.len() as f64;
        let mean = |f: fn(&FoldMetrics) -> f64| per_fold.iter().map(f).sum::<f64>() / k;
        let rmse_mean = mean(|m| m.rmse);
        let rmse_sd = if per_fold.len() > 1 {
            let ss: f64 = per_fold
                .iter()
                .map(|m| (m.rmse - rmse_mean) * (m.rmse - rmse_mean))
                .sum();
            (ss / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(MetricsReport {
            accuracy: mean(|m| m.accuracy),
            precision_macro: mean(|m| m.precision_macro),
            recall_macro: mean(|m| m.recall_macro),
            rmse_mean,
            rmse_sd,
            zero_division_flagged: per_fold.iter().any(|m| m.zero_division_flagged),
            per_fold,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize") + "\n"
    }
}
