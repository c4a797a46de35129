//! Column-wise z-normalization using training statistics only.
//!
//! Standard deviations use the sample convention (n-1 denominator).

use ndarray::Array2;

use crate::{Error, Result};

/// Per-column mean and sample standard deviation of a training block.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl ColumnStats {
    /// Estimate from `train`; errors on a zero-variance column, naming it.
    pub fn fit(train: &Array2<f64>, context: &str) -> Result<Self> {
        let n = train.nrows();
        if n < 2 {
            return Err(Error::InvalidData(format!(
                "{context}: need at least 2 rows to standardize, got {n}"
            )));
        }
        let mut mean = Vec::with_capacity(train.ncols());
        let mut sd = Vec::with_capacity(train.ncols());
        for (j, col) in train.columns().into_iter().enumerate() {
            let m = col.sum() / n as f64;
            let ss: f64 = col.iter().map(|&x| (x - m) * (x - m)).sum();
            let var = ss / (n - 1) as f64;
            if !(var > 0.0) {
                return Err(Error::InvalidData(format!(
                    "{context}: column f{j} has zero variance"
                )));
            }
            mean.push(m);
            sd.push(var.sqrt());
        }
        Ok(ColumnStats { mean, sd })
    }

    /// Standardize `block` in place with these statistics.
    pub fn apply(&self, block: &mut Array2<f64>) {
        for (j, mut col) in block.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.mean[j], self.sd[j]);
            col.mapv_inplace(|x| (x - m) / s);
        }
    }
}

/// Standardize `train` by its own columns and carry the same transform onto
/// `apply_to`.
pub fn znormalize(
    train: &Array2<f64>,
    apply_to: &Array2<f64>,
    context: &str,
) -> Result<(Array2<f64>, Array2<f64>, ColumnStats)> {
    if apply_to.ncols() != train.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "{context}: train has {} columns, apply_to has {}",
            train.ncols(),
            apply_to.ncols()
        )));
    }
    let stats = ColumnStats::fit(train, context)?;
    let mut train_out = train.clone();
    let mut apply_out = apply_to.clone();
    stats.apply(&mut train_out);
    stats.apply(&mut apply_out);
    Ok((train_out, apply_out, stats))
}
