//! Small dense linear-algebra helpers: orthonormalization, singular values of
//! small matrices, principal angles between subspaces, and greedy column
//! matching. Everything here targets matrices whose small dimension is the
//! number of latent factors (single digits), so simple iterative algorithms
//! are plenty.

use ndarray::{Array2, ArrayView2};

use crate::{Error, Result};

/// Orthonormalize the columns of `a` with modified Gram-Schmidt plus one
/// re-orthogonalization pass. Errors if the columns are numerically rank
/// deficient.
pub fn orthonormal_columns(a: ArrayView2<f64>) -> Result<Array2<f64>> {
    let (rows, cols) = a.dim();
    if cols > rows {
        return Err(Error::ShapeMismatch(format!(
            "cannot orthonormalize {cols} columns in {rows} dimensions"
        )));
    }
    let mut q = a.to_owned();
    for _pass in 0..2 {
        for j in 0..cols {
            for i in 0..j {
                let proj: f64 = q.column(i).dot(&q.column(j));
                let qi = q.column(i).to_owned();
                q.column_mut(j).zip_mut_with(&qi, |x, &y| *x -= proj * y);
            }
            let norm = q.column(j).dot(&q.column(j)).sqrt();
            if norm < 1e-12 {
                return Err(Error::Domain {
                    context: "orthonormal_columns",
                    message: format!("column {j} is numerically dependent on earlier columns"),
                });
            }
            q.column_mut(j).mapv_inplace(|x| x / norm);
        }
    }
    Ok(q)
}

/// Singular values of a small matrix, descending, via one-sided Jacobi
/// rotations on the columns.
pub fn singular_values(a: ArrayView2<f64>) -> Vec<f64> {
    // Work on the orientation with fewer columns.
    let (rows, cols) = a.dim();
    let mut m = if cols <= rows { a.to_owned() } else { a.t().to_owned() };
    let k = m.ncols();
    if k == 0 {
        return Vec::new();
    }
    for _sweep in 0..60 {
        let mut converged = true;
        for p in 0..k {
            for q in (p + 1)..k {
                let alpha: f64 = m.column(p).dot(&m.column(p));
                let beta: f64 = m.column(q).dot(&m.column(q));
                let gamma: f64 = m.column(p).dot(&m.column(q));
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt().max(f64::MIN_POSITIVE) {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let col_p = m.column(p).to_owned();
                let col_q = m.column(q).to_owned();
                m.column_mut(p).zip_mut_with(&col_q, |x, &y| *x = c * *x - s * y);
                m.column_mut(q)
                    .zip_mut_with(&col_p, |x, &y| *x = s * y + c * *x);
            }
        }
        if converged {
            break;
        }
    }
    let mut sv: Vec<f64> = (0..k)
        .map(|j| m.column(j).dot(&m.column(j)).sqrt())
        .collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

/// Principal angles (degrees, ascending) between the column spans of `a` and
/// `b`. Both must have the same number of rows and full column rank.
pub fn principal_angles_deg(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Vec<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "subspaces live in different dimensions: {} vs {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let qa = orthonormal_columns(a)?;
    let qb = orthonormal_columns(b)?;
    let m = qa.t().dot(&qb);
    let mut angles: Vec<f64> = singular_values(m.view())
        .into_iter()
        .map(|s| s.clamp(-1.0, 1.0).acos().to_degrees())
        .collect();
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(angles)
}

/// Greedily match each reference column to a distinct estimate column by
/// largest absolute cosine. Returns, per reference column, the matched
/// estimate column index and the signed cosine of the match.
pub fn match_columns_by_cosine(
    reference: ArrayView2<f64>,
    estimate: ArrayView2<f64>,
) -> Result<Vec<(usize, f64)>> {
    if reference.nrows() != estimate.nrows() || reference.ncols() > estimate.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "cannot match {}x{} reference against {}x{} estimate",
            reference.nrows(),
            reference.ncols(),
            estimate.nrows(),
            estimate.ncols()
        )));
    }
    let cosine = |i: usize, j: usize| -> f64 {
        let r = reference.column(i);
        let e = estimate.column(j);
        let denom = (r.dot(&r) * e.dot(&e)).sqrt();
        if denom < 1e-300 {
            0.0
        } else {
            r.dot(&e) / denom
        }
    };
    let k = reference.ncols();
    let mut taken = vec![false; estimate.ncols()];
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    // Rank all candidate pairs once, then take them best-first.
    let mut all: Vec<(usize, usize, f64)> = (0..k)
        .flat_map(|i| (0..estimate.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, cosine(i, j)))
        .collect();
    all.sort_by(|x, y| y.2.abs().partial_cmp(&x.2.abs()).unwrap());
    let mut matched = vec![false; k];
    for (i, j, c) in all {
        if !matched[i] && !taken[j] {
            matched[i] = true;
            taken[j] = true;
            pairs.push((i, j, c));
        }
    }
    pairs.sort_by_key(|&(i, _, _)| i);
    Ok(pairs.into_iter().map(|(_, j, c)| (j, c)).collect())
}
