//! Synthetic minority oversampling: every class is brought up to the
//! majority count by interpolating between same-class neighbors.
//!
//! Mixed feature types are handled by column role: the neighbor metric uses
//! only the standardized continuous columns, other numeric columns are
//! interpolated without influencing the metric, and discrete columns are
//! copied from the seed row.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// How one feature column participates in oversampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnRole {
    /// Enters the Euclidean neighbor metric and is interpolated.
    Distance,
    /// Interpolated between seed and neighbor, but excluded from the metric.
    Interpolate,
    /// Copied from the seed row verbatim (categorical / discrete codes).
    Copy,
}

/// Oversample every minority class to the majority count.
///
/// Synthetic rows are appended after the original rows, in deterministic
/// order for a given seed. Each synthetic row is `x + u * (nn - x)` with `u`
/// uniform on [0,1), `x` a class member (seeds cycle round-robin) and `nn`
/// one of its `k_neighbors` nearest same-class rows.
pub fn smote(
    features: &Array2<f64>,
    labels: &[u8],
    roles: &[ColumnRole],
    k_neighbors: usize,
    seed: u64,
) -> Result<(Array2<f64>, Vec<u8>)> {
    let n = features.nrows();
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} rows but {} labels",
            n,
            labels.len()
        )));
    }
    if roles.len() != features.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "{} columns but {} column roles",
            features.ncols(),
            roles.len()
        )));
    }
    if k_neighbors == 0 {
        return Err(Error::InvalidConfig("k_neighbors must be positive".into()));
    }
    let max_label = labels.iter().copied().max().ok_or_else(|| {
        Error::InvalidData("cannot oversample an empty dataset".into())
    })?;
    let n_classes = max_label as usize + 1;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &label) in labels.iter().enumerate() {
        members[label as usize].push(i);
    }
    let majority = members.iter().map(Vec::len).max().unwrap();

    let metric_cols: Vec<usize> = roles
        .iter()
        .enumerate()
        .filter(|(_, &r)| r == ColumnRole::Distance)
        .map(|(j, _)| j)
        .collect();
    if metric_cols.is_empty() {
        return Err(Error::InvalidConfig(
            "oversampling needs at least one distance column".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut synthetic: Vec<Vec<f64>> = Vec::new();
    let mut synthetic_labels: Vec<u8> = Vec::new();

    for (class, class_members) in members.iter().enumerate() {
        let deficit = majority - class_members.len();
        if deficit == 0 || class_members.is_empty() {
            continue;
        }
        if class_members.len() <= k_neighbors {
            return Err(Error::InvalidData(format!(
                "class {} has {} members; oversampling with k={} needs more than {}",
                class,
                class_members.len(),
                k_neighbors,
                k_neighbors
            )));
        }
        // k nearest same-class neighbors per member, ties broken by row order.
        let neighbors: Vec<Vec<usize>> = class_members
            .iter()
            .map(|&i| {
                let mut dists: Vec<(f64, usize)> = class_members
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| {
                        let d2: f64 = metric_cols
                            .iter()
                            .map(|&c| {
                                let d = features[(i, c)] - features[(j, c)];
                                d * d
                            })
                            .sum();
                        (d2, j)
                    })
                    .collect();
                dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                dists.truncate(k_neighbors);
                dists.into_iter().map(|(_, j)| j).collect()
            })
            .collect();

        for t in 0..deficit {
            let seed_pos = t % class_members.len();
            let seed_row = class_members[seed_pos];
            let nn_row = neighbors[seed_pos][rng.random_range(0..k_neighbors)];
            let u: f64 = rng.random();
            let row: Vec<f64> = (0..features.ncols())
                .map(|c| {
                    let x = features[(seed_row, c)];
                    match roles[c] {
                        ColumnRole::Copy => x,
                        _ => x + u * (features[(nn_row, c)] - x),
                    }
                })
                .collect();
            synthetic.push(row);
            synthetic_labels.push(class as u8);
        }
    }

    let total = n + synthetic.len();
    let mut out = Array2::zeros((total, features.ncols()));
    out.slice_mut(ndarray::s![..n, ..]).assign(features);
    for (r, row) in synthetic.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            out[(n + r, c)] = v;
        }
    }
    let mut out_labels = labels.to_vec();
    out_labels.extend(synthetic_labels);
    Ok((out, out_labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_block(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn class_counts_equalize_to_the_majority() {
        let features = random_block(160, 4, 1);
        let mut labels = vec![0u8; 100];
        labels.extend(vec![1u8; 40]);
        labels.extend(vec![2u8; 20]);
        let roles = vec![ColumnRole::Distance; 4];
        let (aug, aug_labels) = smote(&features, &labels, &roles, 5, 9).unwrap();
        assert_eq!(aug.nrows(), 300);
        for class in 0..3u8 {
            assert_eq!(
                aug_labels.iter().filter(|&&l| l == class).count(),
                100,
                "class {class}"
            );
        }
        // Original rows come through untouched, in order.
        for i in 0..160 {
            assert_eq!(aug_labels[i], labels[i]);
            for c in 0..4 {
                assert_eq!(aug[(i, c)], features[(i, c)]);
            }
        }
    }

    #[test]
    fn balanced_input_passes_through_unchanged() {
        let features = random_block(30, 3, 2);
        let labels: Vec<u8> = (0..30).map(|i| (i % 3) as u8).collect();
        let roles = vec![ColumnRole::Distance; 3];
        let (aug, aug_labels) = smote(&features, &labels, &roles, 3, 5).unwrap();
        assert_eq!(aug, features);
        assert_eq!(aug_labels, labels);
    }

    #[test]
    fn two_member_class_interpolates_on_the_segment() {
        // Majority class of 40; minority of exactly 2 with k=1: every
        // synthetic point must lie on the segment between the two members.
        let mut features = random_block(42, 3, 3);
        let a = [0.0, 1.0, -2.0];
        let b = [4.0, -1.0, 2.0];
        for c in 0..3 {
            features[(40, c)] = a[c];
            features[(41, c)] = b[c];
        }
        let mut labels = vec![0u8; 40];
        labels.extend([1u8, 1u8]);
        let roles = vec![ColumnRole::Distance; 3];
        let (aug, aug_labels) = smote(&features, &labels, &roles, 1, 7).unwrap();
        assert_eq!(aug.nrows(), 80);
        let ab: Vec<f64> = (0..3).map(|c| b[c] - a[c]).collect();
        let ab_norm2: f64 = ab.iter().map(|d| d * d).sum();
        for r in 42..80 {
            assert_eq!(aug_labels[r], 1);
            // Residual after projecting (p - a) onto (b - a).
            let pa: Vec<f64> = (0..3).map(|c| aug[(r, c)] - a[c]).collect();
            let t: f64 = pa.iter().zip(&ab).map(|(x, y)| x * y).sum::<f64>() / ab_norm2;
            assert!((-1e-12..=1.0 + 1e-12).contains(&t), "t = {t} off-segment");
            let res2: f64 = (0..3)
                .map(|c| {
                    let r = pa[c] - t * ab[c];
                    r * r
                })
                .sum();
            assert!(res2.sqrt() < 1e-10, "residual {}", res2.sqrt());
        }
    }

    #[test]
    fn copy_columns_keep_the_seed_value() {
        // Discrete column holds a distinct code per row; synthetic rows must
        // carry exactly their seed's code, never an interpolated value.
        let mut features = random_block(13, 3, 4);
        for i in 0..13 {
            features[(i, 2)] = i as f64 * 10.0;
        }
        let mut labels = vec![0u8; 10];
        labels.extend(vec![1u8; 3]);
        let roles = vec![ColumnRole::Distance, ColumnRole::Distance, ColumnRole::Copy];
        let (aug, _) = smote(&features, &labels, &roles, 2, 11).unwrap();
        // Seeds cycle round-robin over the three minority rows 10, 11, 12.
        for (t, r) in (13..20).enumerate() {
            let expected_seed = 10 + (t % 3);
            assert_eq!(
                aug[(r, 2)],
                expected_seed as f64 * 10.0,
                "synthetic row {r} should copy from row {expected_seed}"
            );
        }
    }

    #[test]
    fn interpolate_columns_do_not_drive_neighbor_choice() {
        // Three minority points on a line; the response column would pick a
        // different neighbor if it entered the metric.
        let mut features = Array2::zeros((13, 2));
        let mut labels = vec![0u8; 10];
        for i in 0..10 {
            features[(i, 0)] = 100.0 + i as f64;
        }
        // Minority: A at x=0 (r huge), B at x=0.1 (r=0), C at x=10 (r huge).
        features[(10, 0)] = 0.0;
        features[(10, 1)] = 1e6;
        features[(11, 0)] = 0.1;
        features[(11, 1)] = 0.0;
        features[(12, 0)] = 10.0;
        features[(12, 1)] = 1e6 + 0.1;
        labels.extend(vec![1u8; 3]);
        let roles = vec![ColumnRole::Distance, ColumnRole::Interpolate];
        let (aug, _) = smote(&features, &labels, &roles, 1, 13).unwrap();
        for r in 13..aug.nrows() {
            let x = aug[(r, 0)];
            // Every seed's nearest neighbor under the x-only metric is within
            // [0, 10]; seed A must interpolate toward B (x in [0, 0.1]), and
            // no synthetic point may land between B and C's far response
            // values unless x moved correspondingly.
            if x <= 0.1 {
                // Came from A toward B (or B toward A): response interpolates
                // between 1e6 and 0 linearly with the same u as x.
                let u = (aug[(r, 0)] - 0.0) / 0.1;
                let from_a = (aug[(r, 1)] - (1.0 - u) * 1e6).abs() < 1e-3;
                let u_b = (0.1 - aug[(r, 0)]) / 0.1;
                let from_b = (aug[(r, 1)] - u_b * 1e6).abs() < 1e-3;
                assert!(
                    from_a || from_b,
                    "row {r}: x {x}, response {} inconsistent with A-B interpolation",
                    aug[(r, 1)]
                );
            } else {
                // Came from C: its metric neighbor is B, so x lies in
                // (0.1, 10] and the response interpolates toward 0.
                assert!(x <= 10.0 + 1e-12, "row {r} x {x}");
            }
        }
    }

    #[test]
    fn tiny_class_is_rejected_with_its_id() {
        let features = random_block(12, 2, 5);
        let mut labels = vec![0u8; 10];
        labels.extend(vec![2u8; 2]);
        let roles = vec![ColumnRole::Distance; 2];
        let err = smote(&features, &labels, &roles, 2, 1).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("class 2"), "{msg}");
        assert!(msg.contains("2 members"), "{msg}");
    }

    #[test]
    fn same_seed_reproduces_the_augmentation() {
        let features = random_block(50, 3, 6);
        let labels: Vec<u8> = (0..50).map(|i| u8::from(i >= 35)).collect();
        let roles = vec![ColumnRole::Distance; 3];
        let (a, la) = smote(&features, &labels, &roles, 4, 21).unwrap();
        let (b, lb) = smote(&features, &labels, &roles, 4, 21).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        let (c, _) = smote(&features, &labels, &roles, 4, 22).unwrap();
        assert_ne!(a, c);
    }
}
