//! Stratified k-fold assignment: class proportions are preserved per fold
//! as closely as integer counts allow.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// One train/test split. Indices refer to rows of the full dataset.
#[derive(Debug, Clone)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// A complete stratified k-fold plan over one label vector.
#[derive(Debug, Clone)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub labels: Vec<u8>,
    pub folds: Vec<Fold>,
}

/// Split subjects into `k` stratified folds.
///
/// Within each class (ascending label order) the members are shuffled once,
/// then dealt round-robin: the i-th shuffled member goes to fold `i % k` as
/// test. Every class must have at least `k` members.
pub fn kfold_split(labels: &[u8], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!(
            "cross-validation needs k >= 2, got {k}"
        )));
    }
    if labels.is_empty() {
        return Err(Error::InvalidData("cannot split an empty dataset".into()));
    }
    let n_classes = *labels.iter().max().unwrap() as usize + 1;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &label) in labels.iter().enumerate() {
        members[label as usize].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_sets: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (class, class_members) in members.iter_mut().enumerate() {
        if !class_members.is_empty() && class_members.len() < k {
            return Err(Error::InvalidData(format!(
                "class {} has only {} members; k={} folds need at least {}",
                class,
                class_members.len(),
                k,
                k
            )));
        }
        class_members.shuffle(&mut rng);
        for (i, &row) in class_members.iter().enumerate() {
            test_sets[i % k].push(row);
        }
    }
    let folds = test_sets
        .into_iter()
        .map(|mut test| {
            test.sort_unstable();
            let in_test: std::collections::HashSet<usize> = test.iter().copied().collect();
            let train = (0..labels.len()).filter(|i| !in_test.contains(i)).collect();
            Fold { train, test }
        })
        .collect();
    Ok(FoldPlan {
        k,
        seed,
        labels: labels.to_vec(),
        folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn class_count(labels: &[u8], rows: &[usize], class: u8) -> usize {
        rows.iter().filter(|&&i| labels[i] == class).count()
    }

    #[test]
    fn ten_subjects_ten_folds_is_leave_one_out() {
        let labels = vec![0u8; 10];
        let plan = kfold_split(&labels, 10, 3).unwrap();
        assert_eq!(plan.folds.len(), 10);
        let mut seen = vec![false; 10];
        for fold in &plan.folds {
            assert_eq!(fold.test.len(), 1);
            assert_eq!(fold.train.len(), 9);
            assert!(!seen[fold.test[0]], "subject tested twice");
            seen[fold.test[0]] = true;
            assert!(!fold.train.contains(&fold.test[0]));
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn six_four_split_in_two_folds_keeps_three_two_per_fold() {
        // 6 of class A, 4 of class B, k=2: each fold tests 3 A's and 2 B's.
        let labels: Vec<u8> = [vec![0u8; 6], vec![1u8; 4]].concat();
        let plan = kfold_split(&labels, 2, 17).unwrap();
        for fold in &plan.folds {
            assert_eq!(class_count(&labels, &fold.test, 0), 3);
            assert_eq!(class_count(&labels, &fold.test, 1), 2);
            assert_eq!(class_count(&labels, &fold.train, 0), 3);
            assert_eq!(class_count(&labels, &fold.train, 1), 2);
        }
    }

    #[test]
    fn same_seed_gives_identical_folds() {
        let labels: Vec<u8> = (0..37).map(|i| (i % 3) as u8).collect();
        let a = kfold_split(&labels, 5, 99).unwrap();
        let b = kfold_split(&labels, 5, 99).unwrap();
        for (fa, fb) in a.folds.iter().zip(&b.folds) {
            assert_eq!(fa.test, fb.test);
            assert_eq!(fa.train, fb.train);
        }
        let c = kfold_split(&labels, 5, 100).unwrap();
        assert!(
            a.folds.iter().zip(&c.folds).any(|(fa, fc)| fa.test != fc.test),
            "different seeds should shuffle differently"
        );
    }

    #[test]
    fn folds_partition_the_rows() {
        for (n, k, seed) in [(23usize, 4usize, 1u64), (60, 5, 2), (11, 2, 3)] {
            let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
            let plan = kfold_split(&labels, k, seed).unwrap();
            let mut tested = vec![0usize; n];
            for fold in &plan.folds {
                for &i in &fold.test {
                    tested[i] += 1;
                }
                let mut all: Vec<usize> = fold.test.iter().chain(&fold.train).copied().collect();
                all.sort_unstable();
                assert_eq!(all, (0..n).collect::<Vec<_>>(), "n={n} k={k}");
            }
            assert!(tested.iter().all(|&t| t == 1), "each row tested exactly once");
        }
    }

    #[test]
    fn per_class_test_counts_differ_by_at_most_one() {
        let labels: Vec<u8> = [vec![0u8; 17], vec![1u8; 9], vec![2u8; 25]].concat();
        let plan = kfold_split(&labels, 4, 8).unwrap();
        for class in 0..3u8 {
            let counts: Vec<usize> = plan
                .folds
                .iter()
                .map(|f| class_count(&labels, &f.test, class))
                .collect();
            let lo = counts.iter().min().unwrap();
            let hi = counts.iter().max().unwrap();
            assert!(hi - lo <= 1, "class {class}: counts {counts:?}");
        }
    }

    #[test]
    fn class_smaller_than_k_is_rejected() {
        let labels: Vec<u8> = [vec![0u8; 10], vec![1u8; 2]].concat();
        let err = kfold_split(&labels, 3, 0).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("class 1"), "{msg}");
        assert!(msg.contains("2 members"), "{msg}");
    }
}
