//! Seeded random train/val/test splits over node or graph indices.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Disjoint train/val/test index sets, reproducible from the seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn total(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }
}

/// Splits `0..count` into train/val/test with sizes `floor(fraction*count)`
/// and the remainder assigned to test. With `stratify_by`, the same rule
/// applies within each label stratum so class proportions are preserved
/// within rounding; unlabeled entries form their own stratum.
pub fn split_random(
    count: usize,
    fractions: (f64, f64, f64),
    seed: u64,
    stratify_by: Option<&[Option<u32>]>,
) -> Result<SplitSpec> {
    let (ft, fv, fe) = fractions;
    if ft < 0.0 || fv < 0.0 || fe < 0.0 {
        return Err(Error::Validation("split fractions must be nonnegative".into()));
    }
    if ft + fv + fe > 1.0 + 1e-12 {
        return Err(Error::Validation(format!(
            "split fractions sum to {} > 1",
            ft + fv + fe
        )));
    }
    if let Some(labels) = stratify_by {
        if labels.len() != count {
            return Err(Error::Validation(format!(
                "stratify array has {} entries for {count} indices",
                labels.len()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();

    let mut split_stratum = |indices: &mut Vec<usize>, rng: &mut ChaCha8Rng| {
        indices.shuffle(rng);
        let n = indices.len();
        let n_train = (ft * n as f64).floor() as usize;
        let n_val = (fv * n as f64).floor() as usize;
        train.extend_from_slice(&indices[..n_train]);
        val.extend_from_slice(&indices[n_train..n_train + n_val]);
        test.extend_from_slice(&indices[n_train + n_val..]);
    };

    match stratify_by {
        None => {
            let mut all: Vec<usize> = (0..count).collect();
            split_stratum(&mut all, &mut rng);
        }
        Some(labels) => {
            // BTreeMap keeps stratum order deterministic
            let mut strata: BTreeMap<Option<u32>, Vec<usize>> = BTreeMap::new();
            for (i, &label) in labels.iter().enumerate() {
                strata.entry(label).or_default().push(i);
            }
            for (_, mut indices) in strata {
                split_stratum(&mut indices, &mut rng);
            }
        }
    }

    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitSpec { train, val, test, seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_follow_floor_rule() {
        let s = split_random(10, (0.1, 0.2, 0.7), 1, None).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (1, 2, 7));
    }

    #[test]
    fn equal_thirds_on_nine() {
        let third = 1.0 / 3.0;
        let s = split_random(9, (third, third, third), 2, None).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (3, 3, 3));
    }

    #[test]
    fn same_seed_identical() {
        let a = split_random(50, (0.2, 0.3, 0.5), 9, None).unwrap();
        let b = split_random(50, (0.2, 0.3, 0.5), 9, None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fraction_sum_above_one_rejected() {
        assert!(split_random(10, (0.6, 0.6, 0.0), 0, None).is_err());
    }

    #[test]
    fn stratified_preserves_class_proportions() {
        let labels: Vec<Option<u32>> = (0..90).map(|i| Some((i / 30) as u32)).collect();
        let s = split_random(90, (0.1, 0.2, 0.7), 4, Some(&labels)).unwrap();
        assert_eq!(s.train.len(), 9);
        assert_eq!(s.val.len(), 18);
        for class in 0..3u32 {
            let in_train = s.train.iter().filter(|&&i| labels[i] == Some(class)).count();
            assert_eq!(in_train, 3, "class {class}");
        }
    }

    #[test]
    fn partition_covers_everything_disjointly() {
        for seed in 0..5 {
            let s = split_random(37, (0.25, 0.25, 0.5), seed, None).unwrap();
            let mut all: Vec<usize> = s
                .train
                .iter()
                .chain(&s.val)
                .chain(&s.test)
                .copied()
                .collect();
            all.sort_unstable();
            assert_eq!(all, (0..37).collect::<Vec<_>>());
        }
    }
}
