//! Per-location train/test splits.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::sweep::Dataset;
use super::HarnessError;
use crate::derive_seed;

/// Grid cell and height; heights compare by bit pattern.
pub type LocationKey = (u64, usize, usize);

pub fn location_key(grid_i: usize, grid_j: usize, height_m: f64) -> LocationKey {
    (height_m.to_bits(), grid_i, grid_j)
}

/// Test and train row indices, each ascending. Location groups are visited
/// in key order and group `g` samples with `derive_seed(seed, g)`.
pub fn split_indices(
    keys: &[LocationKey],
    test_per_location: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>), HarnessError> {
    let mut groups: BTreeMap<LocationKey, Vec<usize>> = BTreeMap::new();
    for (idx, k) in keys.iter().enumerate() {
        groups.entry(*k).or_default().push(idx);
    }
    let mut is_test = vec![false; keys.len()];
    for (g, (key, members)) in groups.iter().enumerate() {
        if members.len() < test_per_location {
            return Err(HarnessError::InsufficientRows {
                grid_i: key.1,
                grid_j: key.2,
                height_m: f64::from_bits(key.0),
                have: members.len(),
                need: test_per_location,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, g as u64));
        for pick in sample(&mut rng, members.len(), test_per_location) {
            is_test[members[pick]] = true;
        }
    }
    let test = (0..keys.len()).filter(|&i| is_test[i]).collect();
    let train = (0..keys.len()).filter(|&i| !is_test[i]).collect();
    Ok((test, train))
}

/// Uniformly draws `test_per_location` rows per (grid point, height) into
/// the test set. Returns `(train, test)`.
pub fn split(ds: &Dataset, test_per_location: usize, seed: u64) -> Result<(Dataset, Dataset), HarnessError> {
    let keys: Vec<LocationKey> = ds.rows.iter().map(|r| location_key(r.grid_i, r.grid_j, r.height_m)).collect();
    let (test, train) = split_indices(&keys, test_per_location, seed)?;
    let pick = |idx: Vec<usize>| Dataset { rows: idx.into_iter().map(|i| ds.rows[i]).collect() };
    Ok((pick(train), pick(test)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use crate::harness::sweep::DatasetRow;
    use crate::learn::Source;
    use crate::vision::FeatureVector;
    use proptest::prelude::*;

    fn ds(per: &[(usize, usize, f64, usize)]) -> Dataset {
        let mut rows = Vec::new();
        for &(i, j, h, n) in per {
            for k in 0..n {
                rows.push(DatasetRow {
                    features: FeatureVector([k as f64; 8]),
                    pose: Pose::nadir(i as f64, j as f64, h),
                    grid_i: i,
                    grid_j: j,
                    height_m: h,
                    source: Source::NoisySim,
                });
            }
        }
        Dataset { rows }
    }

    #[test]
    fn ten_rows_give_two_and_eight() {
        let d = ds(&[(0, 0, 1.3, 10), (0, 1, 1.3, 10), (0, 0, 1.66, 10)]);
        let (train, test) = split(&d, 2, 5).unwrap();
        assert_eq!((train.len(), test.len()), (24, 6));
        for key in [(0, 0, 1.3), (0, 1, 1.3), (0, 0, 1.66)] {
            let n = |s: &Dataset| {
                s.rows.iter().filter(|r| (r.grid_i, r.grid_j, r.height_m) == key).count()
            };
            assert_eq!((n(&train), n(&test)), (8, 2));
        }
    }

    #[test]
    fn zero_test_rows_and_shortfall() {
        let d = ds(&[(1, 1, 1.3, 3)]);
        let (train, test) = split(&d, 0, 1).unwrap();
        assert_eq!((train.len(), test.len()), (3, 0));
        assert!(matches!(split(&d, 4, 1), Err(HarnessError::InsufficientRows { have: 3, need: 4, .. })));
    }

    proptest! {
        #[test]
        fn split_is_a_partition(sizes in proptest::collection::vec(2usize..7, 1..6), t in 0usize..3, seed in any::<u64>()) {
            let spec: Vec<_> = sizes.iter().enumerate().map(|(k, &n)| (k % 3, k / 3, 1.3, n)).collect();
            let d = ds(&spec);
            let keys: Vec<_> = d.rows.iter().map(|r| location_key(r.grid_i, r.grid_j, r.height_m)).collect();
            let t = t.min(*sizes.iter().min().unwrap());
            let (test, train) = split_indices(&keys, t, seed).unwrap();
            let mut all: Vec<usize> = test.iter().chain(&train).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..d.len()).collect::<Vec<_>>());
            prop_assert_eq!(test.len(), t * sizes.len());
            prop_assert_eq!(split_indices(&keys, t, seed).unwrap(), (test, train));
        }
    }
}
