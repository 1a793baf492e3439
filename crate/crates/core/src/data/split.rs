use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::Dataset;
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
    pub stratify: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            seed: 0,
            stratify: true,
        }
    }
}

/// Splits into `(train, test)`, preserving the original row order in both.
///
/// The test set holds `ceil(test_fraction · n)` rows. With stratification each
/// class receives `floor(test_fraction · n_c)` rows and the remaining slots go
/// to the classes with the largest fractional remainders.
pub fn stratified_split(d: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test_fraction must be in (0, 1), got {}",
            spec.test_fraction
        )));
    }
    let (neg, pos) = d.class_counts();
    if neg < 2 || pos < 2 {
        return Err(Error::InvalidArgument(format!(
            "each class needs at least 2 rows to split (negatives {neg}, positives {pos})"
        )));
    }
    let n = d.len();
    let n_test = ((spec.test_fraction * n as f64) - 1e-9).ceil() as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::InvalidArgument(format!(
            "test_fraction {} leaves an empty partition for {n} rows",
            spec.test_fraction
        )));
    }

    let mut rng = seed::rng(spec.seed);
    let mut test_idx: Vec<usize> = if spec.stratify {
        let classes: Vec<Vec<usize>> = (0..=1u8)
            .map(|c| (0..n).filter(|&i| d.labels()[i] == c).collect())
            .collect();
        let quotas: Vec<f64> = classes
            .iter()
            .map(|c| spec.test_fraction * c.len() as f64)
            .collect();
        let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut remaining = n_test.saturating_sub(counts.iter().sum());
        let mut order: Vec<usize> = (0..classes.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = quotas[a] - quotas[a].floor();
            let rb = quotas[b] - quotas[b].floor();
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        for &c in order.iter().cycle() {
            if remaining == 0 {
                break;
            }
            if counts[c] < classes[c].len() {
                counts[c] += 1;
                remaining -= 1;
            }
        }
        let mut picked = Vec::with_capacity(n_test);
        for (members, &k) in classes.iter().zip(&counts) {
            let mut m = members.clone();
            m.shuffle(&mut rng);
            picked.extend_from_slice(&m[..k]);
        }
        picked
    } else {
        index::sample(&mut rng, n, n_test).into_vec()
    };
    test_idx.sort_unstable();

    let mut in_test = vec![false; n];
    for &i in &test_idx {
        in_test[i] = true;
    }
    let train_idx: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
    Ok((d.select(&train_idx)?, d.select(&test_idx)?))
}

/// A seeded training subsample.
#[derive(Debug, Clone)]
pub struct Subsample {
    pub data: Dataset,
    /// Draws needed before both classes were present (1 = first draw).
    pub attempts: u32,
    /// Digest of the sorted member row ids.
    pub fingerprint: String,
}

const MAX_SUBSAMPLE_ATTEMPTS: u32 = 1000;

/// Uniform subset of `size` rows without replacement, redrawn with an
/// incremented attempt counter until both classes are present.
pub fn subsample_train(train: &Dataset, size: usize, seed: u64) -> Result<Subsample> {
    if size < 2 {
        return Err(Error::InvalidArgument(format!("subsample size must be at least 2, got {size}")));
    }
    if size > train.len() {
        return Err(Error::InvalidArgument(format!(
            "subsample size {size} exceeds {} available rows",
            train.len()
        )));
    }
    for attempt in 0..MAX_SUBSAMPLE_ATTEMPTS {
        let mut rng = seed::rng(seed::derive(seed, &[attempt as u64]));
        let mut idx = index::sample(&mut rng, train.len(), size).into_vec();
        idx.sort_unstable();
        let positives = idx.iter().filter(|&&i| train.labels()[i] == 1).count();
        if positives == 0 || positives == size {
            continue;
        }
        let data = train.select(&idx)?;
        let fingerprint = fingerprint_ids(data.row_ids());
        return Ok(Subsample {
            data,
            attempts: attempt + 1,
            fingerprint,
        });
    }
    let (neg, pos) = train.class_counts();
    Err(Error::SingleClass {
        positives: pos.min(size),
        negatives: neg.min(size),
    })
}

fn fingerprint_ids(ids: &[String]) -> String {
    let mut sorted: Vec<&str> = ids.iter().map(String::as_str).collect();
    sorted.sort_unstable();
    let mut h = Sha256::new();
    for id in sorted {
        h.update(id.as_bytes());
        h.update([0u8]);
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;
    use std::sync::Arc;

    use super::*;
    use crate::data::{FeatureSchema, FeatureSpec};

    fn toy(n: usize, positives: usize) -> Dataset {
        let schema = Arc::new(FeatureSchema::new("y", None, vec![FeatureSpec::ordinal("x", true)]).unwrap());
        Dataset::new(
            schema,
            (0..n).map(|i| vec![Some(i as f64)]).collect(),
            (0..n).map(|i| u8::from(i < positives)).collect(),
            (0..n).map(|i| format!("id{i}")).collect(),
        )
        .unwrap()
    }

    fn ids(d: &Dataset) -> BTreeSet<String> {
        d.row_ids().iter().cloned().collect()
    }

    #[test]
    fn ten_rows_half_positive() {
        let d = toy(10, 5);
        let (train, test) = stratified_split(&d, &SplitSpec { test_fraction: 0.2, seed: 3, stratify: true }).unwrap();
        assert_eq!(test.class_counts(), (1, 1));
        assert_eq!(train.len(), 8);
    }

    #[test]
    fn split_is_deterministic_and_a_partition() {
        let d = toy(57, 13);
        let spec = SplitSpec { test_fraction: 0.3, seed: 7, stratify: true };
        let (a_train, a_test) = stratified_split(&d, &spec).unwrap();
        let (b_train, b_test) = stratified_split(&d, &spec).unwrap();
        assert_eq!(ids(&a_test), ids(&b_test));
        assert_eq!(ids(&a_train), ids(&b_train));
        assert!(ids(&a_train).is_disjoint(&ids(&a_test)));
        assert_eq!(ids(&a_train).len() + ids(&a_test).len(), 57);
        let (neg, pos) = a_test.class_counts();
        assert!((pos as f64 - 0.3 * 13.0).abs() <= 1.0);
        assert!((neg as f64 - 0.3 * 44.0).abs() <= 1.0);
    }

    #[test]
    fn cohort_scale_test_size() {
        // 85,432 rows at 0.2 gives a 17,087 / 68,345 split.
        let n: usize = 85_432;
        let n_test = ((0.2 * n as f64) - 1e-9).ceil() as usize;
        assert_eq!(n_test, 17_087);
        assert_eq!(n - n_test, 68_345);
    }

    #[test]
    fn split_needs_two_per_class() {
        let d = toy(10, 1);
        assert!(stratified_split(&d, &SplitSpec::default()).is_err());
    }

    #[test]
    fn subsample_basics() {
        let d = toy(300, 100);
        let full = subsample_train(&d, 300, 1).unwrap();
        assert_eq!(ids(&full.data), ids(&d));

        let a = subsample_train(&d, 100, 1).unwrap();
        let a2 = subsample_train(&d, 100, 1).unwrap();
        let b = subsample_train(&d, 100, 2).unwrap();
        assert_eq!(ids(&a.data), ids(&a2.data));
        assert_eq!(a.fingerprint, a2.fingerprint);
        assert_ne!(ids(&a.data), ids(&b.data));
        assert_ne!(a.fingerprint, b.fingerprint);

        assert!(subsample_train(&d, 1, 0).is_err());
        assert!(subsample_train(&d, 301, 0).is_err());
    }

    #[test]
    fn subsample_redraws_until_both_classes() {
        // 2 positives in 200 rows: a size-3 draw is usually single-class.
        let d = toy(200, 2);
        let s = subsample_train(&d, 3, 11).unwrap();
        let (neg, pos) = s.data.class_counts();
        assert!(neg > 0 && pos > 0);
        assert!(s.attempts >= 1);
    }
}
