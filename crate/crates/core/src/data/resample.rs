//! Stratified splitting and the over/under-sampling baselines.
//!
//! None of these fabricate feature values: every output row is a copy of an
//! input row.

use std::fmt;
use std::str::FromStr;

use super::encode::EncodedDataset;
use crate::math::RngState;
use crate::{Error, Result};

/// Train:test proportion, e.g. `5:1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitRatio {
    pub train: u32,
    pub test: u32,
}

impl SplitRatio {
    pub fn new(train: u32, test: u32) -> Result<Self> {
        if train == 0 || test == 0 {
            return Err(Error::InvalidArgument(format!(
                "split ratio parts must be >= 1, got {train}:{test}"
            )));
        }
        Ok(Self { train, test })
    }

    fn test_rows(&self, n: usize) -> usize {
        let total = (self.train + self.test) as f64;
        (n as f64 * self.test as f64 / total).round() as usize
    }
}

impl Default for SplitRatio {
    fn default() -> Self {
        Self { train: 5, test: 1 }
    }
}

impl FromStr for SplitRatio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("split ratio `{s}` is not of the form A:B"));
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let a = a.trim().parse().map_err(|_| bad())?;
        let b = b.trim().parse().map_err(|_| bad())?;
        Self::new(a, b)
    }
}

impl fmt::Display for SplitRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.train, self.test)
    }
}

/// Splits every class independently at `ratio`, then shuffles both halves.
///
/// Classes with fewer than two rows go entirely to the training side.
pub fn stratified_split(
    ds: &EncodedDataset,
    ratio: SplitRatio,
    rng: &mut RngState,
) -> (EncodedDataset, EncodedDataset) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut idx) in ds.indices_by_class().into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        if idx.len() < 2 {
            log::warn!(
                "class `{}` has {} row(s); keeping it in the training split",
                ds.class_names[class],
                idx.len()
            );
            train.extend(idx);
            continue;
        }
        rng.shuffle(&mut idx);
        let n_test = ratio.test_rows(idx.len());
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    rng.shuffle(&mut train);
    rng.shuffle(&mut test);
    (ds.subset(&train), ds.subset(&test))
}

/// Duplicates rows of smaller classes, sampling with replacement, until every
/// class has as many rows as the largest one.
pub fn oversample(ds: &EncodedDataset, rng: &mut RngState) -> Result<EncodedDataset> {
    let groups = ds.indices_by_class();
    if let Some(empty) = groups.iter().position(Vec::is_empty) {
        return Err(Error::EmptyClass(ds.class_names[empty].clone()));
    }
    let n_max = groups.iter().map(Vec::len).max().unwrap_or(0);
    let mut picked = Vec::with_capacity(n_max * groups.len());
    for idx in &groups {
        picked.extend_from_slice(idx);
        for _ in idx.len()..n_max {
            picked.push(idx[rng.index(idx.len())]);
        }
    }
    rng.shuffle(&mut picked);
    Ok(ds.subset(&picked))
}

/// Keeps a uniform sample without replacement of `n_min` rows per class, where
/// `n_min` is the smallest non-zero class size.
pub fn undersample(ds: &EncodedDataset, rng: &mut RngState) -> EncodedDataset {
    let groups = ds.indices_by_class();
    let n_min = groups
        .iter()
        .map(Vec::len)
        .filter(|&n| n > 0)
        .min()
        .unwrap_or(0);
    let mut picked = Vec::with_capacity(n_min * groups.len());
    for mut idx in groups.into_iter().filter(|g| !g.is_empty()) {
        // partial Fisher-Yates: the first n_min slots become the sample
        for i in 0..n_min {
            let j = i + rng.index(idx.len() - i);
            idx.swap(i, j);
        }
        picked.extend_from_slice(&idx[..n_min]);
    }
    rng.shuffle(&mut picked);
    ds.subset(&picked)
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;
    use crate::data::EncodedColumn;
    use crate::math::Matrix;

    /// Rows whose single feature is the row's original index.
    fn dataset(counts: &[usize]) -> EncodedDataset {
        let labels: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
            .collect();
        let n = labels.len();
        EncodedDataset::new(
            Matrix::from_vec(n, 1, (0..n).map(|i| i as f64).collect()).unwrap(),
            labels,
            (0..counts.len()).map(|c| format!("c{c}")).collect(),
            vec![EncodedColumn {
                name: "id".into(),
                numeric: true,
            }],
        )
        .unwrap()
    }

    fn ids(ds: &EncodedDataset) -> Vec<usize> {
        ds.features.as_slice().iter().map(|&v| v as usize).collect()
    }

    #[test]
    fn five_to_one_on_single_class() {
        let (train, test) = stratified_split(
            &dataset(&[600]),
            SplitRatio::default(),
            &mut RngState::new(1),
        );
        assert_eq!((train.len(), test.len()), (500, 100));
    }

    #[test]
    fn split_keeps_class_proportions_and_is_deterministic() {
        let ds = dataset(&[601, 59, 13, 1]);
        let (train, test) = stratified_split(&ds, SplitRatio::default(), &mut RngState::new(7));
        for (c, &n) in ds.class_counts().iter().enumerate() {
            let got = test.class_counts()[c] as f64;
            let want = if n < 2 { 0.0 } else { n as f64 / 6.0 };
            assert!((got - want).abs() <= 1.0, "class {c}: {got} vs {want}");
            assert_eq!(train.class_counts()[c] + test.class_counts()[c], n);
        }
        let again = stratified_split(&ds, SplitRatio::default(), &mut RngState::new(7));
        assert_eq!(ids(&train), ids(&again.0));
        assert_eq!(ids(&test), ids(&again.1));

        let mut all = ids(&train);
        all.extend(ids(&test));
        all.sort_unstable();
        assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
    }

    #[test]
    fn ratio_parsing() {
        assert_eq!("5:1".parse::<SplitRatio>().unwrap(), SplitRatio::default());
        assert!("5".parse::<SplitRatio>().is_err());
        assert!("0:1".parse::<SplitRatio>().is_err());
    }

    #[test]
    fn oversample_to_max() {
        let ds = dataset(&[100, 10, 5]);
        let out = oversample(&ds, &mut RngState::new(3)).unwrap();
        assert_eq!(out.class_counts(), vec![100, 100, 100]);
        assert_eq!(out.omega_imb().unwrap(), 0.0);
        // every original row is kept and features are copies
        let got = ids(&out);
        for i in 0..ds.len() {
            assert!(got.contains(&i));
        }
        for (&id, &y) in got.iter().zip(&out.labels) {
            assert_eq!(ds.labels[id], y);
        }
    }

    #[test]
    fn oversample_balanced_input_is_a_permutation() {
        let ds = dataset(&[4, 4]);
        let out = oversample(&ds, &mut RngState::new(3)).unwrap();
        let mut got = ids(&out);
        got.sort_unstable();
        assert_eq!(got, ids(&ds));
        assert!(matches!(
            oversample(&dataset(&[3, 0]), &mut RngState::new(1)),
            Err(Error::EmptyClass(_))
        ));
    }

    #[test]
    fn undersample_to_min_without_replacement() {
        let ds = dataset(&[100, 10, 5]);
        let out = undersample(&ds, &mut RngState::new(5));
        assert_eq!(out.class_counts(), vec![5, 5, 5]);
        assert_eq!(out.omega_imb().unwrap(), 0.0);
        let mut seen = HashMap::new();
        for (&id, &y) in ids(&out).iter().zip(&out.labels) {
            assert_eq!(ds.labels[id], y);
            assert!(seen.insert(id, ()).is_none(), "row {id} drawn twice");
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn resamplers_balance_exactly(
                counts in proptest::collection::vec(1usize..40, 2..6),
                seed in any::<u64>(),
            ) {
                let ds = dataset(&counts);
                let over = oversample(&ds, &mut RngState::new(seed)).unwrap();
                let under = undersample(&ds, &mut RngState::new(seed));
                prop_assert_eq!(over.omega_imb().unwrap(), 0.0);
                prop_assert_eq!(under.omega_imb().unwrap(), 0.0);
                for out in [&over, &under] {
                    for (&id, &y) in ids(out).iter().zip(&out.labels) {
                        prop_assert_eq!(ds.labels[id], y);
                    }
                }
            }
        }
    }
}
