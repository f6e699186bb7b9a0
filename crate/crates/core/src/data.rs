//! In-memory datasets: missing-value imputation, split assignment,
//! train-split min-max scaling and synthetic data with planted features.
//!
//! Parsing and writing files lives in the `ipcae` crate; everything here is
//! pure and works on values already in memory.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::Task;
use crate::tensor::{Rng, Shape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Fractions of each class (or of all rows, when unlabeled) sent to the
/// train and validation splits; the remainder is the test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.7,
            val: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let ok = self.train > 0.0 && self.val > 0.0 && self.train + self.val < 1.0;
        if !ok {
            return Err(Error::config(format!(
                "split ratios need train > 0, val > 0 and train + val < 1, got {} / {}",
                self.train, self.val
            )));
        }
        Ok(())
    }
}

/// Feature matrix with optional labels and split assignment.
///
/// Missing cells are tracked in `missing` (row-major, same layout as `x`)
/// and hold NaN in `x` until imputed.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Tensor,
    pub missing: Vec<bool>,
    pub labels: Option<Vec<usize>>,
    /// Original label values, indexed by class.
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
    /// Per-row split; empty until assigned.
    pub splits: Vec<Split>,
}

impl Dataset {
    /// Complete dataset (no missing cells, no splits) with generated
    /// feature names `x0, x1, ...`.
    pub fn new(x: Tensor, labels: Option<Vec<usize>>) -> Result<Self> {
        let (n, d) = (x.rows(), x.cols());
        if x.shape().rank() != 2 {
            return Err(Error::Data(format!(
                "feature matrix must be 2-d, got {}",
                x.shape()
            )));
        }
        let class_names = match &labels {
            Some(y) => {
                if y.len() != n {
                    return Err(Error::Data(format!("{} labels for {} rows", y.len(), n)));
                }
                let c = y.iter().max().map_or(0, |m| m + 1);
                (0..c).map(|i| format!("{i}")).collect()
            }
            None => Vec::new(),
        };
        Ok(Dataset {
            missing: vec![false; n * d],
            labels,
            class_names,
            feature_names: (0..d).map(|j| format!("x{j}")).collect(),
            splits: Vec::new(),
            x,
        })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    pub fn num_classes(&self) -> usize {
        match &self.labels {
            Some(y) => self
                .class_names
                .len()
                .max(y.iter().max().map_or(0, |m| m + 1)),
            None => 0,
        }
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|&m| m)
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.missing[row * self.d() + col]
    }

    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        (0..self.splits.len())
            .filter(|&i| self.splits[i] == split)
            .collect()
    }

    /// Features of one split, in row order.
    pub fn features(&self, split: Split) -> Tensor {
        self.x.gather_rows(&self.split_indices(split))
    }

    pub fn split_labels(&self, split: Split) -> Option<Vec<usize>> {
        let y = self.labels.as_ref()?;
        Some(
            self.split_indices(split)
                .into_iter()
                .map(|i| y[i])
                .collect(),
        )
    }

    /// Checks the structural invariants and that every split is non-empty.
    pub fn validate_for_training(&self) -> Result<()> {
        if self.has_missing() || !self.x.is_finite() {
            return Err(Error::Data(
                "dataset has missing or non-finite values; impute first".into(),
            ));
        }
        if self.splits.len() != self.n() {
            return Err(Error::Data("splits are not assigned".into()));
        }
        for split in [Split::Train, Split::Val, Split::Test] {
            if !self.splits.contains(&split) {
                return Err(Error::config(format!("{split:?} split is empty")));
            }
        }
        Ok(())
    }

    /// Reorders rows; labels, masks and splits move with their rows.
    pub fn permute_rows(&self, order: &[usize]) -> Dataset {
        let d = self.d();
        let mut out = self.clone();
        out.x = self.x.gather_rows(order);
        out.missing = order
            .iter()
            .flat_map(|&i| self.missing[i * d..(i + 1) * d].iter().copied())
            .collect();
        out.labels = self
            .labels
            .as_ref()
            .map(|y| order.iter().map(|&i| y[i]).collect());
        if !self.splits.is_empty() {
            out.splits = order.iter().map(|&i| self.splits[i]).collect();
        }
        out
    }

    /// Reorders columns so that new column `j` is old column `order[j]`.
    pub fn permute_features(&self, order: &[usize]) -> Dataset {
        let (n, d) = (self.n(), self.d());
        let mut out = self.clone();
        for i in 0..n {
            for (j, &src) in order.iter().enumerate() {
                out.x.set(i, j, self.x.get(i, src));
                out.missing[i * d + j] = self.missing[i * d + src];
            }
        }
        out.feature_names = order
            .iter()
            .map(|&src| self.feature_names[src].clone())
            .collect();
        out
    }
}

/// Fills each missing cell with the mean of the observed values of its
/// feature within the same class. A (class, feature) pair with no
/// observations falls back to the feature's global mean; one message per
/// fallback is returned.
pub fn impute_class_mean(ds: &Dataset) -> Result<(Dataset, Vec<String>)> {
    if !ds.has_missing() {
        return Ok((ds.clone(), Vec::new()));
    }
    let Some(labels) = ds.labels.as_ref() else {
        return Err(Error::config(
            "class-mean imputation needs labels; use global-mean imputation for unlabeled data",
        ));
    };
    let (n, d) = (ds.n(), ds.d());
    let c = ds.num_classes();
    let global = global_means(ds)?;
    let mut sums = vec![0.0; c * d];
    let mut counts = vec![0usize; c * d];
    for i in 0..n {
        for j in 0..d {
            if !ds.is_missing(i, j) {
                sums[labels[i] * d + j] += ds.x.get(i, j);
                counts[labels[i] * d + j] += 1;
            }
        }
    }
    let mut warnings = Vec::new();
    let mut fill = vec![0.0; c * d];
    for k in 0..c {
        for j in 0..d {
            let at = k * d + j;
            fill[at] = if counts[at] > 0 {
                sums[at] / counts[at] as f64
            } else {
                let class = ds
                    .class_names
                    .get(k)
                    .cloned()
                    .unwrap_or_else(|| format!("{k}"));
                let feature = &ds.feature_names[j];
                let any_missing = (0..n).any(|i| labels[i] == k && ds.is_missing(i, j));
                if any_missing {
                    warnings.push(format!(
                        "feature {feature} has no observed values in class {class}; using the global mean"
                    ));
                }
                global[j]
            };
        }
    }
    let mut out = ds.clone();
    for i in 0..n {
        for j in 0..d {
            if ds.is_missing(i, j) {
                out.x.set(i, j, fill[labels[i] * d + j]);
            }
        }
    }
    out.missing.iter_mut().for_each(|m| *m = false);
    Ok((out, warnings))
}

/// Fills each missing cell with its feature's mean over all observed rows.
pub fn impute_global_mean(ds: &Dataset) -> Result<Dataset> {
    if !ds.has_missing() {
        return Ok(ds.clone());
    }
    let global = global_means(ds)?;
    let mut out = ds.clone();
    for i in 0..ds.n() {
        for j in 0..ds.d() {
            if ds.is_missing(i, j) {
                out.x.set(i, j, global[j]);
            }
        }
    }
    out.missing.iter_mut().for_each(|m| *m = false);
    Ok(out)
}

fn global_means(ds: &Dataset) -> Result<Vec<f64>> {
    (0..ds.d())
        .map(|j| {
            let (sum, count) = (0..ds.n())
                .filter(|&i| !ds.is_missing(i, j))
                .fold((0.0, 0usize), |(s, c), i| (s + ds.x.get(i, j), c + 1));
            if count == 0 {
                Err(Error::Data(format!(
                    "feature {} has no observed values",
                    ds.feature_names[j]
                )))
            } else {
                Ok(sum / count as f64)
            }
        })
        .collect()
}

/// Assigns rows to train/val/test by a seeded shuffle. Labeled data is
/// split per class so each class appears in every split when it has
/// enough rows.
pub fn assign_splits(ds: &Dataset, ratios: SplitRatios, seed: u64) -> Result<Dataset> {
    ratios.validate()?;
    let mut rng = Rng::new(seed);
    let groups: Vec<Vec<usize>> = match &ds.labels {
        Some(y) => (0..ds.num_classes())
            .map(|k| (0..ds.n()).filter(|&i| y[i] == k).collect())
            .collect(),
        None => vec![(0..ds.n()).collect()],
    };
    let mut splits = vec![Split::Train; ds.n()];
    for mut rows in groups {
        rng.shuffle(&mut rows);
        let m = rows.len();
        let n_train = libm::round(ratios.train * m as f64) as usize;
        let n_val = (libm::round(ratios.val * m as f64) as usize).min(m - n_train);
        for (pos, &i) in rows.iter().enumerate() {
            splits[i] = if pos < n_train {
                Split::Train
            } else if pos < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    let mut out = ds.clone();
    out.splits = splits;
    Ok(out)
}

/// Per-feature minimum and maximum over the train split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ScaleStats {
    pub fn fit(ds: &Dataset) -> Result<Self> {
        let rows = ds.split_indices(Split::Train);
        if rows.is_empty() {
            return Err(Error::config(
                "train split is empty; cannot compute scaling statistics",
            ));
        }
        let d = ds.d();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for &i in &rows {
            for j in 0..d {
                let v = ds.x.get(i, j);
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(ScaleStats { min, max })
    }

    /// `(x - min) / (max - min)` per feature; constant columns map to 0.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.min.len() {
            return Err(Error::shape(
                "minmax_scale",
                x.shape(),
                Shape::Vector(self.min.len()),
            ));
        }
        let mut out = x.clone();
        for i in 0..x.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                let range = self.max[j] - self.min[j];
                *v = if range > 0.0 {
                    (*v - self.min[j]) / range
                } else {
                    0.0
                };
            }
        }
        Ok(out)
    }
}

/// Min-max scaling with statistics from the train split only.
pub fn minmax_scale(ds: &Dataset) -> Result<(Dataset, ScaleStats)> {
    let stats = ScaleStats::fit(ds)?;
    let mut out = ds.clone();
    out.x = stats.apply(&ds.x)?;
    Ok((out, stats))
}

/// Recipe for a synthetic dataset with a known informative feature set.
///
/// Classification: `classes` classes drawn uniformly; on informative
/// feature `j` class `c` has mean `separation * ((c + j) mod classes)`, so
/// every informative feature separates every pair of classes. All features
/// get `N(0, noise²)` noise; the rest carry nothing else.
///
/// Reconstruction: `k_true` independent standard normal signals; every
/// other column is a fixed random linear mixture of them plus
/// `N(0, noise²)`.
///
/// Columns are randomly permuted so the informative set is scattered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub task: Task,
    pub n: usize,
    pub d: usize,
    pub k_true: usize,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_classes() -> usize {
    2
}

fn default_noise() -> f64 {
    1.0
}

fn default_separation() -> f64 {
    3.0
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 || self.k_true == 0 {
            return Err(Error::config("synthetic spec needs n, d and k_true > 0"));
        }
        if self.k_true > self.d {
            return Err(Error::config(format!(
                "k_true = {} exceeds the number of features d = {}",
                self.k_true, self.d
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite() && self.separation.is_finite()) {
            return Err(Error::config("noise must be finite and non-negative"));
        }
        if self.task == Task::Classification && self.classes < 2 {
            return Err(Error::config("classification needs at least 2 classes"));
        }
        Ok(())
    }
}

/// A generated dataset and its informative feature set (sorted).
#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub planted: Vec<usize>,
}

impl Synthetic {
    /// Applies a column permutation (`new j ← old order[j]`) and maps the
    /// planted set along with it.
    pub fn permute_features(&self, order: &[usize]) -> Synthetic {
        let mut planted: Vec<usize> = (0..order.len())
            .filter(|j| self.planted.contains(&order[*j]))
            .collect();
        planted.sort_unstable();
        Synthetic {
            dataset: self.dataset.permute_features(order),
            planted,
        }
    }
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Synthetic> {
    spec.validate()?;
    let (n, d, k) = (spec.n, spec.d, spec.k_true);
    let mut rng = Rng::new(spec.seed);
    let mut x = Tensor::zeros(Shape::Matrix(n, d));
    let labels = match spec.task {
        Task::Classification => {
            let c = spec.classes;
            let y: Vec<usize> = (0..n).map(|_| rng.below(c)).collect();
            for i in 0..n {
                for j in 0..d {
                    let mean = if j < k {
                        spec.separation * ((y[i] + j) % c) as f64
                    } else {
                        0.0
                    };
                    x.set(i, j, mean + spec.noise * rng.normal());
                }
            }
            Some(y)
        }
        Task::Reconstruction => {
            let scale = 1.0 / libm::sqrt(k as f64);
            let mix: Vec<f64> = (0..k * (d - k)).map(|_| scale * rng.normal()).collect();
            for i in 0..n {
                for j in 0..k {
                    x.set(i, j, rng.normal());
                }
                for m in 0..d - k {
                    let signal: f64 = (0..k).map(|j| x.get(i, j) * mix[j * (d - k) + m]).sum();
                    x.set(i, k + m, signal + spec.noise * rng.normal());
                }
            }
            None
        }
    };
    let mut dataset = Dataset::new(x, labels)?;
    if spec.task == Task::Classification {
        dataset.class_names = (0..spec.classes).map(|c| format!("{c}")).collect();
    }
    let raw = Synthetic {
        dataset,
        planted: (0..k).collect(),
    };
    let order = rng.permutation(d);
    Ok(raw.permute_features(&order))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn with_missing(rows: &[&[Option<f64>]], labels: Option<Vec<usize>>) -> Dataset {
        let n = rows.len();
        let d = rows[0].len();
        let data: Vec<f64> = rows
            .iter()
            .flat_map(|r| r.iter().map(|v| v.unwrap_or(f64::NAN)))
            .collect();
        let mut ds = Dataset::new(Tensor::matrix(n, d, data).unwrap(), labels).unwrap();
        ds.missing = rows
            .iter()
            .flat_map(|r| r.iter().map(Option::is_none))
            .collect();
        ds
    }

    #[test]
    fn class_mean_fills_within_class() {
        let ds = with_missing(
            &[&[Some(2.0)], &[None], &[Some(4.0)], &[Some(100.0)]],
            Some(vec![0, 0, 0, 1]),
        );
        let (out, warnings) = impute_class_mean(&ds).unwrap();
        assert_eq!(out.x.data(), &[2.0, 3.0, 4.0, 100.0]);
        assert!(warnings.is_empty() && !out.has_missing());
    }

    #[test]
    fn no_missing_is_unchanged() {
        let ds = Dataset::new(Tensor::from_rows(&[&[1.0, 2.0]]), Some(vec![0])).unwrap();
        assert_eq!(impute_class_mean(&ds).unwrap().0, ds);
    }

    #[test]
    fn empty_class_column_uses_global_mean() {
        let ds = with_missing(
            &[
                &[Some(1.0), None],
                &[Some(3.0), None],
                &[Some(5.0), Some(6.0)],
                &[Some(7.0), Some(10.0)],
            ],
            Some(vec![0, 0, 1, 1]),
        );
        let (out, warnings) = impute_class_mean(&ds).unwrap();
        assert_eq!(out.x.get(0, 1), 8.0);
        assert_eq!(out.x.get(1, 1), 8.0);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("x1"));
    }

    #[test]
    fn unlabeled_missing_points_to_global_mode() {
        let ds = with_missing(&[&[Some(1.0)], &[None]], None);
        let err = impute_class_mean(&ds).unwrap_err().to_string();
        assert!(err.contains("global-mean"));
        assert_eq!(impute_global_mean(&ds).unwrap().x.data(), &[1.0, 1.0]);
    }

    fn splits_of(ds: Dataset, splits: Vec<Split>) -> Dataset {
        Dataset { splits, ..ds }
    }

    #[test]
    fn minmax_cases() {
        let ds = Dataset::new(
            Tensor::from_rows(&[&[0.0, 4.0], &[10.0, 4.0], &[5.0, 9.0], &[20.0, 1.0]]),
            None,
        )
        .unwrap();
        let ds = splits_of(
            ds,
            vec![Split::Train, Split::Train, Split::Val, Split::Test],
        );
        let (out, stats) = minmax_scale(&ds).unwrap();
        assert_eq!(stats.min, vec![0.0, 4.0]);
        assert_eq!(out.x.get(2, 0), 0.5);
        assert_eq!(out.x.get(3, 0), 2.0);
        for i in 0..4 {
            assert_eq!(out.x.get(i, 1), 0.0);
        }
    }

    #[test]
    fn empty_train_split_is_rejected() {
        let ds = Dataset::new(Tensor::from_rows(&[&[0.0]]), None).unwrap();
        let ds = splits_of(ds, vec![Split::Test]);
        assert!(matches!(minmax_scale(&ds), Err(Error::Config(_))));
    }

    #[test]
    fn splits_are_stratified_and_seeded() {
        let y: Vec<usize> = (0..200).map(|i| usize::from(i % 10 == 0)).collect();
        let ds = Dataset::new(Tensor::zeros(Shape::Matrix(200, 1)), Some(y)).unwrap();
        let a = assign_splits(&ds, SplitRatios::default(), 5).unwrap();
        assert_eq!(a, assign_splits(&ds, SplitRatios::default(), 5).unwrap());
        assert_ne!(
            a.splits,
            assign_splits(&ds, SplitRatios::default(), 6)
                .unwrap()
                .splits
        );
        let count = |split, class| {
            (0..200)
                .filter(|&i| a.splits[i] == split && a.labels.as_ref().unwrap()[i] == class)
                .count()
        };
        assert_eq!(
            (
                count(Split::Train, 1),
                count(Split::Val, 1),
                count(Split::Test, 1)
            ),
            (14, 2, 4)
        );
        assert_eq!(
            (
                count(Split::Train, 0),
                count(Split::Val, 0),
                count(Split::Test, 0)
            ),
            (126, 18, 36)
        );
        a.validate_for_training().unwrap();
    }

    #[test]
    fn synthetic_rejects_k_above_d() {
        let spec = SyntheticSpec {
            task: Task::Reconstruction,
            n: 10,
            d: 3,
            k_true: 4,
            classes: 2,
            noise: 0.1,
            separation: 3.0,
            seed: 0,
        };
        assert!(matches!(gen_synthetic(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn noiseless_classes_are_constant_on_planted_features() {
        let spec = SyntheticSpec {
            task: Task::Classification,
            n: 60,
            d: 8,
            k_true: 3,
            classes: 3,
            noise: 0.0,
            separation: 3.0,
            seed: 4,
        };
        let syn = gen_synthetic(&spec).unwrap();
        let y = syn.dataset.labels.as_ref().unwrap();
        assert_eq!(syn.planted.len(), 3);
        for i in 0..60 {
            for j in 0..8 {
                let v = syn.dataset.x.get(i, j);
                if !syn.planted.contains(&j) {
                    assert_eq!(v, 0.0);
                }
            }
            // rows of the same class coincide on the planted set, rows of
            // different classes differ on every planted feature
            for i2 in 0..60 {
                for &j in &syn.planted {
                    let same = syn.dataset.x.get(i, j) == syn.dataset.x.get(i2, j);
                    assert_eq!(same, y[i] == y[i2]);
                }
            }
        }
    }

    #[test]
    fn permuting_features_moves_planted_set() {
        let spec = SyntheticSpec {
            task: Task::Reconstruction,
            n: 5,
            d: 6,
            k_true: 2,
            classes: 2,
            noise: 0.1,
            separation: 3.0,
            seed: 9,
        };
        let syn = gen_synthetic(&spec).unwrap();
        let order = [5, 4, 3, 2, 1, 0];
        let p = syn.permute_features(&order);
        let want: Vec<usize> = {
            let mut v: Vec<usize> = syn.planted.iter().map(|&j| 5 - j).collect();
            v.sort_unstable();
            v
        };
        assert_eq!(p.planted, want);
        assert_eq!(p.dataset.x.get(2, 0), syn.dataset.x.get(2, 5));
        assert_eq!(p.dataset.feature_names[0], syn.dataset.feature_names[5]);
    }

    mod props {
        use super::*;
        use crate::tensor::Rng;
        use proptest::prelude::*;

        fn labeled() -> impl Strategy<Value = Dataset> {
            (4usize..20, 1usize..5, any::<u64>()).prop_map(|(n, d, seed)| {
                let mut rng = Rng::new(seed);
                let x = Tensor::uniform_range(&mut rng, Shape::Matrix(n, d), -5.0, 5.0);
                let y = (0..n).map(|i| i % 2).collect();
                let mut ds = Dataset::new(x, Some(y)).unwrap();
                for m in ds.missing.iter_mut().skip(2) {
                    *m = rng.uniform() < 0.2;
                }
                for (v, &m) in ds.x.data_mut().iter_mut().zip(&ds.missing) {
                    if m {
                        *v = f64::NAN;
                    }
                }
                Dataset {
                    splits: (0..n)
                        .map(|i| {
                            if i < 2 {
                                Split::Train
                            } else {
                                [Split::Train, Split::Val, Split::Test][i % 3]
                            }
                        })
                        .collect(),
                    ..ds
                }
            })
        }

        proptest! {
            #[test]
            fn train_columns_land_in_unit_interval(ds in labeled()) {
                let (imputed, _) = impute_class_mean(&ds).unwrap();
                let (scaled, _) = minmax_scale(&imputed).unwrap();
                let train = scaled.features(Split::Train);
                prop_assert!(train.data().iter().all(|v| (0.0..=1.0).contains(v)));
                prop_assert!(!scaled.has_missing() && scaled.x.is_finite());
            }

            #[test]
            fn scaling_ignores_other_splits(ds in labeled(), shift in -100.0f64..100.0) {
                let imputed = impute_global_mean(&ds).unwrap();
                let mut moved = imputed.clone();
                for i in moved.split_indices(Split::Test).into_iter().chain(moved.split_indices(Split::Val)) {
                    for v in moved.x.row_mut(i) {
                        *v += shift;
                    }
                }
                prop_assert_eq!(ScaleStats::fit(&imputed).unwrap(), ScaleStats::fit(&moved).unwrap());
            }

            #[test]
            fn preprocessing_commutes_with_row_order(ds in labeled(), seed in any::<u64>()) {
                let order = Rng::new(seed).permutation(ds.n());
                let run = |d: &Dataset| minmax_scale(&impute_class_mean(d).unwrap().0).unwrap().0;
                let a = run(&ds).permute_rows(&order);
                let b = run(&ds.permute_rows(&order));
                prop_assert!(a.x.max_abs_diff(&b.x) < 1e-12);
                prop_assert_eq!(a.labels, b.labels);
            }
        }
    }
}
