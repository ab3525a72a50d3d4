//! Regression and conditional-variance estimators.
//!
//! Any learner can drive the density model through [`MeanVarianceEstimator`];
//! [`KnnEstimator`] is the built-in one.

use std::cmp::Ordering;
use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::synthetic::ScalarFn;
use crate::types::LabeledDataset;

/// A fitted pair `x -> f_hat(x)` and `x -> sigma_tilde^2(x)` (unclamped).
pub trait MeanVarianceEstimator: Send + Sync {
    fn dim(&self) -> usize;

    /// `(f_hat(x), sigma_tilde^2(x))`. Callers guarantee `x.len() == dim()`.
    fn mean_variance(&self, x: &[f64]) -> (f64, f64);
}

/// Estimator assembled from two plain functions.
#[derive(Clone)]
pub struct FnEstimator {
    d: usize,
    mean: ScalarFn,
    variance: ScalarFn,
}

impl FnEstimator {
    pub fn new(
        d: usize,
        mean: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        variance: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { d, mean: Arc::new(mean), variance: Arc::new(variance) }
    }
}

impl MeanVarianceEstimator for FnEstimator {
    fn dim(&self) -> usize {
        self.d
    }

    fn mean_variance(&self, x: &[f64]) -> (f64, f64) {
        ((self.mean)(x), (self.variance)(x))
    }
}

/// k-nearest-neighbour estimates of the regression function and of the
/// conditional variance.
///
/// `f_hat(x)` averages the labels of the `k` nearest training points.
/// `sigma_tilde^2(x)` averages `(Y_j - f_hat(X_j))^2` over the same
/// neighbours, where `f_hat(X_j)` is the k-NN fit at the neighbour's own
/// features (so `X_j` is its own first neighbour). Those fits are computed
/// once at construction. Distances are Euclidean; ties go to the lower
/// training index.
#[derive(Clone, Debug)]
pub struct KnnEstimator {
    training: LabeledDataset,
    k: usize,
    fitted: Vec<f64>,
}

impl KnnEstimator {
    pub fn new(training: LabeledDataset, k: usize) -> Result<Self> {
        if training.is_empty() {
            return invalid("k-NN needs a non-empty training set");
        }
        if k == 0 || k > training.len() {
            return invalid(format!("k must lie in 1..={}, got {k}", training.len()));
        }
        let mut est = Self { training, k, fitted: Vec::new() };
        let mut scratch = Vec::with_capacity(est.training.len());
        let fitted = (0..est.training.len())
            .map(|i| {
                let nn = est.neighbors_into(est.training.row(i), &mut scratch);
                est.label_mean(nn)
            })
            .collect();
        est.fitted = fitted;
        Ok(est)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn training(&self) -> &LabeledDataset {
        &self.training
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.training.dim() {
            return invalid(format!("query has dimension {}, training data has {}", x.len(), self.training.dim()));
        }
        Ok(())
    }

    /// Indices of the `k` nearest training points, ordered by
    /// `(distance, index)`.
    pub fn neighbors(&self, x: &[f64]) -> Result<Vec<usize>> {
        self.check_dim(x)?;
        let mut scratch = Vec::with_capacity(self.training.len());
        Ok(self.neighbors_into(x, &mut scratch).iter().map(|&(_, i)| i).collect())
    }

    fn neighbors_into<'a>(&self, x: &[f64], scratch: &'a mut Vec<(f64, usize)>) -> &'a [(f64, usize)] {
        scratch.clear();
        scratch.extend(self.training.rows().enumerate().map(|(i, row)| {
            let d2: f64 = row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            (d2, i)
        }));
        let by_distance = |a: &(f64, usize), b: &(f64, usize)| -> Ordering { a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)) };
        let k = self.k;
        if k < scratch.len() {
            scratch.select_nth_unstable_by(k - 1, by_distance);
        }
        let nearest = &mut scratch[..k];
        nearest.sort_unstable_by(by_distance);
        nearest
    }

    fn label_mean(&self, nn: &[(f64, usize)]) -> f64 {
        nn.iter().map(|&(_, i)| self.training.label(i)).sum::<f64>() / nn.len() as f64
    }

    fn residual_mean(&self, nn: &[(f64, usize)]) -> f64 {
        nn.iter()
            .map(|&(_, i)| {
                let r = self.training.label(i) - self.fitted[i];
                r * r
            })
            .sum::<f64>()
            / nn.len() as f64
    }

    pub fn knn_regress(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let mut scratch = Vec::with_capacity(self.training.len());
        Ok(self.label_mean(self.neighbors_into(x, &mut scratch)))
    }

    pub fn knn_variance(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let mut scratch = Vec::with_capacity(self.training.len());
        Ok(self.residual_mean(self.neighbors_into(x, &mut scratch)))
    }
}

impl MeanVarianceEstimator for KnnEstimator {
    fn dim(&self) -> usize {
        self.training.dim()
    }

    fn mean_variance(&self, x: &[f64]) -> (f64, f64) {
        debug_assert_eq!(x.len(), self.training.dim());
        let mut scratch = Vec::with_capacity(self.training.len());
        let nn = self.neighbors_into(x, &mut scratch);
        (self.label_mean(nn), self.residual_mean(nn))
    }
}

/// Forces a variance estimate into `[1/s, s]`.
pub fn clamp_variance(v: f64, s: f64) -> Result<f64> {
    if s.is_nan() || s <= 0.0 {
        return invalid(format!("clamp bound must be positive, got {s}"));
    }
    Ok(clamp_unchecked(v, s))
}

pub(crate) fn clamp_unchecked(v: f64, s: f64) -> f64 {
    let lo = 1.0 / s;
    if v < lo {
        lo
    } else if v > s {
        s
    } else {
        v
    }
}

/// `max(1, round(n^(2/(d+2))))`, capped at `n`.
pub fn default_k(n: usize, d: usize) -> usize {
    let k = (n as f64).powf(2.0 / (d as f64 + 2.0)).round() as usize;
    k.clamp(1, n.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use crate::synthetic::simulation_model;
    use proptest::prelude::*;

    fn four_points() -> LabeledDataset {
        LabeledDataset::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]], vec![1.0, 2.0, 5.0, 0.0]).unwrap()
    }

    /// Brute-force reference: full stable sort of all distances for every
    /// query, including the nested fits at each neighbour.
    fn brute_force(ds: &LabeledDataset, k: usize, x: &[f64]) -> (f64, f64) {
        let order = |q: &[f64]| -> Vec<usize> {
            let mut idx: Vec<usize> = (0..ds.len()).collect();
            let dist = |i: usize| -> f64 { ds.row(i).iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() };
            idx.sort_by(|&a, &b| dist(a).partial_cmp(&dist(b)).unwrap());
            idx.truncate(k);
            idx
        };
        let fit = |q: &[f64]| -> f64 { order(q).iter().map(|&i| ds.label(i)).sum::<f64>() / k as f64 };
        let nn = order(x);
        let f = fit(x);
        let v = nn.iter().map(|&i| (ds.label(i) - fit(ds.row(i))).powi(2)).sum::<f64>() / k as f64;
        (f, v)
    }

    #[test]
    fn regress_examples() {
        let ds = four_points();
        let all = KnnEstimator::new(ds.clone(), 4).unwrap();
        assert_eq!(all.knn_regress(&[17.0]).unwrap(), 2.0);
        let one = KnnEstimator::new(ds.clone(), 1).unwrap();
        assert_eq!(one.knn_regress(&[2.0]).unwrap(), 5.0);
        let two = KnnEstimator::new(ds, 2).unwrap();
        assert_eq!(two.knn_regress(&[0.9]).unwrap(), 1.5);
    }

    #[test]
    fn variance_examples() {
        let ds = four_points();
        let two = KnnEstimator::new(ds.clone(), 2).unwrap();
        // f_hat(1) uses {1, 0} (tie with 2 broken by index), f_hat(0) uses {0, 1}:
        // residuals 2 - 1.5 and 1 - 1.5.
        assert_eq!(two.knn_variance(&[0.9]).unwrap(), 0.25);
        assert_eq!(brute_force(&ds, 2, &[0.9]), (1.5, 0.25));
        let one = KnnEstimator::new(ds, 1).unwrap();
        assert_eq!(one.knn_variance(&[3.0]).unwrap(), 0.0);
        let flat = LabeledDataset::from_rows(&[vec![0.0], vec![1.0], vec![5.0]], vec![2.5; 3]).unwrap();
        for k in 1..=3 {
            let est = KnnEstimator::new(flat.clone(), k).unwrap();
            assert_eq!(est.knn_variance(&[0.7]).unwrap(), 0.0);
        }
    }

    #[test]
    fn errors() {
        let ds = four_points();
        assert!(KnnEstimator::new(ds.clone(), 0).is_err());
        assert!(KnnEstimator::new(ds.clone(), 5).is_err());
        let est = KnnEstimator::new(ds, 2).unwrap();
        assert!(est.knn_regress(&[0.0, 1.0]).is_err());
        assert!(est.knn_variance(&[]).is_err());
        assert!(clamp_variance(1.0, 0.0).is_err());
    }

    #[test]
    fn clamp_examples() {
        assert_eq!(clamp_variance(2.0, 4.0).unwrap(), 2.0);
        assert_eq!(clamp_variance(0.0, 4.0).unwrap(), 0.25);
        assert_eq!(clamp_variance(100.0, 4.0).unwrap(), 4.0);
    }

    #[test]
    fn default_k_examples() {
        assert_eq!(default_k(500, 1), 63);
        assert_eq!(default_k(1, 1), 1);
        assert_eq!(default_k(1, 7), 1);
        assert_eq!(default_k(500, 5), 6);
    }

    #[test]
    fn matches_brute_force_on_random_data() {
        let mut rng = SeededRng::new(21, 0);
        for trial in 0..20 {
            let d = 1 + trial % 3;
            let n = 30 + trial;
            let ds = simulation_model(d).unwrap().sample(n, &mut rng).unwrap();
            let k = 1 + trial % 7;
            let est = KnnEstimator::new(ds.clone(), k).unwrap();
            let x: Vec<f64> = (0..d).map(|_| rng.uniform()).collect();
            let (f, v) = brute_force(&ds, k, &x);
            assert!((est.knn_regress(&x).unwrap() - f).abs() < 1e-12);
            assert!((est.knn_variance(&x).unwrap() - v).abs() < 1e-12);
        }
    }

    #[test]
    fn smoothing_beats_one_nn_on_simulation_model() {
        let model = simulation_model(1).unwrap();
        let train = model.sample(4000, &mut SeededRng::new(77, 0)).unwrap();
        let test = model.sample_features(1000, &mut SeededRng::new(77, 1)).unwrap();
        let mae = |k: usize| {
            let est = KnnEstimator::new(train.clone(), k).unwrap();
            test.rows().map(|x| (est.knn_regress(x).unwrap() - model.f_star(x)).abs()).sum::<f64>() / 1000.0
        };
        assert!(mae(default_k(4000, 1)) < mae(1));
    }

    proptest! {
        #[test]
        fn permutation_invariance(seed in 0u64..1000, k in 1usize..10) {
            let mut rng = SeededRng::new(seed, 0);
            let ds = simulation_model(2).unwrap().sample(40, &mut rng).unwrap();
            let mut order: Vec<usize> = (0..ds.len()).collect();
            rng.shuffle(&mut order);
            let rows: Vec<Vec<f64>> = order.iter().map(|&i| ds.row(i).to_vec()).collect();
            let labels: Vec<f64> = order.iter().map(|&i| ds.label(i)).collect();
            let shuffled = LabeledDataset::from_rows(&rows, labels).unwrap();
            let a = KnnEstimator::new(ds, k).unwrap();
            let b = KnnEstimator::new(shuffled, k).unwrap();
            let x = [rng.uniform(), rng.uniform()];
            prop_assert_eq!(a.knn_regress(&x).unwrap(), b.knn_regress(&x).unwrap());
            prop_assert_eq!(a.knn_variance(&x).unwrap(), b.knn_variance(&x).unwrap());
        }

        #[test]
        fn clamp_properties(v in 0.0f64..1e6, s in 1.0f64..1e3, truth_frac in 0.0f64..1.0) {
            let c = clamp_variance(v, s).unwrap();
            prop_assert!(c >= 1.0 / s && c <= s);
            let truth = 1.0 / s + truth_frac * (s - 1.0 / s);
            prop_assert!((c - truth).abs() <= (v - truth).abs());
        }

        #[test]
        fn variance_is_nonnegative(seed in 0u64..500, k in 1usize..15) {
            let mut rng = SeededRng::new(seed, 1);
            let ds = simulation_model(3).unwrap().sample(30, &mut rng).unwrap();
            let est = KnnEstimator::new(ds, k).unwrap();
            let x = [rng.uniform(), rng.uniform(), rng.uniform()];
            prop_assert!(est.knn_variance(&x).unwrap() >= 0.0);
        }
    }
}
