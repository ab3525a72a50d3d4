//! Plug-in conditional density: a Gaussian with estimated mean and clamped
//! variance, truncated to `[-s, s]`, with an optional uniform lift `zeta`.

use std::fmt;
use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::estimators::{clamp_unchecked, MeanVarianceEstimator};
use crate::quadrature::trapezoid;
use crate::rng::SeededRng;
use crate::special::{normal_mass, normal_pdf};
use crate::synthetic::GaussianModel;
use crate::types::{LabeledDataset, UnlabeledDataset};

/// Default perturbation scale.
pub const DEFAULT_U: f64 = 1e-5;

/// How the support half-width `s` is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SupportMode {
    /// `s = log(min(n, N))`.
    Theory,
    /// `s = max(-min(Y_train), max(Y_train))`.
    #[default]
    Practice,
}

impl SupportMode {
    pub fn half_width(self, train: &LabeledDataset, n_cal: usize) -> Result<f64> {
        let s = match self {
            SupportMode::Theory => (train.len().min(n_cal) as f64).ln(),
            SupportMode::Practice => (-train.min_label()).max(train.max_label()),
        };
        if !(s > 0.0 && s.is_finite()) {
            return invalid(format!("{self:?} support rule gives non-positive s = {s}"));
        }
        Ok(s)
    }
}

impl std::str::FromStr for SupportMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "theory" => Ok(SupportMode::Theory),
            "practice" => Ok(SupportMode::Practice),
            other => Err(format!("unknown support mode `{other}` (expected theory|practice)")),
        }
    }
}

/// A draw of the uniform perturbation, `0 <= zeta <= u`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Perturbation(f64);

impl Perturbation {
    pub const ZERO: Perturbation = Perturbation(0.0);

    pub fn new(zeta: f64, u: f64) -> Result<Self> {
        if !(0.0..=u).contains(&zeta) {
            return invalid(format!("perturbation {zeta} outside [0, {u}]"));
        }
        Ok(Self(zeta))
    }

    pub fn draw(u: f64, rng: &mut SeededRng) -> Self {
        Self(u * rng.uniform())
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Mean and clamped variance of the plug-in Gaussian at one `x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalGaussian {
    pub mean: f64,
    pub variance: f64,
}

impl LocalGaussian {
    pub fn pdf(&self, y: f64) -> f64 {
        normal_pdf(y, self.mean, self.variance)
    }
}

/// `p_hat(y | x) = N(y; f_hat(x), clamp(sigma_tilde^2(x))) * 1{|y| <= s}`.
#[derive(Clone)]
pub struct CondDensityModel {
    estimator: Arc<dyn MeanVarianceEstimator>,
    s: f64,
    u: f64,
}

impl fmt::Debug for CondDensityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CondDensityModel")
            .field("d", &self.estimator.dim())
            .field("s", &self.s)
            .field("u", &self.u)
            .finish_non_exhaustive()
    }
}

impl CondDensityModel {
    pub fn new(estimator: Arc<dyn MeanVarianceEstimator>, s: f64, u: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return invalid(format!("support half-width must be positive, got {s}"));
        }
        if !(u >= 0.0 && u.is_finite()) {
            return invalid(format!("perturbation scale must be non-negative, got {u}"));
        }
        Ok(Self { estimator, s, u })
    }

    pub fn dim(&self) -> usize {
        self.estimator.dim()
    }

    pub fn support(&self) -> f64 {
        self.s
    }

    pub fn perturbation_scale(&self) -> f64 {
        self.u
    }

    pub fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return invalid(format!("query has dimension {}, model has {}", x.len(), self.dim()));
        }
        Ok(())
    }

    /// Plug-in mean and clamped variance at `x`.
    pub fn local(&self, x: &[f64]) -> LocalGaussian {
        let (mean, raw) = self.estimator.mean_variance(x);
        LocalGaussian { mean, variance: clamp_unchecked(raw, self.s) }
    }

    pub fn draw_perturbation(&self, rng: &mut SeededRng) -> Perturbation {
        Perturbation::draw(self.u, rng)
    }

    pub fn p_hat(&self, x: &[f64], y: f64) -> f64 {
        if y.abs() > self.s {
            return 0.0;
        }
        self.local(x).pdf(y)
    }

    pub fn p_hat_randomized(&self, x: &[f64], y: f64, zeta: Perturbation) -> f64 {
        if y.abs() > self.s {
            return 0.0;
        }
        self.local(x).pdf(y) + zeta.value()
    }

    /// `sqrt(s / (2 pi))`, the largest value `p_hat` can take.
    pub fn density_bound(&self) -> f64 {
        (self.s / (2.0 * std::f64::consts::PI)).sqrt()
    }
}

/// Average over `xs` of `int |p_hat(y|x) - p(y|x)| dy`: trapezoidal
/// quadrature on `[-s, s]` plus the true mass outside `[-s, s]`.
pub fn l1_density_distance(
    model: &CondDensityModel,
    truth: &GaussianModel,
    xs: &UnlabeledDataset,
    quad_points: usize,
) -> Result<f64> {
    if quad_points < 100 {
        return invalid(format!("need at least 100 quadrature points, got {quad_points}"));
    }
    model.check_dim(xs.row(0))?;
    let s = model.s;
    let per_x: Vec<f64> = xs
        .rows()
        .map(|x| {
            let local = model.local(x);
            let (mu, sd) = (truth.f_star(x), truth.sigma(x));
            let inside = trapezoid(|y| (local.pdf(y) - normal_pdf(y, mu, sd * sd)).abs(), -s, s, quad_points);
            let tails = 1.0 - normal_mass(-s, s, mu, sd);
            inside + tails
        })
        .collect();
    Ok(crate::stats::mean(&per_x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::FnEstimator;
    use crate::special::{normal_cdf, INV_SQRT_2PI};
    use crate::synthetic::{FeatureSampler, ScalarFn};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn constant_model(mean: f64, var: f64, s: f64, u: f64) -> CondDensityModel {
        CondDensityModel::new(Arc::new(FnEstimator::new(1, move |_| mean, move |_| var)), s, u).unwrap()
    }

    #[test]
    fn p_hat_examples() {
        let m = constant_model(0.5, 1.0, 2.0, DEFAULT_U);
        assert_eq!(m.p_hat(&[0.0], 2.5), 0.0);
        assert_eq!(m.p_hat(&[0.0], -2.0001), 0.0);
        assert_relative_eq!(m.p_hat(&[0.0], 0.5), INV_SQRT_2PI, max_relative = 1e-15);
        let m = constant_model(1.0, 0.25, 5.0, DEFAULT_U);
        assert_relative_eq!(m.p_hat(&[0.3], 0.0), 0.10798193302637613, max_relative = 1e-14);
    }

    #[test]
    fn randomized_examples() {
        let m = constant_model(0.0, 1.0, 3.0, 1e-3);
        let y = 0.7;
        assert_eq!(m.p_hat_randomized(&[0.0], y, Perturbation::ZERO), m.p_hat(&[0.0], y));
        let z = Perturbation::new(1e-5, 1e-3).unwrap();
        assert_eq!(m.p_hat_randomized(&[0.0], 4.0, z), 0.0);
        assert!((m.p_hat_randomized(&[0.0], y, z) - m.p_hat(&[0.0], y) - 1e-5).abs() < 1e-15);
        // A density of 0.3 lifted by 1e-5.
        let var = 1.0 / (2.0 * std::f64::consts::PI * 0.09);
        let m = constant_model(0.0, var, 5.0, 1e-3);
        assert_relative_eq!(m.p_hat_randomized(&[0.0], 0.0, z), 0.30001, max_relative = 1e-12);
        assert!(Perturbation::new(2e-3, 1e-3).is_err());
        assert!(Perturbation::new(-1e-9, 1e-3).is_err());
    }

    #[test]
    fn variance_is_clamped() {
        let m = constant_model(0.0, 1e-6, 4.0, 0.0);
        assert_eq!(m.local(&[0.0]).variance, 0.25);
        let m = constant_model(0.0, 1e6, 4.0, 0.0);
        assert_eq!(m.local(&[0.0]).variance, 4.0);
    }

    #[test]
    fn constructor_and_support_rules() {
        let est: Arc<dyn MeanVarianceEstimator> = Arc::new(FnEstimator::new(1, |_| 0.0, |_| 1.0));
        assert!(CondDensityModel::new(est.clone(), 0.0, 0.0).is_err());
        assert!(CondDensityModel::new(est, 1.0, -1.0).is_err());
        let train = LabeledDataset::from_rows(&[vec![0.0], vec![1.0]], vec![-3.0, 2.0]).unwrap();
        assert_eq!(SupportMode::Practice.half_width(&train, 100).unwrap(), 3.0);
        let big = LabeledDataset::new(1, vec![0.0; 500], vec![0.0; 500]).unwrap();
        assert_relative_eq!(SupportMode::Theory.half_width(&big, 100).unwrap(), 100f64.ln());
        assert!(SupportMode::Practice.half_width(&big, 100).is_err());
        assert_eq!("theory".parse::<SupportMode>().unwrap(), SupportMode::Theory);
        assert!("other".parse::<SupportMode>().is_err());
    }

    fn unit_truth(shift: f64) -> GaussianModel {
        let f: ScalarFn = Arc::new(move |x: &[f64]| x[0] + shift);
        GaussianModel::homoscedastic(1, f, 1.0, FeatureSampler::UniformCube).unwrap()
    }

    #[test]
    fn l1_distance_examples() {
        let xs = UnlabeledDataset::new(1, vec![0.1, 0.5, 0.9]).unwrap();
        let exact = CondDensityModel::new(Arc::new(FnEstimator::new(1, |x| x[0], |_| 1.0)), 40.0, 0.0).unwrap();
        assert!(l1_density_distance(&exact, &unit_truth(0.0), &xs, 8001).unwrap() < 1e-3);

        // Equal-variance Gaussians at distance delta: 2 * (2 Phi(delta / 2) - 1).
        let delta = 0.6;
        let shifted =
            CondDensityModel::new(Arc::new(FnEstimator::new(1, move |x| x[0] + delta, |_| 1.0)), 40.0, 0.0).unwrap();
        let got = l1_density_distance(&shifted, &unit_truth(0.0), &xs, 20001).unwrap();
        assert_relative_eq!(got, 2.0 * (2.0 * normal_cdf(delta / 2.0) - 1.0), epsilon = 1e-6);

        // Perfect fit on a truncated support: only the tails are missed.
        let xs0 = UnlabeledDataset::new(1, vec![0.0]).unwrap();
        let zero_truth =
            GaussianModel::homoscedastic(1, Arc::new(|_: &[f64]| 0.0), 1.0, FeatureSampler::UniformCube).unwrap();
        let tight = CondDensityModel::new(Arc::new(FnEstimator::new(1, |_| 0.0, |_| 1.0)), 1.0, 0.0).unwrap();
        let got = l1_density_distance(&tight, &zero_truth, &xs0, 2001).unwrap();
        assert_relative_eq!(got, 0.31731050786291415, epsilon = 1e-6);
        assert!(l1_density_distance(&tight, &zero_truth, &xs0, 50).is_err());
    }

    proptest! {
        #[test]
        fn density_invariants(mean in -3.0f64..3.0, var in 1e-4f64..50.0, s in 1.0f64..6.0, zeta in 0.0f64..1e-3) {
            let m = constant_model(mean, var, s, 1e-3);
            let local = m.local(&[0.0]);
            let z = Perturbation::new(zeta, 1e-3).unwrap();
            let bound = m.density_bound();
            let mass = trapezoid(|y| m.p_hat(&[0.0], y), -s, s, 4001);
            prop_assert!(mass <= 1.0 + 1e-6);
            let mut rising = true;
            let mut prev = -1.0;
            for k in 0..=2000 {
                let y = (-s + k as f64 * s / 1000.0).min(s);
                let p = m.p_hat(&[0.0], y);
                prop_assert!(p <= bound * (1.0 + 1e-12));
                let lifted = m.p_hat_randomized(&[0.0], y, z);
                prop_assert!(((lifted - p) - zeta).abs() <= 1e-15 * (1.0 + p));
                if rising && p < prev {
                    rising = false;
                }
                if !rising {
                    prop_assert!(p <= prev || y <= local.mean);
                }
                prev = p;
            }
            prop_assert_eq!(m.p_hat_randomized(&[0.0], s + 0.1, z), 0.0);
        }
    }
}
