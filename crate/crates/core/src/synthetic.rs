//! Heteroscedastic Gaussian data generators with exact density access.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::io::write_labeled_csv;
use crate::rng::SeededRng;
use crate::special::{normal_cdf, normal_pdf};
use crate::types::{LabeledDataset, UnlabeledDataset};

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type FeatureFn = Arc<dyn Fn(&mut SeededRng, &mut [f64]) + Send + Sync>;

/// Distribution of the feature vector.
#[derive(Clone)]
pub enum FeatureSampler {
    /// i.i.d. Uniform[0, 1] coordinates.
    UniformCube,
    /// Writes one draw into the provided buffer of length `d`.
    Custom(FeatureFn),
}

impl fmt::Debug for FeatureSampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureSampler::UniformCube => f.write_str("UniformCube"),
            FeatureSampler::Custom(_) => f.write_str("Custom"),
        }
    }
}

/// `Y = f*(X) + sigma(X) * Z` with `Z ~ N(0, 1)` independent of `X`.
#[derive(Clone)]
pub struct GaussianModel {
    d: usize,
    f_star: ScalarFn,
    sigma: ScalarFn,
    features: FeatureSampler,
    sigma_bounds: Option<(f64, f64)>,
}

impl fmt::Debug for GaussianModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GaussianModel")
            .field("d", &self.d)
            .field("features", &self.features)
            .field("sigma_bounds", &self.sigma_bounds)
            .finish_non_exhaustive()
    }
}

/// Number of feature draws probed by [`GaussianModel::new`].
const SIGMA_PROBES: usize = 64;

impl GaussianModel {
    /// Builds a model from user closures. `sigma` is probed on a fixed set of
    /// feature draws and every later draw is checked again during sampling.
    pub fn new(d: usize, f_star: ScalarFn, sigma: ScalarFn, features: FeatureSampler) -> Result<Self> {
        if d == 0 {
            return invalid("model dimension must be at least 1");
        }
        let model = Self { d, f_star, sigma, features, sigma_bounds: None };
        let mut probe = SeededRng::new(0x5EED, 0);
        let mut x = vec![0.0; d];
        for _ in 0..SIGMA_PROBES {
            model.draw_features(&mut probe, &mut x);
            model.checked_sigma(&x)?;
        }
        Ok(model)
    }

    /// Constant noise level `sigma` everywhere.
    pub fn homoscedastic(d: usize, f_star: ScalarFn, sigma: f64, features: FeatureSampler) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return invalid(format!("sigma must be positive and finite, got {sigma}"));
        }
        let mut model = Self::new(d, f_star, Arc::new(move |_| sigma), features)?;
        model.sigma_bounds = Some((sigma, sigma));
        Ok(model)
    }

    /// Records known bounds `sigma_0 <= sigma(x) <= sigma_1`.
    pub fn with_sigma_bounds(mut self, lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && lo <= hi) {
            return invalid(format!("invalid sigma bounds [{lo}, {hi}]"));
        }
        self.sigma_bounds = Some((lo, hi));
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn sigma_bounds(&self) -> Option<(f64, f64)> {
        self.sigma_bounds
    }

    pub fn f_star(&self, x: &[f64]) -> f64 {
        (self.f_star)(x)
    }

    pub fn sigma(&self, x: &[f64]) -> f64 {
        (self.sigma)(x)
    }

    fn checked_sigma(&self, x: &[f64]) -> Result<f64> {
        let s = (self.sigma)(x);
        if !(s > 0.0 && s.is_finite()) {
            return invalid(format!("sigma(x) must be positive and finite, got {s} at {x:?}"));
        }
        Ok(s)
    }

    pub fn draw_features(&self, rng: &mut SeededRng, out: &mut [f64]) {
        match &self.features {
            FeatureSampler::UniformCube => out.iter_mut().for_each(|v| *v = rng.uniform()),
            FeatureSampler::Custom(f) => f(rng, out),
        }
    }

    pub fn sample_features(&self, n: usize, rng: &mut SeededRng) -> Result<UnlabeledDataset> {
        if n == 0 {
            return invalid("sample size must be at least 1");
        }
        let mut buf = vec![0.0; n * self.d];
        for row in buf.chunks_exact_mut(self.d) {
            self.draw_features(rng, row);
        }
        UnlabeledDataset::new(self.d, buf)
    }

    /// `n` i.i.d. draws. For each draw the features are generated first, then
    /// one standard normal for the noise.
    pub fn sample(&self, n: usize, rng: &mut SeededRng) -> Result<LabeledDataset> {
        if n == 0 {
            return invalid("sample size must be at least 1");
        }
        let mut buf = vec![0.0; n * self.d];
        let mut labels = Vec::with_capacity(n);
        for row in buf.chunks_exact_mut(self.d) {
            self.draw_features(rng, row);
            let s = self.checked_sigma(row)?;
            labels.push(self.f_star(row) + s * rng.standard_normal());
        }
        LabeledDataset::new(self.d, buf, labels)
    }

    /// True conditional density `p(y | x)`.
    pub fn oracle_density(&self, x: &[f64], y: f64) -> f64 {
        let s = self.sigma(x);
        normal_pdf(y, self.f_star(x), s * s)
    }

    /// Conditional CDF `P(Y <= y | x)`.
    pub fn conditional_cdf(&self, x: &[f64], y: f64) -> f64 {
        normal_cdf((y - self.f_star(x)) / self.sigma(x))
    }
}

/// `f*(x) = exp(-|x|)`, `sigma(x) = d / (2 + 4|x|)`, `X ~ Uniform[0,1]^d`.
pub fn simulation_model(d: usize) -> Result<GaussianModel> {
    if d == 0 {
        return invalid("dimension must be at least 1");
    }
    let dd = d as f64;
    let f_star: ScalarFn = Arc::new(|x: &[f64]| (-norm2(x)).exp());
    let sigma: ScalarFn = Arc::new(move |x: &[f64]| dd / (2.0 + 4.0 * norm2(x)));
    GaussianModel::new(d, f_star, sigma, FeatureSampler::UniformCube)?
        .with_sigma_bounds(dd / (2.0 + 4.0 * dd.sqrt()), dd / 2.0)
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Writes a sample as CSV with header `x1,...,xd,y`.
pub fn export_csv(data: &LabeledDataset, path: &Path) -> Result<()> {
    write_labeled_csv(data, path)
}
