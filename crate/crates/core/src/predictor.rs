//! Prediction intervals as superlevel sets of a Gaussian density.

use std::io::Write;
use std::path::Path;

use crate::calibration::{build_g, build_h, GCurve, HCurve};
use crate::density::{CondDensityModel, Perturbation};
use crate::error::{invalid, Result};
use crate::io::fmt_f64;
use crate::rng::SeededRng;
use crate::special::INV_SQRT_2PI;
use crate::synthetic::GaussianModel;
use crate::types::{Grid, LabeledDataset, PredictionInterval, UnlabeledDataset};

/// `{y : N(y; mean, variance) >= threshold} ∩ [-s, s]`.
///
/// A non-positive threshold selects the whole support; a threshold above the
/// peak `1 / sqrt(2 pi variance)` selects nothing.
pub fn superlevel_interval(mean: f64, variance: f64, threshold: f64, s: f64) -> PredictionInterval {
    if threshold <= 0.0 {
        return PredictionInterval::new(-s, s);
    }
    let sd = variance.sqrt();
    let ratio = threshold * sd / INV_SQRT_2PI;
    if ratio > 1.0 {
        return PredictionInterval::Empty;
    }
    let w = (-2.0 * variance * ratio.ln()).max(0.0).sqrt();
    PredictionInterval::new(mean - w, mean + w).clip(s)
}

/// Anything that maps a feature vector to an interval, possibly using
/// randomness from the supplied stream.
pub trait IntervalPredictor: Sync {
    fn predict_interval(&self, x: &[f64], rng: &mut SeededRng) -> PredictionInterval;
}

impl<F> IntervalPredictor for F
where
    F: Fn(&[f64], &mut SeededRng) -> PredictionInterval + Sync,
{
    fn predict_interval(&self, x: &[f64], rng: &mut SeededRng) -> PredictionInterval {
        self(x, rng)
    }
}

/// Source of the per-query perturbation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ZetaMode {
    /// Fresh `zeta ~ Uniform[0, u]` per query.
    #[default]
    Random,
    /// `zeta = u / 2`; for debugging only.
    Midpoint,
}

fn perturbation(density: &CondDensityModel, mode: ZetaMode, rng: &mut SeededRng) -> Perturbation {
    match mode {
        ZetaMode::Random => density.draw_perturbation(rng),
        ZetaMode::Midpoint => {
            let u = density.perturbation_scale();
            Perturbation::new(0.5 * u, u).expect("midpoint lies in [0, u]")
        }
    }
}

fn plug_in_interval(density: &CondDensityModel, threshold: f64, x: &[f64], zeta: Perturbation) -> PredictionInterval {
    let local = density.local(x);
    // p_hat + zeta >= threshold on [-s, s]  <=>  gaussian part >= threshold - zeta.
    superlevel_interval(local.mean, local.variance, threshold - zeta.value(), density.support())
}

/// Length-calibrated plug-in interval `{y : p_hat(y | x, zeta) >= lambda_hat}`.
#[derive(Clone, Debug)]
pub struct LengthPI {
    density: CondDensityModel,
    lambda_hat: f64,
    ell: f64,
    zeta_mode: ZetaMode,
}

impl LengthPI {
    pub fn new(density: CondDensityModel, lambda_hat: f64, ell: f64) -> Result<Self> {
        if !(lambda_hat >= 0.0 && lambda_hat.is_finite()) {
            return invalid(format!("threshold must be non-negative, got {lambda_hat}"));
        }
        if ell.is_nan() || ell <= 0.0 {
            return invalid(format!("requested length must be positive, got {ell}"));
        }
        Ok(Self { density, lambda_hat, ell, zeta_mode: ZetaMode::Random })
    }

    /// Calibrates `lambda_hat = G_hat^{-1}(ell)` on an unlabeled sample.
    pub fn fit(
        density: CondDensityModel,
        unlabeled: &UnlabeledDataset,
        grid: &Grid,
        ell: f64,
        rng: &mut SeededRng,
    ) -> Result<(Self, GCurve)> {
        let g = build_g(&density, unlabeled, grid, rng)?;
        let lambda = g.g_inverse(ell);
        Ok((Self::new(density, lambda, ell)?, g))
    }

    pub fn with_zeta_mode(mut self, mode: ZetaMode) -> Self {
        self.zeta_mode = mode;
        self
    }

    pub fn lambda_hat(&self) -> f64 {
        self.lambda_hat
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    pub fn density(&self) -> &CondDensityModel {
        &self.density
    }

    pub fn predict_with(&self, x: &[f64], zeta: Perturbation) -> Result<PredictionInterval> {
        self.density.check_dim(x)?;
        Ok(plug_in_interval(&self.density, self.lambda_hat, x, zeta))
    }

    pub fn predict_length(&self, x: &[f64], rng: &mut SeededRng) -> Result<PredictionInterval> {
        self.density.check_dim(x)?;
        let zeta = perturbation(&self.density, self.zeta_mode, rng);
        Ok(plug_in_interval(&self.density, self.lambda_hat, x, zeta))
    }
}

impl IntervalPredictor for LengthPI {
    fn predict_interval(&self, x: &[f64], rng: &mut SeededRng) -> PredictionInterval {
        let zeta = perturbation(&self.density, self.zeta_mode, rng);
        plug_in_interval(&self.density, self.lambda_hat, x, zeta)
    }
}

/// Coverage-calibrated plug-in interval `{y : p_hat(y | x, zeta) >= t_beta}`.
#[derive(Clone, Debug)]
pub struct CoveragePI {
    density: CondDensityModel,
    t_beta: f64,
    beta: f64,
    zeta_mode: ZetaMode,
}

impl CoveragePI {
    pub fn new(density: CondDensityModel, t_beta: f64, beta: f64) -> Result<Self> {
        if !(t_beta >= 0.0 && t_beta.is_finite()) {
            return invalid(format!("threshold must be non-negative, got {t_beta}"));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return invalid(format!("beta must lie in (0, 1), got {beta}"));
        }
        Ok(Self { density, t_beta, beta, zeta_mode: ZetaMode::Random })
    }

    /// Calibrates `t_beta` on a labeled calibration sample.
    pub fn fit(
        density: CondDensityModel,
        calset: &LabeledDataset,
        beta: f64,
        rng: &mut SeededRng,
    ) -> Result<(Self, HCurve)> {
        let h = build_h(&density, calset, rng)?;
        let t = h.h_threshold(beta)?;
        Ok((Self::new(density, t, beta)?, h))
    }

    pub fn with_zeta_mode(mut self, mode: ZetaMode) -> Self {
        self.zeta_mode = mode;
        self
    }

    pub fn t_beta(&self) -> f64 {
        self.t_beta
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn predict_with(&self, x: &[f64], zeta: Perturbation) -> Result<PredictionInterval> {
        self.density.check_dim(x)?;
        Ok(plug_in_interval(&self.density, self.t_beta, x, zeta))
    }

    pub fn predict_coverage(&self, x: &[f64], rng: &mut SeededRng) -> Result<PredictionInterval> {
        self.density.check_dim(x)?;
        let zeta = perturbation(&self.density, self.zeta_mode, rng);
        Ok(plug_in_interval(&self.density, self.t_beta, x, zeta))
    }
}

impl IntervalPredictor for CoveragePI {
    fn predict_interval(&self, x: &[f64], rng: &mut SeededRng) -> PredictionInterval {
        let zeta = perturbation(&self.density, self.zeta_mode, rng);
        plug_in_interval(&self.density, self.t_beta, x, zeta)
    }
}

/// The optimal interval `{y : p(y | x) >= lambda_star}` under the true model,
/// clipped to `[-s, s]` (`s` may be infinite).
#[derive(Clone, Debug)]
pub struct OraclePI {
    model: GaussianModel,
    lambda_star: f64,
    s: f64,
}

impl OraclePI {
    pub fn new(model: GaussianModel, lambda_star: f64, s: f64) -> Result<Self> {
        if !(lambda_star >= 0.0 && lambda_star.is_finite()) {
            return invalid(format!("threshold must be non-negative, got {lambda_star}"));
        }
        if s.is_nan() || s <= 0.0 {
            return invalid(format!("support half-width must be positive, got {s}"));
        }
        Ok(Self { model, lambda_star, s })
    }

    /// Oracle without support clipping.
    pub fn unbounded(model: GaussianModel, lambda_star: f64) -> Result<Self> {
        Self::new(model, lambda_star, f64::INFINITY)
    }

    pub fn lambda_star(&self) -> f64 {
        self.lambda_star
    }

    pub fn model(&self) -> &GaussianModel {
        &self.model
    }

    pub fn interval(&self, x: &[f64]) -> PredictionInterval {
        let sd = self.model.sigma(x);
        superlevel_interval(self.model.f_star(x), sd * sd, self.lambda_star, self.s)
    }
}

impl IntervalPredictor for OraclePI {
    fn predict_interval(&self, x: &[f64], _rng: &mut SeededRng) -> PredictionInterval {
        self.interval(x)
    }
}

/// `G^{-1}(ell)` estimated from `n_mc` feature draws and the true densities on
/// `grid` (no perturbation).
pub fn oracle_lambda(model: &GaussianModel, ell: f64, n_mc: usize, grid: &Grid, rng: &mut SeededRng) -> Result<f64> {
    Ok(oracle_curve(model, n_mc, grid, rng)?.g_inverse(ell))
}

/// The oracle G-curve behind [`oracle_lambda`].
pub fn oracle_curve(model: &GaussianModel, n_mc: usize, grid: &Grid, rng: &mut SeededRng) -> Result<GCurve> {
    if n_mc < 100 {
        return invalid(format!("oracle calibration needs at least 100 draws, got {n_mc}"));
    }
    let xs = model.sample_features(n_mc, rng)?;
    true_density_curve(model, &xs, grid)
}

/// G-curve of the true conditional densities at the given features.
pub fn true_density_curve(model: &GaussianModel, xs: &UnlabeledDataset, grid: &Grid) -> Result<GCurve> {
    if xs.dim() != model.dim() {
        return invalid(format!("features have dimension {}, model expects {}", xs.dim(), model.dim()));
    }
    let mut scores = Vec::with_capacity(xs.len() * grid.cells());
    for x in xs.rows() {
        let (mu, sd) = (model.f_star(x), model.sigma(x));
        let var = sd * sd;
        scores.extend(grid.points().iter().map(|&y| crate::special::normal_pdf(y, mu, var)));
    }
    GCurve::from_scores(scores, grid.half_width(), grid.cells(), xs.len())
}

/// Writes `x1..xd,lower,upper,length,covered`. Empty intervals leave
/// `lower`/`upper` blank; `covered` is blank when no labels are given.
pub fn write_predictions_csv(
    path: &Path,
    xs: &UnlabeledDataset,
    intervals: &[PredictionInterval],
    labels: Option<&[f64]>,
) -> Result<()> {
    if intervals.len() != xs.len() || labels.is_some_and(|l| l.len() != xs.len()) {
        return invalid("features, intervals and labels must have equal lengths");
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header: Vec<String> = (1..=xs.dim()).map(|j| format!("x{j}")).collect();
    header.extend(["lower", "upper", "length", "covered"].map(String::from));
    writeln!(out, "{}", header.join(","))?;
    for (i, (x, iv)) in xs.rows().zip(intervals).enumerate() {
        let mut fields: Vec<String> = x.iter().map(|v| fmt_f64(*v)).collect();
        match iv.bounds() {
            Some((lo, hi)) => {
                fields.push(fmt_f64(lo));
                fields.push(fmt_f64(hi));
            }
            None => fields.extend([String::new(), String::new()]),
        }
        fields.push(fmt_f64(iv.length()));
        fields.push(match labels {
            Some(l) => u8::from(iv.contains(l[i])).to_string(),
            None => String::new(),
        });
        writeln!(out, "{}", fields.join(","))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::FnEstimator;
    use crate::special::{normal_pdf, normal_quantile};
    use crate::synthetic::{FeatureSampler, ScalarFn};
    use crate::types::make_grid;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn const_density(mean: f64, var: f64, s: f64, u: f64) -> CondDensityModel {
        CondDensityModel::new(Arc::new(FnEstimator::new(1, move |_| mean, move |_| var)), s, u).unwrap()
    }

    #[test]
    fn superlevel_examples() {
        let var: f64 = 0.7;
        let peak = INV_SQRT_2PI / var.sqrt();
        let iv = superlevel_interval(0.4, var, peak, 5.0);
        assert_eq!(iv.length(), 0.0);
        assert!(!iv.is_empty());
        assert_eq!(superlevel_interval(0.4, var, 0.0, 3.0).bounds(), Some((-3.0, 3.0)));
        assert!(superlevel_interval(0.4, var, peak * 1.001, 3.0).is_empty());
        let w = (2.0 * (1.0 / (std::f64::consts::TAU.sqrt() * 0.2)).ln()).sqrt();
        let iv = superlevel_interval(0.0, 1.0, 0.2, 10.0);
        assert_relative_eq!(iv.bounds().unwrap().1, w, max_relative = 1e-15);
        // Grid-scan oracle at spacing 1e-4.
        let inside: Vec<f64> =
            (0..200_001).map(|k| -10.0 + k as f64 * 1e-4).filter(|&y| normal_pdf(y, 0.0, 1.0) >= 0.2).collect();
        let (lo, hi) = iv.bounds().unwrap();
        assert!((inside[0] - lo).abs() <= 1e-4);
        assert!((inside[inside.len() - 1] - hi).abs() <= 1e-4);
        // Far-off centre: clipping leaves nothing.
        assert!(superlevel_interval(20.0, 1.0, 0.1, 5.0).is_empty());
    }

    #[test]
    fn length_pi_examples() {
        let density = const_density(0.3, 0.5, 4.0, 1e-5);
        let whole = LengthPI::new(density.clone(), 0.0, 1.0).unwrap();
        let mut rng = SeededRng::new(1, 0);
        for x in [0.0, 0.5, 1.0] {
            assert_eq!(whole.predict_length(&[x], &mut rng).unwrap().bounds(), Some((-4.0, 4.0)));
        }
        let small = LengthPI::new(density.clone(), 5e-6, 1.0).unwrap();
        let z = Perturbation::new(6e-6, 1e-5).unwrap();
        assert_eq!(small.predict_with(&[0.0], z).unwrap().bounds(), Some((-4.0, 4.0)));
        let zero_u = const_density(0.3, 0.5, 4.0, 0.0);
        let peak = INV_SQRT_2PI / 0.5f64.sqrt();
        let point = LengthPI::new(zero_u, peak, 1.0).unwrap();
        let iv = point.predict_length(&[0.0], &mut rng).unwrap();
        assert_eq!(iv.length(), 0.0);
        assert_relative_eq!(iv.bounds().unwrap().0, 0.3, epsilon = 1e-7);
        assert!(whole.predict_length(&[0.0, 1.0], &mut rng).is_err());
        assert!(LengthPI::new(density, -1.0, 1.0).is_err());
    }

    #[test]
    fn predict_matches_grid_indicator() {
        let density =
            CondDensityModel::new(Arc::new(FnEstimator::new(1, |x| 2.0 * x[0] - 1.0, |x| 0.1 + x[0])), 3.0, 1e-3)
                .unwrap();
        let grid = make_grid(3.0, 6000).unwrap();
        let mut rng = SeededRng::new(5, 0);
        for i in 0..50 {
            let x = [i as f64 / 50.0];
            let lambda = 0.05 + 0.02 * i as f64;
            let pi = LengthPI::new(density.clone(), lambda, 1.0).unwrap();
            let zeta = density.draw_perturbation(&mut rng);
            let iv = pi.predict_with(&x, zeta).unwrap();
            let mut count = 0usize;
            for &y in grid.points() {
                let direct = density.p_hat_randomized(&x, y, zeta) >= lambda;
                assert_eq!(iv.contains(y), direct, "x={x:?} y={y}");
                count += usize::from(direct);
            }
            assert!((iv.length() - count as f64 * grid.cell_width()).abs() <= grid.cell_width() + 1e-12);
        }
    }

    #[test]
    fn lower_threshold_nests() {
        let density = const_density(-0.2, 0.8, 5.0, 0.0);
        let mut prev = PredictionInterval::Empty;
        for k in (0..50).rev() {
            let pi = LengthPI::new(density.clone(), k as f64 * 0.01, 1.0).unwrap();
            let iv = pi.predict_with(&[0.0], Perturbation::ZERO).unwrap();
            assert!(iv.length() >= prev.length());
            if let Some((lo, hi)) = prev.bounds() {
                assert!(iv.contains(lo) && iv.contains(hi));
            }
            prev = iv;
        }
    }

    #[test]
    fn coverage_pi_examples() {
        let density = const_density(0.0, 1.0, 5.0, 1e-5);
        let mut rng = SeededRng::new(2, 0);
        let full = CoveragePI::new(density.clone(), 0.0, 0.1).unwrap();
        assert_eq!(full.predict_coverage(&[0.1], &mut rng).unwrap().bounds(), Some((-5.0, 5.0)));
        let none = CoveragePI::new(density.clone(), INV_SQRT_2PI + 1e-4, 0.1).unwrap();
        assert!(none.predict_coverage(&[0.1], &mut rng).unwrap().is_empty());
        assert!(CoveragePI::new(density, 0.1, 1.0).is_err());
    }

    #[test]
    fn coverage_calibration_recovers_gaussian_quantile() {
        // Exact homoscedastic plug-in: t_beta should select f +- 1.96 sigma.
        let sigma = 0.7;
        let f: ScalarFn = Arc::new(|x: &[f64]| 0.5 * x[0]);
        let truth = GaussianModel::homoscedastic(1, f, sigma, FeatureSampler::UniformCube).unwrap();
        let density =
            CondDensityModel::new(Arc::new(FnEstimator::new(1, |x| 0.5 * x[0], move |_| sigma * sigma)), 20.0, 1e-5)
                .unwrap();
        let k = 20_000;
        let cal = truth.sample(k, &mut SeededRng::new(6, 0)).unwrap();
        let (pi, _) = CoveragePI::fit(density, &cal, 0.05, &mut SeededRng::new(6, 1)).unwrap();
        let iv = pi.predict_with(&[0.4], Perturbation::ZERO).unwrap();
        let half = 0.5 * iv.length();
        // DKW: the empirical coverage is within eps of the truth with prob 0.999.
        let eps = ((2.0f64 / 0.001).ln() / (2.0 * k as f64)).sqrt();
        let lo = normal_quantile(1.0 - (0.05 + eps) / 2.0) * sigma;
        let hi = normal_quantile(1.0 - (0.05 - eps) / 2.0) * sigma;
        assert!(half >= lo && half <= hi, "{lo} <= {half} <= {hi}");
        assert_relative_eq!(0.5 * (iv.bounds().unwrap().0 + iv.bounds().unwrap().1), 0.2, epsilon = 1e-9);
    }

    #[test]
    fn oracle_lambda_homoscedastic_closed_form() {
        let sigma = 0.8;
        let f: ScalarFn = Arc::new(|x: &[f64]| x[0] - 0.5);
        let model = GaussianModel::homoscedastic(1, f, sigma, FeatureSampler::UniformCube).unwrap();
        let grid = make_grid(5.0, 2000).unwrap();
        let g = oracle_curve(&model, 10_000, &grid, &mut SeededRng::new(8, 0)).unwrap();
        for ell in [0.5, 1.0, 2.0] {
            let lambda = g.g_inverse(ell);
            let closed = INV_SQRT_2PI / sigma * (-(ell * ell) / (8.0 * sigma * sigma)).exp();
            assert!((lambda / closed - 1.0).abs() < 0.02, "ell={ell}: {lambda} vs {closed}");
        }
        assert_eq!(g.g_inverse(10.0), 0.0);
        assert!(oracle_lambda(&model, 1.0, 50, &grid, &mut SeededRng::new(8, 0)).is_err());
    }

    #[test]
    fn prediction_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let xs = UnlabeledDataset::new(1, vec![0.1, 0.2]).unwrap();
        let ivs = [PredictionInterval::new(-1.0, 1.0), PredictionInterval::Empty];
        write_predictions_csv(&path, &xs, &ivs, Some(&[0.5, 0.0])).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "x1,lower,upper,length,covered\n0.10000000000000001,-1,1,2,1\n0.20000000000000001,,,0,0\n");
        write_predictions_csv(&path, &xs, &ivs, None).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().ends_with(",,,0,\n"));
        assert!(write_predictions_csv(&path, &xs, &ivs[..1], None).is_err());
    }
}
