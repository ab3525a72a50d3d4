//! Evaluation of interval predictors.
//!
//! `empirical_length` and `empirical_error` work on any labeled test set.
//! The remaining metrics need the true model: `risk` integrates coverage
//! exactly through the Gaussian CDF, while `excess_risk` integrates
//! `|p(y|x) - lambda*|` over `Γ(x) △ Γ*(x)` by quadrature. Both draw features
//! from `rng.derive(0)` and feed the predictor `rng.derive(1)`, so calls
//! sharing a seed see the same features and the same predictor randomness.

use crate::error::{invalid, Result};
use crate::io::fmt_f64;
use crate::predictor::{IntervalPredictor, OraclePI};
use crate::quadrature::adaptive_trapezoid;
use crate::rng::SeededRng;
use crate::special::{normal_mass, normal_pdf, INV_SQRT_2PI};
use crate::stats::mean;
use crate::synthetic::GaussianModel;
use crate::types::PredictionInterval;

/// Absolute tolerance of each per-piece quadrature in [`excess_risk`].
pub const PIECE_TOLERANCE: f64 = 1e-8;

/// Summary of a predictor on one test set.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub mean_length: f64,
    pub error_rate: f64,
    pub excess_risk: Option<f64>,
    pub sym_diff: Option<f64>,
    pub n_test: usize,
    pub n_empty: usize,
}

impl EvalResult {
    /// Length and error rate of `intervals` against `labels`.
    pub fn evaluate(intervals: &[PredictionInterval], labels: &[f64]) -> Result<Self> {
        Ok(Self {
            mean_length: empirical_length(intervals)?,
            error_rate: empirical_error(intervals, labels)?,
            excess_risk: None,
            sym_diff: None,
            n_test: intervals.len(),
            n_empty: intervals.iter().filter(|iv| iv.is_empty()).count(),
        })
    }

    pub fn coverage(&self) -> f64 {
        1.0 - self.error_rate
    }

    /// `(name, value)` for every present metric, in a fixed order.
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        let mut out = vec![
            ("mean_length", self.mean_length),
            ("error_rate", self.error_rate),
            ("coverage", self.coverage()),
            ("n_empty", self.n_empty as f64),
        ];
        if let Some(v) = self.excess_risk {
            out.push(("excess_risk", v));
        }
        if let Some(v) = self.sym_diff {
            out.push(("sym_diff", v));
        }
        out
    }

    pub fn csv_header(config_keys: &[&str]) -> String {
        let mut cols = vec!["mean_length", "error_rate", "excess_risk", "sym_diff", "n_test", "n_empty"];
        cols.extend_from_slice(config_keys);
        cols.push("seed");
        cols.join(",")
    }

    /// One CSV row: metrics, then the config values, then the seed. Absent
    /// metrics are left blank.
    pub fn csv_row(&self, config_values: &[String], seed: u64) -> String {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let mut fields = vec![
            fmt_f64(self.mean_length),
            fmt_f64(self.error_rate),
            opt(self.excess_risk),
            opt(self.sym_diff),
            self.n_test.to_string(),
            self.n_empty.to_string(),
        ];
        fields.extend(config_values.iter().cloned());
        fields.push(seed.to_string());
        fields.join(",")
    }
}

pub fn empirical_length(intervals: &[PredictionInterval]) -> Result<f64> {
    if intervals.is_empty() {
        return invalid("cannot average over an empty list of intervals");
    }
    let lengths: Vec<f64> = intervals.iter().map(PredictionInterval::length).collect();
    Ok(mean(&lengths))
}

/// Fraction of labels outside their interval; an empty interval never covers.
pub fn empirical_error(intervals: &[PredictionInterval], labels: &[f64]) -> Result<f64> {
    if intervals.len() != labels.len() {
        return invalid(format!("{} intervals but {} labels", intervals.len(), labels.len()));
    }
    if intervals.is_empty() {
        return invalid("cannot evaluate an empty test set");
    }
    let misses = intervals.iter().zip(labels).filter(|(iv, y)| !iv.contains(**y)).count();
    Ok(misses as f64 / labels.len() as f64)
}

/// `a \ b` as at most two open pieces of positive length.
fn difference(a: &PredictionInterval, b: &PredictionInterval) -> Vec<(f64, f64)> {
    let Some((a_lo, a_hi)) = a.bounds() else {
        return Vec::new();
    };
    let Some((b_lo, b_hi)) = b.bounds() else {
        return if a_hi > a_lo { vec![(a_lo, a_hi)] } else { Vec::new() };
    };
    let mut out = Vec::with_capacity(2);
    let left_hi = a_hi.min(b_lo);
    if left_hi > a_lo {
        out.push((a_lo, left_hi));
    }
    let right_lo = a_lo.max(b_hi);
    if a_hi > right_lo {
        out.push((right_lo, a_hi));
    }
    out
}

/// The pieces of `a △ b`, sorted by left endpoint.
pub fn symmetric_difference(a: &PredictionInterval, b: &PredictionInterval) -> Vec<(f64, f64)> {
    let mut pieces = difference(a, b);
    pieces.extend(difference(b, a));
    pieces.sort_by(|p, q| p.0.total_cmp(&q.0));
    pieces
}

/// Lebesgue measure of `a △ b`.
pub fn sym_diff_measure(a: &PredictionInterval, b: &PredictionInterval) -> f64 {
    symmetric_difference(a, b).iter().map(|(lo, hi)| hi - lo).sum()
}

fn check_mc(n_mc: usize) -> Result<()> {
    if n_mc < 100 {
        return invalid(format!("need at least 100 Monte-Carlo draws, got {n_mc}"));
    }
    Ok(())
}

/// Draws `n_mc` feature vectors from `rng.derive(0)` and maps `f` over them,
/// handing `f` the predictor stream `rng.derive(1)`.
fn monte_carlo<F>(model: &GaussianModel, n_mc: usize, rng: &SeededRng, mut f: F) -> Result<f64>
where
    F: FnMut(&[f64], &mut SeededRng) -> Result<f64>,
{
    check_mc(n_mc)?;
    let mut x_rng = rng.derive(0);
    let mut p_rng = rng.derive(1);
    let mut x = vec![0.0; model.dim()];
    let mut values = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        model.draw_features(&mut x_rng, &mut x);
        values.push(f(&x, &mut p_rng)?);
    }
    Ok(mean(&values))
}

/// `H(Γ) = E[L(Γ(X) △ Γ*(X))]`.
pub fn sym_diff<P: IntervalPredictor + ?Sized>(
    pred: &P,
    oracle: &OraclePI,
    model: &GaussianModel,
    n_mc: usize,
    rng: &SeededRng,
) -> Result<f64> {
    monte_carlo(model, n_mc, rng, |x, r| Ok(sym_diff_measure(&pred.predict_interval(x, r), &oracle.interval(x))))
}

/// `E[ int_{Γ(X) △ Γ*(X)} |p(y|X) - lambda*| dy ]`, each piece integrated by
/// adaptive trapezoid starting from `quad_panels` panels.
pub fn excess_risk<P: IntervalPredictor + ?Sized>(
    pred: &P,
    oracle: &OraclePI,
    model: &GaussianModel,
    n_mc: usize,
    quad_panels: usize,
    rng: &SeededRng,
) -> Result<f64> {
    let lambda = oracle.lambda_star();
    monte_carlo(model, n_mc, rng, |x, r| {
        let (mu, sd) = (model.f_star(x), model.sigma(x));
        let var = sd * sd;
        let mut total = 0.0;
        for (lo, hi) in symmetric_difference(&pred.predict_interval(x, r), &oracle.interval(x)) {
            if !(lo.is_finite() && hi.is_finite()) {
                return invalid("symmetric difference has unbounded pieces");
            }
            total += adaptive_trapezoid(
                |y| (normal_pdf(y, mu, var) - lambda).abs(),
                lo,
                hi,
                PIECE_TOLERANCE,
                quad_panels,
                40,
            );
        }
        Ok(total)
    })
}

/// `R(Γ) = P(Y ∉ Γ(X)) + lambda* E[L(Γ(X))]` with the coverage of each
/// interval computed exactly from the Gaussian CDF.
pub fn risk<P: IntervalPredictor + ?Sized>(
    pred: &P,
    model: &GaussianModel,
    lambda_star: f64,
    n_mc: usize,
    rng: &SeededRng,
) -> Result<f64> {
    monte_carlo(model, n_mc, rng, |x, r| {
        let iv = pred.predict_interval(x, r);
        let covered = iv.bounds().map_or(0.0, |(lo, hi)| normal_mass(lo, hi, model.f_star(x), model.sigma(x)));
        Ok(1.0 - covered + lambda_star * iv.length())
    })
}

/// Upper bound on `|p(y|x) - lambda*|` when `sigma(x) >= sigma_min`, so that
/// `excess_risk <= bound * sym_diff`.
pub fn excess_risk_bound_constant(lambda_star: f64, sigma_min: f64) -> f64 {
    lambda_star.max(INV_SQRT_2PI / sigma_min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{simulation_model, FeatureSampler, ScalarFn};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn iv(lo: f64, hi: f64) -> PredictionInterval {
        PredictionInterval::new(lo, hi)
    }

    #[test]
    fn length_and_error_examples() {
        assert_eq!(empirical_length(&[iv(0.0, 1.0); 4]).unwrap(), 1.0);
        let mixed = [PredictionInterval::Empty, iv(-1.0, 1.0), PredictionInterval::Empty, iv(-1.0, 1.0)];
        assert_eq!(empirical_length(&mixed).unwrap(), 1.0);
        assert!(empirical_length(&[]).is_err());
        assert_eq!(empirical_error(&[iv(0.0, 1.0), iv(-1.0, 0.0)], &[0.5, 0.0]).unwrap(), 0.0);
        assert_eq!(empirical_error(&[PredictionInterval::Empty; 3], &[0.0, 1.0, 2.0]).unwrap(), 1.0);
        assert!(empirical_error(&[iv(0.0, 1.0)], &[0.0, 1.0]).is_err());
        let r = EvalResult::evaluate(&mixed, &[0.0, 0.0, 5.0, 1.0]).unwrap();
        assert_eq!((r.n_empty, r.n_test, r.error_rate), (2, 4, 0.5));
    }

    #[test]
    fn symmetric_difference_cases() {
        // identical
        assert!(symmetric_difference(&iv(0.0, 1.0), &iv(0.0, 1.0)).is_empty());
        // nested
        assert_eq!(symmetric_difference(&iv(0.0, 4.0), &iv(1.0, 2.0)), vec![(0.0, 1.0), (2.0, 4.0)]);
        assert_eq!(symmetric_difference(&iv(1.0, 2.0), &iv(0.0, 4.0)), vec![(0.0, 1.0), (2.0, 4.0)]);
        // overlapping
        assert_eq!(symmetric_difference(&iv(0.0, 2.0), &iv(1.0, 3.0)), vec![(0.0, 1.0), (2.0, 3.0)]);
        // disjoint
        assert_eq!(sym_diff_measure(&iv(0.0, 1.0), &iv(5.0, 7.0)), 3.0);
        // touching
        assert_eq!(sym_diff_measure(&iv(0.0, 1.0), &iv(1.0, 2.0)), 2.0);
        // one or both empty
        assert_eq!(symmetric_difference(&PredictionInterval::Empty, &iv(-1.0, 1.0)), vec![(-1.0, 1.0)]);
        assert_eq!(symmetric_difference(&iv(-1.0, 1.0), &PredictionInterval::Empty), vec![(-1.0, 1.0)]);
        assert!(symmetric_difference(&PredictionInterval::Empty, &PredictionInterval::Empty).is_empty());
        // degenerate point vs empty
        assert!(symmetric_difference(&iv(0.5, 0.5), &PredictionInterval::Empty).is_empty());
        // shared left endpoint
        assert_eq!(symmetric_difference(&iv(0.0, 2.0), &iv(0.0, 1.0)), vec![(1.0, 2.0)]);
    }

    fn homoscedastic(sigma: f64) -> GaussianModel {
        let f: ScalarFn = Arc::new(|x: &[f64]| x[0]);
        GaussianModel::homoscedastic(1, f, sigma, FeatureSampler::UniformCube).unwrap()
    }

    #[test]
    fn identical_and_widened_predictors() {
        let sigma = 0.6;
        let model = homoscedastic(sigma);
        let lambda = 0.3;
        let oracle = OraclePI::unbounded(model.clone(), lambda).unwrap();
        let rng = SeededRng::new(3, 0);
        let same = |x: &[f64], _: &mut SeededRng| oracle.interval(x);
        assert!(excess_risk(&same, &oracle, &model, 200, 4, &rng).unwrap().abs() < 1e-6);
        assert_eq!(sym_diff(&same, &oracle, &model, 200, &rng).unwrap(), 0.0);

        let delta = 0.15;
        let wide = |x: &[f64], _: &mut SeededRng| {
            let (lo, hi) = oracle.interval(x).bounds().unwrap();
            iv(lo - delta, hi + delta)
        };
        // Half-width of the oracle interval is x-independent here.
        let (lo, hi) = oracle.interval(&[0.0]).bounds().unwrap();
        let slab = normal_mass(hi, hi + delta, 0.0, sigma);
        let closed = 2.0 * (lambda * delta - slab);
        assert_relative_eq!(excess_risk(&wide, &oracle, &model, 200, 4, &rng).unwrap(), closed, epsilon = 1e-8);
        assert_relative_eq!(sym_diff(&wide, &oracle, &model, 200, &rng).unwrap(), 2.0 * delta, epsilon = 1e-12);
        assert!(lo < hi);

        let shifted = |x: &[f64], _: &mut SeededRng| {
            let (lo, hi) = oracle.interval(x).bounds().unwrap();
            iv(lo + 10.0, hi + 10.0)
        };
        assert_relative_eq!(sym_diff(&shifted, &oracle, &model, 200, &rng).unwrap(), 2.0 * (hi - lo), epsilon = 1e-12);
        assert!(sym_diff(&same, &oracle, &model, 50, &rng).is_err());
    }

    #[test]
    fn risk_examples() {
        let model = simulation_model(1).unwrap();
        let rng = SeededRng::new(1, 0);
        let empty = |_: &[f64], _: &mut SeededRng| PredictionInterval::Empty;
        assert_eq!(risk(&empty, &model, 0.2, 100, &rng).unwrap(), 1.0);
        let huge = |_: &[f64], _: &mut SeededRng| iv(-1e3, 1e3);
        assert_relative_eq!(risk(&huge, &model, 0.2, 100, &rng).unwrap(), 400.0, max_relative = 1e-12);
    }

    #[test]
    fn risk_difference_equals_excess_risk() {
        let model = simulation_model(1).unwrap();
        let lambda = 0.5;
        let oracle = OraclePI::unbounded(model.clone(), lambda).unwrap();
        let rng = SeededRng::new(12, 0);
        let pred = |x: &[f64], r: &mut SeededRng| {
            let iv0 = oracle.interval(x);
            let (lo, hi) = iv0.bounds().unwrap();
            iv(lo + 0.1 * r.uniform() - 0.02, hi - 0.05 + 0.2 * x[0])
        };
        let diff =
            risk(&pred, &model, lambda, 2000, &rng).unwrap() - risk(&oracle, &model, lambda, 2000, &rng).unwrap();
        let direct = excess_risk(&pred, &oracle, &model, 2000, 4, &rng).unwrap();
        assert!(direct > 0.0);
        assert!((diff - direct).abs() < 1e-6, "{diff} vs {direct}");
        let bound = excess_risk_bound_constant(lambda, model.sigma_bounds().unwrap().0);
        assert!(direct <= bound * sym_diff(&pred, &oracle, &model, 2000, &rng).unwrap());
    }

    #[test]
    fn csv_row_layout() {
        let r = EvalResult {
            mean_length: 0.5,
            error_rate: 0.25,
            excess_risk: None,
            sym_diff: Some(0.125),
            n_test: 4,
            n_empty: 1,
        };
        assert_eq!(
            EvalResult::csv_header(&["d", "ell"]),
            "mean_length,error_rate,excess_risk,sym_diff,n_test,n_empty,d,ell,seed"
        );
        assert_eq!(r.csv_row(&["1".into(), "0.5".into()], 9), "0.5,0.25,,0.125,4,1,1,0.5,9");
        let names: Vec<&str> = r.metrics().iter().map(|m| m.0).collect();
        assert_eq!(names, ["mean_length", "error_rate", "coverage", "n_empty", "sym_diff"]);
    }
}
