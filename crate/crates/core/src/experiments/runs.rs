use std::sync::Arc;

use rayon::prelude::*;

use super::config::{check_beta, check_ell, ExperimentConfig};
use super::report::{ExperimentReport, RepRecord};
use crate::density::CondDensityModel;
use crate::error::{invalid, Result};
use crate::estimators::KnnEstimator;
use crate::metrics::{excess_risk, sym_diff, EvalResult};
use crate::predictor::{oracle_lambda, true_density_curve, CoveragePI, IntervalPredictor, LengthPI, OraclePI};
use crate::rng::SeededRng;
use crate::synthetic::{simulation_model, GaussianModel};
use crate::types::{make_grid, LabeledDataset, PredictionInterval};

/// Grid half-width of the oracle table.
pub const ORACLE_SUPPORT: f64 = 5.0;

/// Calibration sizes of the comparison study.
pub const COMPARISON_SIZES: [usize; 9] = [10, 30, 50, 70, 100, 150, 200, 500, 1000];

/// Calibration sizes of the length-scaling study.
pub const SCALING_SIZES: [usize; 4] = [25, 100, 400, 1600];

/// Quadrature panels for the excess-risk metric.
const QUAD_PANELS: usize = 16;

// Stream reserved for quantities shared by all repetitions of a cell.
const SHARED_STREAM: u64 = u64::MAX;

/// Runs `reps` repetitions in parallel, each seeded on stream = repetition
/// index, and concatenates their records in repetition order.
fn run_reps<F>(cfg: &ExperimentConfig, f: F) -> Result<Vec<RepRecord>>
where
    F: Fn(usize, SeededRng) -> Result<Vec<RepRecord>> + Sync,
{
    let per_rep = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| f(rep, SeededRng::new(cfg.seed, rep as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_rep.into_iter().flatten().collect())
}

fn record(
    experiment: &str,
    method: &str,
    d: usize,
    ell_or_beta: f64,
    n_cal: usize,
    rep: usize,
    metrics: Vec<(&str, f64)>,
) -> RepRecord {
    RepRecord {
        experiment: experiment.into(),
        method: method.into(),
        d,
        ell_or_beta,
        n_cal,
        rep,
        metrics: metrics.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
    }
}

fn predict_all<P: IntervalPredictor + ?Sized>(
    pred: &P,
    test: &LabeledDataset,
    rng: &mut SeededRng,
) -> Vec<PredictionInterval> {
    test.rows().map(|x| pred.predict_interval(x, rng)).collect()
}

fn check_lists(ds: &[usize], params: &[f64], check: fn(f64) -> Result<()>) -> Result<()> {
    if ds.is_empty() || params.is_empty() {
        return invalid("dimension and parameter lists must be non-empty");
    }
    if ds.contains(&0) {
        return invalid("dimension must be positive");
    }
    params.iter().try_for_each(|&p| check(p))
}

fn knn_density(
    model: &GaussianModel,
    cfg: &ExperimentConfig,
    n_cal: usize,
    rng: &mut SeededRng,
) -> Result<CondDensityModel> {
    let train = model.sample(cfg.n_train, rng)?;
    let k = cfg.k.resolve(train.len(), model.dim())?;
    let s = cfg.s_mode.half_width(&train, n_cal)?;
    let est = KnnEstimator::new(train, k)?;
    CondDensityModel::new(Arc::new(est), s, cfg.u)
}

/// Oracle intervals calibrated on `N` unlabeled draws with the true
/// densities on a grid of `[-5, 5]`.
pub fn run_oracle_table(ds: &[usize], ells: &[f64], cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    check_lists(ds, ells, check_ell)?;
    let grid = make_grid(ORACLE_SUPPORT, cfg.grid_cells_for(cfg.n_cal))?;
    let mut records = Vec::new();
    for (ci, (d, ell)) in ds.iter().flat_map(|&d| ells.iter().map(move |&l| (d, l))).enumerate() {
        let model = simulation_model(d)?;
        records.extend(run_reps(cfg, |rep, rng| {
            let rng = rng.derive(ci as u64);
            let xs = model.sample_features(cfg.n_cal, &mut rng.derive(0))?;
            let lambda = true_density_curve(&model, &xs, &grid)?.g_inverse(ell);
            let oracle = OraclePI::new(model.clone(), lambda, ORACLE_SUPPORT)?;
            let test = model.sample(cfg.n_test, &mut rng.derive(1))?;
            let intervals: Vec<_> = test.rows().map(|x| oracle.interval(x)).collect();
            let eval = EvalResult::evaluate(&intervals, test.labels())?;
            let mut metrics = eval.metrics();
            metrics.push(("lambda", lambda));
            Ok(vec![record("table1", "oracle", d, ell, cfg.n_cal, rep, metrics)])
        })?);
    }
    Ok(ExperimentReport::new("table1", cfg.seed, records))
}

/// Length-calibrated plug-in intervals with k-NN mean and variance estimates.
pub fn run_plugin_table(ds: &[usize], ells: &[f64], cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    check_lists(ds, ells, check_ell)?;
    let m = cfg.grid_cells_for(cfg.n_cal);
    let mut records = Vec::new();
    for (ci, (d, ell)) in ds.iter().flat_map(|&d| ells.iter().map(move |&l| (d, l))).enumerate() {
        let model = simulation_model(d)?;
        let oracle = if cfg.oracle_metrics {
            let grid = make_grid(ORACLE_SUPPORT, 1000)?;
            let mut rng = SeededRng::new(cfg.seed, SHARED_STREAM).derive(ci as u64);
            let lambda = oracle_lambda(&model, ell, 1000, &grid, &mut rng)?;
            Some(OraclePI::unbounded(model.clone(), lambda)?)
        } else {
            None
        };
        records.extend(run_reps(cfg, |rep, rng| {
            let rng = rng.derive(ci as u64);
            let density = knn_density(&model, cfg, cfg.n_cal, &mut rng.derive(0))?;
            let grid = make_grid(density.support(), m)?;
            let unlabeled = model.sample_features(cfg.n_cal, &mut rng.derive(1))?;
            let (pi, _) = LengthPI::fit(density, &unlabeled, &grid, ell, &mut rng.derive(2))?;
            let test = model.sample(cfg.n_test, &mut rng.derive(3))?;
            let intervals = predict_all(&pi, &test, &mut rng.derive(4));
            let mut eval = EvalResult::evaluate(&intervals, test.labels())?;
            if let Some(oracle) = &oracle {
                let mc = rng.derive(5);
                eval.excess_risk = Some(excess_risk(&pi, oracle, &model, cfg.n_test, QUAD_PANELS, &mc)?);
                eval.sym_diff = Some(sym_diff(&pi, oracle, &model, cfg.n_test, &mc)?);
            }
            let mut metrics = eval.metrics();
            metrics.push(("lambda", pi.lambda_hat()));
            Ok(vec![record("table2", "plugin", d, ell, cfg.n_cal, rep, metrics)])
        })?);
    }
    Ok(ExperimentReport::new("table2", cfg.seed, records))
}

/// Length calibration on `N` unlabeled points against coverage calibration
/// on `N` fresh labeled points, sharing the training and test samples.
pub fn run_comparison(
    d: usize,
    ell: f64,
    beta: f64,
    sizes: &[usize],
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport> {
    cfg.validate()?;
    check_lists(&[d], &[ell], check_ell)?;
    check_beta(beta)?;
    if sizes.is_empty() || sizes.contains(&0) {
        return invalid("calibration sizes must be positive");
    }
    let model = simulation_model(d)?;
    let mut records = Vec::new();
    for (ci, &n_cal) in sizes.iter().enumerate() {
        let m = cfg.grid_cells_for(n_cal);
        records.extend(run_reps(cfg, |rep, rng| {
            let rng = rng.derive(ci as u64);
            let density = knn_density(&model, cfg, n_cal, &mut rng.derive(0))?;
            let grid = make_grid(density.support(), m)?;
            let test = model.sample(cfg.n_test, &mut rng.derive(1))?;

            let unlabeled = model.sample_features(n_cal, &mut rng.derive(2))?;
            let (len_pi, _) = LengthPI::fit(density.clone(), &unlabeled, &grid, ell, &mut rng.derive(3))?;
            let len_eval = EvalResult::evaluate(&predict_all(&len_pi, &test, &mut rng.derive(4)), test.labels())?;

            let calset = model.sample(n_cal, &mut rng.derive(5))?;
            let (cov_pi, _) = CoveragePI::fit(density, &calset, beta, &mut rng.derive(6))?;
            let cov_eval = EvalResult::evaluate(&predict_all(&cov_pi, &test, &mut rng.derive(7)), test.labels())?;

            Ok(vec![
                record("compare", "length", d, ell, n_cal, rep, len_eval.metrics()),
                record("compare", "coverage", d, beta, n_cal, rep, cov_eval.metrics()),
            ])
        })?);
    }
    Ok(ExperimentReport::new("compare", cfg.seed, records))
}

/// Oracle-density intervals calibrated on `N` unlabeled points; records the
/// gap `|L - ell|` between the mean length over `T` test points and `ell`.
pub fn run_length_scaling(d: usize, ell: f64, sizes: &[usize], cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    check_lists(&[d], &[ell], check_ell)?;
    if sizes.is_empty() || sizes.contains(&0) {
        return invalid("calibration sizes must be positive");
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("calibration sizes must be strictly increasing");
    }
    let model = simulation_model(d)?;
    let mut records = Vec::new();
    for (ci, &n_cal) in sizes.iter().enumerate() {
        let grid = make_grid(ORACLE_SUPPORT, cfg.grid_cells_for(n_cal))?;
        records.extend(run_reps(cfg, |rep, rng| {
            let rng = rng.derive(ci as u64);
            let xs = model.sample_features(n_cal, &mut rng.derive(0))?;
            let lambda = true_density_curve(&model, &xs, &grid)?.g_inverse(ell);
            let pi = OraclePI::new(model.clone(), lambda, ORACLE_SUPPORT)?;
            let test = model.sample(cfg.n_test, &mut rng.derive(1))?;
            let intervals: Vec<_> = test.rows().map(|x| pi.interval(x)).collect();
            let eval = EvalResult::evaluate(&intervals, test.labels())?;
            let mut metrics = eval.metrics();
            metrics.push(("abs_length_gap", (eval.mean_length - ell).abs()));
            metrics.push(("lambda", lambda));
            Ok(vec![record("length-scaling", "oracle-density", d, ell, n_cal, rep, metrics)])
        })?);
    }
    Ok(ExperimentReport::new("length-scaling", cfg.seed, records))
}
