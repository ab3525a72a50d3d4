//! Prediction intervals calibrated to a target expected length.
//!
//! A plug-in conditional density `p_hat(y | x)` is thresholded at the level
//! `lambda_hat` whose superlevel sets have expected Lebesgue measure `ell`,
//! estimated from unlabeled features alone. The crate also provides the
//! coverage-calibrated baseline, the oracle under known Gaussian models, the
//! evaluation metrics and the simulation studies.

pub mod calibration;
pub mod density;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod io;
pub mod metrics;
pub mod predictor;
pub mod quadrature;
pub mod rng;
pub mod special;
pub mod stats;
pub mod synthetic;
pub mod types;

pub use calibration::{build_g, build_h, g_eval, g_inverse, h_threshold, GCurve, HCurve};
pub use density::{CondDensityModel, Perturbation, SupportMode, DEFAULT_U};
pub use error::{Error, Result};
pub use estimators::{clamp_variance, default_k, FnEstimator, KnnEstimator, MeanVarianceEstimator};
pub use metrics::{empirical_error, empirical_length, excess_risk, risk, sym_diff, EvalResult};
pub use predictor::{oracle_lambda, superlevel_interval, CoveragePI, IntervalPredictor, LengthPI, OraclePI, ZetaMode};
pub use rng::SeededRng;
pub use synthetic::{simulation_model, GaussianModel};
pub use types::{interval_length, make_grid, Grid, LabeledDataset, PredictionInterval, UnlabeledDataset};
