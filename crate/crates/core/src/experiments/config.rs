use std::str::FromStr;

use crate::density::{SupportMode, DEFAULT_U};
use crate::error::{invalid, Result};
use crate::estimators::default_k;

/// Neighbour count for the k-NN estimators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum KChoice {
    /// `max(1, round(n^(2/(d+2))))`.
    #[default]
    Auto,
    Fixed(usize),
}

impl KChoice {
    pub fn resolve(self, n: usize, d: usize) -> Result<usize> {
        match self {
            KChoice::Auto => Ok(default_k(n, d)),
            KChoice::Fixed(k) if k >= 1 && k <= n => Ok(k),
            KChoice::Fixed(k) => invalid(format!("k = {k} must lie in 1..={n}")),
        }
    }
}

impl FromStr for KChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "auto" {
            return Ok(KChoice::Auto);
        }
        s.parse::<usize>().map(KChoice::Fixed).map_err(|_| format!("k must be `auto` or a positive integer, got `{s}`"))
    }
}

/// `max(1000, ceil(4 sqrt(N)) + 1)`.
pub fn default_grid_cells(n_cal: usize) -> usize {
    let bound = (4.0 * (n_cal as f64).sqrt()).ceil() as usize + 1;
    bound.max(1000)
}

/// Sample sizes and tuning shared by all studies.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Training sample size `n`.
    pub n_train: usize,
    /// Unlabeled (or calibration) sample size `N`.
    pub n_cal: usize,
    /// Grid size `M`; `None` uses [`default_grid_cells`].
    pub grid_cells: Option<usize>,
    /// Test sample size `T`.
    pub n_test: usize,
    pub reps: usize,
    pub k: KChoice,
    pub u: f64,
    pub s_mode: SupportMode,
    pub seed: u64,
    /// Also report excess risk and symmetric difference against the oracle.
    pub oracle_metrics: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_train: 500,
            n_cal: 100,
            grid_cells: None,
            n_test: 1000,
            reps: 100,
            k: KChoice::Auto,
            u: DEFAULT_U,
            s_mode: SupportMode::Practice,
            seed: 1,
            oracle_metrics: false,
        }
    }
}

impl ExperimentConfig {
    /// Oracle table: N = M = T = 1000, 100 repetitions.
    pub fn oracle_table() -> Self {
        Self { n_cal: 1000, grid_cells: Some(1000), ..Self::default() }
    }

    /// Plug-in table: n = 500, N = M = 100, T = 1000, 100 repetitions.
    pub fn plugin_table() -> Self {
        Self { grid_cells: Some(100), oracle_metrics: true, ..Self::default() }
    }

    /// Length- versus coverage-calibration: n = 500, T = 1000, 20 repetitions.
    pub fn comparison() -> Self {
        Self { reps: 20, ..Self::default() }
    }

    /// Length scaling: 200 repetitions, lengths averaged over 10^5 test points.
    pub fn length_scaling() -> Self {
        Self { reps: 200, n_test: 100_000, ..Self::default() }
    }

    pub fn grid_cells_for(&self, n_cal: usize) -> usize {
        self.grid_cells.unwrap_or_else(|| default_grid_cells(n_cal))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_cal == 0 || self.n_test == 0 {
            return invalid("sample sizes n, N and T must be positive");
        }
        if self.reps == 0 {
            return invalid("reps must be at least 1");
        }
        if self.grid_cells.is_some_and(|m| m < 2) {
            return invalid("M must be at least 2");
        }
        if !(self.u >= 0.0 && self.u.is_finite()) {
            return invalid(format!("u must be non-negative, got {}", self.u));
        }
        if let KChoice::Fixed(k) = self.k {
            if k == 0 || k > self.n_train {
                return invalid(format!("k = {k} must lie in 1..={}", self.n_train));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_ell(ell: f64) -> Result<()> {
    if !(ell > 0.0 && ell.is_finite()) {
        return invalid(format!("ell must be positive, got {ell}"));
    }
    Ok(())
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return invalid(format!("beta must lie in (0, 1), got {beta}"));
    }
    Ok(())
}
