//! Empirical calibration curves and their generalized inverses.
//!
//! `G_hat(t) = cell_mass * #{scores > t}` is the Riemann-sum estimate of the
//! expected measure of the density superlevel set at `t`, with
//! `cell_mass = 2s / (M N)`. `H_hat(t) = #{scores >= t} / K` is the fraction
//! of calibration labels whose density score reaches `t`. Both store their
//! scores sorted in descending order, so inverses are order statistics.

use std::io::Write;
use std::path::Path;

use crate::density::CondDensityModel;
use crate::error::{invalid, Result};
use crate::io::fmt_f64;
use crate::rng::SeededRng;
use crate::types::{Grid, LabeledDataset, UnlabeledDataset};

fn sort_descending(scores: &mut [f64]) {
    scores.sort_unstable_by(|a, b| b.total_cmp(a));
}

fn check_scores(scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return invalid("calibration curve needs at least one score");
    }
    if let Some(v) = scores.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return invalid(format!("density scores must be finite and non-negative, got {v}"));
    }
    Ok(())
}

fn write_scores(scores: &[f64], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "score")?;
    for s in scores {
        writeln!(out, "{}", fmt_f64(*s))?;
    }
    out.flush()?;
    Ok(())
}

/// Length-calibration curve built on an unlabeled sample and a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GCurve {
    scores: Vec<f64>,
    cell_mass: f64,
    s: f64,
    m: usize,
    n_unlabeled: usize,
}

impl GCurve {
    /// Wraps `m * n_unlabeled` precomputed scores for a grid on `[-s, s]`.
    pub fn from_scores(mut scores: Vec<f64>, s: f64, m: usize, n_unlabeled: usize) -> Result<Self> {
        check_scores(&scores)?;
        if scores.len() != m * n_unlabeled {
            return invalid(format!("expected M*N = {} scores, got {}", m * n_unlabeled, scores.len()));
        }
        if s.is_nan() || s <= 0.0 {
            return invalid(format!("support half-width must be positive, got {s}"));
        }
        sort_descending(&mut scores);
        let cell_mass = 2.0 * s / (m * n_unlabeled) as f64;
        Ok(Self { scores, cell_mass, s, m, n_unlabeled })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn cell_mass(&self) -> f64 {
        self.cell_mass
    }

    pub fn support(&self) -> f64 {
        self.s
    }

    pub fn grid_cells(&self) -> usize {
        self.m
    }

    pub fn n_unlabeled(&self) -> usize {
        self.n_unlabeled
    }

    fn mass(&self, count: usize) -> f64 {
        count as f64 * self.cell_mass
    }

    /// `cell_mass * #{scores > t}`.
    pub fn g_eval(&self, t: f64) -> f64 {
        self.mass(self.scores.partition_point(|&v| v > t))
    }

    /// `inf{t >= 0 : G_hat(t) <= ell}`, with 0 when the whole support fits.
    ///
    /// With `r` the largest count whose mass is at most `ell`, the infimum is
    /// the `(r+1)`-th largest score.
    pub fn g_inverse(&self, ell: f64) -> f64 {
        let total = self.scores.len();
        let mut r = (ell / self.cell_mass).floor().clamp(0.0, total as f64) as usize;
        // Align with the arithmetic used by `g_eval`.
        while r > 0 && self.mass(r) > ell {
            r -= 1;
        }
        while r < total && self.mass(r + 1) <= ell {
            r += 1;
        }
        if r >= total {
            0.0
        } else {
            self.scores[r]
        }
    }

    /// True when `ell` exceeds the representable support length `2s`.
    pub fn saturates(&self, ell: f64) -> bool {
        ell > 2.0 * self.s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_scores(&self.scores, path)
    }
}

/// Scores `p_hat(y_k | X_i, zeta_i)` for every grid point and unlabeled row,
/// with one fresh `zeta_i` per row.
pub fn build_g(
    model: &CondDensityModel,
    unlabeled: &UnlabeledDataset,
    grid: &Grid,
    rng: &mut SeededRng,
) -> Result<GCurve> {
    let s = model.support();
    if (grid.half_width() - s).abs() > 1e-12 * s {
        return invalid(format!("grid half-width {} differs from model support {s}", grid.half_width()));
    }
    model.check_dim(unlabeled.row(0))?;
    let mut scores = Vec::with_capacity(grid.cells() * unlabeled.len());
    for x in unlabeled.rows() {
        let zeta = model.draw_perturbation(rng).value();
        let local = model.local(x);
        scores.extend(grid.points().iter().map(|&y| local.pdf(y) + zeta));
    }
    GCurve::from_scores(scores, s, grid.cells(), unlabeled.len())
}

pub fn g_eval(g: &GCurve, t: f64) -> f64 {
    g.g_eval(t)
}

pub fn g_inverse(g: &GCurve, ell: f64) -> f64 {
    g.g_inverse(ell)
}

/// Coverage-calibration curve built on labeled data.
#[derive(Clone, Debug, PartialEq)]
pub struct HCurve {
    scores: Vec<f64>,
}

impl HCurve {
    pub fn from_scores(mut scores: Vec<f64>) -> Result<Self> {
        check_scores(&scores)?;
        sort_descending(&mut scores);
        Ok(Self { scores })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn k_cal(&self) -> usize {
        self.scores.len()
    }

    /// `#{scores >= t} / K`.
    pub fn h_eval(&self, t: f64) -> f64 {
        self.scores.partition_point(|&v| v >= t) as f64 / self.k_cal() as f64
    }

    /// `#{scores > t} / K`.
    pub fn h_eval_strict(&self, t: f64) -> f64 {
        self.scores.partition_point(|&v| v > t) as f64 / self.k_cal() as f64
    }

    /// `t_beta`: the `(floor((1 - beta) K) + 1)`-th largest score, or 0 when
    /// that index exceeds `K`.
    pub fn h_threshold(&self, beta: f64) -> Result<f64> {
        if !(beta > 0.0 && beta < 1.0) {
            return invalid(format!("beta must lie in (0, 1), got {beta}"));
        }
        let k = self.k_cal();
        let r = ((1.0 - beta) * k as f64).floor() as usize;
        Ok(if r >= k { 0.0 } else { self.scores[r] })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_scores(&self.scores, path)
    }
}

/// Scores `p_hat(Y_i | X_i, zeta_i)` of the calibration labels.
pub fn build_h(model: &CondDensityModel, calset: &LabeledDataset, rng: &mut SeededRng) -> Result<HCurve> {
    if calset.is_empty() {
        return invalid("calibration set must be non-empty");
    }
    model.check_dim(calset.row(0))?;
    let scores = calset
        .rows()
        .zip(calset.labels())
        .map(|(x, &y)| {
            let zeta = model.draw_perturbation(rng);
            model.p_hat_randomized(x, y, zeta)
        })
        .collect();
    HCurve::from_scores(scores)
}

pub fn h_threshold(h: &HCurve, beta: f64) -> Result<f64> {
    h.h_threshold(beta)
}
